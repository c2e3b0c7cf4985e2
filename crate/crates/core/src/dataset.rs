//! On-disk container for paired uplink/downlink CSI samples.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   [4]  b"CSID"
//! version u32  1
//! nt      u32  transmit antennas per matrix
//! nc      u32  subcarriers per matrix
//! n       u32  number of samples
//! t       u32  frames per sample (1 for static datasets)
//! gap     f64  band gap in Hz (metadata)
//! bw      f64  bandwidth in Hz (metadata)
//! ```
//!
//! followed by `n * t` frames in sample-major order.  Each frame stores the
//! uplink matrix then the downlink matrix, row-major over antennas and
//! subcarriers, each entry as interleaved `(re, im)` `f32`.  A SHA-256 digest
//! of every byte written (header included) is reported at build time so runs
//! can assert they trained on identical data.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::band::ChannelConfig;
use crate::channel::{evolve_paths, sample_paths, synthesize_csi, CsiMatrix, LinkDirection};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"CSID";
pub const DATASET_VERSION: u32 = 1;
const HEADER_BYTES: u64 = 40;

/// Fixed-size metadata at the front of every dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n_tx_antennas: usize,
    pub n_subcarriers: usize,
    pub n_samples: usize,
    pub temporal_len: usize,
    pub band_gap_hz: f64,
    pub bandwidth_hz: f64,
}

impl DatasetHeader {
    fn validate(&self) -> Result<()> {
        if self.n_tx_antennas == 0 || self.n_subcarriers == 0 {
            return Err(Error::Dataset("matrix dimensions must be positive".into()));
        }
        if self.temporal_len == 0 {
            return Err(Error::Dataset("temporal length must be at least 1".into()));
        }
        if self.n_tx_antennas > u32::MAX as usize
            || self.n_subcarriers > u32::MAX as usize
            || self.n_samples > u32::MAX as usize
            || self.temporal_len > u32::MAX as usize
        {
            return Err(Error::Dataset("header field exceeds u32".into()));
        }
        Ok(())
    }

    /// Bytes of one CSI matrix (interleaved f32 pairs).
    fn matrix_bytes(&self) -> u64 {
        self.n_tx_antennas as u64 * self.n_subcarriers as u64 * 8
    }

    /// Bytes of one frame (uplink + downlink matrix).
    fn frame_bytes(&self) -> u64 {
        2 * self.matrix_bytes()
    }

    /// Total file size implied by the header.
    pub fn expected_file_bytes(&self) -> u64 {
        HEADER_BYTES + self.n_samples as u64 * self.temporal_len as u64 * self.frame_bytes()
    }
}

/// What a finished write reports back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub header: DatasetHeader,
    pub bytes_written: u64,
    pub sha256_hex: String,
}

/// Streaming writer; frames must arrive in sample-major order.
pub struct DatasetWriter {
    out: BufWriter<File>,
    hasher: Sha256,
    header: DatasetHeader,
    frames_written: u64,
    bytes_written: u64,
}

impl DatasetWriter {
    pub fn create<P: AsRef<Path>>(path: P, header: DatasetHeader) -> Result<Self> {
        header.validate()?;
        let file = File::create(path)?;
        let mut w = Self {
            out: BufWriter::new(file),
            hasher: Sha256::new(),
            header,
            frames_written: 0,
            bytes_written: 0,
        };
        let mut head = Vec::with_capacity(HEADER_BYTES as usize);
        head.extend_from_slice(&DATASET_MAGIC);
        head.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        head.extend_from_slice(&(header.n_tx_antennas as u32).to_le_bytes());
        head.extend_from_slice(&(header.n_subcarriers as u32).to_le_bytes());
        head.extend_from_slice(&(header.n_samples as u32).to_le_bytes());
        head.extend_from_slice(&(header.temporal_len as u32).to_le_bytes());
        head.extend_from_slice(&header.band_gap_hz.to_le_bytes());
        head.extend_from_slice(&header.bandwidth_hz.to_le_bytes());
        debug_assert_eq!(head.len() as u64, HEADER_BYTES);
        w.write_bytes(&head)?;
        Ok(w)
    }

    fn write_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.out.write_all(bytes)?;
        self.hasher.update(bytes);
        self.bytes_written += bytes.len() as u64;
        Ok(())
    }

    fn write_matrix(&mut self, m: &Array2<Complex64>) -> Result<()> {
        if m.nrows() != self.header.n_tx_antennas || m.ncols() != self.header.n_subcarriers {
            return Err(Error::Dataset(format!(
                "matrix is {}x{} but the header says {}x{}",
                m.nrows(),
                m.ncols(),
                self.header.n_tx_antennas,
                self.header.n_subcarriers
            )));
        }
        let mut buf = Vec::with_capacity(m.len() * 8);
        for v in m.iter() {
            buf.extend_from_slice(&(v.re as f32).to_le_bytes());
            buf.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
        self.write_bytes(&buf)
    }

    /// Appends one frame: the uplink matrix, then the downlink matrix.
    pub fn write_frame(&mut self, uplink: &CsiMatrix, downlink: &CsiMatrix) -> Result<()> {
        let expected = self.header.n_samples as u64 * self.header.temporal_len as u64;
        if self.frames_written >= expected {
            return Err(Error::Dataset(format!(
                "dataset already holds all {expected} frames"
            )));
        }
        self.write_matrix(&uplink.values)?;
        self.write_matrix(&downlink.values)?;
        self.frames_written += 1;
        Ok(())
    }

    /// Flushes and returns the byte count and digest; fails if the number of
    /// frames does not match the header.
    pub fn finish(mut self) -> Result<DatasetSummary> {
        let expected = self.header.n_samples as u64 * self.header.temporal_len as u64;
        if self.frames_written != expected {
            return Err(Error::Dataset(format!(
                "wrote {} frames but the header promises {expected}",
                self.frames_written
            )));
        }
        self.out.flush()?;
        let digest = self.hasher.finalize();
        let sha256_hex = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(DatasetSummary {
            header: self.header,
            bytes_written: self.bytes_written,
            sha256_hex,
        })
    }
}

/// Random-access reader over a dataset file.
pub struct DatasetReader {
    input: BufReader<File>,
    header: DatasetHeader,
}

impl DatasetReader {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = File::open(path)?;
        let actual_len = file.metadata()?.len();
        let mut input = BufReader::new(file);
        let mut head = [0u8; HEADER_BYTES as usize];
        input
            .read_exact(&mut head)
            .map_err(|_| Error::Dataset("file too short for a header".into()))?;
        if head[0..4] != DATASET_MAGIC {
            return Err(Error::Dataset("bad magic; not a CSI dataset".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != DATASET_VERSION {
            return Err(Error::Dataset(format!(
                "unsupported dataset version {version}"
            )));
        }
        let header = DatasetHeader {
            n_tx_antennas: u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize,
            n_subcarriers: u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize,
            n_samples: u32::from_le_bytes(head[16..20].try_into().unwrap()) as usize,
            temporal_len: u32::from_le_bytes(head[20..24].try_into().unwrap()) as usize,
            band_gap_hz: f64::from_le_bytes(head[24..32].try_into().unwrap()),
            bandwidth_hz: f64::from_le_bytes(head[32..40].try_into().unwrap()),
        };
        header.validate()?;
        if actual_len != header.expected_file_bytes() {
            return Err(Error::Dataset(format!(
                "file is {actual_len} bytes but the header implies {}",
                header.expected_file_bytes()
            )));
        }
        Ok(Self { input, header })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    fn read_matrix(&mut self) -> Result<Array2<Complex64>> {
        let (nt, nc) = (self.header.n_tx_antennas, self.header.n_subcarriers);
        let mut buf = vec![0u8; nt * nc * 8];
        self.input.read_exact(&mut buf)?;
        let mut m = Array2::<Complex64>::zeros((nt, nc));
        for (idx, v) in m.iter_mut().enumerate() {
            let off = idx * 8;
            let re = f32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
            let im = f32::from_le_bytes(buf[off + 4..off + 8].try_into().unwrap());
            *v = Complex64::new(re as f64, im as f64);
        }
        Ok(m)
    }

    /// Reads all frames of sample `index`; each frame is `(uplink, downlink)`.
    pub fn read_sample(&mut self, index: usize) -> Result<Vec<(Array2<Complex64>, Array2<Complex64>)>> {
        if index >= self.header.n_samples {
            return Err(Error::Dataset(format!(
                "sample {index} out of range ({} samples)",
                self.header.n_samples
            )));
        }
        let offset = HEADER_BYTES
            + index as u64 * self.header.temporal_len as u64 * self.header.frame_bytes();
        self.input.seek(SeekFrom::Start(offset))?;
        let mut frames = Vec::with_capacity(self.header.temporal_len);
        for _ in 0..self.header.temporal_len {
            let ul = self.read_matrix()?;
            let dl = self.read_matrix()?;
            frames.push((ul, dl));
        }
        Ok(frames)
    }
}

/// Synthesizes a full dataset on disk.
///
/// Sample `i` draws its geometry with seed `config.seed + i`; temporal frames
/// beyond the first evolve that geometry with the given Doppler frequency and
/// frame spacing.  Requires the two bands to share subcarrier count and
/// bandwidth, since frames store the pair as equal-shaped matrices.
pub fn build_dataset<P: AsRef<Path>>(
    config: &ChannelConfig,
    n_samples: usize,
    temporal_len: usize,
    doppler_freq_hz: f64,
    frame_dt_s: f64,
    path: P,
) -> Result<DatasetSummary> {
    config.validate()?;
    if config.uplink.n_subcarriers != config.downlink.n_subcarriers
        || config.uplink.bandwidth_hz != config.downlink.bandwidth_hz
    {
        return Err(Error::Dataset(
            "paired datasets need equal subcarrier count and bandwidth on both bands".into(),
        ));
    }
    let header = DatasetHeader {
        n_tx_antennas: config.downlink.n_tx_antennas,
        n_subcarriers: config.downlink.n_subcarriers,
        n_samples,
        temporal_len,
        band_gap_hz: config.band_gap_hz(),
        bandwidth_hz: config.downlink.bandwidth_hz,
    };
    let mut writer = DatasetWriter::create(path, header)?;
    for i in 0..n_samples {
        let mut paths = sample_paths(config, config.seed.wrapping_add(i as u64))?;
        for t in 0..temporal_len {
            if t > 0 {
                paths = evolve_paths(&paths, doppler_freq_hz, frame_dt_s)?;
            }
            let ul = synthesize_csi(&paths, &config.uplink, LinkDirection::Uplink)?;
            let dl = synthesize_csi(&paths, &config.downlink, LinkDirection::Downlink)?;
            writer.write_frame(&ul, &dl)?;
        }
    }
    writer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::BandSpec;

    fn small_config() -> ChannelConfig {
        let dl = BandSpec::half_wavelength(5.3e9, 20e6, 16, 4).unwrap();
        let ul = BandSpec {
            center_freq_hz: 5.12e9,
            ..dl
        };
        let mut cfg = ChannelConfig::new(ul, dl, 101).unwrap();
        cfg.max_delay_s = 8.0 / 20e6;
        cfg.delay_decay_s = cfg.max_delay_s / 4.0;
        cfg
    }

    #[test]
    fn file_size_matches_header_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csid");
        let cfg = small_config();
        let summary = build_dataset(&cfg, 3, 2, 10.0, 1e-3, &path).unwrap();
        // 40-byte header + n * t * 2 matrices of nt*nc complex f32 entries.
        let expected = 40 + 3 * 2 * 2 * (4 * 16 * 8) as u64;
        assert_eq!(summary.bytes_written, expected);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), expected);
    }

    #[test]
    fn round_trip_preserves_values_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csid");
        let cfg = small_config();
        build_dataset(&cfg, 2, 1, 0.0, 0.0, &path).unwrap();

        let mut reader = DatasetReader::open(&path).unwrap();
        assert_eq!(reader.header().n_samples, 2);
        assert_eq!(reader.header().temporal_len, 1);
        assert!((reader.header().band_gap_hz - 180e6).abs() < 1.0);

        // Regenerate sample 1 directly and compare.
        let paths = sample_paths(&cfg, cfg.seed + 1).unwrap();
        let dl = synthesize_csi(&paths, &cfg.downlink, LinkDirection::Downlink).unwrap();
        let frames = reader.read_sample(1).unwrap();
        for (truth, got) in dl.values.iter().zip(frames[0].1.iter()) {
            assert_eq!(truth.re as f32, got.re as f32);
            assert_eq!(truth.im as f32, got.im as f32);
        }
    }

    #[test]
    fn builds_are_bit_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let a = build_dataset(&cfg, 4, 2, 15.0, 5e-4, dir.path().join("a.csid")).unwrap();
        let b = build_dataset(&cfg, 4, 2, 15.0, 5e-4, dir.path().join("b.csid")).unwrap();
        assert_eq!(a.sha256_hex, b.sha256_hex);
        let mut other = cfg;
        other.seed += 1;
        let c = build_dataset(&other, 4, 2, 15.0, 5e-4, dir.path().join("c.csid")).unwrap();
        assert_ne!(a.sha256_hex, c.sha256_hex);
    }

    #[test]
    fn reader_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csid");
        let cfg = small_config();
        build_dataset(&cfg, 2, 1, 0.0, 0.0, &path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad_magic = dir.path().join("bad_magic.csid");
        std::fs::write(&bad_magic, &bytes).unwrap();
        assert!(DatasetReader::open(&bad_magic).is_err());

        let mut truncated = std::fs::read(&path).unwrap();
        truncated.pop();
        let short = dir.path().join("short.csid");
        std::fs::write(&short, &truncated).unwrap();
        assert!(DatasetReader::open(&short).is_err());
    }

    #[test]
    fn writer_enforces_frame_count_and_shape() {
        let dir = tempfile::tempdir().unwrap();
        let header = DatasetHeader {
            n_tx_antennas: 4,
            n_subcarriers: 16,
            n_samples: 2,
            temporal_len: 1,
            band_gap_hz: 0.0,
            bandwidth_hz: 20e6,
        };
        let cfg = small_config();
        let paths = sample_paths(&cfg, 0).unwrap();
        let ul = synthesize_csi(&paths, &cfg.uplink, LinkDirection::Uplink).unwrap();
        let dl = synthesize_csi(&paths, &cfg.downlink, LinkDirection::Downlink).unwrap();

        // Too few frames.
        let w = DatasetWriter::create(dir.path().join("few.csid"), header).unwrap();
        assert!(w.finish().is_err());

        // Too many frames.
        let mut w = DatasetWriter::create(dir.path().join("many.csid"), header).unwrap();
        w.write_frame(&ul, &dl).unwrap();
        w.write_frame(&ul, &dl).unwrap();
        assert!(w.write_frame(&ul, &dl).is_err());

        // Wrong shape.
        let tiny = CsiMatrix {
            values: Array2::zeros((2, 16)),
            band: cfg.downlink,
        };
        let mut w = DatasetWriter::create(dir.path().join("shape.csid"), header).unwrap();
        assert!(w.write_frame(&tiny, &dl).is_err());
    }

    #[test]
    fn out_of_range_sample_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csid");
        build_dataset(&small_config(), 2, 1, 0.0, 0.0, &path).unwrap();
        let mut reader = DatasetReader::open(&path).unwrap();
        assert!(reader.read_sample(2).is_err());
    }
}

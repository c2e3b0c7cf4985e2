//! Uniform quantization and magnitude-dependent phase feedback.
//!
//! The uniform quantizer is the workhorse for codeword entries.  Phase
//! feedback is smarter: after the decoder reconstructs the magnitude image,
//! taps are ranked by that *reconstructed* magnitude and the strongest taps
//! receive the most phase bits.  Because the ranking depends only on data
//! both ends already share, no tap positions need to be transmitted — the
//! receiver re-derives them, making the scheme self-synchronizing.  Taps
//! outside the configured tiers get phase zero, which is also what a
//! zero-bit tier decodes to, so coverage can taper off smoothly.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::band::BandSpec;
use crate::error::{Error, Result};
use crate::transform::AngularDelayCsi;

/// Quantizes values to `bits`-wide indices over `[lo, hi)`.
///
/// `index = floor((x - lo) / step)` with `step = (hi - lo) / 2^bits`, clamped
/// into range; out-of-range inputs saturate at the edge cells.
pub fn uniform_quantize(values: &[f64], bits: u32, range: (f64, f64)) -> Result<Vec<u32>> {
    let (lo, hi) = validate_range(bits, range, 1)?;
    let levels = 1u64 << bits;
    let step = (hi - lo) / levels as f64;
    Ok(values
        .iter()
        .map(|&x| {
            if !x.is_finite() {
                return if x > 0.0 { (levels - 1) as u32 } else { 0 };
            }
            let idx = ((x - lo) / step).floor();
            if idx < 0.0 {
                0
            } else if idx as u64 >= levels {
                (levels - 1) as u32
            } else {
                idx as u32
            }
        })
        .collect())
}

/// Maps indices back to cell midpoints: `lo + (index + 0.5) * step`.
pub fn uniform_dequantize(indices: &[u32], bits: u32, range: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = validate_range(bits, range, 1)?;
    let levels = 1u64 << bits;
    let step = (hi - lo) / levels as f64;
    indices
        .iter()
        .map(|&i| {
            if (i as u64) >= levels {
                Err(Error::Quant(format!(
                    "index {i} out of range for {bits}-bit quantizer"
                )))
            } else {
                Ok(lo + (i as f64 + 0.5) * step)
            }
        })
        .collect()
}

fn validate_range(bits: u32, (lo, hi): (f64, f64), min_bits: u32) -> Result<(f64, f64)> {
    if bits < min_bits || bits > 31 {
        return Err(Error::Quant(format!(
            "bit width must be in {min_bits}..=31, got {bits}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Quant(format!("invalid range [{lo}, {hi})")));
    }
    Ok((lo, hi))
}

/// Bit-budget tiers: `(tap_count, bits)` applied in magnitude-rank order.
pub type PhaseTiers = Vec<(usize, u32)>;

/// Quantized phases of the strongest taps, positions implied by magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFeedback {
    pub tiers: PhaseTiers,
    /// Flat row-major tap indices in rank order (strongest first).  Derived
    /// from the magnitude image, never serialized.
    pub tap_indices: Vec<usize>,
    /// One code per covered tap, in the same order as `tap_indices`.
    pub codes: Vec<u32>,
    /// Total payload in bits.
    pub total_bits: usize,
}

/// Ranks flat tap indices by descending magnitude, ties broken by position
/// so both link ends agree exactly.
pub fn rank_taps(mag: &Array2<f64>) -> Vec<usize> {
    let flat: Vec<f64> = mag.iter().copied().collect();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_by(|&a, &b| {
        flat[b]
            .partial_cmp(&flat[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

fn validate_tiers(tiers: &PhaseTiers, n_taps: usize) -> Result<usize> {
    let mut covered = 0usize;
    for &(count, bits) in tiers {
        if bits > 31 {
            return Err(Error::Quant(format!("tier width {bits} exceeds 31 bits")));
        }
        covered += count;
    }
    if covered > n_taps {
        return Err(Error::Quant(format!(
            "tiers cover {covered} taps but the image has only {n_taps}"
        )));
    }
    Ok(covered)
}

fn quantize_phase(phase: f64, bits: u32) -> u32 {
    if bits == 0 {
        return 0;
    }
    let levels = 1u64 << bits;
    let step = 2.0 * PI / levels as f64;
    let idx = ((phase + PI) / step).floor();
    if idx < 0.0 {
        0
    } else if idx as u64 >= levels {
        (levels - 1) as u32
    } else {
        idx as u32
    }
}

fn dequantize_phase(code: u32, bits: u32) -> f64 {
    let levels = 1u64 << bits;
    let step = 2.0 * PI / levels as f64;
    -PI + (code as f64 + 0.5) * step
}

/// Quantizes the phases of the strongest reconstructed taps.
///
/// `true_phases` holds the phases to encode (radians); `mag_hat` is the
/// magnitude image *as reconstructed by the decoder*, which both ends share
/// and which therefore defines the tap ranking.
pub fn mag_phase_quantize(
    true_phases: &Array2<f64>,
    mag_hat: &Array2<f64>,
    tiers: &PhaseTiers,
) -> Result<PhaseFeedback> {
    if true_phases.raw_dim() != mag_hat.raw_dim() {
        return Err(Error::ShapeMismatch(
            "phase and magnitude images differ in shape".into(),
        ));
    }
    let covered = validate_tiers(tiers, mag_hat.len())?;
    let order = rank_taps(mag_hat);
    let phases_flat: Vec<f64> = true_phases.iter().copied().collect();

    let mut tap_indices = Vec::with_capacity(covered);
    let mut codes = Vec::with_capacity(covered);
    let mut total_bits = 0usize;
    let mut rank = 0usize;
    for &(count, bits) in tiers {
        for _ in 0..count {
            let tap = order[rank];
            tap_indices.push(tap);
            codes.push(quantize_phase(phases_flat[tap], bits));
            total_bits += bits as usize;
            rank += 1;
        }
    }
    Ok(PhaseFeedback {
        tiers: tiers.clone(),
        tap_indices,
        codes,
        total_bits,
    })
}

/// Combines a reconstructed magnitude image with phase feedback.
///
/// The tap ranking is re-derived from `mag_hat`, so a deserialized feedback
/// (which carries only tiers and codes) reconstructs identically on the
/// receiver side.  Uncovered taps keep phase zero.
pub fn reconstruct_complex(
    mag_hat: &Array2<f64>,
    feedback: &PhaseFeedback,
    band: BandSpec,
    angular: bool,
) -> Result<AngularDelayCsi> {
    let covered = validate_tiers(&feedback.tiers, mag_hat.len())?;
    if feedback.codes.len() != covered {
        return Err(Error::Quant(format!(
            "feedback holds {} codes but tiers describe {covered}",
            feedback.codes.len()
        )));
    }
    let order = rank_taps(mag_hat);
    let mut phases = vec![0.0f64; mag_hat.len()];
    let mut rank = 0usize;
    let mut code_pos = 0usize;
    for &(count, bits) in &feedback.tiers {
        let levels = 1u64 << bits;
        for _ in 0..count {
            let code = feedback.codes[code_pos];
            if code as u64 >= levels {
                return Err(Error::Quant(format!(
                    "code {code} exceeds {bits}-bit tier"
                )));
            }
            phases[order[rank]] = dequantize_phase(code, bits);
            rank += 1;
            code_pos += 1;
        }
    }
    let (rows, cols) = mag_hat.dim();
    let mut values = Array2::<Complex64>::zeros((rows, cols));
    for (flat, v) in values.iter_mut().enumerate() {
        let m = mag_hat.as_slice().expect("standard layout")[flat];
        if m < 0.0 {
            return Err(Error::Quant(format!(
                "negative magnitude {m} cannot carry a phase"
            )));
        }
        *v = Complex64::from_polar(m, phases[flat]);
    }
    Ok(AngularDelayCsi {
        values,
        band,
        angular,
    })
}

/// Ceiling reference: strongest `n_taps` (all, if `None`) keep their exact
/// phases, the rest get zero.  This is what infinite phase bits would give.
pub fn reconstruct_with_exact_phases(
    mag_hat: &Array2<f64>,
    true_phases: &Array2<f64>,
    n_taps: Option<usize>,
    band: BandSpec,
    angular: bool,
) -> Result<AngularDelayCsi> {
    if true_phases.raw_dim() != mag_hat.raw_dim() {
        return Err(Error::ShapeMismatch(
            "phase and magnitude images differ in shape".into(),
        ));
    }
    let keep = n_taps.unwrap_or(mag_hat.len()).min(mag_hat.len());
    let order = rank_taps(mag_hat);
    let phases_flat: Vec<f64> = true_phases.iter().copied().collect();
    let mut phases = vec![0.0f64; mag_hat.len()];
    for &tap in order.iter().take(keep) {
        phases[tap] = phases_flat[tap];
    }
    let (rows, cols) = mag_hat.dim();
    let mut values = Array2::<Complex64>::zeros((rows, cols));
    for (flat, v) in values.iter_mut().enumerate() {
        let m = mag_hat.as_slice().expect("standard layout")[flat];
        *v = Complex64::from_polar(m.max(0.0), phases[flat]);
    }
    Ok(AngularDelayCsi {
        values,
        band,
        angular,
    })
}

/// MSB-first bit packer.
struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            used: 0,
        }
    }

    fn push(&mut self, code: u32, bits: u32) {
        for i in (0..bits).rev() {
            let bit = (code >> i) & 1;
            if self.used % 8 == 0 {
                self.bytes.push(0);
            }
            let byte = self.bytes.last_mut().unwrap();
            *byte |= (bit as u8) << (7 - self.used % 8);
            self.used += 1;
        }
    }
}

/// MSB-first bit reader.
struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn pull(&mut self, bits: u32) -> Result<u32> {
        let mut out = 0u32;
        for _ in 0..bits {
            let byte = (self.pos / 8) as usize;
            if byte >= self.bytes.len() {
                return Err(Error::Quant("feedback payload truncated".into()));
            }
            let bit = (self.bytes[byte] >> (7 - self.pos % 8)) & 1;
            out = (out << 1) | bit as u32;
            self.pos += 1;
        }
        Ok(out)
    }
}

/// Serializes feedback as a tier directory plus big-endian packed codes.
///
/// Layout: `u16` tier count, then per tier `u32` tap count and `u8` bits
/// (all big-endian), then the codes bit-packed MSB-first in rank order.
/// Tap positions are deliberately absent — see [`reconstruct_complex`].
pub fn serialize_phase_feedback(feedback: &PhaseFeedback) -> Result<Vec<u8>> {
    if feedback.tiers.len() > u16::MAX as usize {
        return Err(Error::Quant("too many tiers".into()));
    }
    let covered: usize = feedback.tiers.iter().map(|&(c, _)| c).sum();
    if feedback.codes.len() != covered {
        return Err(Error::Quant(format!(
            "feedback holds {} codes but tiers describe {covered}",
            feedback.codes.len()
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&(feedback.tiers.len() as u16).to_be_bytes());
    for &(count, bits) in &feedback.tiers {
        if count > u32::MAX as usize || bits > 31 {
            return Err(Error::Quant("tier does not fit the wire format".into()));
        }
        out.extend_from_slice(&(count as u32).to_be_bytes());
        out.push(bits as u8);
    }
    let mut writer = BitWriter::new();
    let mut pos = 0usize;
    for &(count, bits) in &feedback.tiers {
        for _ in 0..count {
            let code = feedback.codes[pos];
            if u64::from(code) >= (1u64 << bits) {
                return Err(Error::Quant(format!("code {code} exceeds {bits} bits")));
            }
            writer.push(code, bits);
            pos += 1;
        }
    }
    out.extend_from_slice(&writer.bytes);
    Ok(out)
}

/// Parses serialized feedback, re-deriving tap positions from `mag_hat`.
pub fn deserialize_phase_feedback(bytes: &[u8], mag_hat: &Array2<f64>) -> Result<PhaseFeedback> {
    if bytes.len() < 2 {
        return Err(Error::Quant("feedback shorter than its header".into()));
    }
    let n_tiers = u16::from_be_bytes(bytes[0..2].try_into().unwrap()) as usize;
    let dir_end = 2 + n_tiers * 5;
    if bytes.len() < dir_end {
        return Err(Error::Quant("tier directory truncated".into()));
    }
    let mut tiers = PhaseTiers::with_capacity(n_tiers);
    for t in 0..n_tiers {
        let off = 2 + t * 5;
        let count = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let bits = bytes[off + 4] as u32;
        tiers.push((count, bits));
    }
    let covered = validate_tiers(&tiers, mag_hat.len())?;
    let mut reader = BitReader::new(&bytes[dir_end..]);
    let mut codes = Vec::with_capacity(covered);
    let mut total_bits = 0usize;
    for &(count, bits) in &tiers {
        for _ in 0..count {
            codes.push(reader.pull(bits)?);
            total_bits += bits as usize;
        }
    }
    let order = rank_taps(mag_hat);
    Ok(PhaseFeedback {
        tap_indices: order[..covered].to_vec(),
        tiers,
        codes,
        total_bits,
    })
}

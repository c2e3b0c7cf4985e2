//! Uplink/downlink correlation analytics in the angular-delay domain.
//!
//! The question these tools answer: *which parts of the downlink CSI can the
//! base station already infer from the uplink?*  For each paired sample the
//! two CSI matrices are transformed to the (truncated) angular-delay domain,
//! a real plane is extracted — real, imaginary, magnitude, phase, folded
//! magnitudes, or sign agreement — and the Pearson correlation between the
//! uplink and downlink plane is recorded.  Aggregates over the dataset
//! (median, percentile bands) quantify how reciprocal each representation
//! is, and [`sweep_bandgap_bandwidth`] traces how that reciprocity moves with
//! the duplex distance and the occupied bandwidth.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::band::ChannelConfig;
use crate::channel::{sample_paths, synthesize_csi, CsiMatrix, LinkDirection};
use crate::dataset::DatasetReader;
use crate::error::{Error, Result};
use crate::transform::to_angular_delay;

/// Smallest dataset for which percentile bands are reported.
pub const MIN_SAMPLES_FOR_CI: usize = 30;

/// Real-valued view of a complex CSI plane used for correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CsiPlane {
    Real,
    Imag,
    Magnitude,
    Phase,
    AbsReal,
    AbsImag,
    /// Fraction of matching real/imaginary sign bits, rescaled to `[-1, 1]`.
    SignAgreement,
}

impl CsiPlane {
    pub const ALL: [CsiPlane; 7] = [
        CsiPlane::Real,
        CsiPlane::Imag,
        CsiPlane::Magnitude,
        CsiPlane::Phase,
        CsiPlane::AbsReal,
        CsiPlane::AbsImag,
        CsiPlane::SignAgreement,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CsiPlane::Real => "real",
            CsiPlane::Imag => "imag",
            CsiPlane::Magnitude => "magnitude",
            CsiPlane::Phase => "phase",
            CsiPlane::AbsReal => "abs_real",
            CsiPlane::AbsImag => "abs_imag",
            CsiPlane::SignAgreement => "sign_agreement",
        }
    }

    /// Parses the names produced by [`CsiPlane::name`].
    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown plane '{s}'")))
    }
}

/// Pearson correlation coefficient of two equal-length slices.
///
/// Errors on length mismatch, fewer than two points, or zero variance in
/// either argument (the coefficient is undefined, not zero, in that case).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "pearson inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Undefined(
            "pearson needs at least two points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined(
            "pearson is undefined for a constant input".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Linear-interpolated percentile of pre-sorted values, `q` in `[0, 100]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Distribution summary of per-sample correlation coefficients for one plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub plane: CsiPlane,
    /// Delay taps retained before extracting the plane.
    pub ld: usize,
    /// Samples that produced a coefficient.
    pub n_samples: usize,
    /// Samples skipped because the coefficient was undefined (degenerate
    /// plane); counted so silent data loss is visible.
    pub n_skipped: usize,
    pub mean: f64,
    pub median: f64,
    /// `(level_percent, low, high)` percentile bands of the per-sample
    /// distribution; empty when fewer than [`MIN_SAMPLES_FOR_CI`] samples.
    pub ci: Vec<(f64, f64, f64)>,
    pub per_sample: Vec<f64>,
}

impl CorrelationReport {
    /// One CSV row per percentile band, preceded by a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("plane,ld,n,mean,median,ci_level,ci_low,ci_high\n");
        if self.ci.is_empty() {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},,,",
                self.plane.name(),
                self.ld,
                self.n_samples,
                self.mean,
                self.median
            );
        }
        for &(level, lo, hi) in &self.ci {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{},{:.6},{:.6}",
                self.plane.name(),
                self.ld,
                self.n_samples,
                self.mean,
                self.median,
                level,
                lo,
                hi
            );
        }
        out
    }
}

/// Extracts the plane coefficient for one uplink/downlink pair.
fn plane_coefficient(ul: &CsiMatrix, dl: &CsiMatrix, plane: CsiPlane, ld: usize) -> Result<f64> {
    if ul.values.raw_dim() != dl.values.raw_dim() {
        return Err(Error::ShapeMismatch(
            "uplink and downlink matrices differ in shape".into(),
        ));
    }
    let ul_ad = to_angular_delay(ul, ld)?;
    let dl_ad = to_angular_delay(dl, ld)?;
    match plane {
        CsiPlane::SignAgreement => {
            let mut agree = 0usize;
            let total = 2 * ul_ad.values.len();
            for (a, b) in ul_ad.values.iter().zip(dl_ad.values.iter()) {
                if (a.re >= 0.0) == (b.re >= 0.0) {
                    agree += 1;
                }
                if (a.im >= 0.0) == (b.im >= 0.0) {
                    agree += 1;
                }
            }
            Ok(2.0 * agree as f64 / total as f64 - 1.0)
        }
        _ => {
            let f = |v: &num_complex::Complex64| -> f64 {
                match plane {
                    CsiPlane::Real => v.re,
                    CsiPlane::Imag => v.im,
                    CsiPlane::Magnitude => v.norm(),
                    CsiPlane::Phase => v.arg(),
                    CsiPlane::AbsReal => v.re.abs(),
                    CsiPlane::AbsImag => v.im.abs(),
                    CsiPlane::SignAgreement => unreachable!(),
                }
            };
            let a: Vec<f64> = ul_ad.values.iter().map(f).collect();
            let b: Vec<f64> = dl_ad.values.iter().map(f).collect();
            pearson(&a, &b)
        }
    }
}

/// Builds a report from in-memory uplink/downlink pairs.
pub fn correlation_report_from_pairs(
    pairs: &[(CsiMatrix, CsiMatrix)],
    plane: CsiPlane,
    ld: usize,
) -> Result<CorrelationReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no pairs to correlate".into()));
    }
    let mut per_sample = Vec::with_capacity(pairs.len());
    let mut n_skipped = 0usize;
    for (ul, dl) in pairs {
        match plane_coefficient(ul, dl, plane, ld) {
            Ok(c) => per_sample.push(c),
            Err(Error::Undefined(_)) => n_skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if per_sample.is_empty() {
        return Err(Error::Undefined(
            "correlation was undefined for every sample".into(),
        ));
    }
    let mut sorted = per_sample.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    let med = median(&sorted);
    let ci = if per_sample.len() >= MIN_SAMPLES_FOR_CI {
        [80.0, 90.0, 95.0]
            .iter()
            .map(|&level| {
                let tail = (100.0 - level) / 2.0;
                (level, percentile(&sorted, tail), percentile(&sorted, 100.0 - tail))
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(CorrelationReport {
        plane,
        ld,
        n_samples: per_sample.len(),
        n_skipped,
        mean,
        median: med,
        ci,
        per_sample,
    })
}

/// Builds a report from a dataset file; temporal datasets use frame 0 of
/// every sample.
pub fn correlation_report<P: AsRef<Path>>(
    dataset: P,
    plane: CsiPlane,
    ld: usize,
) -> Result<CorrelationReport> {
    let mut reader = DatasetReader::open(dataset)?;
    let header = *reader.header();
    // The reader returns bare matrices; wrap them in a synthetic band so the
    // transform knows the dimensions.  Carrier metadata is irrelevant here.
    let band = crate::band::BandSpec::half_wavelength(
        1e9,
        header.bandwidth_hz.max(1.0),
        header.n_subcarriers,
        header.n_tx_antennas,
    )?;
    let mut pairs = Vec::with_capacity(header.n_samples);
    for i in 0..header.n_samples {
        let frames = reader.read_sample(i)?;
        let (ul, dl) = frames.into_iter().next().expect("temporal_len >= 1");
        pairs.push((
            CsiMatrix { values: ul, band },
            CsiMatrix { values: dl, band },
        ));
    }
    correlation_report_from_pairs(&pairs, plane, ld)
}

/// One cell of a band-gap x bandwidth sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub band_gap_hz: f64,
    pub bandwidth_hz: f64,
    /// Mean magnitude-plane correlation over the cell's samples.
    pub mean_corr: f64,
    /// Normal-approximation 95% interval for the mean.
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub n_samples: usize,
}

/// Grid of sweep cells in row-major `(gap, bandwidth)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub ld: usize,
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "band_gap_hz,bandwidth_hz,mean_magnitude_corr,ci95_low,ci95_high,n_samples\n",
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{}",
                p.band_gap_hz, p.bandwidth_hz, p.mean_corr, p.ci95_low, p.ci95_high, p.n_samples
            );
        }
        out
    }

    /// Cells at one bandwidth, ordered by ascending gap.
    pub fn gap_profile(&self, bandwidth_hz: f64) -> Vec<&SweepPoint> {
        let mut v: Vec<&SweepPoint> = self
            .points
            .iter()
            .filter(|p| p.bandwidth_hz == bandwidth_hz)
            .collect();
        v.sort_by(|a, b| a.band_gap_hz.partial_cmp(&b.band_gap_hz).unwrap());
        v
    }

    /// Cells at one gap, ordered by ascending bandwidth.
    pub fn bandwidth_profile(&self, band_gap_hz: f64) -> Vec<&SweepPoint> {
        let mut v: Vec<&SweepPoint> = self
            .points
            .iter()
            .filter(|p| p.band_gap_hz == band_gap_hz)
            .collect();
        v.sort_by(|a, b| a.bandwidth_hz.partial_cmp(&b.bandwidth_hz).unwrap());
        v
    }
}

/// Measures the mean magnitude-plane correlation over a grid of band gaps
/// and bandwidths.
///
/// Each cell derives its configuration from `base`: the downlink carrier is
/// kept, the uplink carrier sits `gap` below it, both bands take the cell's
/// bandwidth, and the delay support is rescaled with `1 / bandwidth` so the
/// delay-domain occupancy stays comparable across cells.  Cells draw
/// independent, deterministic seed streams from `base.seed`.
pub fn sweep_bandgap_bandwidth(
    gaps_hz: &[f64],
    bandwidths_hz: &[f64],
    base: &ChannelConfig,
    n_samples: usize,
    ld: usize,
) -> Result<SweepTable> {
    base.validate()?;
    if gaps_hz.is_empty() || bandwidths_hz.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidConfig("sweep needs at least one sample".into()));
    }
    let mut points = Vec::with_capacity(gaps_hz.len() * bandwidths_hz.len());
    for &gap in gaps_hz {
        if !(gap.is_finite() && gap >= 0.0) {
            return Err(Error::InvalidConfig(format!("bad band gap {gap}")));
        }
        for &bw in bandwidths_hz {
            let mut cfg = *base;
            cfg.downlink.bandwidth_hz = bw;
            cfg.uplink.bandwidth_hz = bw;
            cfg.uplink.center_freq_hz = cfg.downlink.center_freq_hz - gap;
            let stretch = base.downlink.bandwidth_hz / bw;
            cfg.max_delay_s = base.max_delay_s * stretch;
            cfg.delay_decay_s = base.delay_decay_s * stretch;
            cfg.validate()?;

            // Common random numbers: sample `s` draws the same scatterer
            // geometry in every cell (delays rescale with the bandwidth),
            // so cross-cell differences isolate the band plan instead of
            // the Monte-Carlo draw.  Trends stay clean at modest sample
            // counts that independent cells would need thousands to match.
            let mut coeffs = Vec::with_capacity(n_samples);
            for s in 0..n_samples {
                let paths = sample_paths(&cfg, base.seed.wrapping_add(s as u64))?;
                let ul = synthesize_csi(&paths, &cfg.uplink, LinkDirection::Uplink)?;
                let dl = synthesize_csi(&paths, &cfg.downlink, LinkDirection::Downlink)?;
                coeffs.push(plane_coefficient(&ul, &dl, CsiPlane::Magnitude, ld)?);
            }
            let n = coeffs.len() as f64;
            let mean = coeffs.iter().sum::<f64>() / n;
            let var = coeffs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
                / (n - 1.0).max(1.0);
            let half = 1.96 * (var / n).sqrt();
            points.push(SweepPoint {
                band_gap_hz: gap,
                bandwidth_hz: bw,
                mean_corr: mean,
                ci95_low: mean - half,
                ci95_high: mean + half,
                n_samples,
            });
        }
    }
    Ok(SweepTable { ld, points })
}

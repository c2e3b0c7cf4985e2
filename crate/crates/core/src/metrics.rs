//! Reconstruction quality metrics shared by codecs and baselines.
//!
//! NMSE follows the CSI-feedback convention: the squared Frobenius error of
//! each sample is normalized by that sample's own energy, the ratios are
//! averaged over the dataset, and the result is reported in dB.  A perfect
//! reconstruction therefore has NMSE `-inf`, which serializes as the string
//! `"-inf"` in CSV and JSON outputs.
//!
//! Cosine similarity `rho` scores beamforming usefulness: per delay column,
//! the normalized inner product between reconstructed and true spatial
//! vectors, averaged over columns and samples.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Accumulates per-sample `(error energy, reference energy)` pairs.
#[derive(Debug, Clone, Default)]
pub struct NmseAccumulator {
    sum_ratio: f64,
    n: usize,
}

impl NmseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one sample; `ref_energy` must be strictly positive.
    pub fn add(&mut self, err_energy: f64, ref_energy: f64) -> Result<()> {
        if !(ref_energy.is_finite() && ref_energy > 0.0) {
            return Err(Error::Undefined(format!(
                "NMSE needs positive reference energy, got {ref_energy}"
            )));
        }
        if !err_energy.is_finite() || err_energy < 0.0 {
            return Err(Error::Undefined(format!(
                "error energy must be finite and non-negative, got {err_energy}"
            )));
        }
        self.sum_ratio += err_energy / ref_energy;
        self.n += 1;
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    /// Mean ratio in dB; `-inf` for exact reconstructions.
    pub fn nmse_db(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::Undefined("no samples accumulated".into()));
        }
        let mean = self.sum_ratio / self.n as f64;
        if mean == 0.0 {
            Ok(f64::NEG_INFINITY)
        } else {
            Ok(10.0 * mean.log10())
        }
    }
}

/// NMSE in dB over complex matrices.
pub fn nmse_db_complex(truth: &[Array2<Complex64>], est: &[Array2<Complex64>]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth vs {} estimate samples",
            truth.len(),
            est.len()
        )));
    }
    let mut acc = NmseAccumulator::new();
    for (t, e) in truth.iter().zip(est.iter()) {
        if t.raw_dim() != e.raw_dim() {
            return Err(Error::ShapeMismatch(
                "truth and estimate matrices differ in shape".into(),
            ));
        }
        let err: f64 = t.iter().zip(e.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let energy: f64 = t.iter().map(|a| a.norm_sqr()).sum();
        acc.add(err, energy)?;
    }
    acc.nmse_db()
}

/// NMSE in dB over real planes; each sample may span several planes, whose
/// energies are pooled before normalization.
pub fn nmse_db_real(truth: &[Vec<Array2<f64>>], est: &[Vec<Array2<f64>>]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth vs {} estimate samples",
            truth.len(),
            est.len()
        )));
    }
    let mut acc = NmseAccumulator::new();
    for (ts, es) in truth.iter().zip(est.iter()) {
        if ts.len() != es.len() {
            return Err(Error::ShapeMismatch(
                "plane counts differ between truth and estimate".into(),
            ));
        }
        let mut err = 0.0;
        let mut energy = 0.0;
        for (t, e) in ts.iter().zip(es.iter()) {
            if t.raw_dim() != e.raw_dim() {
                return Err(Error::ShapeMismatch(
                    "plane shapes differ between truth and estimate".into(),
                ));
            }
            err += t.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            energy += t.iter().map(|a| a * a).sum::<f64>();
        }
        acc.add(err, energy)?;
    }
    acc.nmse_db()
}

/// Mean per-column cosine similarity between complex matrices.
///
/// Columns where either side has zero norm are skipped; if every column is
/// degenerate the similarity is undefined.
pub fn cosine_sim(truth: &[Array2<Complex64>], est: &[Array2<Complex64>]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth vs {} estimate samples",
            truth.len(),
            est.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Undefined("no samples".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, e) in truth.iter().zip(est.iter()) {
        if t.raw_dim() != e.raw_dim() {
            return Err(Error::ShapeMismatch(
                "truth and estimate matrices differ in shape".into(),
            ));
        }
        for j in 0..t.ncols() {
            let mut dot = Complex64::new(0.0, 0.0);
            let mut nt2 = 0.0;
            let mut ne2 = 0.0;
            for i in 0..t.nrows() {
                let a = t[(i, j)];
                let b = e[(i, j)];
                dot += b.conj() * a;
                nt2 += a.norm_sqr();
                ne2 += b.norm_sqr();
            }
            if nt2 > 0.0 && ne2 > 0.0 {
                total += dot.norm() / (nt2.sqrt() * ne2.sqrt());
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Undefined(
            "cosine similarity undefined: all columns degenerate".into(),
        ));
    }
    Ok(total / count as f64)
}

/// Formats a dB value for CSV/JSON output, with `-inf` as the sentinel.
pub fn format_db(db: f64) -> String {
    if db == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{db:.6}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scaled_estimate_has_closed_form_nmse() {
        // est = 0.9 * truth  =>  NMSE = |1 - 0.9|^2 = -20 dB exactly.
        let truth = vec![array![[c(1.0, 2.0), c(-0.5, 0.3)], [c(0.1, -1.0), c(2.0, 0.0)]]];
        let est: Vec<_> = truth.iter().map(|m| m.mapv(|v| v * 0.9)).collect();
        let db = nmse_db_complex(&truth, &est).unwrap();
        assert!((db - (-20.0)).abs() < 1e-10);
    }

    #[test]
    fn perfect_reconstruction_is_negative_infinity() {
        let truth = vec![array![[c(1.0, 0.0), c(0.0, 1.0)]]];
        let db = nmse_db_complex(&truth, &truth.clone()).unwrap();
        assert_eq!(db, f64::NEG_INFINITY);
        assert_eq!(format_db(db), "-inf");
        assert_eq!(format_db(-12.5), "-12.500000");
    }

    #[test]
    fn nmse_averages_ratios_not_energies() {
        // Sample 1: ratio 0.01; sample 2: ratio 0.04 => mean 0.025.
        let truth = vec![
            array![[c(1.0, 0.0)], [c(0.0, 0.0)]],
            array![[c(2.0, 0.0)], [c(0.0, 0.0)]],
        ];
        let est = vec![
            array![[c(0.9, 0.0)], [c(0.0, 0.0)]],
            array![[c(1.6, 0.0)], [c(0.0, 0.0)]],
        ];
        let db = nmse_db_complex(&truth, &est).unwrap();
        assert!((db - 10.0 * 0.025f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn real_plane_nmse_pools_planes_per_sample() {
        let truth = vec![vec![array![[1.0, 0.0]], array![[0.0, 2.0]]]];
        let est = vec![vec![array![[0.0, 0.0]], array![[0.0, 2.0]]]];
        // err = 1, energy = 1 + 4 = 5.
        let db = nmse_db_real(&truth, &est).unwrap();
        assert!((db - 10.0 * (1.0f64 / 5.0).log10()).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_energy_is_an_error() {
        let truth = vec![array![[c(0.0, 0.0)]]];
        let est = vec![array![[c(1.0, 0.0)]]];
        assert!(nmse_db_complex(&truth, &est).is_err());
        let mut acc = NmseAccumulator::new();
        assert!(acc.add(1.0, 0.0).is_err());
        assert!(acc.nmse_db().is_err());
    }

    #[test]
    fn cosine_similarity_is_phase_invariant() {
        let truth = vec![array![[c(1.0, 1.0)], [c(0.5, -0.2)]]];
        // Global phase rotation and scaling leave rho at exactly 1.
        let rot = Complex64::from_polar(3.0, 1.2);
        let est: Vec<_> = truth.iter().map(|m| m.mapv(|v| v * rot)).collect();
        let rho = cosine_sim(&truth, &est).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_similarity_of_orthogonal_columns_is_zero() {
        let truth = vec![array![[c(1.0, 0.0)], [c(0.0, 0.0)]]];
        let est = vec![array![[c(0.0, 0.0)], [c(1.0, 0.0)]]];
        let rho = cosine_sim(&truth, &est).unwrap();
        assert!(rho.abs() < 1e-12);
    }

    #[test]
    fn cosine_similarity_skips_zero_columns() {
        let truth = vec![array![
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0)]
        ]];
        let est = vec![array![
            [c(1.0, 0.0), c(1.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0)]
        ]];
        // Second column of truth is zero: skipped, leaving rho = 1.
        let rho = cosine_sim(&truth, &est).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let a = vec![array![[c(1.0, 0.0)]]];
        let b = vec![array![[c(1.0, 0.0), c(0.0, 0.0)]]];
        assert!(nmse_db_complex(&a, &b).is_err());
        assert!(cosine_sim(&a, &b).is_err());
        assert!(nmse_db_complex(&a, &[]).is_err());
    }
}

//! Real-plane representations of angular-delay CSI.
//!
//! Codecs consume real-valued image planes, not complex matrices.  Three
//! decompositions are supported:
//!
//! * `Org` — Cartesian real and imaginary planes (classic CsiNet input);
//! * `Polar` — magnitude and phase planes; the magnitude plane is what the
//!   bi-directional correlation studies show survives a band gap;
//! * `Abs` — `|Re|` and `|Im|` planes plus the two sign-bit masks needed to
//!   undo the folding.
//!
//! Every plane is normalized per sample to `[0, 1]` by its own min/max, and
//! the scale is kept alongside so `recompose(decompose(x)) == x`.  Codecs
//! treat the normalized planes as the learning target; the stored scale (and
//! for `Abs` the sign masks) is side information that the feedback link is
//! assumed to deliver separately.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::band::BandSpec;
use crate::error::{Error, Result};
use crate::transform::AngularDelayCsi;

/// Which real-plane decomposition a [`Planes`] value holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReprMode {
    /// Real and imaginary planes.
    Org,
    /// Magnitude and phase planes (phase of a zero entry is 0).
    Polar,
    /// Absolute real and imaginary planes with separate sign masks.
    Abs,
}

impl ReprMode {
    /// Number of real planes the mode produces.
    pub fn n_planes(&self) -> usize {
        2
    }
}

/// Per-plane min/max normalization bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormScale {
    /// `(min, max)` of each plane before normalization.
    pub bounds: Vec<(f64, f64)>,
}

impl NormScale {
    /// Identity scale: planes are already in physical units.
    pub fn identity(n_planes: usize) -> Self {
        Self {
            bounds: vec![(0.0, 1.0); n_planes],
        }
    }
}

/// Normalized real planes of one CSI sample plus everything needed to invert
/// them back to a complex angular-delay image.
#[derive(Debug, Clone, PartialEq)]
pub struct Planes {
    pub mode: ReprMode,
    /// Planes normalized to `[0, 1]`; all share one shape.
    pub planes: Vec<Array2<f64>>,
    pub scale: NormScale,
    /// `Abs` only: true where the real part is non-negative.
    pub sign_re: Option<Array2<bool>>,
    /// `Abs` only: true where the imaginary part is non-negative.
    pub sign_im: Option<Array2<bool>>,
    /// Band and axis metadata carried through from the transform.
    pub band: BandSpec,
    pub angular: bool,
}

fn normalize(plane: Array2<f64>) -> (Array2<f64>, (f64, f64)) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in plane.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        let span = hi - lo;
        (plane.mapv(|v| (v - lo) / span), (lo, hi))
    } else {
        // Constant plane: normalized image is all zeros, bounds remember it.
        (Array2::zeros(plane.raw_dim()), (lo, lo))
    }
}

fn denormalize(plane: &Array2<f64>, (lo, hi): (f64, f64)) -> Array2<f64> {
    if hi > lo {
        plane.mapv(|v| lo + v * (hi - lo))
    } else {
        Array2::from_elem(plane.raw_dim(), lo)
    }
}

impl Planes {
    /// Returns plane `i` mapped back to physical units.
    pub fn denormalized(&self, i: usize) -> Array2<f64> {
        denormalize(&self.planes[i], self.scale.bounds[i])
    }
}

/// Splits an angular-delay image into normalized real planes.
pub fn decompose(ad: &AngularDelayCsi, mode: ReprMode) -> Planes {
    let (a, b) = match mode {
        ReprMode::Org => (ad.values.mapv(|v| v.re), ad.values.mapv(|v| v.im)),
        ReprMode::Polar => (ad.values.mapv(|v| v.norm()), ad.values.mapv(|v| v.arg())),
        ReprMode::Abs => (ad.values.mapv(|v| v.re.abs()), ad.values.mapv(|v| v.im.abs())),
    };
    let (sign_re, sign_im) = if mode == ReprMode::Abs {
        (
            Some(ad.values.mapv(|v| v.re >= 0.0)),
            Some(ad.values.mapv(|v| v.im >= 0.0)),
        )
    } else {
        (None, None)
    };
    let (pa, ba) = normalize(a);
    let (pb, bb) = normalize(b);
    Planes {
        mode,
        planes: vec![pa, pb],
        scale: NormScale { bounds: vec![ba, bb] },
        sign_re,
        sign_im,
        band: ad.band,
        angular: ad.angular,
    }
}

/// Rebuilds the complex angular-delay image from real planes.
///
/// `Polar` requires non-negative magnitudes after denormalization, and `Abs`
/// requires both sign masks; violations are reported rather than silently
/// clamped.
pub fn recompose(p: &Planes) -> Result<AngularDelayCsi> {
    if p.planes.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "expected 2 planes, got {}",
            p.planes.len()
        )));
    }
    if p.scale.bounds.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "expected 2 scale bounds, got {}",
            p.scale.bounds.len()
        )));
    }
    if p.planes[0].raw_dim() != p.planes[1].raw_dim() {
        return Err(Error::ShapeMismatch(
            "plane shapes differ between channels".into(),
        ));
    }
    let a = denormalize(&p.planes[0], p.scale.bounds[0]);
    let b = denormalize(&p.planes[1], p.scale.bounds[1]);
    let values = match p.mode {
        ReprMode::Org => {
            let mut out = Array2::<Complex64>::zeros(a.raw_dim());
            ndarray::Zip::from(&mut out).and(&a).and(&b).for_each(|o, &re, &im| {
                *o = Complex64::new(re, im);
            });
            out
        }
        ReprMode::Polar => {
            if let Some(bad) = a.iter().find(|&&m| m < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "negative magnitude {bad} cannot be recomposed"
                )));
            }
            let mut out = Array2::<Complex64>::zeros(a.raw_dim());
            ndarray::Zip::from(&mut out).and(&a).and(&b).for_each(|o, &m, &ph| {
                *o = Complex64::from_polar(m, ph);
            });
            out
        }
        ReprMode::Abs => {
            let (sr, si) = match (&p.sign_re, &p.sign_im) {
                (Some(sr), Some(si)) => (sr, si),
                _ => {
                    return Err(Error::InvalidConfig(
                        "Abs planes need both sign masks to recompose".into(),
                    ))
                }
            };
            if sr.raw_dim() != a.raw_dim() || si.raw_dim() != a.raw_dim() {
                return Err(Error::ShapeMismatch(
                    "sign mask shape differs from planes".into(),
                ));
            }
            let mut out = Array2::<Complex64>::zeros(a.raw_dim());
            for ((i, j), o) in out.indexed_iter_mut() {
                let re = if sr[(i, j)] { a[(i, j)].abs() } else { -a[(i, j)].abs() };
                let im = if si[(i, j)] { b[(i, j)].abs() } else { -b[(i, j)].abs() };
                *o = Complex64::new(re, im);
            }
            out
        }
    };
    Ok(AngularDelayCsi {
        values,
        band: p.band,
        angular: p.angular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn band() -> BandSpec {
        BandSpec::half_wavelength(5.3e9, 20e6, 256, 2).unwrap()
    }

    fn sample() -> AngularDelayCsi {
        AngularDelayCsi {
            values: array![
                [Complex64::new(-3.0, -4.0), Complex64::new(1.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(0.5, -2.0)],
            ],
            band: band(),
            angular: true,
        }
    }

    fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn polar_of_reference_value() {
        let ad = sample();
        let p = decompose(&ad, ReprMode::Polar);
        let mag = p.denormalized(0);
        let phase = p.denormalized(1);
        assert!((mag[(0, 0)] - 5.0).abs() < 1e-12);
        assert!((phase[(0, 0)] - (-2.214297435588181)).abs() < 1e-12);
        // Phase of an exact zero is zero by convention.
        assert_eq!(phase[(1, 0)], 0.0);
    }

    #[test]
    fn all_modes_round_trip() {
        let ad = sample();
        for mode in [ReprMode::Org, ReprMode::Polar, ReprMode::Abs] {
            let p = decompose(&ad, mode);
            let back = recompose(&p).unwrap();
            assert!(
                max_abs_diff(&ad.values, &back.values) < 1e-12,
                "round trip failed for {mode:?}"
            );
            assert_eq!(back.band, ad.band);
            assert_eq!(back.angular, ad.angular);
        }
    }

    #[test]
    fn planes_are_normalized_to_unit_interval() {
        let ad = sample();
        for mode in [ReprMode::Org, ReprMode::Polar, ReprMode::Abs] {
            let p = decompose(&ad, mode);
            for plane in &p.planes {
                for &v in plane.iter() {
                    assert!((0.0..=1.0).contains(&v), "{mode:?} value {v}");
                }
                let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(lo, 0.0);
                assert_eq!(hi, 1.0);
            }
        }
    }

    #[test]
    fn constant_plane_normalizes_to_zeros_and_round_trips() {
        let ad = AngularDelayCsi {
            values: Array2::from_elem((2, 2), Complex64::new(0.7, 0.7)),
            band: band(),
            angular: true,
        };
        let p = decompose(&ad, ReprMode::Org);
        assert!(p.planes[0].iter().all(|&v| v == 0.0));
        assert_eq!(p.scale.bounds[0], (0.7, 0.7));
        let back = recompose(&p).unwrap();
        assert!(max_abs_diff(&ad.values, &back.values) < 1e-15);
    }

    #[test]
    fn abs_mode_records_signs() {
        let ad = sample();
        let p = decompose(&ad, ReprMode::Abs);
        let sr = p.sign_re.as_ref().unwrap();
        let si = p.sign_im.as_ref().unwrap();
        assert!(!sr[(0, 0)] && !si[(0, 0)]); // -3 - 4i
        assert!(sr[(0, 1)] && si[(0, 1)]); // 1 + 0i (zero counts as +)
        assert!(sr[(1, 1)] && !si[(1, 1)]); // 0.5 - 2i
    }

    #[test]
    fn abs_recompose_requires_signs() {
        let ad = sample();
        let mut p = decompose(&ad, ReprMode::Abs);
        p.sign_im = None;
        assert!(recompose(&p).is_err());
    }

    #[test]
    fn polar_recompose_rejects_negative_magnitude() {
        let ad = sample();
        let mut p = decompose(&ad, ReprMode::Polar);
        // Forge a scale whose lower bound dips below zero.
        p.scale.bounds[0] = (-1.0, 1.0);
        assert!(recompose(&p).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let ad = sample();
        let mut p = decompose(&ad, ReprMode::Org);
        p.planes[1] = Array2::zeros((3, 3));
        assert!(recompose(&p).is_err());
    }
}

//! Frequency/space to delay/angle transforms with truncation.
//!
//! CSI feedback codecs operate on the angular-delay image of the channel: an
//! orthonormal inverse DFT along subcarriers concentrates each path at its
//! delay tap, and an orthonormal DFT across the ULA elements concentrates it
//! at its spatial frequency.  Because path delays are bounded well below the
//! OFDM symbol length, only the first `ld` delay columns carry energy and the
//! rest can be dropped before encoding.
//!
//! Both transforms are orthonormal (scale `1/sqrt(N)` in each direction), so
//! an untruncated round trip is exact to machine precision and truncation is
//! the only lossy step.  The angular DFT can be disabled to study codecs on
//! the raw spatial axis; the flag is carried in the output so the inverse
//! knows what to undo.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

use crate::band::BandSpec;
use crate::channel::CsiMatrix;
use crate::error::{Error, Result};

/// Angular-delay image of one band's CSI: antennas-or-beams along rows,
/// delay taps along columns (`ld` of the original `n_subcarriers`).
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDelayCsi {
    pub values: Array2<Complex64>,
    /// Band the image was computed from; fixes `n_subcarriers` for inversion.
    pub band: BandSpec,
    /// Whether the antenna axis was DFT-transformed to the angular domain.
    pub angular: bool,
}

impl AngularDelayCsi {
    /// Number of retained delay taps.
    pub fn ld(&self) -> usize {
        self.values.ncols()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(len)
        } else {
            p.plan_fft_inverse(len)
        }
    })
}

/// Applies an orthonormal (I)DFT along each row of `m` in place.
fn transform_rows(m: &mut Array2<Complex64>, forward: bool) {
    let len = m.ncols();
    let fft = plan(len, forward);
    let scale = 1.0 / (len as f64).sqrt();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for mut row in m.rows_mut() {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (v, b) in row.iter_mut().zip(buf.iter()) {
            *v = *b * scale;
        }
    }
}

/// Applies an orthonormal (I)DFT along each column of `m` in place.
fn transform_cols(m: &mut Array2<Complex64>, forward: bool) {
    let len = m.nrows();
    let fft = plan(len, forward);
    let scale = 1.0 / (len as f64).sqrt();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for j in 0..m.ncols() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = m[(i, j)];
        }
        fft.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            m[(i, j)] = *b * scale;
        }
    }
}

/// Transforms frequency-domain CSI to the angular-delay domain, keeping the
/// first `ld` delay taps.
pub fn to_angular_delay(csi: &CsiMatrix, ld: usize) -> Result<AngularDelayCsi> {
    to_angular_delay_with(csi, ld, true)
}

/// As [`to_angular_delay`], with the antenna-axis DFT made optional.
pub fn to_angular_delay_with(csi: &CsiMatrix, ld: usize, angular: bool) -> Result<AngularDelayCsi> {
    let (nt, nc) = (csi.values.nrows(), csi.values.ncols());
    if nt != csi.band.n_tx_antennas || nc != csi.band.n_subcarriers {
        return Err(Error::ShapeMismatch(format!(
            "CSI is {nt}x{nc} but its band says {}x{}",
            csi.band.n_tx_antennas, csi.band.n_subcarriers
        )));
    }
    if ld == 0 || ld > nc {
        return Err(Error::InvalidConfig(format!(
            "delay truncation must satisfy 1 <= ld <= {nc}, got {ld}"
        )));
    }
    let mut full = csi.values.clone();
    // Subcarriers -> delay taps (inverse DFT), then truncate before the
    // cheaper per-column angular transform.
    transform_rows(&mut full, false);
    let mut kept = full.slice(ndarray::s![.., 0..ld]).to_owned();
    if angular {
        transform_cols(&mut kept, true);
    }
    Ok(AngularDelayCsi {
        values: kept,
        band: csi.band,
        angular,
    })
}

/// Inverts [`to_angular_delay`], zero-filling the dropped delay taps.
pub fn from_angular_delay(ad: &AngularDelayCsi, n_subcarriers: usize) -> Result<CsiMatrix> {
    let (nt, ld) = (ad.values.nrows(), ad.values.ncols());
    if n_subcarriers != ad.band.n_subcarriers {
        return Err(Error::ShapeMismatch(format!(
            "requested {n_subcarriers} subcarriers but the band has {}",
            ad.band.n_subcarriers
        )));
    }
    if nt != ad.band.n_tx_antennas || ld > n_subcarriers {
        return Err(Error::ShapeMismatch(format!(
            "angular-delay image {nt}x{ld} does not fit band {}x{}",
            ad.band.n_tx_antennas, n_subcarriers
        )));
    }
    let mut beams = ad.values.clone();
    if ad.angular {
        transform_cols(&mut beams, false);
    }
    let mut full = Array2::<Complex64>::zeros((nt, n_subcarriers));
    full.slice_mut(ndarray::s![.., 0..ld]).assign(&beams);
    transform_rows(&mut full, true);
    Ok(CsiMatrix {
        values: full,
        band: ad.band,
    })
}

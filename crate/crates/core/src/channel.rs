//! Cluster-based multipath synthesis for paired uplink/downlink bands.
//!
//! One call to [`sample_paths`] draws a scatterer geometry — cluster delays,
//! departure angles, per-ray gains and phases — that is *shared* by the two
//! bands of a [`ChannelConfig`].  The frequency-domain CSI matrix of either
//! band is then a deterministic function of that geometry via
//! [`synthesize_csi`], so uplink/downlink correlation studies always compare
//! two views of the same physical channel.
//!
//! Decorrelation across the band gap `df` enters in three places:
//!
//! * gain mixing: `mag_dl = rho * mag_ul + sqrt(1 - rho^2) * mag'` with
//!   `rho = exp(-df / f_dec)` and `mag'` an independent draw of the same law;
//! * phase drift: `phase_dl = phase_ul + N(0, (kappa * df * delay)^2)`,
//!   wrapped to `(-pi, pi]`;
//! * band-dependent observation: the carrier term `exp(-j 2 pi f_c tau)` and
//!   the steering wavelength both change with the carrier, so even identical
//!   gains produce different frequency responses on the two bands.
//!
//! With a zero gap all three effects vanish and the two bands observe
//! bit-identical channels, which the tests rely on.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::band::{BandSpec, ChannelConfig};
use crate::error::{Error, Result};

/// Absolute intra-cluster delay jitter (seconds), applied per ray around the
/// cluster delay.  The spread is deliberately *not* scaled with bandwidth: a
/// narrow band cannot resolve it, so rays of a cluster collide in one delay
/// tap and their band-dependent phase sum decorrelates the tap magnitude,
/// while a wide band separates the rays into stable single-ray taps.  This is
/// the mechanism behind the bandwidth trend in the correlation sweeps.
pub const INTRA_CLUSTER_DELAY_SPREAD_S: f64 = 60e-9;

/// Which band of the pair to observe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkDirection {
    Uplink,
    Downlink,
}

/// One propagation path with its per-band gain and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Propagation delay in seconds.
    pub delay_s: f64,
    /// Departure angle from array broadside, radians in `[-pi/2, pi/2]`.
    pub angle_rad: f64,
    /// Magnitude gain seen by the uplink band.
    pub mag_ul: f64,
    /// Magnitude gain seen by the downlink band.
    pub mag_dl: f64,
    /// Uplink phase, radians in `(-pi, pi]`.
    pub phase_ul: f64,
    /// Downlink phase, radians in `(-pi, pi]`.
    pub phase_dl: f64,
    /// Angle between path direction and receiver motion; fixes the Doppler
    /// shift of this path when the geometry is evolved in time.
    pub doppler_angle_rad: f64,
}

/// A draw of multipath geometry, tagged with the band pair it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
    /// Carrier of the uplink band the gains were drawn for.
    pub ul_center_hz: f64,
    /// Carrier of the downlink band the gains were drawn for.
    pub dl_center_hz: f64,
}

impl PathSet {
    /// Wraps hand-built paths; mainly useful for tests and calibration.
    pub fn from_paths(paths: Vec<Path>, ul_center_hz: f64, dl_center_hz: f64) -> Self {
        Self {
            paths,
            ul_center_hz,
            dl_center_hz,
        }
    }

    fn center_for(&self, direction: LinkDirection) -> f64 {
        match direction {
            LinkDirection::Uplink => self.ul_center_hz,
            LinkDirection::Downlink => self.dl_center_hz,
        }
    }
}

/// Frequency-domain CSI of one band: antennas along rows, subcarriers along
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    pub values: Array2<Complex64>,
    pub band: BandSpec,
}

impl CsiMatrix {
    pub fn n_tx_antennas(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.values.ncols()
    }
}

/// Wraps an angle to `(-pi, pi]`, leaving in-range values bit-identical.
pub(crate) fn wrap_phase(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let y = x - 2.0 * PI * (x / (2.0 * PI)).round();
    if y <= -PI {
        y + 2.0 * PI
    } else if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Draws a truncated-exponential delay in `[0, max_delay)` with scale `decay`.
fn truncated_exp(u: f64, decay: f64, max_delay: f64) -> f64 {
    // Inverse CDF of the exponential restricted to [0, max_delay).
    let cap = 1.0 - (-max_delay / decay).exp();
    -decay * (1.0 - u * cap).ln()
}

/// Draws a shared multipath geometry for the configured band pair.
///
/// All randomness comes from `rng_seed` through a counter-based generator,
/// and every variate is drawn regardless of the band gap, so the same seed
/// yields the same geometry for any gap; only the derived downlink gains and
/// phases differ.  Magnitudes follow a Rayleigh law shaped by the exponential
/// power-delay profile and are normalized so the expected total path power is
/// one.
pub fn sample_paths(config: &ChannelConfig, rng_seed: u64) -> Result<PathSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let band_gap = config.band_gap_hz();
    let rho = config.gain_mixing();
    let ortho = (1.0 - rho * rho).max(0.0).sqrt();

    let mut paths = Vec::with_capacity(config.n_paths());
    // Raw per-ray draws; downlink values are derived afterwards so the draw
    // order (and hence the geometry for a given seed) never depends on the
    // band gap.
    let mut power_sum = 0.0;
    let mut raw: Vec<(f64, f64, f64, f64, f64, f64, f64)> = Vec::with_capacity(config.n_paths());
    for _ in 0..config.n_clusters {
        let cluster_angle = rng.random_range(-PI / 2.0..PI / 2.0);
        let cluster_delay = truncated_exp(rng.random::<f64>(), config.delay_decay_s, config.max_delay_s);
        for _ in 0..config.rays_per_cluster {
            let angle = (cluster_angle + rng.random_range(-config.angle_spread_rad..=config.angle_spread_rad))
                .clamp(-PI / 2.0, PI / 2.0);
            let jitter = rng.random_range(-INTRA_CLUSTER_DELAY_SPREAD_S..=INTRA_CLUSTER_DELAY_SPREAD_S);
            let delay = (cluster_delay + jitter).clamp(0.0, config.max_delay_s);
            // Rayleigh magnitude with E[m^2] = P(delay) via inverse sampling.
            let profile = (-delay / config.delay_decay_s).exp();
            let m_ul = (profile * -(1.0 - rng.random::<f64>()).ln()).sqrt();
            let m_indep = (profile * -(1.0 - rng.random::<f64>()).ln()).sqrt();
            let phase_ul = rng.random_range(-PI..=PI);
            let drift_z: f64 = rng.sample(StandardNormal);
            let doppler_angle = rng.random_range(-PI..=PI);
            power_sum += profile;
            raw.push((delay, angle, m_ul, m_indep, phase_ul, drift_z, doppler_angle));
        }
    }

    // Normalize expected total power to one.
    let gain = 1.0 / power_sum.sqrt();
    for (delay, angle, m_ul, m_indep, phase_ul, drift_z, doppler_angle) in raw {
        let mag_ul = gain * m_ul;
        let mag_dl = rho * mag_ul + ortho * gain * m_indep;
        let drift_sd = config.phase_decorrelation * band_gap * delay;
        let phase_dl = wrap_phase(phase_ul + drift_sd * drift_z);
        paths.push(Path {
            delay_s: delay,
            angle_rad: angle,
            mag_ul,
            mag_dl,
            phase_ul,
            phase_dl,
            doppler_angle_rad: doppler_angle,
        });
    }

    Ok(PathSet {
        paths,
        ul_center_hz: config.uplink.center_freq_hz,
        dl_center_hz: config.downlink.center_freq_hz,
    })
}

/// Synthesizes the frequency-domain CSI matrix of one band.
///
/// Entry `(n, k)` is the sum over paths of
/// `mag * exp(j phase) * exp(-j 2 pi (f_c + f_k) tau) * exp(-j 2 pi n (d / lambda) sin(angle))`
/// with `f_k` the baseband subcarrier offset and `lambda` the carrier
/// wavelength of *this* band.  Accumulation order is fixed (paths, then
/// antennas, then subcarriers), so results are bit-reproducible.
pub fn synthesize_csi(
    paths: &PathSet,
    band: &BandSpec,
    direction: LinkDirection,
) -> Result<CsiMatrix> {
    band.validate()?;
    let expected = paths.center_for(direction);
    if band.center_freq_hz != expected {
        return Err(Error::BandMismatch(format!(
            "band carrier {} Hz but paths were drawn for {} Hz ({direction:?})",
            band.center_freq_hz, expected
        )));
    }

    let nt = band.n_tx_antennas;
    let nc = band.n_subcarriers;
    let spacing = band.spacing_in_wavelengths();
    let mut h = Array2::<Complex64>::zeros((nt, nc));
    let mut row = vec![Complex64::new(0.0, 0.0); nc];
    for p in &paths.paths {
        let (mag, phase) = match direction {
            LinkDirection::Uplink => (p.mag_ul, p.phase_ul),
            LinkDirection::Downlink => (p.mag_dl, p.phase_dl),
        };
        if mag == 0.0 {
            continue;
        }
        let gain = Complex64::from_polar(mag, phase);
        for (k, slot) in row.iter_mut().enumerate() {
            let f = band.center_freq_hz + band.subcarrier_offset_hz(k);
            *slot = gain * Complex64::from_polar(1.0, -2.0 * PI * f * p.delay_s);
        }
        let spatial = -2.0 * PI * spacing * p.angle_rad.sin();
        for n in 0..nt {
            let steer = Complex64::from_polar(1.0, spatial * n as f64);
            let mut out = h.row_mut(n);
            for (k, slot) in out.iter_mut().enumerate() {
                *slot += steer * row[k];
            }
        }
    }

    Ok(CsiMatrix { values: h, band: *band })
}

/// Advances every path phase by its Doppler rotation over `dt` seconds.
///
/// The rotation `2 pi f_d cos(doppler_angle) dt` applies to both bands'
/// phases; delays, angles and magnitudes are untouched (block-fading over the
/// evolution horizon).  `doppler_freq_hz = 0` returns the input unchanged.
pub fn evolve_paths(paths: &PathSet, doppler_freq_hz: f64, dt_s: f64) -> Result<PathSet> {
    if !(doppler_freq_hz.is_finite() && doppler_freq_hz >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "doppler frequency must be non-negative, got {doppler_freq_hz}"
        )));
    }
    if !(dt_s.is_finite() && dt_s >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "time step must be non-negative, got {dt_s}"
        )));
    }
    let mut out = paths.clone();
    for p in &mut out.paths {
        let rotation = 2.0 * PI * doppler_freq_hz * p.doppler_angle_rad.cos() * dt_s;
        p.phase_ul = wrap_phase(p.phase_ul + rotation);
        p.phase_dl = wrap_phase(p.phase_dl + rotation);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::SPEED_OF_LIGHT;

    fn pair(gap_hz: f64) -> ChannelConfig {
        let dl = BandSpec::half_wavelength(5.3e9, 20e6, 256, 32).unwrap();
        let ul = BandSpec {
            center_freq_hz: 5.3e9 - gap_hz,
            ..dl
        };
        ChannelConfig::new(ul, dl, 0).unwrap()
    }

    #[test]
    fn zero_gap_paths_are_identical_across_bands() {
        let cfg = pair(0.0);
        let paths = sample_paths(&cfg, 42).unwrap();
        for p in &paths.paths {
            assert_eq!(p.mag_ul, p.mag_dl);
            assert_eq!(p.phase_ul, p.phase_dl);
        }
    }

    #[test]
    fn same_seed_same_geometry_for_any_gap() {
        let near = sample_paths(&pair(0.0), 9).unwrap();
        let far = sample_paths(&pair(400e6), 9).unwrap();
        for (a, b) in near.paths.iter().zip(&far.paths) {
            assert_eq!(a.delay_s, b.delay_s);
            assert_eq!(a.angle_rad, b.angle_rad);
            assert_eq!(a.mag_ul, b.mag_ul);
            assert_eq!(a.phase_ul, b.phase_ul);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let cfg = pair(180e6);
        let a = sample_paths(&cfg, 5).unwrap();
        let b = sample_paths(&cfg, 5).unwrap();
        let c = sample_paths(&cfg, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn path_count_and_support_match_config() {
        let cfg = pair(180e6);
        let paths = sample_paths(&cfg, 3).unwrap();
        assert_eq!(paths.paths.len(), cfg.n_paths());
        for p in &paths.paths {
            assert!(p.delay_s >= 0.0 && p.delay_s <= cfg.max_delay_s);
            assert!(p.angle_rad.abs() <= PI / 2.0);
            assert!(p.mag_ul >= 0.0 && p.mag_dl >= 0.0);
            assert!(p.phase_ul > -PI && p.phase_ul <= PI);
            assert!(p.phase_dl > -PI && p.phase_dl <= PI);
        }
    }

    /// Pooled Pearson correlation between uplink and downlink magnitudes
    /// equals the mixing weight when the power-delay profile is flat.  With
    /// gap / f_dec = 0.5 the weight is exp(-0.5) ~ 0.6065.
    #[test]
    fn gain_mixing_matches_pearson_under_flat_profile() {
        let mut cfg = pair(500e6);
        cfg.gain_decorrelation_freq_hz = 1e9;
        cfg.phase_decorrelation = 0.0;
        // Flat profile: decay much longer than the delay support.
        cfg.delay_decay_s = cfg.max_delay_s * 1e6;
        let mut ul = Vec::new();
        let mut dl = Vec::new();
        for seed in 0..800 {
            let paths = sample_paths(&cfg, seed).unwrap();
            for p in &paths.paths {
                ul.push(p.mag_ul);
                dl.push(p.mag_dl);
            }
        }
        let r = crate::correlation::pearson(&ul, &dl).unwrap();
        assert!(
            (r - (-0.5f64).exp()).abs() < 0.05,
            "pooled magnitude correlation {r} should be near exp(-0.5)"
        );
    }

    /// A 100 ns path across a 200 MHz gap picks up a carrier phase offset of
    /// exactly 2 pi * 20, i.e. no offset at all modulo a full turn.
    #[test]
    fn carrier_phase_offset_wraps_after_full_turns() {
        let dl = BandSpec::half_wavelength(5.3e9, 20e6, 256, 32).unwrap();
        let ul = BandSpec {
            center_freq_hz: 5.1e9,
            ..dl
        };
        let path = Path {
            delay_s: 100e-9,
            angle_rad: 0.3,
            mag_ul: 1.0,
            mag_dl: 1.0,
            phase_ul: 0.7,
            phase_dl: 0.7,
            doppler_angle_rad: 0.0,
        };
        let paths = PathSet::from_paths(vec![path], 5.1e9, 5.3e9);
        let h_ul = synthesize_csi(&paths, &ul, LinkDirection::Uplink).unwrap();
        let h_dl = synthesize_csi(&paths, &dl, LinkDirection::Downlink).unwrap();
        // First antenna, center subcarrier: only the carrier term acts, and
        // 5.1 GHz and 5.3 GHz times 100 ns are both whole numbers of turns.
        let k = 128;
        let a = h_ul.values[(0, k)].arg();
        let b = h_dl.values[(0, k)].arg();
        assert!((a - 0.7).abs() < 1e-6, "uplink phase {a}");
        assert!((b - 0.7).abs() < 1e-6, "downlink phase {b}");
    }

    #[test]
    fn synthesize_rejects_foreign_band() {
        let cfg = pair(180e6);
        let paths = sample_paths(&cfg, 1).unwrap();
        let other = BandSpec::half_wavelength(2.4e9, 20e6, 256, 32).unwrap();
        assert!(synthesize_csi(&paths, &other, LinkDirection::Downlink).is_err());
        // Asking for the uplink with the downlink band is also a mismatch.
        assert!(synthesize_csi(&paths, &cfg.downlink, LinkDirection::Uplink).is_err());
    }

    #[test]
    fn synthesized_energy_is_near_normalized() {
        let cfg = pair(180e6);
        let mut total = 0.0;
        let n = 50;
        for seed in 0..n {
            let paths = sample_paths(&cfg, seed).unwrap();
            let h = synthesize_csi(&paths, &cfg.downlink, LinkDirection::Downlink).unwrap();
            total += h.values.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        // E|H|^2 per entry is the total path power, which is normalized to
        // one in expectation; allow generous Monte-Carlo slack.
        let per_entry = total / (n as f64 * 32.0 * 256.0);
        assert!(
            (0.5..2.0).contains(&per_entry),
            "mean per-entry power {per_entry}"
        );
    }

    #[test]
    fn zero_doppler_evolution_is_identity() {
        let cfg = pair(180e6);
        let paths = sample_paths(&cfg, 11).unwrap();
        let evolved = evolve_paths(&paths, 0.0, 1e-3).unwrap();
        assert_eq!(paths, evolved);
        let still = evolve_paths(&paths, 30.0, 0.0).unwrap();
        assert_eq!(paths, still);
    }

    #[test]
    fn doppler_rotates_phases_only() {
        let cfg = pair(180e6);
        let paths = sample_paths(&cfg, 11).unwrap();
        let evolved = evolve_paths(&paths, 30.0, 1e-3).unwrap();
        let mut changed = 0;
        for (a, b) in paths.paths.iter().zip(&evolved.paths) {
            assert_eq!(a.delay_s, b.delay_s);
            assert_eq!(a.mag_ul, b.mag_ul);
            assert_eq!(a.mag_dl, b.mag_dl);
            let expected = wrap_phase(
                a.phase_ul + 2.0 * PI * 30.0 * a.doppler_angle_rad.cos() * 1e-3,
            );
            assert!((expected - b.phase_ul).abs() < 1e-12);
            if a.phase_ul != b.phase_ul {
                changed += 1;
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn evolve_rejects_negative_arguments() {
        let cfg = pair(180e6);
        let paths = sample_paths(&cfg, 0).unwrap();
        assert!(evolve_paths(&paths, -1.0, 1e-3).is_err());
        assert!(evolve_paths(&paths, 10.0, -1e-3).is_err());
    }

    #[test]
    fn wrap_phase_is_identity_in_range() {
        for &x in &[-PI + 1e-9, -1.0, 0.0, 1.0, PI] {
            assert_eq!(wrap_phase(x), x);
        }
        assert!((wrap_phase(PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_phase(-PI - 0.1) - (PI - 0.1)).abs() < 1e-12);
        assert!((wrap_phase(7.0 * PI + 0.2) - (-PI + 0.2)).abs() < 1e-9);
    }

    #[test]
    fn half_wavelength_spacing_uses_band_carrier() {
        let dl = BandSpec::half_wavelength(5.3e9, 20e6, 256, 32).unwrap();
        assert!((dl.spacing_in_wavelengths() - 0.5).abs() < 1e-12);
        // The same physical spacing on a 5.1 GHz band is slightly less than
        // half a wavelength, which is what decorrelates the steering vectors.
        let ul = BandSpec {
            center_freq_hz: 5.1e9,
            ..dl
        };
        let expected = dl.antenna_spacing_m * 5.1e9 / SPEED_OF_LIGHT;
        assert!((ul.spacing_in_wavelengths() - expected).abs() < 1e-12);
        assert!(ul.spacing_in_wavelengths() < 0.5);
    }
}

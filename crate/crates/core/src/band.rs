//! Band descriptions and the paired uplink/downlink channel configuration.
//!
//! A [`BandSpec`] pins down one link direction: carrier frequency, occupied
//! bandwidth, OFDM subcarrier count and the transmit array geometry.  A
//! [`ChannelConfig`] couples an uplink and a downlink band with the cluster
//! statistics of the multipath model, so that one draw of scatterer geometry
//! can be observed on both bands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One link direction: carrier, bandwidth and transmit array geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    /// Carrier (center) frequency in Hz.
    pub center_freq_hz: f64,
    /// Occupied bandwidth in Hz; subcarriers are spread uniformly across it.
    pub bandwidth_hz: f64,
    /// Number of OFDM subcarriers; must be a power of two.
    pub n_subcarriers: usize,
    /// Number of transmit antennas in the ULA; must be a power of two.
    pub n_tx_antennas: usize,
    /// Element spacing of the ULA in meters.
    pub antenna_spacing_m: f64,
}

impl BandSpec {
    /// Builds a band, validating every invariant.
    pub fn new(
        center_freq_hz: f64,
        bandwidth_hz: f64,
        n_subcarriers: usize,
        n_tx_antennas: usize,
        antenna_spacing_m: f64,
    ) -> Result<Self> {
        let band = Self {
            center_freq_hz,
            bandwidth_hz,
            n_subcarriers,
            n_tx_antennas,
            antenna_spacing_m,
        };
        band.validate()?;
        Ok(band)
    }

    /// Convenience constructor: element spacing of half the carrier wavelength.
    pub fn half_wavelength(
        center_freq_hz: f64,
        bandwidth_hz: f64,
        n_subcarriers: usize,
        n_tx_antennas: usize,
    ) -> Result<Self> {
        let spacing = 0.5 * SPEED_OF_LIGHT / center_freq_hz;
        Self::new(
            center_freq_hz,
            bandwidth_hz,
            n_subcarriers,
            n_tx_antennas,
            spacing,
        )
    }

    /// Checks all invariants on the raw field values.
    pub fn validate(&self) -> Result<()> {
        if !(self.center_freq_hz.is_finite() && self.center_freq_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "center frequency must be positive, got {}",
                self.center_freq_hz
            )));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth_hz
            )));
        }
        if self.bandwidth_hz >= 2.0 * self.center_freq_hz {
            return Err(Error::InvalidConfig(format!(
                "bandwidth {} Hz does not fit below carrier {} Hz",
                self.bandwidth_hz, self.center_freq_hz
            )));
        }
        if self.n_subcarriers == 0 || !self.n_subcarriers.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "subcarrier count must be a power of two, got {}",
                self.n_subcarriers
            )));
        }
        if self.n_tx_antennas == 0 || !self.n_tx_antennas.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "antenna count must be a power of two, got {}",
                self.n_tx_antennas
            )));
        }
        if !(self.antenna_spacing_m.is_finite() && self.antenna_spacing_m > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "antenna spacing must be positive, got {}",
                self.antenna_spacing_m
            )));
        }
        Ok(())
    }

    /// Carrier wavelength in meters.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_freq_hz
    }

    /// Baseband offset of subcarrier `k` from the carrier, in Hz.
    ///
    /// Subcarrier 0 sits at the lower band edge; the grid is
    /// `(k - Nc/2) * bandwidth / Nc`.
    pub fn subcarrier_offset_hz(&self, k: usize) -> f64 {
        (k as f64 - self.n_subcarriers as f64 / 2.0) * self.bandwidth_hz
            / self.n_subcarriers as f64
    }

    /// Element spacing measured in carrier wavelengths.
    pub fn spacing_in_wavelengths(&self) -> f64 {
        self.antenna_spacing_m / self.wavelength_m()
    }
}

/// Cluster-based multipath configuration shared by an uplink/downlink pair.
///
/// Path geometry (delays, departure angles) is common to both bands; only the
/// complex gains decorrelate with the band gap.  The decorrelation strength is
/// controlled by two knobs:
///
/// * `gain_decorrelation_freq_hz` (`f_dec`) — the gain mixing weight is
///   `exp(-band_gap / f_dec)`, so gaps small against `f_dec` leave magnitudes
///   nearly common to both bands while large gaps drive them independent;
/// * `phase_decorrelation` (`kappa`) — each path's downlink phase receives a
///   wrapped-Gaussian drift with standard deviation
///   `kappa * band_gap * delay`, so long-delay paths scramble first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub uplink: BandSpec,
    pub downlink: BandSpec,
    /// Number of scattering clusters.
    pub n_clusters: usize,
    /// Rays (sub-paths) per cluster.
    pub rays_per_cluster: usize,
    /// Largest admissible path delay in seconds.
    pub max_delay_s: f64,
    /// Scale of the exponential power-delay profile, seconds.
    pub delay_decay_s: f64,
    /// Half-width of the intra-cluster departure-angle spread, radians.
    pub angle_spread_rad: f64,
    /// Phase drift coefficient `kappa` (dimensionless; pairs with gap*delay).
    pub phase_decorrelation: f64,
    /// Gain decorrelation constant `f_dec` in Hz.
    pub gain_decorrelation_freq_hz: f64,
    /// Base seed for dataset-level reproducibility.
    pub seed: u64,
}

impl ChannelConfig {
    /// Builds a configuration with the laboratory defaults: 6 clusters of
    /// 4 rays, delay support matched to the angular-delay window
    /// (`max_delay = 32 / bandwidth`, capped at half the OFDM symbol for
    /// short symbols), exponential decay over a quarter of that support, and
    /// decorrelation constants tuned for the trend studies.
    pub fn new(uplink: BandSpec, downlink: BandSpec, seed: u64) -> Result<Self> {
        let taps = 32.0_f64.min(downlink.n_subcarriers as f64 / 2.0);
        let max_delay_s = taps / downlink.bandwidth_hz;
        let cfg = Self {
            uplink,
            downlink,
            n_clusters: 6,
            rays_per_cluster: 4,
            max_delay_s,
            delay_decay_s: max_delay_s / 4.0,
            angle_spread_rad: 0.05,
            phase_decorrelation: 1.0,
            gain_decorrelation_freq_hz: 1.0e9,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the joint invariants of the band pair and cluster statistics.
    pub fn validate(&self) -> Result<()> {
        self.uplink.validate()?;
        self.downlink.validate()?;
        if self.uplink.n_tx_antennas != self.downlink.n_tx_antennas {
            return Err(Error::InvalidConfig(
                "uplink and downlink must share the transmit array".into(),
            ));
        }
        if self.uplink.antenna_spacing_m != self.downlink.antenna_spacing_m {
            return Err(Error::InvalidConfig(
                "uplink and downlink must share the element spacing".into(),
            ));
        }
        if self.n_clusters == 0 || self.rays_per_cluster == 0 {
            return Err(Error::InvalidConfig(
                "need at least one cluster and one ray per cluster".into(),
            ));
        }
        if !(self.max_delay_s.is_finite() && self.max_delay_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "max delay must be positive, got {}",
                self.max_delay_s
            )));
        }
        // Delays beyond the OFDM symbol would alias in the delay domain.
        for (name, band) in [("uplink", &self.uplink), ("downlink", &self.downlink)] {
            let symbol = band.n_subcarriers as f64 / band.bandwidth_hz;
            if self.max_delay_s >= symbol {
                return Err(Error::InvalidConfig(format!(
                    "max delay {} s aliases on the {} band (symbol length {} s)",
                    self.max_delay_s, name, symbol
                )));
            }
        }
        if !(self.delay_decay_s.is_finite() && self.delay_decay_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delay decay must be positive, got {}",
                self.delay_decay_s
            )));
        }
        if !(self.angle_spread_rad.is_finite() && self.angle_spread_rad >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "angle spread must be non-negative, got {}",
                self.angle_spread_rad
            )));
        }
        if !(self.phase_decorrelation.is_finite() && self.phase_decorrelation >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "phase decorrelation must be non-negative, got {}",
                self.phase_decorrelation
            )));
        }
        if !(self.gain_decorrelation_freq_hz.is_finite()
            && self.gain_decorrelation_freq_hz > 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "gain decorrelation frequency must be positive, got {}",
                self.gain_decorrelation_freq_hz
            )));
        }
        Ok(())
    }

    /// Absolute carrier separation of the two bands, Hz.
    pub fn band_gap_hz(&self) -> f64 {
        (self.downlink.center_freq_hz - self.uplink.center_freq_hz).abs()
    }

    /// Gain mixing weight `rho_g = exp(-band_gap / f_dec)`.
    pub fn gain_mixing(&self) -> f64 {
        (-self.band_gap_hz() / self.gain_decorrelation_freq_hz).exp()
    }

    /// Total number of propagation paths.
    pub fn n_paths(&self) -> usize {
        self.n_clusters * self.rays_per_cluster
    }
}

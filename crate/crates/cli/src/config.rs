//! Experiment configuration: scenario presets, the variant grid, and a flat
//! `key = value` file format mirroring the CLI flags.
//!
//! Precedence is always presets -> config file -> command-line flags.  The
//! `scenario` key re-bases every preset-dependent field (downlink carrier,
//! band gap, bandwidth, cluster count), so it must come before any override
//! of those fields.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use csilab_core::{BandSpec, ChannelConfig, PhaseTiers};
use csilab_nn::CodecKind;

use crate::error::{Error, Result};

/// Deployment scenario; fixes the carrier plan and cluster richness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// 5.3 GHz downlink, 180 MHz band gap, 20 MHz bandwidth, 6 clusters.
    Indoor,
    /// 930 MHz downlink, 75 MHz band gap, 5 MHz bandwidth, 8 clusters.
    Outdoor,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Indoor => "indoor",
            Scenario::Outdoor => "outdoor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "indoor" => Ok(Scenario::Indoor),
            "outdoor" => Ok(Scenario::Outdoor),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?} (expected indoor or outdoor)"
            ))),
        }
    }

    pub fn downlink_center_hz(&self) -> f64 {
        match self {
            Scenario::Indoor => 5.3e9,
            Scenario::Outdoor => 930e6,
        }
    }

    pub fn band_gap_hz(&self) -> f64 {
        match self {
            Scenario::Indoor => 180e6,
            Scenario::Outdoor => 75e6,
        }
    }

    pub fn bandwidth_hz(&self) -> f64 {
        match self {
            Scenario::Indoor => 20e6,
            Scenario::Outdoor => 5e6,
        }
    }

    /// The outdoor channel is richer: more clusters over a longer delay
    /// spread (the spread itself scales with `1 / bandwidth`).
    pub fn n_clusters(&self) -> usize {
        match self {
            Scenario::Indoor => 6,
            Scenario::Outdoor => 8,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One column of the reproduction protocol: how a cell perturbs the
/// baseline carrier plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellVariant {
    /// The scenario's own band gap and bandwidth.
    Baseline,
    /// Band gap forced to zero, bandwidth unchanged.
    ZeroGap,
    /// Bandwidth doubled, band gap unchanged.
    DoubleBandwidth,
}

impl CellVariant {
    pub const ALL: [CellVariant; 3] = [
        CellVariant::Baseline,
        CellVariant::ZeroGap,
        CellVariant::DoubleBandwidth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CellVariant::Baseline => "baseline",
            CellVariant::ZeroGap => "zero-gap",
            CellVariant::DoubleBandwidth => "double-bandwidth",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(CellVariant::Baseline),
            "zero-gap" | "zero_gap" => Ok(CellVariant::ZeroGap),
            "double-bandwidth" | "double_bandwidth" => Ok(CellVariant::DoubleBandwidth),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected baseline, zero-gap or double-bandwidth)"
            ))),
        }
    }

    /// Applies the perturbation to a `(band_gap, bandwidth)` pair.
    pub fn apply(&self, band_gap_hz: f64, bandwidth_hz: f64) -> (f64, f64) {
        match self {
            CellVariant::Baseline => (band_gap_hz, bandwidth_hz),
            CellVariant::ZeroGap => (0.0, bandwidth_hz),
            CellVariant::DoubleBandwidth => (band_gap_hz, 2.0 * bandwidth_hz),
        }
    }
}

impl fmt::Display for CellVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything the `experiment` protocol needs, with scenario-derived
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub downlink_center_hz: f64,
    pub band_gap_hz: f64,
    pub bandwidth_hz: f64,
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    pub n_tx_antennas: usize,
    pub n_subcarriers: usize,
    /// Delay taps kept by the angular-delay truncation.
    pub ld: usize,
    pub crs: Vec<f64>,
    pub codecs: Vec<CodecKind>,
    pub variants: Vec<CellVariant>,
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    pub patience: usize,
    /// Uniform codeword quantization width; 0 keeps float feedback.
    pub codeword_bits: u32,
    /// Magnitude-ranked phase tiers for the magnitude codecs; empty means
    /// the evaluation assumes exact phase knowledge.
    pub phase_tiers: PhaseTiers,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Scenario defaults plus the laboratory-wide training defaults.
    pub fn new(scenario: Scenario) -> Self {
        ExperimentConfig {
            scenario,
            downlink_center_hz: scenario.downlink_center_hz(),
            band_gap_hz: scenario.band_gap_hz(),
            bandwidth_hz: scenario.bandwidth_hz(),
            n_clusters: scenario.n_clusters(),
            rays_per_cluster: 4,
            n_tx_antennas: 32,
            n_subcarriers: 256,
            ld: 32,
            crs: vec![1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0],
            codecs: vec![
                CodecKind::CsiNet,
                CodecKind::DualNetMag,
                CodecKind::DualNetAbs,
            ],
            variants: CellVariant::ALL.to_vec(),
            seeds: vec![1],
            n_train: 20_000,
            n_val: 2_000,
            n_test: 3_000,
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            patience: 8,
            codeword_bits: 0,
            phase_tiers: Vec::new(),
            out_dir: PathBuf::from("results"),
        }
    }

    /// Re-bases the preset-dependent fields on a new scenario.
    pub fn set_scenario(&mut self, scenario: Scenario) {
        self.scenario = scenario;
        self.downlink_center_hz = scenario.downlink_center_hz();
        self.band_gap_hz = scenario.band_gap_hz();
        self.bandwidth_hz = scenario.bandwidth_hz();
        self.n_clusters = scenario.n_clusters();
    }

    /// Applies one `key = value` pair; keys match the CLI flag names.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "scenario" => self.set_scenario(Scenario::parse(v)?),
            "downlink_center_hz" => self.downlink_center_hz = parse_f64(key, v)?,
            "band_gap_hz" => self.band_gap_hz = parse_f64(key, v)?,
            "bandwidth_hz" => self.bandwidth_hz = parse_f64(key, v)?,
            "n_clusters" => self.n_clusters = parse_usize(key, v)?,
            "rays_per_cluster" => self.rays_per_cluster = parse_usize(key, v)?,
            "nt" => self.n_tx_antennas = parse_usize(key, v)?,
            "nc" => self.n_subcarriers = parse_usize(key, v)?,
            "ld" => self.ld = parse_usize(key, v)?,
            "crs" => self.crs = parse_list(v, |s| parse_ratio(s))?,
            "codecs" => self.codecs = parse_list(v, parse_codec)?,
            "variants" => self.variants = parse_list(v, CellVariant::parse)?,
            "seeds" => self.seeds = parse_list(v, |s| parse_u64("seeds", s))?,
            "n_train" => self.n_train = parse_usize(key, v)?,
            "n_val" => self.n_val = parse_usize(key, v)?,
            "n_test" => self.n_test = parse_usize(key, v)?,
            "epochs" => self.epochs = parse_usize(key, v)?,
            "batch_size" => self.batch_size = parse_usize(key, v)?,
            "learning_rate" => self.learning_rate = parse_f64(key, v)?,
            "patience" => self.patience = parse_usize(key, v)?,
            "codeword_bits" => self.codeword_bits = parse_u64(key, v)? as u32,
            "phase_tiers" => self.phase_tiers = parse_tiers(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => {
                return Err(Error::Config(format!("unknown configuration key {other:?}")))
            }
        }
        Ok(())
    }

    /// Applies a whole flat config file.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    line_no + 1
                ))
            })?;
            self.apply_kv(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", line_no + 1)))?;
        }
        Ok(())
    }

    /// Sanity checks before a run.
    pub fn validate(&self) -> Result<()> {
        if self.codecs.is_empty() {
            // An empty codec list is allowed (the run is a no-op), so only
            // the remaining fields are checked.
        }
        if self.codecs.contains(&CodecKind::CsiNetLstm) {
            return Err(Error::Config(
                "the sequence codec needs temporal data; train it with `csilab train --codec csinet-lstm`"
                    .into(),
            ));
        }
        for &cr in &self.crs {
            if !(cr.is_finite() && cr > 0.0 && cr <= 1.0) {
                return Err(Error::Config(format!(
                    "compression ratio {cr} outside (0, 1]"
                )));
            }
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no variants requested".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds requested".into()));
        }
        if self.ld == 0 || self.ld > self.n_subcarriers {
            return Err(Error::Config(format!(
                "ld {} outside 1..={}",
                self.ld, self.n_subcarriers
            )));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config(
                "training and test sets need at least one sample".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        // Building the baseline channel validates the band plan itself.
        self.channel_config(self.band_gap_hz, self.bandwidth_hz, 0)?;
        Ok(())
    }

    /// Builds the generator configuration for one cell.
    ///
    /// The delay support fills exactly the `Ld`-tap truncation window
    /// (`max_delay = Ld / bandwidth`), so bandwidth changes rescale the
    /// delay profile and the angular-delay image keeps its occupancy --
    /// the same convention the correlation sweep uses.
    pub fn channel_config(
        &self,
        band_gap_hz: f64,
        bandwidth_hz: f64,
        seed: u64,
    ) -> Result<ChannelConfig> {
        let downlink = BandSpec::half_wavelength(
            self.downlink_center_hz,
            bandwidth_hz,
            self.n_subcarriers,
            self.n_tx_antennas,
        )?;
        let uplink = BandSpec {
            center_freq_hz: self.downlink_center_hz - band_gap_hz,
            ..downlink
        };
        let mut cfg = ChannelConfig::new(uplink, downlink, seed)?;
        cfg.n_clusters = self.n_clusters;
        cfg.rays_per_cluster = self.rays_per_cluster;
        let taps = self.ld.min(self.n_subcarriers / 2) as f64;
        cfg.max_delay_s = taps / bandwidth_hz;
        cfg.delay_decay_s = cfg.max_delay_s / 4.0;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Quantization applied during evaluation.
    pub fn quant_policy(&self) -> crate::pipeline::QuantPolicy {
        crate::pipeline::QuantPolicy {
            codeword_bits: self.codeword_bits,
            phase_tiers: self.phase_tiers.clone(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
}

pub(crate) fn parse_codec(s: &str) -> Result<CodecKind> {
    CodecKind::parse(s.trim()).ok_or_else(|| {
        let names: Vec<&str> = CodecKind::ALL.iter().map(|k| k.name()).collect();
        Error::Config(format!(
            "unknown codec {s:?} (expected one of {})",
            names.join(", ")
        ))
    })
}

pub(crate) fn parse_list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<&str> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Error::Config(format!("empty list {v:?}")));
    }
    items.into_iter().map(f).collect()
}

/// Accepts a plain decimal (`0.125`) or a fraction (`1/8`).
pub fn parse_ratio(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_f64("ratio", num.trim())?;
        let d = parse_f64("ratio", den.trim())?;
        if d == 0.0 {
            return Err(Error::Config(format!("ratio {s:?} divides by zero")));
        }
        Ok(n / d)
    } else {
        parse_f64("ratio", s)
    }
}

/// Parses `count:bits` tier lists, e.g. `50:4,200:2`.
pub fn parse_tiers(v: &str) -> Result<PhaseTiers> {
    parse_list(v, |item| {
        let (count, bits) = item.split_once(':').ok_or_else(|| {
            Error::Config(format!("tier {item:?} is not of the form count:bits"))
        })?;
        Ok((
            parse_usize("tier count", count.trim())?,
            parse_u64("tier bits", bits.trim())? as u32,
        ))
    })
}

/// Formats a compression ratio for the console: `1/16` when the ratio is
/// a unit fraction, a plain decimal otherwise.
pub fn format_cr(cr: f64) -> String {
    if cr > 0.0 {
        let k = (1.0 / cr).round();
        if k >= 1.0 && k <= 4096.0 && (1.0 / k - cr).abs() < 1e-12 {
            return format!("1/{}", k as u64);
        }
    }
    format!("{cr}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_presets_follow_the_deployment_plans() {
        let indoor = ExperimentConfig::new(Scenario::Indoor);
        assert_eq!(indoor.downlink_center_hz, 5.3e9);
        assert_eq!(indoor.band_gap_hz, 180e6);
        assert_eq!(indoor.bandwidth_hz, 20e6);
        assert_eq!(indoor.n_clusters, 6);

        let outdoor = ExperimentConfig::new(Scenario::Outdoor);
        assert_eq!(outdoor.downlink_center_hz, 930e6);
        assert_eq!(outdoor.band_gap_hz, 75e6);
        assert_eq!(outdoor.bandwidth_hz, 5e6);
        assert_eq!(outdoor.n_clusters, 8);
        assert!(outdoor.validate().is_ok());
    }

    #[test]
    fn default_grid_matches_the_protocol() {
        let cfg = ExperimentConfig::new(Scenario::Indoor);
        assert_eq!(cfg.crs, vec![0.125, 1.0 / 12.0, 0.0625]);
        assert_eq!(cfg.variants, CellVariant::ALL.to_vec());
        assert_eq!(cfg.n_train, 20_000);
        assert_eq!(cfg.ld, 32);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn kv_file_overrides_in_order() {
        let mut cfg = ExperimentConfig::new(Scenario::Indoor);
        cfg.apply_file_text(
            "# comment\n\
             scenario = outdoor\n\
             bandwidth_hz = 10e6\n\
             crs = 1/8, 0.0625\n\
             codecs = csinet, u2d-mag\n\
             seeds = 7, 8\n\
             phase_tiers = 50:4, 200:2\n\
             variants = baseline, zero-gap\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::Outdoor);
        assert_eq!(cfg.downlink_center_hz, 930e6);
        assert_eq!(cfg.bandwidth_hz, 10e6); // set after the scenario re-base
        assert_eq!(cfg.crs, vec![0.125, 0.0625]);
        assert_eq!(cfg.codecs, vec![CodecKind::CsiNet, CodecKind::U2dMag]);
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.phase_tiers, vec![(50, 4), (200, 2)]);
        assert_eq!(
            cfg.variants,
            vec![CellVariant::Baseline, CellVariant::ZeroGap]
        );
    }

    #[test]
    fn unknown_keys_and_malformed_lines_are_rejected() {
        let mut cfg = ExperimentConfig::new(Scenario::Indoor);
        let err = cfg.apply_file_text("not_a_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("not_a_key"), "{err}");
        let err = cfg.apply_file_text("just some words\n").unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");
    }

    #[test]
    fn ratios_accept_fractions_and_decimals() {
        assert_eq!(parse_ratio("1/8").unwrap(), 0.125);
        assert_eq!(parse_ratio(" 0.125 ").unwrap(), 0.125);
        assert!((parse_ratio("1/12").unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("x").is_err());
    }

    #[test]
    fn variants_perturb_the_carrier_plan() {
        assert_eq!(CellVariant::Baseline.apply(180e6, 20e6), (180e6, 20e6));
        assert_eq!(CellVariant::ZeroGap.apply(180e6, 20e6), (0.0, 20e6));
        assert_eq!(
            CellVariant::DoubleBandwidth.apply(180e6, 20e6),
            (180e6, 40e6)
        );
    }

    #[test]
    fn cell_channel_pins_the_delay_window_to_ld() {
        let mut cfg = ExperimentConfig::new(Scenario::Indoor);
        cfg.ld = 16;
        cfg.n_subcarriers = 128;
        cfg.n_tx_antennas = 16;
        let base = cfg.channel_config(180e6, 20e6, 3).unwrap();
        assert!((base.max_delay_s - 16.0 / 20e6).abs() < 1e-18);
        assert_eq!(base.n_clusters, 6);
        assert_eq!(base.seed, 3);
        // Doubling the bandwidth halves the delay support in seconds, so the
        // image occupies the same sixteen taps.
        let wide = cfg.channel_config(180e6, 40e6, 3).unwrap();
        assert!((wide.max_delay_s - 16.0 / 40e6).abs() < 1e-18);
        assert_eq!(
            base.max_delay_s * 20e6,
            wide.max_delay_s * 40e6
        );
    }

    #[test]
    fn sequence_codec_is_rejected_by_the_grid() {
        let mut cfg = ExperimentConfig::new(Scenario::Indoor);
        cfg.codecs = vec![CodecKind::CsiNetLstm];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("train"), "{err}");
    }
}

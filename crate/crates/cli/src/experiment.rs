//! The band-gap / bandwidth protocol: a grid of training cells, one
//! result record per successful cell, and divergences recorded on the
//! side so the run keeps going.
//!
//! A *cell* is one `(variant, compression ratio, codec, seed)` tuple.
//! Every cell is self-contained: the record embeds everything needed to
//! regenerate it bit-identically with [`run_cell`], which is also how the
//! determinism check replays individual cells. Within a full run the
//! datasets of a `(variant, seed)` slice are generated once and shared
//! across its cells, and feedback-free translators are trained once and
//! reused across compression ratios (their architecture has no codeword);
//! both are pure caching and leave the per-cell results unchanged.

use serde::{Serialize, Serializer};

use csilab_core::format_db;
use csilab_nn::CodecKind;

use crate::config::{CellVariant, ExperimentConfig};
use crate::error::{Error, Result};
use crate::pipeline::{
    evaluate_codec, generate_pairs, train_codec, CsiPair, EvalOutcome, Hyper, TrainedCodec,
};

/// Coordinates of one experiment cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSpec {
    pub codec: CodecKind,
    pub variant: CellVariant,
    pub cr: f64,
    pub seed: u64,
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_db(*v))
}

/// One evaluated cell, as written to the CSV and JSON reports.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRecord {
    pub codec: String,
    pub variant: String,
    /// Grid compression ratio. Translators carry no codeword, so their
    /// rows echo the grid value without it affecting the architecture.
    pub cr: f64,
    pub band_gap_hz: f64,
    pub bandwidth_hz: f64,
    pub seed: u64,
    /// NMSE over the codec's native planes, dB ("-inf" when exact).
    #[serde(serialize_with = "ser_db")]
    pub nmse_db: f64,
    #[serde(serialize_with = "ser_db")]
    pub mag_nmse_db: f64,
    #[serde(serialize_with = "ser_db")]
    pub complex_nmse_db: f64,
    pub rho: f64,
    pub payload_floats: f64,
    pub payload_bits: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub n_test: usize,
    /// Set when the cell fails to beat the zero predictor (NMSE > 0 dB).
    pub flagged: bool,
}

impl ResultRecord {
    pub const CSV_HEADER: &'static str = "codec,variant,cr,band_gap_hz,bandwidth_hz,seed,\
         nmse_db,mag_nmse_db,complex_nmse_db,rho,payload_floats,payload_bits,\
         epochs_run,best_epoch,best_loss,n_test,flagged";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.codec,
            self.variant,
            self.cr,
            self.band_gap_hz,
            self.bandwidth_hz,
            self.seed,
            format_db(self.nmse_db),
            format_db(self.mag_nmse_db),
            format_db(self.complex_nmse_db),
            self.rho,
            self.payload_floats,
            self.payload_bits,
            self.epochs_run,
            self.best_epoch,
            self.best_loss,
            self.n_test,
            self.flagged,
        )
    }
}

/// A cell whose training diverged; kept out of the record list so the
/// CSV row count stays `cells - divergences`.
#[derive(Clone, Debug, Serialize)]
pub struct DivergenceRecord {
    pub codec: String,
    pub variant: String,
    pub cr: f64,
    pub seed: u64,
    pub message: String,
}

/// Everything a full run produces.
#[derive(Debug, Default, Serialize)]
pub struct ExperimentReport {
    pub records: Vec<ResultRecord>,
    pub divergences: Vec<DivergenceRecord>,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Parameter-init and shuffle seeds of a cell, derived from its
/// coordinates so different codecs, rates and repeats never share
/// initialisations while replays of the same cell always do.
///
/// The band variant is deliberately absent from the hash.  Variants of one
/// cell already share the data seed (and the delay profile scales with
/// bandwidth), so giving them a common init and shuffle order too makes
/// cross-variant comparisons paired: the NMSE delta isolates the band
/// effect instead of mixing it with a fresh initialisation draw.
pub(crate) fn cell_seeds(cell: &CellSpec) -> (u64, u64) {
    let tag = fnv1a64(cell.codec.name().as_bytes()) ^ cell.cr.to_bits();
    let base = splitmix64(cell.seed ^ tag);
    (splitmix64(base), splitmix64(base.wrapping_add(1)))
}

fn hyper_for(cfg: &ExperimentConfig, cell: &CellSpec) -> Hyper {
    let (init_seed, shuffle_seed) = cell_seeds(cell);
    Hyper {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        patience: cfg.patience,
        init_seed,
        shuffle_seed,
    }
}

/// Train/validation/test pairs of one `(variant, seed)` slice.
struct CellData {
    train: Vec<CsiPair>,
    val: Vec<CsiPair>,
    test: Vec<CsiPair>,
}

fn build_cell_data(cfg: &ExperimentConfig, variant: CellVariant, seed: u64) -> Result<CellData> {
    let (gap, bw) = variant.apply(cfg.band_gap_hz, cfg.bandwidth_hz);
    let ch = cfg.channel_config(gap, bw, seed)?;
    let train = generate_pairs(&ch, cfg.ld, 0, cfg.n_train)?;
    let val = generate_pairs(&ch, cfg.ld, cfg.n_train, cfg.n_val)?;
    let test = generate_pairs(&ch, cfg.ld, cfg.n_train + cfg.n_val, cfg.n_test)?;
    Ok(CellData { train, val, test })
}

fn record_from(
    cfg: &ExperimentConfig,
    cell: &CellSpec,
    trained: &TrainedCodec,
    outcome: &EvalOutcome,
) -> ResultRecord {
    let (gap, bw) = cell.variant.apply(cfg.band_gap_hz, cfg.bandwidth_hz);
    ResultRecord {
        codec: cell.codec.name().to_string(),
        variant: cell.variant.name().to_string(),
        cr: cell.cr,
        band_gap_hz: gap,
        bandwidth_hz: bw,
        seed: cell.seed,
        nmse_db: outcome.nmse_db,
        mag_nmse_db: outcome.mag_nmse_db,
        complex_nmse_db: outcome.complex_nmse_db,
        rho: outcome.rho,
        payload_floats: outcome.payload_floats,
        payload_bits: outcome.payload_bits,
        epochs_run: trained.report.epochs_run,
        best_epoch: trained.report.best_epoch,
        best_loss: trained.report.best_loss,
        n_test: outcome.n_samples,
        flagged: outcome.nmse_db > 0.0,
    }
}

fn train_and_score(
    cfg: &ExperimentConfig,
    cell: &CellSpec,
    data: &CellData,
) -> Result<ResultRecord> {
    let hp = hyper_for(cfg, cell);
    let trained = train_codec(
        cell.codec,
        cfg.n_tx_antennas,
        cfg.ld,
        cell.cr,
        &data.train,
        &data.val,
        &hp,
    )?;
    let outcome = evaluate_codec(&trained.bundle, &data.test, &cfg.quant_policy())?;
    Ok(record_from(cfg, cell, &trained, &outcome))
}

/// Regenerates one cell from scratch. This is the determinism anchor:
/// called twice with the same config and coordinates it reproduces the
/// recorded NMSE exactly, dataset generation included.
pub fn run_cell(cfg: &ExperimentConfig, cell: &CellSpec) -> Result<ResultRecord> {
    if cell.codec == CodecKind::CsiNetLstm {
        return Err(Error::Config(
            "the sequence codec runs through `csilab train`, not the grid".into(),
        ));
    }
    let data = build_cell_data(cfg, cell.variant, cell.seed)?;
    train_and_score(cfg, cell, &data)
}

/// Runs the whole grid: `variants x seeds x codecs x crs`.
///
/// Divergent cells are logged and skipped; everything else becomes one
/// record. `progress` receives a line per cell for console reporting.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    mut progress: impl FnMut(&str),
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport::default();
    for &variant in &cfg.variants {
        for &seed in &cfg.seeds {
            if cfg.codecs.is_empty() {
                continue;
            }
            let data = build_cell_data(cfg, variant, seed)?;
            for &codec in &cfg.codecs {
                // Translators ignore the compression ratio; train once and
                // let every cr row share the result.
                let mut cached: Option<(TrainedCodec, EvalOutcome)> = None;
                for &cr in &cfg.crs {
                    let cell = CellSpec {
                        codec,
                        variant,
                        cr,
                        seed,
                    };
                    let reusable = !codec.has_encoder();
                    let result = if reusable {
                        if cached.is_none() {
                            let hp = hyper_for(
                                cfg,
                                &CellSpec {
                                    cr: cfg.crs[0],
                                    ..cell
                                },
                            );
                            match train_codec(
                                codec,
                                cfg.n_tx_antennas,
                                cfg.ld,
                                cfg.crs[0],
                                &data.train,
                                &data.val,
                                &hp,
                            ) {
                                Ok(t) => {
                                    let o =
                                        evaluate_codec(&t.bundle, &data.test, &cfg.quant_policy())?;
                                    cached = Some((t, o));
                                }
                                Err(e) => {
                                    record_divergence(&mut report, &cell, e, &mut progress)?;
                                    continue;
                                }
                            }
                        }
                        let (t, o) = cached.as_ref().expect("cached above");
                        Ok(record_from(cfg, &cell, t, o))
                    } else {
                        train_and_score(cfg, &cell, &data)
                    };
                    match result {
                        Ok(rec) => {
                            progress(&format!(
                                "[{}] {} cr={} seed={}: nmse {} dB (rho {:.4}){}",
                                rec.variant,
                                rec.codec,
                                rec.cr,
                                rec.seed,
                                format_db(rec.nmse_db),
                                rec.rho,
                                if rec.flagged { "  ** above 0 dB" } else { "" }
                            ));
                            report.records.push(rec);
                        }
                        Err(e) => record_divergence(&mut report, &cell, e, &mut progress)?,
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Files a divergence and lets the run continue; any other error aborts.
fn record_divergence(
    report: &mut ExperimentReport,
    cell: &CellSpec,
    err: Error,
    progress: &mut impl FnMut(&str),
) -> Result<()> {
    let diverged = matches!(
        &err,
        Error::Nn(csilab_nn::Error::Divergence { .. })
    );
    if !diverged {
        return Err(err);
    }
    let message = err.to_string();
    progress(&format!(
        "[{}] {} cr={} seed={}: DIVERGED ({message})",
        cell.variant.name(),
        cell.codec.name(),
        cell.cr,
        cell.seed,
    ));
    report.divergences.push(DivergenceRecord {
        codec: cell.codec.name().to_string(),
        variant: cell.variant.name().to_string(),
        cr: cell.cr,
        seed: cell.seed,
        message,
    });
    Ok(())
}

//! The `csilab` command-line surface.
//!
//! Seven subcommands cover the laboratory: `gen` (paired dataset files),
//! `corr` (per-plane uplink/downlink correlation), `sweep` (the band-gap x
//! bandwidth grid), `train` / `eval` (single codecs, including the
//! sequence codec), `experiment` (the full protocol grid) and `omp` (the
//! compressive-sensing baseline).
//!
//! Every subcommand accepts the same configuration surface: scenario
//! presets, then an optional flat `key = value` file (`--config`), then
//! individual flags -- later layers override earlier ones.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use csilab_core::{
    build_dataset, correlation_report_from_pairs, format_db, sweep_bandgap_bandwidth, CsiPlane,
};
use csilab_nn::{load_bundle, save_bundle, CodecKind, TrainReport};

use crate::config::{
    format_cr, parse_codec, parse_list, parse_ratio, parse_tiers, CellVariant, ExperimentConfig,
    Scenario,
};
use crate::error::{Error, Result};
use crate::experiment::{cell_seeds, run_experiment, CellSpec};
use crate::pipeline::{
    evaluate_codec, evaluate_sequence_codec, generate_freq_pairs, generate_pairs,
    generate_sequences, omp_baseline, train_codec, train_sequence_codec,EvalOutcome, Hyper,
};
use crate::report;

/// Desk-scale FDD massive-MIMO CSI feedback laboratory.
#[derive(Debug, Parser)]
#[command(name = "csilab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a paired uplink/downlink dataset file.
    Gen(GenArgs),
    /// Per-plane uplink/downlink correlation report.
    Corr(CorrArgs),
    /// Mean magnitude correlation over a band-gap x bandwidth grid.
    Sweep(SweepArgs),
    /// Train one codec and save its checkpoint bundle.
    Train(TrainArgs),
    /// Evaluate a saved codec bundle on a held-out test set.
    Eval(EvalArgs),
    /// Run the full protocol grid and emit result records.
    Experiment(ExperimentArgs),
    /// Orthogonal-matching-pursuit recovery baseline.
    Omp(OmpArgs),
}

/// Configuration layers shared by every subcommand.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// Flat key=value config file applied before the other flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Scenario preset: indoor or outdoor.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Downlink carrier in Hz.
    #[arg(long)]
    pub downlink_center_hz: Option<f64>,
    /// Uplink-to-downlink carrier separation in Hz.
    #[arg(long)]
    pub band_gap_hz: Option<f64>,
    /// Band bandwidth in Hz (both links).
    #[arg(long)]
    pub bandwidth_hz: Option<f64>,
    /// Scattering clusters per channel draw.
    #[arg(long)]
    pub n_clusters: Option<usize>,
    /// Rays per cluster.
    #[arg(long)]
    pub rays_per_cluster: Option<usize>,
    /// Transmit antennas.
    #[arg(long)]
    pub nt: Option<usize>,
    /// Subcarriers per band.
    #[arg(long)]
    pub nc: Option<usize>,
    /// Delay taps kept by the angular-delay truncation.
    #[arg(long)]
    pub ld: Option<usize>,
    /// Compression ratios, e.g. "1/8,1/12,1/16".
    #[arg(long)]
    pub crs: Option<String>,
    /// Codecs, e.g. "csinet,dualnet-mag,dualnet-abs".
    #[arg(long)]
    pub codecs: Option<String>,
    /// Protocol variants: baseline, zero-gap, double-bandwidth.
    #[arg(long)]
    pub variants: Option<String>,
    /// Experiment seeds, e.g. "1,2,3".
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Early-stopping patience in epochs (0 disables).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Uniform codeword quantization bits (0 keeps float feedback).
    #[arg(long)]
    pub codeword_bits: Option<u32>,
    /// Phase tiers for magnitude codecs, e.g. "50:4,200:2".
    #[arg(long)]
    pub phase_tiers: Option<String>,
    /// Output directory for reports and figures.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    /// Presets, then the config file, then the flags.
    pub fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(Scenario::Indoor);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.apply_file_text(&text)?;
        }
        // Scenario re-bases its preset fields, so it must land before the
        // field overrides.
        if let Some(s) = &self.scenario {
            cfg.set_scenario(Scenario::parse(s)?);
        }
        if let Some(v) = self.downlink_center_hz {
            cfg.downlink_center_hz = v;
        }
        if let Some(v) = self.band_gap_hz {
            cfg.band_gap_hz = v;
        }
        if let Some(v) = self.bandwidth_hz {
            cfg.bandwidth_hz = v;
        }
        if let Some(v) = self.n_clusters {
            cfg.n_clusters = v;
        }
        if let Some(v) = self.rays_per_cluster {
            cfg.rays_per_cluster = v;
        }
        if let Some(v) = self.nt {
            cfg.n_tx_antennas = v;
        }
        if let Some(v) = self.nc {
            cfg.n_subcarriers = v;
        }
        if let Some(v) = self.ld {
            cfg.ld = v;
        }
        if let Some(v) = &self.crs {
            cfg.crs = parse_list(v, parse_ratio)?;
        }
        if let Some(v) = &self.codecs {
            cfg.codecs = if v.trim().is_empty() {
                Vec::new()
            } else {
                parse_list(v, parse_codec)?
            };
        }
        if let Some(v) = &self.variants {
            cfg.variants = parse_list(v, CellVariant::parse)?;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = parse_list(v, |s| {
                s.parse::<u64>()
                    .map_err(|_| Error::Config(format!("bad seed {s:?}")))
            })?;
        }
        if let Some(v) = self.n_train {
            cfg.n_train = v;
        }
        if let Some(v) = self.n_val {
            cfg.n_val = v;
        }
        if let Some(v) = self.n_test {
            cfg.n_test = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.codeword_bits {
            cfg.codeword_bits = v;
        }
        if let Some(v) = &self.phase_tiers {
            cfg.phase_tiers = if v.trim().is_empty() {
                Vec::new()
            } else {
                parse_tiers(v)?
            };
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output dataset file.
    #[arg(long, default_value = "dataset.csid")]
    pub out: PathBuf,
    /// Samples to write (default: train + val + test sizes).
    #[arg(long)]
    pub n: Option<usize>,
    /// Frames per sample (sequences when > 1).
    #[arg(long, default_value_t = 1)]
    pub temporal_len: usize,
    /// Doppler spread in Hz applied between frames.
    #[arg(long, default_value_t = 0.0)]
    pub doppler_hz: f64,
    /// Frame spacing in seconds.
    #[arg(long, default_value_t = 1e-3)]
    pub frame_dt_s: f64,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Uplink/downlink pairs to draw.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Planes to report (default: all).
    #[arg(long)]
    pub planes: Option<String>,
    /// Render corr.svg next to the CSV/JSON outputs.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Band gaps in Hz, comma separated.
    #[arg(long, default_value = "50e6,100e6,200e6,400e6,800e6")]
    pub gaps: String,
    /// Bandwidths in Hz, comma separated.
    #[arg(long, default_value = "10e6,20e6,40e6")]
    pub bandwidths: String,
    /// Pairs per grid cell.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Render the profile figures next to the CSV/JSON outputs.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Codec to train.
    #[arg(long)]
    pub codec: String,
    /// Compression ratio (default: first of the configured list).
    #[arg(long)]
    pub cr: Option<String>,
    /// Directory receiving the checkpoint bundle.
    #[arg(long, default_value = "models")]
    pub save_dir: PathBuf,
    /// Checkpoint stem (default: the codec name).
    #[arg(long)]
    pub stem: Option<String>,
    /// Frames per sequence (sequence codec only).
    #[arg(long, default_value_t = 4)]
    pub seq_len: usize,
    /// Compression ratio of frames after the first (default: cr / 4).
    #[arg(long)]
    pub cr_rest: Option<String>,
    /// Doppler spread for sequence generation, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub doppler_hz: f64,
    /// Frame spacing for sequence generation, seconds.
    #[arg(long, default_value_t = 1e-3)]
    pub frame_dt_s: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Directory holding the checkpoint bundle.
    #[arg(long, default_value = "models")]
    pub load_dir: PathBuf,
    /// Checkpoint stem as written by `train`.
    #[arg(long)]
    pub stem: String,
    /// Doppler spread for sequence evaluation, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub doppler_hz: f64,
    /// Frame spacing for sequence evaluation, seconds.
    #[arg(long, default_value_t = 1e-3)]
    pub frame_dt_s: f64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Render nmse_vs_cr.svg next to the CSV/JSON outputs.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct OmpArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Compression ratio (measurements / real dimensionality).
    #[arg(long, default_value = "1/4")]
    pub cr: String,
    /// Channels to recover.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Sparsity budget (default: 2 x path count).
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Residual-norm stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Snap path delays and angles onto the transform grids first.
    #[arg(long)]
    pub on_grid: bool,
    /// Seed of the Gaussian measurement ensemble.
    #[arg(long, default_value_t = 7)]
    pub ensemble_seed: u64,
}

/// Executes one parsed invocation, writing console output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args, out),
        Command::Corr(args) => cmd_corr(args, out),
        Command::Sweep(args) => cmd_sweep(args, out),
        Command::Train(args) => cmd_train(args, out),
        Command::Eval(args) => cmd_eval(args, out),
        Command::Experiment(args) => cmd_experiment(args, out),
        Command::Omp(args) => cmd_omp(args, out),
    }
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds.first().copied().unwrap_or(1)
}

fn cmd_gen(args: GenArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.build()?;
    let n = args.n.unwrap_or(cfg.n_train + cfg.n_val + cfg.n_test);
    let ch = cfg.channel_config(cfg.band_gap_hz, cfg.bandwidth_hz, first_seed(&cfg))?;
    let summary = build_dataset(
        &ch,
        n,
        args.temporal_len,
        args.doppler_hz,
        args.frame_dt_s,
        &args.out,
    )?;
    writeln!(
        out,
        "wrote {} ({} samples x {} frames, {}x{} per band, {} bytes)",
        args.out.display(),
        summary.header.n_samples,
        summary.header.temporal_len,
        summary.header.n_tx_antennas,
        summary.header.n_subcarriers,
        summary.bytes_written,
    )?;
    writeln!(out, "sha256 {}", summary.sha256_hex)?;
    Ok(())
}

fn cmd_corr(args: CorrArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.build()?;
    let planes: Vec<CsiPlane> = match &args.planes {
        Some(list) => parse_list(list, |s| Ok(CsiPlane::parse(s)?))?,
        None => CsiPlane::ALL.to_vec(),
    };
    if args.n == 0 {
        return Err(Error::Config("corr needs at least one pair".into()));
    }
    let ch = cfg.channel_config(cfg.band_gap_hz, cfg.bandwidth_hz, first_seed(&cfg))?;
    let pairs = generate_freq_pairs(&ch, 0, args.n)?;
    let mut reports = Vec::with_capacity(planes.len());
    for plane in planes {
        let r = correlation_report_from_pairs(&pairs, plane, cfg.ld)?;
        writeln!(
            out,
            "{:<14} median {:+.4}  mean {:+.4}  (n={}, skipped {})",
            r.plane.name(),
            r.median,
            r.mean,
            r.n_samples,
            r.n_skipped,
        )?;
        reports.push(r);
    }
    let written = report::write_corr_outputs(&cfg.out_dir, &reports, args.plot)?;
    for p in written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.build()?;
    let parse_hz = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("bad frequency {s:?}")))
    };
    let gaps = parse_list(&args.gaps, parse_hz)?;
    let bandwidths = parse_list(&args.bandwidths, parse_hz)?;
    let base = cfg.channel_config(cfg.band_gap_hz, cfg.bandwidth_hz, first_seed(&cfg))?;
    let table = sweep_bandgap_bandwidth(&gaps, &bandwidths, &base, args.n, cfg.ld)?;
    for p in &table.points {
        writeln!(
            out,
            "gap {:>10}  bw {:>8}  corr {:.4}  [{:.4}, {:.4}]  n={}",
            crate::svg::label_hz(p.band_gap_hz),
            crate::svg::label_hz(p.bandwidth_hz),
            p.mean_corr,
            p.ci95_low,
            p.ci95_high,
            p.n_samples,
        )?;
    }
    let written = report::write_sweep_outputs(&cfg.out_dir, &table, args.plot)?;
    for p in written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainJson<'a> {
    codec: &'a str,
    cr: f64,
    cr_rest: Option<f64>,
    seq_len: Option<usize>,
    seed: u64,
    report: &'a TrainReport,
    stage2_report: Option<&'a TrainReport>,
    checkpoints: Vec<PathBuf>,
}

fn cmd_train(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.build()?;
    let kind = parse_codec(&args.codec)?;
    let cr = match &args.cr {
        Some(s) => parse_ratio(s)?,
        None => cfg.crs.first().copied().unwrap_or(0.25),
    };
    let seed = first_seed(&cfg);
    let (init_seed, shuffle_seed) = cell_seeds(&CellSpec {
        codec: kind,
        variant: CellVariant::Baseline,
        cr,
        seed,
    });
    let hp = Hyper {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        patience: cfg.patience,
        init_seed,
        shuffle_seed,
    };
    let ch = cfg.channel_config(cfg.band_gap_hz, cfg.bandwidth_hz, seed)?;
    let stem = args.stem.clone().unwrap_or_else(|| kind.name().to_string());

    let (bundle, report1, report2) = if kind == CodecKind::CsiNetLstm {
        let cr_rest = match &args.cr_rest {
            Some(s) => parse_ratio(s)?,
            None => cr / 4.0,
        };
        writeln!(
            out,
            "training {} (cr {} + {} for {} frames) on {} sequences...",
            kind.name(),
            format_cr(cr),
            format_cr(cr_rest),
            args.seq_len,
            cfg.n_train,
        )?;
        let train_seqs = generate_sequences(
            &ch,
            cfg.ld,
            0,
            cfg.n_train,
            args.seq_len,
            args.doppler_hz,
            args.frame_dt_s,
        )?;
        let val_seqs = generate_sequences(
            &ch,
            cfg.ld,
            cfg.n_train,
            cfg.n_val,
            args.seq_len,
            args.doppler_hz,
            args.frame_dt_s,
        )?;
        let (trained, report2) = train_sequence_codec(
            cfg.n_tx_antennas,
            cfg.ld,
            cr,
            cr_rest,
            args.seq_len,
            &train_seqs,
            &val_seqs,
            &hp,
        )?;
        (trained.bundle, trained.report, Some(report2))
    } else {
        writeln!(
            out,
            "training {} (cr {}) on {} pairs...",
            kind.name(),
            format_cr(cr),
            cfg.n_train,
        )?;
        let train_pairs = generate_pairs(&ch, cfg.ld, 0, cfg.n_train)?;
        let val_pairs = generate_pairs(&ch, cfg.ld, cfg.n_train, cfg.n_val)?;
        let trained = train_codec(
            kind,
            cfg.n_tx_antennas,
            cfg.ld,
            cr,
            &train_pairs,
            &val_pairs,
            &hp,
        )?;
        (trained.bundle, trained.report, None)
    };

    fs::create_dir_all(&args.save_dir)?;
    let checkpoints = save_bundle(&bundle, &args.save_dir, &stem)?;
    writeln!(
        out,
        "stage 1: {} epochs, best {:.6e} at epoch {}",
        report1.epochs_run, report1.best_loss, report1.best_epoch,
    )?;
    if let Some(r2) = &report2 {
        writeln!(
            out,
            "stage 2: {} epochs, best {:.6e} at epoch {}",
            r2.epochs_run, r2.best_loss, r2.best_epoch,
        )?;
    }
    let json_path = args.save_dir.join(format!("{stem}.train.json"));
    report::write_json(
        &json_path,
        &TrainJson {
            codec: kind.name(),
            cr,
            cr_rest: (kind == CodecKind::CsiNetLstm).then(|| match &args.cr_rest {
                Some(s) => parse_ratio(s).unwrap_or(cr / 4.0),
                None => cr / 4.0,
            }),
            seq_len: (kind == CodecKind::CsiNetLstm).then_some(args.seq_len),
            seed,
            report: &report1,
            stage2_report: report2.as_ref(),
            checkpoints: checkpoints.clone(),
        },
    )?;
    for p in &checkpoints {
        writeln!(out, "wrote {}", p.display())?;
    }
    writeln!(out, "wrote {}", json_path.display())?;
    Ok(())
}

fn write_outcome(out: &mut dyn Write, label: &str, o: &EvalOutcome) -> Result<()> {
    writeln!(
        out,
        "{label}: nmse {} dB  mag {} dB  complex {} dB  rho {:.4}  \
         payload {:.1} floats ({:.0} bits)  n={}",
        format_db(o.nmse_db),
        format_db(o.mag_nmse_db),
        format_db(o.complex_nmse_db),
        o.rho,
        o.payload_floats,
        o.payload_bits,
        o.n_samples,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct EvalJson<'a> {
    codec: &'a str,
    stem: &'a str,
    seed: u64,
    outcomes: Vec<serde_json::Value>,
}

fn outcome_json(frame: Option<usize>, o: &EvalOutcome) -> serde_json::Value {
    serde_json::json!({
        "frame": frame,
        "nmse_db": format_db(o.nmse_db),
        "mag_nmse_db": format_db(o.mag_nmse_db),
        "complex_nmse_db": format_db(o.complex_nmse_db),
        "rho": o.rho,
        "payload_floats": o.payload_floats,
        "payload_bits": o.payload_bits,
        "n_samples": o.n_samples,
    })
}

fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.build()?;
    let bundle = load_bundle(&args.load_dir, &args.stem)?;
    if bundle.nt != cfg.n_tx_antennas || bundle.ld != cfg.ld {
        return Err(Error::Config(format!(
            "bundle was trained at nt={} ld={}, but the configuration says nt={} ld={} \
             (pass --nt/--ld to match)",
            bundle.nt, bundle.ld, cfg.n_tx_antennas, cfg.ld
        )));
    }
    let seed = first_seed(&cfg);
    let ch = cfg.channel_config(cfg.band_gap_hz, cfg.bandwidth_hz, seed)?;
    // The held-out slice: sample indices beyond the training and
    // validation ranges used by `train` under the same seed.
    let start = cfg.n_train + cfg.n_val;

    let outcomes: Vec<(Option<usize>, EvalOutcome)> = if bundle.kind == CodecKind::CsiNetLstm {
        let t = bundle.seq_len.unwrap_or(2);
        let seqs = generate_sequences(
            &ch,
            cfg.ld,
            start,
            cfg.n_test,
            t,
            args.doppler_hz,
            args.frame_dt_s,
        )?;
        evaluate_sequence_codec(&bundle, &seqs)?
            .into_iter()
            .enumerate()
            .map(|(i, o)| (Some(i + 1), o))
            .collect()
    } else {
        let pairs = generate_pairs(&ch, cfg.ld, start, cfg.n_test)?;
        vec![(None, evaluate_codec(&bundle, &pairs, &cfg.quant_policy())?)]
    };

    for (frame, o) in &outcomes {
        let label = match frame {
            Some(i) => format!("{} frame {i}", bundle.kind.name()),
            None => bundle.kind.name().to_string(),
        };
        write_outcome(out, &label, o)?;
    }
    let json_path = cfg.out_dir.join(format!("{}.eval.json", args.stem));
    report::write_json(
        &json_path,
        &EvalJson {
            codec: bundle.kind.name(),
            stem: &args.stem,
            seed,
            outcomes: outcomes
                .iter()
                .map(|(frame, o)| outcome_json(*frame, o))
                .collect(),
        },
    )?;
    writeln!(out, "wrote {}", json_path.display())?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.build()?;
    let cells = cfg.variants.len() * cfg.seeds.len() * cfg.codecs.len() * cfg.crs.len();
    writeln!(
        out,
        "running {} cells ({} variants x {} seeds x {} codecs x {} ratios)...",
        cells,
        cfg.variants.len(),
        cfg.seeds.len(),
        cfg.codecs.len(),
        cfg.crs.len(),
    )?;
    let report = run_experiment(&cfg, |line| {
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    })?;
    let written = report::write_experiment_outputs(&cfg.out_dir, &cfg, &report, args.plot)?;
    writeln!(
        out,
        "{} records, {} divergences",
        report.records.len(),
        report.divergences.len(),
    )?;
    for p in written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn cmd_omp(args: OmpArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.build()?;
    let cr = parse_ratio(&args.cr)?;
    let seed = first_seed(&cfg);
    let ch = cfg.channel_config(cfg.band_gap_hz, cfg.bandwidth_hz, seed)?;
    let sparsity = args.sparsity.unwrap_or(2 * ch.n_paths());
    let outcome = omp_baseline(
        &ch,
        cfg.ld,
        args.n,
        cr,
        sparsity,
        args.tol,
        args.on_grid,
        args.ensemble_seed,
    )?;
    writeln!(
        out,
        "omp cr {} ({} measurements, k={}{}): nmse {} dB  rho {:.4}  \
         mean iterations {:.1}  n={}",
        format_cr(cr),
        outcome.m,
        sparsity,
        if args.on_grid { ", on-grid" } else { "" },
        format_db(outcome.complex_nmse_db),
        outcome.rho,
        outcome.mean_iterations,
        outcome.n_samples,
    )?;
    let json_path = cfg.out_dir.join("omp.json");
    report::write_json(
        &json_path,
        &serde_json::json!({
            "cr": cr,
            "m": outcome.m,
            "sparsity": sparsity,
            "on_grid": args.on_grid,
            "tol": args.tol,
            "ensemble_seed": args.ensemble_seed,
            "seed": seed,
            "nmse_db": format_db(outcome.complex_nmse_db),
            "rho": outcome.rho,
            "mean_iterations": outcome.mean_iterations,
            "n_samples": outcome.n_samples,
        }),
    )?;
    writeln!(out, "wrote {}", json_path.display())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(line: &str) -> Cli {
        Cli::try_parse_from(line.split_whitespace()).expect("parses")
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("lab.conf");
        std::fs::write(&file, "scenario = outdoor\nn_train = 50\nepochs = 7\n").unwrap();
        let cli = parse(&format!(
            "csilab experiment --config {} --epochs 9 --nt 8",
            file.display()
        ));
        let Command::Experiment(args) = cli.command else {
            panic!("wrong subcommand");
        };
        let cfg = args.cfg.build().unwrap();
        assert_eq!(cfg.scenario, Scenario::Outdoor);
        assert_eq!(cfg.n_train, 50); // from the file
        assert_eq!(cfg.epochs, 9); // flag wins
        assert_eq!(cfg.n_tx_antennas, 8);
        assert_eq!(cfg.bandwidth_hz, 5e6); // outdoor preset survived
    }

    #[test]
    fn scenario_flag_rebases_before_field_flags() {
        let cli = parse("csilab corr --scenario outdoor --bandwidth-hz 7e6");
        let Command::Corr(args) = cli.command else {
            panic!("wrong subcommand");
        };
        let cfg = args.cfg.build().unwrap();
        assert_eq!(cfg.downlink_center_hz, 930e6);
        assert_eq!(cfg.bandwidth_hz, 7e6);
    }

    #[test]
    fn list_flags_parse_into_typed_fields() {
        let cli = parse(
            "csilab experiment --crs 1/8,0.125 --codecs csinet,u2d-mag \
             --variants baseline,zero-gap --seeds 3,5",
        );
        let Command::Experiment(args) = cli.command else {
            panic!("wrong subcommand");
        };
        let cfg = args.cfg.build().unwrap();
        assert_eq!(cfg.crs, vec![0.125, 0.125]);
        assert_eq!(cfg.codecs, vec![CodecKind::CsiNet, CodecKind::U2dMag]);
        assert_eq!(
            cfg.variants,
            vec![CellVariant::Baseline, CellVariant::ZeroGap]
        );
        assert_eq!(cfg.seeds, vec![3, 5]);
    }

    #[test]
    fn empty_codec_flag_clears_the_list() {
        let cli = Cli::try_parse_from(["csilab", "experiment", "--codecs", ""]).unwrap();
        let Command::Experiment(args) = cli.command else {
            panic!("wrong subcommand");
        };
        assert!(args.cfg.build().unwrap().codecs.is_empty());
    }

    #[test]
    fn unknown_codec_is_rejected_with_the_known_names() {
        let cli = parse("csilab experiment --codecs csinet,bogus");
        let Command::Experiment(args) = cli.command else {
            panic!("wrong subcommand");
        };
        let err = args.cfg.build().unwrap_err().to_string();
        assert!(err.contains("bogus"));
        assert!(err.contains("dualnet-mag"));
    }
}

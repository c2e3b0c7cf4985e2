//! Shared machinery behind `train`, `eval`, `experiment` and `omp`:
//! deterministic pair generation, per-codec sample building, training
//! wrappers and the scoring pass.
//!
//! Scoring conventions:
//!
//! * every NMSE is computed on denormalized planes (physical units), using
//!   the true per-sample normalization bounds -- the bounds are the side
//!   information the feedback link is assumed to carry, exactly as in the
//!   plane representation itself;
//! * `nmse_db` scores the planes the codec actually models (its native
//!   representation), `mag_nmse_db` always scores the magnitude image so
//!   codecs of different families can be compared, and `complex_nmse_db`
//!   scores the assembled complex image;
//! * magnitude-only codecs assemble their complex estimate with exact tap
//!   phases unless phase tiers are configured, in which case the
//!   magnitude-ranked phase quantizer supplies them and its bits are added
//!   to the payload.

use ndarray::Array2;
use num_complex::Complex64;

use csilab_core::{
    cosine_sim, cs_encode, decompose, gaussian_ensemble, mag_phase_quantize, omp_recover,
    reconstruct_complex, reconstruct_with_exact_phases, sample_paths, synthesize_csi,
    to_angular_delay, AngularDelayCsi, BandSpec, ChannelConfig, CsiMatrix, LinkDirection,
    NmseAccumulator, PathSet, PhaseTiers, ReprMode,
};
use csilab_nn::{
    codec_trainer, evaluate_mse, lstm_trainer, planes_to_tensor, tensor_to_planes, train,
    AdamConfig, CodecBundle, CodecKind, Codeword, Model, Sample, Tensor, TrainConfig, TrainReport,
    LSTM_STATE_DIM,
};

use crate::error::{Error, Result};

/// Samples scored per inference batch; bounds peak memory during
/// evaluation without affecting any result.
const EVAL_CHUNK: usize = 128;

/// One generated uplink/downlink pair in the angular-delay domain.
#[derive(Clone, Debug)]
pub struct CsiPair {
    pub ul: AngularDelayCsi,
    pub dl: AngularDelayCsi,
}

/// Generates `n` independent pairs.
///
/// Pair `i` draws its geometry with seed `cfg.seed + start + i`, the same
/// convention as the dataset builder, so disjoint index ranges give
/// disjoint train/validation/test splits from one base seed.
pub fn generate_pairs(
    cfg: &ChannelConfig,
    ld: usize,
    start: usize,
    n: usize,
) -> Result<Vec<CsiPair>> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let paths = sample_paths(cfg, cfg.seed.wrapping_add((start + i) as u64))?;
        out.push(pair_from_paths(&paths, cfg, ld)?);
    }
    Ok(out)
}

/// Generates `n` sequences of `t` frames each; frame 0 draws fresh
/// geometry, later frames evolve it under the given Doppler spread.
pub fn generate_sequences(
    cfg: &ChannelConfig,
    ld: usize,
    start: usize,
    n: usize,
    t: usize,
    doppler_hz: f64,
    frame_dt_s: f64,
) -> Result<Vec<Vec<CsiPair>>> {
    if t == 0 {
        return Err(Error::Config("sequences need at least one frame".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut paths = sample_paths(cfg, cfg.seed.wrapping_add((start + i) as u64))?;
        let mut frames = Vec::with_capacity(t);
        for f in 0..t {
            if f > 0 {
                paths = csilab_core::evolve_paths(&paths, doppler_hz, frame_dt_s)?;
            }
            frames.push(pair_from_paths(&paths, cfg, ld)?);
        }
        out.push(frames);
    }
    Ok(out)
}

/// Generates `n` frequency-domain pairs; the correlation study works on
/// these before any angular-delay truncation.
pub fn generate_freq_pairs(
    cfg: &ChannelConfig,
    start: usize,
    n: usize,
) -> Result<Vec<(CsiMatrix, CsiMatrix)>> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let paths = sample_paths(cfg, cfg.seed.wrapping_add((start + i) as u64))?;
        let ul = synthesize_csi(&paths, &cfg.uplink, LinkDirection::Uplink)?;
        let dl = synthesize_csi(&paths, &cfg.downlink, LinkDirection::Downlink)?;
        out.push((ul, dl));
    }
    Ok(out)
}

fn pair_from_paths(paths: &PathSet, cfg: &ChannelConfig, ld: usize) -> Result<CsiPair> {
    let ul = synthesize_csi(paths, &cfg.uplink, LinkDirection::Uplink)?;
    let dl = synthesize_csi(paths, &cfg.downlink, LinkDirection::Downlink)?;
    Ok(CsiPair {
        ul: to_angular_delay(&ul, ld)?,
        dl: to_angular_delay(&dl, ld)?,
    })
}

/// Builds one training sample in the codec's representation: autoencoders
/// reconstruct the downlink planes (side-aided ones additionally see the
/// uplink planes), translators map uplink planes to downlink planes.
pub fn pair_sample(kind: CodecKind, pair: &CsiPair) -> Result<Sample<f32>> {
    if kind == CodecKind::CsiNetLstm {
        return Err(Error::Config(
            "sequence samples are built per training stage, not per pair".into(),
        ));
    }
    let mode = kind.repr_mode();
    let dl = planes_to_tensor(kind, &decompose(&pair.dl, mode))?;
    let (inputs, targets) = if !kind.has_encoder() {
        let ul = planes_to_tensor(kind, &decompose(&pair.ul, mode))?;
        (vec![ul], vec![dl])
    } else if kind.uses_uplink_side() {
        let ul = planes_to_tensor(kind, &decompose(&pair.ul, mode))?;
        (vec![dl.clone(), ul], vec![dl])
    } else {
        (vec![dl.clone()], vec![dl])
    };
    Ok(Sample { inputs, targets })
}

/// Training hyperparameters shared by every codec job.
#[derive(Clone, Copy, Debug)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Early-stopping patience; 0 trains for the full epoch budget.
    pub patience: usize,
    /// Seed of the parameter initialisation.
    pub init_seed: u64,
    /// Seed of the per-epoch batch shuffle.
    pub shuffle_seed: u64,
}

impl Hyper {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.learning_rate,
                ..AdamConfig::default()
            },
            shuffle_seed: self.shuffle_seed,
            patience: (self.patience > 0).then_some(self.patience),
            ..TrainConfig::default()
        }
    }
}

/// A trained codec together with its training history.
pub struct TrainedCodec {
    pub bundle: CodecBundle,
    pub report: TrainReport,
}

/// Trains one single-frame codec end to end and extracts its bundle.
pub fn train_codec(
    kind: CodecKind,
    nt: usize,
    ld: usize,
    cr: f64,
    train_pairs: &[CsiPair],
    val_pairs: &[CsiPair],
    hp: &Hyper,
) -> Result<TrainedCodec> {
    let trainer = codec_trainer(kind, nt, ld, cr, hp.init_seed)?;
    let mut model: Model<f32> = Model::init(trainer.spec.clone())?;
    let train_set: Vec<Sample<f32>> = train_pairs
        .iter()
        .map(|p| pair_sample(kind, p))
        .collect::<Result<_>>()?;
    let val_set: Vec<Sample<f32>> = val_pairs
        .iter()
        .map(|p| pair_sample(kind, p))
        .collect::<Result<_>>()?;
    let report = train(
        &mut model,
        &train_set,
        (!val_set.is_empty()).then_some(val_set.as_slice()),
        &hp.train_config(),
    )?;
    Ok(TrainedCodec {
        bundle: trainer.bundle(&model)?,
        report,
    })
}

/// Trains the two stages of the sequence codec.
///
/// Stage 1 fits a plain `csinet` at `cr_first` on the first frames; its
/// frozen reconstructions then seed stage 2, which fits the shared rest
/// encoder and the recurrent decoder on the remaining frames at `cr_rest`.
pub fn train_sequence_codec(
    nt: usize,
    ld: usize,
    cr_first: f64,
    cr_rest: f64,
    seq_len: usize,
    train_seqs: &[Vec<CsiPair>],
    val_seqs: &[Vec<CsiPair>],
    hp: &Hyper,
) -> Result<(TrainedCodec, TrainReport)> {
    let lstm = lstm_trainer(nt, ld, cr_first, cr_rest, seq_len, hp.init_seed)?;

    let first_frames: Vec<CsiPair> = train_seqs.iter().map(|s| s[0].clone()).collect();
    let first_val: Vec<CsiPair> = val_seqs.iter().map(|s| s[0].clone()).collect();
    let stage1 = train_codec(
        CodecKind::CsiNet,
        nt,
        ld,
        cr_first,
        &first_frames,
        &first_val,
        hp,
    )?;

    let stage2_samples = |seqs: &[Vec<CsiPair>]| -> Result<Vec<Sample<f32>>> {
        let mut samples = Vec::with_capacity(seqs.len());
        for seq in seqs {
            if seq.len() != seq_len {
                return Err(Error::Config(format!(
                    "sequence has {} frames, expected {seq_len}",
                    seq.len()
                )));
            }
            let first = planes_to_tensor(
                CodecKind::CsiNet,
                &decompose(&seq[0].dl, ReprMode::Org),
            )?;
            let cw = stage1.bundle.encode(std::slice::from_ref(&first))?;
            let recon1 = stage1
                .bundle
                .decode(&cw, None)?
                .pop()
                .expect("one reconstruction per codeword");
            let mut inputs = Vec::with_capacity(seq_len + 1);
            let mut targets = Vec::with_capacity(seq_len - 1);
            for frame in &seq[1..] {
                let t = planes_to_tensor(CodecKind::CsiNet, &decompose(&frame.dl, ReprMode::Org))?;
                inputs.push(t.clone());
                targets.push(t);
            }
            inputs.push(recon1);
            inputs.push(Tensor::zeros(&[LSTM_STATE_DIM]));
            samples.push(Sample { inputs, targets });
        }
        Ok(samples)
    };

    let train_set = stage2_samples(train_seqs)?;
    let val_set = stage2_samples(val_seqs)?;
    let mut stage2: Model<f32> = Model::init(lstm.stage2_spec.clone())?;
    let mut hp2 = *hp;
    hp2.shuffle_seed = hp.shuffle_seed.wrapping_add(1);
    let report2 = train(
        &mut stage2,
        &train_set,
        (!val_set.is_empty()).then_some(val_set.as_slice()),
        &hp2.train_config(),
    )?;

    let bundle = lstm.bundle(&stage1.bundle, &stage2)?;
    Ok((
        TrainedCodec {
            bundle,
            report: stage1.report,
        },
        report2,
    ))
}

/// Validation MSE of a trained single-frame codec on held-out pairs, in
/// the codec's own normalized plane space. Mostly a training diagnostic;
/// the physical-unit scores come from [`evaluate_codec`].
pub fn codec_mse(bundle_kind: CodecKind, model: &Model<f32>, pairs: &[CsiPair]) -> Result<f64> {
    let samples: Vec<Sample<f32>> = pairs
        .iter()
        .map(|p| pair_sample(bundle_kind, p))
        .collect::<Result<_>>()?;
    Ok(evaluate_mse(model, &samples, EVAL_CHUNK)?)
}

/// How feedback is quantized during evaluation.
#[derive(Clone, Debug, Default)]
pub struct QuantPolicy {
    /// Uniform codeword quantization width; 0 keeps float codewords.
    pub codeword_bits: u32,
    /// Magnitude-ranked phase tiers; empty means exact phase knowledge.
    pub phase_tiers: PhaseTiers,
}

/// Physical-unit scores of a codec on a test set.
#[derive(Clone, Copy, Debug)]
pub struct EvalOutcome {
    /// NMSE over the codec's native planes, dB.
    pub nmse_db: f64,
    /// NMSE over the magnitude image, dB.
    pub mag_nmse_db: f64,
    /// NMSE over the assembled complex image, dB.
    pub complex_nmse_db: f64,
    /// Cosine similarity of the assembled complex image.
    pub rho: f64,
    /// Feedback floats per reported frame (0 for translators).
    pub payload_floats: f64,
    /// Feedback bits per reported frame, including phase feedback.
    pub payload_bits: f64,
    pub n_samples: usize,
}

fn denorm(plane: &Array2<f64>, (lo, hi): (f64, f64)) -> Array2<f64> {
    if hi > lo {
        plane.mapv(|v| lo + v * (hi - lo))
    } else {
        Array2::from_elem(plane.raw_dim(), lo)
    }
}

/// Quantizes every codeword through a shared uniform grid spanning the
/// batch's value range. The two range floats are treated as out-of-band
/// metadata, like the plane normalization bounds.
fn quantize_codewords(cws: &mut [Codeword], bits: u32) -> Result<()> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for cw in cws.iter() {
        for &v in &cw.values {
            lo = lo.min(v as f64);
            hi = hi.max(v as f64);
        }
    }
    if !(lo.is_finite() && hi > lo) {
        return Ok(()); // constant codewords carry no quantizable information
    }
    // Widen the top so the maximum itself stays inside the half-open range.
    let span = hi - lo;
    let range = (lo, hi + span * 1e-9);
    for cw in cws.iter_mut() {
        let vals: Vec<f64> = cw.values.iter().map(|&v| v as f64).collect();
        let codes = csilab_core::uniform_quantize(&vals, bits, range)?;
        let back = csilab_core::uniform_dequantize(&codes, bits, range)?;
        for (v, b) in cw.values.iter_mut().zip(back) {
            *v = b as f32;
        }
    }
    Ok(())
}

/// Scores a trained single-frame codec on held-out pairs.
pub fn evaluate_codec(
    bundle: &CodecBundle,
    pairs: &[CsiPair],
    policy: &QuantPolicy,
) -> Result<EvalOutcome> {
    if pairs.is_empty() {
        return Err(Error::Config("no evaluation pairs".into()));
    }
    let kind = bundle.kind;
    if kind == CodecKind::CsiNetLstm {
        return Err(Error::Config(
            "sequence codecs are scored with evaluate_sequence_codec".into(),
        ));
    }
    let mode = kind.repr_mode();

    // Decompose every pair once; tensors for inference, planes for scoring.
    let dl_planes: Vec<_> = pairs.iter().map(|p| decompose(&p.dl, mode)).collect();
    let dl_tensors: Vec<Tensor<f32>> = dl_planes
        .iter()
        .map(|p| planes_to_tensor(kind, p))
        .collect::<csilab_nn::Result<_>>()?;
    let ul_tensors: Option<Vec<Tensor<f32>>> = if kind.uses_uplink_side() || !kind.has_encoder() {
        Some(
            pairs
                .iter()
                .map(|p| planes_to_tensor(kind, &decompose(&p.ul, mode)))
                .collect::<csilab_nn::Result<_>>()?,
        )
    } else {
        None
    };

    // Inference. Codewords are gathered first so quantization can span the
    // whole batch, then decoded chunk by chunk.
    let mut phase_bits_total = 0usize;
    let mut recons: Vec<Tensor<f32>> = Vec::with_capacity(pairs.len());
    let payload_floats = bundle.feedback_floats_per_frame();
    let mut payload_bits = if kind.has_encoder() {
        payload_floats
            * if policy.codeword_bits > 0 {
                policy.codeword_bits as f64
            } else {
                32.0
            }
    } else {
        0.0
    };
    if kind.has_encoder() {
        let mut cws = Vec::with_capacity(pairs.len());
        for chunk in dl_tensors.chunks(EVAL_CHUNK) {
            cws.extend(bundle.encode(chunk)?);
        }
        if policy.codeword_bits > 0 {
            quantize_codewords(&mut cws, policy.codeword_bits)?;
        }
        for (ci, cw_chunk) in cws.chunks(EVAL_CHUNK).enumerate() {
            let side_chunk = ul_tensors
                .as_ref()
                .map(|side| &side[ci * EVAL_CHUNK..(ci * EVAL_CHUNK + cw_chunk.len())]);
            recons.extend(bundle.decode(cw_chunk, side_chunk)?);
        }
    } else {
        let side = ul_tensors.as_ref().expect("translators read the uplink");
        for chunk in side.chunks(EVAL_CHUNK) {
            recons.extend(bundle.translate(chunk)?);
        }
    }

    // Scoring.
    let mut native = NmseAccumulator::new();
    let mut mag = NmseAccumulator::new();
    let mut truth_cplx = Vec::with_capacity(pairs.len());
    let mut est_cplx = Vec::with_capacity(pairs.len());
    for ((pair, planes), recon) in pairs.iter().zip(&dl_planes).zip(&recons) {
        let est_norm = tensor_to_planes(kind, recon)?;
        let idx = kind.plane_indices();
        let est_denorm: Vec<Array2<f64>> = est_norm
            .iter()
            .zip(idx)
            .map(|(p, &i)| denorm(p, planes.scale.bounds[i]))
            .collect();
        let truth_denorm: Vec<Array2<f64>> = idx.iter().map(|&i| planes.denormalized(i)).collect();

        let mut err = 0.0;
        let mut energy = 0.0;
        for (e, t) in est_denorm.iter().zip(&truth_denorm) {
            err += e
                .iter()
                .zip(t.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            energy += t.iter().map(|v| v * v).sum::<f64>();
        }
        native.add(err, energy)?;

        let truth_mag = pair.dl.values.mapv(|v| v.norm());
        let est_mag = match mode {
            ReprMode::Polar => est_denorm[0].clone(),
            // Signs cancel inside the magnitude, so Org and Abs share this.
            _ => {
                let mut m = est_denorm[0].clone();
                ndarray::Zip::from(&mut m)
                    .and(&est_denorm[1])
                    .for_each(|a, &b| *a = a.hypot(b));
                m
            }
        };
        let mag_err: f64 = est_mag
            .iter()
            .zip(truth_mag.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let mag_energy: f64 = truth_mag.iter().map(|v| v * v).sum();
        mag.add(mag_err, mag_energy)?;

        let est = assemble_complex(
            kind,
            pair,
            planes,
            &est_denorm,
            &policy.phase_tiers,
            &mut phase_bits_total,
        )?;
        truth_cplx.push(pair.dl.values.clone());
        est_cplx.push(est);
    }

    payload_bits += phase_bits_total as f64 / pairs.len() as f64;
    Ok(EvalOutcome {
        nmse_db: native.nmse_db()?,
        mag_nmse_db: mag.nmse_db()?,
        complex_nmse_db: csilab_core::nmse_db_complex(&truth_cplx, &est_cplx)?,
        rho: cosine_sim(&truth_cplx, &est_cplx)?,
        payload_floats,
        payload_bits,
        n_samples: pairs.len(),
    })
}

/// Assembles the complex angular-delay estimate of one sample.
fn assemble_complex(
    kind: CodecKind,
    pair: &CsiPair,
    planes: &csilab_core::Planes,
    est_denorm: &[Array2<f64>],
    tiers: &PhaseTiers,
    phase_bits_total: &mut usize,
) -> Result<Array2<Complex64>> {
    let values = match kind.repr_mode() {
        ReprMode::Org => {
            let mut out = Array2::<Complex64>::zeros(est_denorm[0].raw_dim());
            ndarray::Zip::from(&mut out)
                .and(&est_denorm[0])
                .and(&est_denorm[1])
                .for_each(|o, &re, &im| *o = Complex64::new(re, im));
            out
        }
        ReprMode::Abs => {
            let sr = planes.sign_re.as_ref().expect("Abs planes carry signs");
            let si = planes.sign_im.as_ref().expect("Abs planes carry signs");
            let mut out = Array2::<Complex64>::zeros(est_denorm[0].raw_dim());
            for ((i, j), o) in out.indexed_iter_mut() {
                let re = est_denorm[0][(i, j)].abs();
                let im = est_denorm[1][(i, j)].abs();
                *o = Complex64::new(
                    if sr[(i, j)] { re } else { -re },
                    if si[(i, j)] { im } else { -im },
                );
            }
            out
        }
        ReprMode::Polar => {
            let mag_hat = est_denorm[0].mapv(|v| v.max(0.0));
            let true_phases = pair.dl.values.mapv(|v| v.arg());
            let ad = if tiers.is_empty() {
                reconstruct_with_exact_phases(
                    &mag_hat,
                    &true_phases,
                    None,
                    planes.band,
                    planes.angular,
                )?
            } else {
                let fb = mag_phase_quantize(&true_phases, &mag_hat, tiers)?;
                *phase_bits_total += fb.total_bits;
                reconstruct_complex(&mag_hat, &fb, planes.band, planes.angular)?
            };
            ad.values
        }
    };
    Ok(values)
}

/// Per-frame scores of the sequence codec on held-out sequences.
pub fn evaluate_sequence_codec(
    bundle: &CodecBundle,
    seqs: &[Vec<CsiPair>],
) -> Result<Vec<EvalOutcome>> {
    if bundle.kind != CodecKind::CsiNetLstm {
        return Err(Error::Config("not a sequence codec".into()));
    }
    if seqs.is_empty() {
        return Err(Error::Config("no evaluation sequences".into()));
    }
    let t = bundle.seq_len.expect("sequence codec has a length");
    let mut frame_tensors: Vec<Vec<Tensor<f32>>> = Vec::with_capacity(seqs.len());
    for seq in seqs {
        if seq.len() != t {
            return Err(Error::Config(format!(
                "sequence has {} frames, expected {t}",
                seq.len()
            )));
        }
        frame_tensors.push(
            seq.iter()
                .map(|p| planes_to_tensor(CodecKind::CsiNet, &decompose(&p.dl, ReprMode::Org)))
                .collect::<csilab_nn::Result<_>>()?,
        );
    }

    let mut recons: Vec<Vec<Tensor<f32>>> = Vec::with_capacity(seqs.len());
    for chunk in frame_tensors.chunks(EVAL_CHUNK) {
        recons.extend(bundle.run_sequence(chunk)?);
    }

    let m_first = bundle.m.unwrap_or(0) as f64;
    let m_rest = bundle.m_rest.unwrap_or(0) as f64;
    let mut outcomes = Vec::with_capacity(t);
    for fi in 0..t {
        let mut native = NmseAccumulator::new();
        let mut mag = NmseAccumulator::new();
        let mut truth_cplx = Vec::with_capacity(seqs.len());
        let mut est_cplx = Vec::with_capacity(seqs.len());
        for (seq, recon_seq) in seqs.iter().zip(&recons) {
            let pair = &seq[fi];
            let planes = decompose(&pair.dl, ReprMode::Org);
            let est_norm = tensor_to_planes(CodecKind::CsiNet, &recon_seq[fi])?;
            let est_denorm: Vec<Array2<f64>> = est_norm
                .iter()
                .zip(0..)
                .map(|(p, i)| denorm(p, planes.scale.bounds[i]))
                .collect();
            let mut err = 0.0;
            let mut energy = 0.0;
            for (i, e) in est_denorm.iter().enumerate() {
                let t_plane = planes.denormalized(i);
                err += e
                    .iter()
                    .zip(t_plane.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                energy += t_plane.iter().map(|v| v * v).sum::<f64>();
            }
            native.add(err, energy)?;

            let truth_mag = pair.dl.values.mapv(|v| v.norm());
            let mut est_mag = est_denorm[0].clone();
            ndarray::Zip::from(&mut est_mag)
                .and(&est_denorm[1])
                .for_each(|a, &b| *a = a.hypot(b));
            let mag_err: f64 = est_mag
                .iter()
                .zip(truth_mag.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            mag.add(mag_err, truth_mag.iter().map(|v| v * v).sum())?;

            let mut est = Array2::<Complex64>::zeros(est_denorm[0].raw_dim());
            ndarray::Zip::from(&mut est)
                .and(&est_denorm[0])
                .and(&est_denorm[1])
                .for_each(|o, &re, &im| *o = Complex64::new(re, im));
            truth_cplx.push(pair.dl.values.clone());
            est_cplx.push(est);
        }
        let floats = if fi == 0 { m_first } else { m_rest };
        outcomes.push(EvalOutcome {
            nmse_db: native.nmse_db()?,
            mag_nmse_db: mag.nmse_db()?,
            complex_nmse_db: csilab_core::nmse_db_complex(&truth_cplx, &est_cplx)?,
            rho: cosine_sim(&truth_cplx, &est_cplx)?,
            payload_floats: floats,
            payload_bits: floats * 32.0,
            n_samples: seqs.len(),
        });
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// Compressive-sensing baseline.
// ---------------------------------------------------------------------------

/// Snaps path delays to the delay grid and departure angles to the angular
/// grid of `band`, making the angular-delay image exactly path-sparse.
pub fn snap_paths_to_grid(paths: &PathSet, band: &BandSpec) -> PathSet {
    let g = band.spacing_in_wavelengths();
    let nt = band.n_tx_antennas as f64;
    let bw = band.bandwidth_hz;
    let mut out = paths.clone();
    for p in &mut out.paths {
        p.delay_s = (p.delay_s * bw).round() / bw;
        // The antenna DFT concentrates when spacing * sin(angle) sits on the
        // 1/Nt grid.
        let s = ((p.angle_rad.sin() * g * nt).round() / (nt * g)).clamp(-1.0, 1.0);
        p.angle_rad = s.asin();
    }
    out
}

/// Scores of the OMP baseline over a batch of downlink channels.
#[derive(Clone, Copy, Debug)]
pub struct OmpOutcome {
    pub complex_nmse_db: f64,
    pub rho: f64,
    pub mean_iterations: f64,
    /// Measurement count (the codeword analogue).
    pub m: usize,
    pub n_samples: usize,
}

/// Runs the compressive-sensing baseline: random Gaussian measurements of
/// the vectorized real/imaginary planes, recovered per sample with OMP.
pub fn omp_baseline(
    cfg: &ChannelConfig,
    ld: usize,
    n_samples: usize,
    cr: f64,
    sparsity: usize,
    tol: f64,
    on_grid: bool,
    ensemble_seed: u64,
) -> Result<OmpOutcome> {
    if n_samples == 0 {
        return Err(Error::Config("the baseline needs at least one sample".into()));
    }
    let nt = cfg.downlink.n_tx_antennas;
    let dim = 2 * nt * ld;
    let m = csilab_nn::codeword_len(cr, nt, ld);
    let ensemble = gaussian_ensemble(m, dim, ensemble_seed)?;

    let mut truth_cplx = Vec::with_capacity(n_samples);
    let mut est_cplx = Vec::with_capacity(n_samples);
    let mut iterations = 0usize;
    for i in 0..n_samples {
        let paths = sample_paths(cfg, cfg.seed.wrapping_add(i as u64))?;
        let paths = if on_grid {
            snap_paths_to_grid(&paths, &cfg.downlink)
        } else {
            paths
        };
        let dl = synthesize_csi(&paths, &cfg.downlink, LinkDirection::Downlink)?;
        let ad = to_angular_delay(&dl, ld)?;

        let mut vec = Vec::with_capacity(dim);
        vec.extend(ad.values.iter().map(|v| v.re));
        vec.extend(ad.values.iter().map(|v| v.im));
        let y = cs_encode(&vec, &ensemble)?;
        let rec = omp_recover(&y, &ensemble, sparsity, tol)?;
        iterations += rec.iterations;

        let half = nt * ld;
        let mut est = Array2::<Complex64>::zeros((nt, ld));
        for (flat, v) in est.iter_mut().enumerate() {
            *v = Complex64::new(rec.solution[flat], rec.solution[half + flat]);
        }
        truth_cplx.push(ad.values);
        est_cplx.push(est);
    }

    Ok(OmpOutcome {
        complex_nmse_db: csilab_core::nmse_db_complex(&truth_cplx, &est_cplx)?,
        rho: cosine_sim(&truth_cplx, &est_cplx)?,
        mean_iterations: iterations as f64 / n_samples as f64,
        m,
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, Scenario};

    fn tiny_config() -> ChannelConfig {
        let mut cfg = ExperimentConfig::new(Scenario::Indoor);
        cfg.n_tx_antennas = 8;
        cfg.n_subcarriers = 32;
        cfg.ld = 8;
        cfg.channel_config(180e6, 20e6, 11).unwrap()
    }

    #[test]
    fn pair_generation_is_deterministic_and_split_disjoint() {
        let cfg = tiny_config();
        let a = generate_pairs(&cfg, 8, 0, 3).unwrap();
        let b = generate_pairs(&cfg, 8, 0, 3).unwrap();
        assert_eq!(a[0].dl.values, b[0].dl.values);
        assert_eq!(a[2].ul.values, b[2].ul.values);
        // The second half of a longer run equals a run started at its index.
        let long = generate_pairs(&cfg, 8, 0, 5).unwrap();
        let tail = generate_pairs(&cfg, 8, 3, 2).unwrap();
        assert_eq!(long[3].dl.values, tail[0].dl.values);
        assert_ne!(long[0].dl.values, long[1].dl.values);
    }

    #[test]
    fn samples_follow_each_codec_family_layout() {
        let cfg = tiny_config();
        let pair = &generate_pairs(&cfg, 8, 0, 1).unwrap()[0];

        let ae = pair_sample(CodecKind::CsiNet, pair).unwrap();
        assert_eq!(ae.inputs.len(), 1);
        assert_eq!(ae.inputs[0].shape(), &[2, 8, 8]);
        assert_eq!(ae.targets[0], ae.inputs[0]);

        let side = pair_sample(CodecKind::DualNetMag, pair).unwrap();
        assert_eq!(side.inputs.len(), 2);
        assert_eq!(side.inputs[0].shape(), &[1, 8, 8]);
        assert_eq!(side.targets[0], side.inputs[0]);
        assert_ne!(side.inputs[1], side.inputs[0]);

        let tr = pair_sample(CodecKind::U2dOrg, pair).unwrap();
        assert_eq!(tr.inputs.len(), 1);
        assert_ne!(tr.inputs[0], tr.targets[0]); // uplink in, downlink out
    }

    #[test]
    fn static_sequences_repeat_the_first_frame() {
        let cfg = tiny_config();
        let seqs = generate_sequences(&cfg, 8, 0, 2, 3, 0.0, 1e-3).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].len(), 3);
        assert_eq!(seqs[0][0].dl.values, seqs[0][2].dl.values);
        // With Doppler the frames move.
        let moving = generate_sequences(&cfg, 8, 0, 1, 3, 50.0, 1e-3).unwrap();
        assert_ne!(moving[0][0].dl.values, moving[0][1].dl.values);
        // Frame 0 matches the single-frame generator.
        let pairs = generate_pairs(&cfg, 8, 0, 2).unwrap();
        assert_eq!(seqs[1][0].dl.values, pairs[1].dl.values);
    }

    #[test]
    fn snapped_paths_make_the_image_path_sparse() {
        let cfg = tiny_config();
        let paths = sample_paths(&cfg, 5).unwrap();
        let snapped = snap_paths_to_grid(&paths, &cfg.downlink);
        let dl = synthesize_csi(&snapped, &cfg.downlink, LinkDirection::Downlink).unwrap();
        let ad = to_angular_delay(&dl, cfg.downlink.n_subcarriers).unwrap();
        let total: f64 = ad.values.iter().map(|v| v.norm_sqr()).sum();
        let mut energies: Vec<f64> = ad.values.iter().map(|v| v.norm_sqr()).collect();
        energies.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top: f64 = energies.iter().take(paths.paths.len()).sum();
        // Every path collapses onto one angular-delay pixel, so the
        // strongest `n_paths` pixels hold essentially all the energy.
        assert!(
            top / total > 1.0 - 1e-12,
            "snapped image is not sparse: top share {}",
            top / total
        );
    }

    #[test]
    fn codeword_quantization_error_is_bounded_by_half_a_step() {
        let mut cws = vec![
            Codeword {
                values: vec![0.1, 0.9, -0.3],
            },
            Codeword {
                values: vec![0.5, -0.1, 0.2],
            },
        ];
        let orig = cws.clone();
        quantize_codewords(&mut cws, 6).unwrap();
        let step = (0.9 - (-0.3)) / 64.0;
        for (q, o) in cws.iter().zip(&orig) {
            for (a, b) in q.values.iter().zip(&o.values) {
                assert!(
                    (a - b).abs() as f64 <= step / 2.0 + 1e-6,
                    "{a} vs {b} (step {step})"
                );
            }
        }
        // Constant codewords pass through untouched.
        let mut flat = vec![Codeword {
            values: vec![0.25, 0.25],
        }];
        quantize_codewords(&mut flat, 4).unwrap();
        assert_eq!(flat[0].values, vec![0.25, 0.25]);
    }
}

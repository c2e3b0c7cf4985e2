//! Mini-batch training loop: seeded shuffling, MSE loss, Adam updates,
//! plateau early stopping, and divergence detection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{stack_samples, Scalar, Tensor};

/// One training example: per-sample input and target tensors (no batch
/// axis), ordered like the model's graph inputs and outputs.
#[derive(Clone, Debug)]
pub struct Sample<S> {
    pub inputs: Vec<Tensor<S>>,
    pub targets: Vec<Tensor<S>>,
}

/// Knobs of the training loop.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    /// Upper bound on epochs (early stopping may end sooner).
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seed for the per-epoch shuffle of the training set.
    pub shuffle_seed: u64,
    /// Stop after this many epochs without improvement, restoring the best
    /// parameters seen. `None` disables early stopping.
    pub patience: Option<usize>,
    /// Minimum decrease of the monitored loss that counts as improvement.
    pub min_delta: f64,
    /// A batch loss above this (or any non-finite loss) aborts training
    /// with [`Error::Divergence`].
    pub max_loss: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            shuffle_seed: 0,
            patience: Some(8),
            min_delta: 1e-6,
            max_loss: 1e6,
        }
    }
}

/// What happened during a training run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Epoch (0-based) whose parameters the model ended up with.
    pub best_epoch: usize,
    /// Monitored loss at the best epoch.
    pub best_loss: f64,
    /// Mean training MSE per epoch.
    pub train_curve: Vec<f64>,
    /// Validation MSE per epoch (empty without a validation set).
    pub val_curve: Vec<f64>,
}

/// Mean squared error over all output tensors plus its gradient.
///
/// The loss averages over every element of every output, so multi-output
/// graphs (e.g. one reconstruction per frame) weight outputs by element
/// count. The gradient of output element `o` is `2 (o - t) / n_total`.
pub fn mse_loss_and_grad<S: Scalar>(
    outputs: &[Tensor<S>],
    targets: &[Tensor<S>],
) -> Result<(f64, Vec<Tensor<S>>)> {
    if outputs.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} output(s) vs {} target(s)",
            outputs.len(),
            targets.len()
        )));
    }
    let n_total: usize = outputs.iter().map(|t| t.len()).sum();
    if n_total == 0 {
        return Err(Error::Shape("loss over zero elements".into()));
    }
    let scale = S::from_f64(2.0 / n_total as f64);
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (o, t) in outputs.iter().zip(targets) {
        if o.shape() != t.shape() {
            return Err(Error::Shape(format!(
                "output shape {:?} vs target shape {:?}",
                o.shape(),
                t.shape()
            )));
        }
        let mut g = Tensor::zeros(o.shape());
        for ((go, &ov), &tv) in g.data_mut().iter_mut().zip(o.data()).zip(t.data()) {
            let diff = ov - tv;
            loss += diff.to_f64() * diff.to_f64();
            *go = scale * diff;
        }
        grads.push(g);
    }
    Ok((loss / n_total as f64, grads))
}

fn stack_batch<S: Scalar>(
    samples: &[Sample<S>],
    idx: &[usize],
) -> Result<(Vec<Tensor<S>>, Vec<Tensor<S>>)> {
    let n_in = samples[idx[0]].inputs.len();
    let n_out = samples[idx[0]].targets.len();
    let mut inputs = Vec::with_capacity(n_in);
    for i in 0..n_in {
        let parts: Vec<&Tensor<S>> = idx.iter().map(|&s| &samples[s].inputs[i]).collect();
        inputs.push(stack_samples(&parts)?);
    }
    let mut targets = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let parts: Vec<&Tensor<S>> = idx.iter().map(|&s| &samples[s].targets[i]).collect();
        targets.push(stack_samples(&parts)?);
    }
    Ok((inputs, targets))
}

/// Mean MSE of the model (inference mode) over a dataset.
pub fn evaluate_mse<S: Scalar>(
    model: &Model<S>,
    data: &[Sample<S>],
    batch_size: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Shape("cannot evaluate on an empty dataset".into()));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut weighted = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (inputs, targets) = stack_batch(data, chunk)?;
        let outputs = model.forward_eval(&inputs)?;
        let (loss, _) = mse_loss_and_grad(&outputs, &targets)?;
        weighted += loss * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(weighted / count as f64)
}

/// Trains the model in place.
///
/// Shuffling is deterministic in `shuffle_seed`; with early stopping the
/// model is left holding the parameters of its best epoch (monitored on
/// the validation set when given, on the training loss otherwise).
/// Trailing batches of a single sample are skipped because training-mode
/// batch norm is undefined there.
pub fn train<S: Scalar>(
    model: &mut Model<S>,
    train_set: &[Sample<S>],
    val_set: Option<&[Sample<S>]>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Shape("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidSpec("batch size must be at least 1".into()));
    }
    let mut adam = AdamState::new(model);
    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        best_loss: f64::INFINITY,
        train_curve: Vec::new(),
        val_curve: Vec::new(),
    };
    let mut best_snapshot = None;
    let mut stale = 0usize;

    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.shuffle_seed
                .wrapping_add((epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        indices.shuffle(&mut rng);

        let mut weighted = 0.0;
        let mut count = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            if chunk.len() < 2 && train_set.len() > 1 {
                continue; // batch norm cannot normalise a single sample
            }
            let (inputs, targets) = stack_batch(train_set, chunk)?;
            let (outputs, cache) = model.forward_train(&inputs)?;
            let (loss, grads) = mse_loss_and_grad(&outputs, &targets)?;
            if !loss.is_finite() || loss > cfg.max_loss {
                return Err(Error::Divergence { epoch, loss });
            }
            let param_grads = model.backward(&cache, &grads)?;
            adam.step(model, &param_grads, &cfg.adam);
            weighted += loss * chunk.len() as f64;
            count += chunk.len();
        }
        let train_loss = weighted / count.max(1) as f64;
        report.train_curve.push(train_loss);
        report.epochs_run = epoch + 1;

        let monitored = match val_set {
            Some(val) => {
                let v = evaluate_mse(model, val, cfg.batch_size)?;
                report.val_curve.push(v);
                v
            }
            None => train_loss,
        };
        if !monitored.is_finite() || monitored > cfg.max_loss {
            return Err(Error::Divergence {
                epoch,
                loss: monitored,
            });
        }

        if monitored < report.best_loss - cfg.min_delta {
            report.best_loss = monitored;
            report.best_epoch = epoch;
            best_snapshot = Some(model.nodes.clone());
            stale = 0;
        } else {
            stale += 1;
            if let Some(patience) = cfg.patience {
                if stale >= patience {
                    break;
                }
            }
        }
    }

    if let Some(best) = best_snapshot {
        model.nodes = best;
    }
    Ok(report)
}

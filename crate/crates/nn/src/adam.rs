//! Adam optimiser with bias correction.

use serde::{Deserialize, Serialize};

use crate::model::{Gradients, Model};
use crate::tensor::{Scalar, Tensor};

/// Adam hyper-parameters. Defaults follow the original recommendation:
/// step size 1e-3, decay rates 0.9 / 0.999, epsilon 1e-8 added outside the
/// square root.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, aligned with the model's parameter
/// tensors (only tie roots hold state).
pub struct AdamState<S> {
    m: Vec<Vec<Tensor<S>>>,
    v: Vec<Vec<Tensor<S>>>,
    /// Completed steps (drives bias correction).
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    /// Zero-initialised moments for every trainable tensor of the model.
    pub fn new(model: &Model<S>) -> Self {
        let zeros = |m: &Model<S>| -> Vec<Vec<Tensor<S>>> {
            m.nodes
                .iter()
                .map(|n| n.params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect())
                .collect()
        };
        AdamState {
            m: zeros(model),
            v: zeros(model),
            t: 0,
        }
    }

    /// Applies one bias-corrected Adam update in place.
    ///
    /// Moments and the update arithmetic run in `f64` regardless of the
    /// model scalar so that `f32` training does not lose small gradient
    /// contributions inside the moment accumulators.
    pub fn step(&mut self, model: &mut Model<S>, grads: &Gradients<S>, cfg: &AdamConfig) {
        self.t += 1;
        let b1 = cfg.beta1;
        let b2 = cfg.beta2;
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        for (node_idx, node) in model.nodes.iter_mut().enumerate() {
            for (p_idx, (_, param)) in node.params.iter_mut().enumerate() {
                let g = &grads.nodes[node_idx][p_idx];
                let m = &mut self.m[node_idx][p_idx];
                let v = &mut self.v[node_idx][p_idx];
                for i in 0..param.len() {
                    let gi = g.data()[i].to_f64();
                    let mi = b1 * m.data()[i].to_f64() + (1.0 - b1) * gi;
                    let vi = b2 * v.data()[i].to_f64() + (1.0 - b2) * gi * gi;
                    m.data_mut()[i] = S::from_f64(mi);
                    v.data_mut()[i] = S::from_f64(vi);
                    let m_hat = mi / bias1;
                    let v_hat = vi / bias2;
                    let delta = cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                    param.data_mut()[i] = S::from_f64(param.data()[i].to_f64() - delta);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, LayerKind};
    use approx::assert_abs_diff_eq;

    fn one_param_model() -> Model<f64> {
        let mut g = GraphBuilder::new();
        let x = g.input(&[1]);
        let y = g.add(
            LayerKind::Dense {
                in_dim: 1,
                out_dim: 1,
            },
            &[x],
        );
        Model::init(g.finish(&[y], 0).unwrap()).unwrap()
    }

    #[test]
    fn first_step_moves_by_almost_exactly_lr() {
        // With gradient g, the bias-corrected first step is
        // lr * g / (|g| + eps), i.e. lr / (1 + eps/|g|) in magnitude.
        let mut model = one_param_model();
        let w0 = model.nodes[0].params[0].1.data()[0];
        let mut state = AdamState::new(&model);
        let cfg = AdamConfig::default();
        let grads = Gradients {
            nodes: vec![vec![
                Tensor::from_vec(&[1, 1], vec![7.5]).unwrap(),
                Tensor::from_vec(&[1], vec![0.0]).unwrap(),
            ]],
            inputs: vec![],
        };
        state.step(&mut model, &grads, &cfg);
        let w1 = model.nodes[0].params[0].1.data()[0];
        let expected = cfg.lr * 7.5 / (7.5 + cfg.eps);
        assert_abs_diff_eq!(w0 - w1, expected, epsilon = 1e-15);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn constant_gradient_keeps_unit_scale_steps() {
        // For a constant gradient the bias-corrected update stays at
        // roughly lr regardless of the gradient magnitude.
        let mut model = one_param_model();
        let mut state = AdamState::new(&model);
        let cfg = AdamConfig::default();
        let grads = Gradients {
            nodes: vec![vec![
                Tensor::from_vec(&[1, 1], vec![1e-4]).unwrap(),
                Tensor::from_vec(&[1], vec![0.0]).unwrap(),
            ]],
            inputs: vec![],
        };
        let w0 = model.nodes[0].params[0].1.data()[0];
        for _ in 0..10 {
            state.step(&mut model, &grads, &cfg);
        }
        let w10 = model.nodes[0].params[0].1.data()[0];
        let moved = w0 - w10;
        assert!(moved > 9.0 * cfg.lr && moved < 10.5 * cfg.lr, "moved {moved}");
    }

    #[test]
    fn zero_gradient_leaves_parameters_alone() {
        let mut model = one_param_model();
        let snapshot = model.nodes[0].params[0].1.clone();
        let mut state = AdamState::new(&model);
        let grads = Gradients {
            nodes: vec![vec![Tensor::zeros(&[1, 1]), Tensor::zeros(&[1])]],
            inputs: vec![],
        };
        state.step(&mut model, &grads, &AdamConfig::default());
        // m = v = 0 keeps the update at exactly zero (0 / (0 + eps)).
        assert_eq!(model.nodes[0].params[0].1, snapshot);
    }
}

//! The runtime model: parameters bound to a spec, plus forward and
//! backward execution.
//!
//! Execution walks the node list in order (which is already topological)
//! and keeps every intermediate value; the backward pass walks it in
//! reverse, accumulating gradients across fan-out and routing parameter
//! gradients of tied nodes to their tie root.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{LayerKind, ModelSpec};
use crate::layers::{
    add_forward, affine_backward_data, affine_backward_params, affine_forward,
    batchnorm_backward, batchnorm_forward_eval, batchnorm_forward_train, concat_backward,
    concat_forward, conv2d_backward, conv2d_forward, gru_backward, gru_forward, leaky_relu_backward,
    leaky_relu_forward, sigmoid_backward, sigmoid_forward, tanh_backward, tanh_forward, BnCache,
    GruCache, GruParams, BN_MOMENTUM,
};
use crate::tensor::{Scalar, Tensor};

/// Parameters and buffers owned by one node. Tied nodes own neither; they
/// resolve everything through their tie root.
#[derive(Clone, Debug)]
pub struct NodeState<S> {
    /// Named trainable tensors, in `param_shapes` order.
    pub params: Vec<(String, Tensor<S>)>,
    /// Named non-trainable tensors (batch-norm running statistics).
    pub buffers: Vec<(String, Tensor<S>)>,
}

/// Per-node auxiliary values saved by the training-mode forward pass.
enum Aux<S> {
    None,
    Bn(BnCache<S>),
    Gru(GruCache<S>),
}

/// Batch statistics of one batch-norm application, pending application to
/// the running buffers of its tie root.
struct BnUpdate<S> {
    root: usize,
    mean: Vec<S>,
    var: Vec<S>,
}

/// Everything the backward pass needs: all values (inputs and node
/// outputs, batched) plus layer-specific auxiliaries.
pub struct Cache<S> {
    values: Vec<Tensor<S>>,
    aux: Vec<Aux<S>>,
}

impl<S: Scalar> Cache<S> {
    /// The batched tensor held by a value id.
    pub fn value(&self, vid: usize) -> &Tensor<S> {
        &self.values[vid]
    }
}

/// Gradients of one backward pass.
///
/// `nodes[k]` aligns position-wise with `Model::nodes[k].params`; entries
/// for tied nodes are empty because their gradients accumulate at the tie
/// root. `inputs` holds gradients with respect to the graph inputs.
pub struct Gradients<S> {
    pub nodes: Vec<Vec<Tensor<S>>>,
    pub inputs: Vec<Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    /// Global L2 norm over every parameter gradient, in `f64`.
    pub fn global_norm(&self) -> f64 {
        self.nodes
            .iter()
            .flatten()
            .map(|t| t.sq_norm())
            .sum::<f64>()
            .sqrt()
    }
}

/// A spec bound to concrete parameter values.
#[derive(Clone, Debug)]
pub struct Model<S> {
    spec: ModelSpec,
    /// One state per node, aligned with `spec.nodes`.
    pub nodes: Vec<NodeState<S>>,
    value_shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Model<S> {
    /// Validates the spec and initialises parameters deterministically
    /// from `spec.init_seed`.
    ///
    /// Weights draw from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; biases start
    /// at zero and batch-norm scales at one. All draws happen in `f64`, so
    /// `f32` and `f64` instantiations of the same spec start at the same
    /// point.
    pub fn init(spec: ModelSpec) -> Result<Self> {
        let value_shapes = spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let mut nodes = Vec::with_capacity(spec.nodes.len());
        for node in &spec.nodes {
            if node.tied_to.is_some() {
                nodes.push(NodeState {
                    params: Vec::new(),
                    buffers: Vec::new(),
                });
                continue;
            }
            let mut params = Vec::new();
            for (name, shape) in node.kind.param_shapes() {
                let tensor = match node.kind.fan_in(name) {
                    Some(fan) => {
                        let lim = 1.0 / (fan as f64).sqrt();
                        let data = (0..shape.iter().product::<usize>())
                            .map(|_| S::from_f64(rng.random_range(-lim..lim)))
                            .collect();
                        Tensor::from_vec(&shape, data)?
                    }
                    // Constant initialisation: batch-norm scale starts at
                    // one, every bias at zero.
                    None if name == "weight" => Tensor::full(&shape, S::one()),
                    None => Tensor::zeros(&shape),
                };
                params.push((name.to_string(), tensor));
            }
            let buffers = node
                .kind
                .buffer_shapes()
                .into_iter()
                .map(|(name, shape)| {
                    let tensor = if name == "running_var" {
                        Tensor::full(&shape, S::one())
                    } else {
                        Tensor::zeros(&shape)
                    };
                    (name.to_string(), tensor)
                })
                .collect();
            nodes.push(NodeState { params, buffers });
        }
        Ok(Model {
            spec,
            nodes,
            value_shapes,
        })
    }

    /// The bound spec.
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Per-sample shape of every value in the graph.
    pub fn value_shapes(&self) -> &[Vec<usize>] {
        &self.value_shapes
    }

    /// Number of trainable scalars (tied nodes counted once).
    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Index of the node whose parameters node `k` uses.
    pub fn tie_root(&self, k: usize) -> usize {
        self.spec.tie_root(k)
    }

    /// Parameters of node `k`, resolved through its tie chain.
    pub fn params_of(&self, k: usize) -> &[(String, Tensor<S>)] {
        &self.nodes[self.spec.tie_root(k)].params
    }

    fn buffers_of(&self, k: usize) -> &[(String, Tensor<S>)] {
        &self.nodes[self.spec.tie_root(k)].buffers
    }

    /// Converts every parameter and buffer through `f64` into another
    /// scalar type, keeping the spec identical.
    pub fn cast<T: Scalar>(&self) -> Model<T> {
        Model {
            spec: self.spec.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeState {
                    params: n
                        .params
                        .iter()
                        .map(|(name, t)| (name.clone(), t.cast()))
                        .collect(),
                    buffers: n
                        .buffers
                        .iter()
                        .map(|(name, t)| (name.clone(), t.cast()))
                        .collect(),
                })
                .collect(),
            value_shapes: self.value_shapes.clone(),
        }
    }

    fn check_inputs(&self, inputs: &[Tensor<S>]) -> Result<usize> {
        if inputs.len() != self.spec.n_inputs() {
            return Err(Error::Shape(format!(
                "model takes {} input(s), got {}",
                self.spec.n_inputs(),
                inputs.len()
            )));
        }
        let mut batch = 0usize;
        for (i, t) in inputs.iter().enumerate() {
            let shape = t.shape();
            if shape.len() != self.spec.input_shapes[i].len() + 1
                || shape[1..] != self.spec.input_shapes[i][..]
            {
                return Err(Error::Shape(format!(
                    "input {} must be [batch, {:?}], got {:?}",
                    i, self.spec.input_shapes[i], shape
                )));
            }
            if i == 0 {
                batch = shape[0];
            } else if shape[0] != batch {
                return Err(Error::Shape(format!(
                    "inconsistent batch sizes: input 0 has {}, input {} has {}",
                    batch, i, shape[0]
                )));
            }
        }
        if batch == 0 {
            return Err(Error::Shape("batch size must be at least 1".into()));
        }
        Ok(batch)
    }

    fn run(
        &self,
        inputs: &[Tensor<S>],
        train: bool,
    ) -> Result<(Cache<S>, Vec<BnUpdate<S>>)> {
        let batch = self.check_inputs(inputs)?;
        let n_inputs = self.spec.n_inputs();
        let mut values: Vec<Tensor<S>> = inputs.to_vec();
        let mut aux: Vec<Aux<S>> = Vec::with_capacity(self.spec.nodes.len());
        let mut bn_updates: Vec<BnUpdate<S>> = Vec::new();
        for (k, node) in self.spec.nodes.iter().enumerate() {
            let ins = &node.inputs;
            let x = |i: usize| &values[ins[i]];
            let (y, a) = match node.kind {
                LayerKind::Conv2d { .. } => {
                    let p = self.params_of(k);
                    (conv2d_forward(x(0), &p[0].1, &p[1].1), Aux::None)
                }
                LayerKind::Dense { .. } => {
                    let p = self.params_of(k);
                    (affine_forward(x(0), &p[0].1, Some(&p[1].1)), Aux::None)
                }
                LayerKind::BatchNorm { .. } => {
                    let p = self.params_of(k);
                    if train {
                        let (y, cache, mean, var) =
                            batchnorm_forward_train(x(0), &p[0].1, &p[1].1)?;
                        bn_updates.push(BnUpdate {
                            root: self.spec.tie_root(k),
                            mean,
                            var,
                        });
                        (y, Aux::Bn(cache))
                    } else {
                        let b = self.buffers_of(k);
                        (
                            batchnorm_forward_eval(x(0), &p[0].1, &p[1].1, &b[0].1, &b[1].1),
                            Aux::None,
                        )
                    }
                }
                LayerKind::LeakyRelu { slope } => (leaky_relu_forward(x(0), slope), Aux::None),
                LayerKind::Sigmoid => (sigmoid_forward(x(0)), Aux::None),
                LayerKind::Tanh => (tanh_forward(x(0)), Aux::None),
                LayerKind::Reshape { ref shape } => {
                    let mut batched = Vec::with_capacity(shape.len() + 1);
                    batched.push(batch);
                    batched.extend_from_slice(shape);
                    (x(0).reshaped(&batched)?, Aux::None)
                }
                LayerKind::Concat => {
                    let tensors: Vec<&Tensor<S>> = ins.iter().map(|&v| &values[v]).collect();
                    (concat_forward(&tensors), Aux::None)
                }
                LayerKind::ResidualAdd => (add_forward(x(0), x(1)), Aux::None),
                LayerKind::RecurrentCell { .. } => {
                    let p = GruParams::from_slice(self.params_of(k));
                    let (h_next, cache) = gru_forward(x(0), x(1), &p);
                    (h_next, Aux::Gru(cache))
                }
            };
            debug_assert_eq!(y.shape()[1..], self.value_shapes[n_inputs + k][..]);
            values.push(y);
            aux.push(a);
        }
        Ok((Cache { values, aux }, bn_updates))
    }

    /// Inference forward pass: batch norm uses running statistics, nothing
    /// is cached.
    pub fn forward_eval(&self, inputs: &[Tensor<S>]) -> Result<Vec<Tensor<S>>> {
        let (cache, _) = self.run(inputs, false)?;
        Ok(self
            .spec
            .outputs
            .iter()
            .map(|&vid| cache.values[vid].clone())
            .collect())
    }

    /// Training forward pass: batch norm normalises with batch statistics
    /// (updating the running buffers) and every value is cached for
    /// [`Model::backward`].
    pub fn forward_train(&mut self, inputs: &[Tensor<S>]) -> Result<(Vec<Tensor<S>>, Cache<S>)> {
        let (cache, bn_updates) = self.run(inputs, true)?;
        // Fold batch statistics into the running buffers of the tie roots.
        let m = S::from_f64(BN_MOMENTUM);
        let one_m = S::one() - m;
        for update in bn_updates {
            let bufs = &mut self.nodes[update.root].buffers;
            for (slot, stat) in bufs[0].1.data_mut().iter_mut().zip(&update.mean) {
                *slot = m * *slot + one_m * *stat;
            }
            for (slot, stat) in bufs[1].1.data_mut().iter_mut().zip(&update.var) {
                *slot = m * *slot + one_m * *stat;
            }
        }
        let outs = self
            .spec
            .outputs
            .iter()
            .map(|&vid| cache.values[vid].clone())
            .collect();
        Ok((outs, cache))
    }

    /// Reverse-mode differentiation through the cached forward pass.
    ///
    /// `output_grads` pairs with `spec.outputs`. Returns parameter
    /// gradients (tied nodes accumulated at their root) and input
    /// gradients.
    pub fn backward(&self, cache: &Cache<S>, output_grads: &[Tensor<S>]) -> Result<Gradients<S>> {
        if output_grads.len() != self.spec.outputs.len() {
            return Err(Error::Shape(format!(
                "model has {} output(s), got {} gradient(s)",
                self.spec.outputs.len(),
                output_grads.len()
            )));
        }
        let n_inputs = self.spec.n_inputs();
        let mut vgrads: Vec<Option<Tensor<S>>> = vec![None; cache.values.len()];
        for (&vid, g) in self.spec.outputs.iter().zip(output_grads) {
            if g.shape() != cache.values[vid].shape() {
                return Err(Error::Shape(format!(
                    "output gradient shape {:?} does not match value shape {:?}",
                    g.shape(),
                    cache.values[vid].shape()
                )));
            }
            accumulate(&mut vgrads[vid], g.clone());
        }

        let mut node_grads: Vec<Vec<Tensor<S>>> = self
            .nodes
            .iter()
            .map(|n| n.params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect())
            .collect();

        for k in (0..self.spec.nodes.len()).rev() {
            let out_vid = n_inputs + k;
            let Some(dy) = vgrads[out_vid].take() else {
                continue;
            };
            let node = &self.spec.nodes[k];
            let root = self.spec.tie_root(k);
            let ins = &node.inputs;
            match node.kind {
                LayerKind::Conv2d { .. } => {
                    let w = &self.params_of(k)[0].1;
                    let (dx, dw, db) = conv2d_backward(&cache.values[ins[0]], w, &dy);
                    accumulate(&mut vgrads[ins[0]], dx);
                    add_into(&mut node_grads[root][0], &dw);
                    add_into(&mut node_grads[root][1], &db);
                }
                LayerKind::Dense { .. } => {
                    let w = &self.params_of(k)[0].1;
                    let dx = affine_backward_data(&dy, w);
                    let (dw_slot, db_slot) = {
                        let (a, b) = node_grads[root].split_at_mut(1);
                        (&mut a[0], &mut b[0])
                    };
                    affine_backward_params(&dy, &cache.values[ins[0]], dw_slot, Some(db_slot));
                    accumulate(&mut vgrads[ins[0]], dx);
                }
                LayerKind::BatchNorm { .. } => {
                    let Aux::Bn(bn) = &cache.aux[k] else {
                        return Err(Error::Shape(
                            "backward needs a training-mode cache (batch norm aux missing)"
                                .into(),
                        ));
                    };
                    let gamma = &self.params_of(k)[0].1;
                    let (dx, dgamma, dbeta) = batchnorm_backward(&dy, bn, gamma);
                    accumulate(&mut vgrads[ins[0]], dx);
                    add_into(&mut node_grads[root][0], &dgamma);
                    add_into(&mut node_grads[root][1], &dbeta);
                }
                LayerKind::LeakyRelu { slope } => {
                    let dx = leaky_relu_backward(&cache.values[ins[0]], &dy, slope);
                    accumulate(&mut vgrads[ins[0]], dx);
                }
                LayerKind::Sigmoid => {
                    let dx = sigmoid_backward(&cache.values[out_vid], &dy);
                    accumulate(&mut vgrads[ins[0]], dx);
                }
                LayerKind::Tanh => {
                    let dx = tanh_backward(&cache.values[out_vid], &dy);
                    accumulate(&mut vgrads[ins[0]], dx);
                }
                LayerKind::Reshape { .. } => {
                    let dx = dy.reshaped(cache.values[ins[0]].shape())?;
                    accumulate(&mut vgrads[ins[0]], dx);
                }
                LayerKind::Concat => {
                    let shapes: Vec<&[usize]> =
                        ins.iter().map(|&v| cache.values[v].shape()).collect();
                    for (&vid, dx) in ins.iter().zip(concat_backward(&dy, &shapes)) {
                        accumulate(&mut vgrads[vid], dx);
                    }
                }
                LayerKind::ResidualAdd => {
                    accumulate(&mut vgrads[ins[0]], dy.clone());
                    accumulate(&mut vgrads[ins[1]], dy);
                }
                LayerKind::RecurrentCell { .. } => {
                    let Aux::Gru(gru) = &cache.aux[k] else {
                        return Err(Error::Shape(
                            "backward needs a training-mode cache (recurrent aux missing)"
                                .into(),
                        ));
                    };
                    let p = GruParams::from_slice(self.params_of(k));
                    let (dx, dh, pg) =
                        gru_backward(&cache.values[ins[0]], &cache.values[ins[1]], &p, gru, &dy);
                    accumulate(&mut vgrads[ins[0]], dx);
                    accumulate(&mut vgrads[ins[1]], dh);
                    for (slot, g) in node_grads[root].iter_mut().zip(&pg.tensors) {
                        add_into(slot, g);
                    }
                }
            }
        }

        let inputs = (0..n_inputs)
            .map(|vid| {
                vgrads[vid]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(cache.values[vid].shape()))
            })
            .collect();
        Ok(Gradients {
            nodes: node_grads,
            inputs,
        })
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<Tensor<S>>, g: Tensor<S>) {
    match slot {
        Some(existing) => add_into(existing, &g),
        None => *slot = Some(g),
    }
}

fn add_into<S: Scalar>(dst: &mut Tensor<S>, src: &Tensor<S>) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d = *d + s;
    }
}

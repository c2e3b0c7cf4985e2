//! Static computation graphs: layer vocabulary, specs, and the builder.
//!
//! A [`ModelSpec`] is a declarative DAG. Values are numbered: graph inputs
//! take ids `0..n_inputs`, and the output of node `k` takes id
//! `n_inputs + k`. Because a node may only consume ids smaller than its own
//! output id, the node list is always a valid topological order and cycles
//! cannot be expressed.
//!
//! Shapes in a spec are *per-sample*: the runtime prepends a batch axis to
//! every activation. Parameter sharing is expressed with `tied_to`, which
//! points a node at an earlier node of identical kind; tied nodes own no
//! parameters of their own, and gradients accumulate at the tie root. This
//! is how recurrent unrollings reuse one cell across time steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a value (graph input or node output) inside a spec.
pub type ValueId = usize;

/// The layer vocabulary.
///
/// Deliberately small: exactly what the CSI codec family needs. All convs
/// are 3x3 with unit-stride same padding, matching the refinement blocks
/// used throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerKind {
    /// 3x3 convolution, same padding, on `[c, h, w]` feature maps.
    Conv2d { in_channels: usize, out_channels: usize },
    /// Fully connected layer on flat `[n]` vectors.
    Dense { in_dim: usize, out_dim: usize },
    /// Batch normalisation over the leading (channel) axis.
    BatchNorm { channels: usize },
    /// `max(x, slope * x)` element-wise.
    LeakyRelu { slope: f64 },
    /// Logistic sigmoid element-wise.
    Sigmoid,
    /// Hyperbolic tangent element-wise.
    Tanh,
    /// Copy into a new per-sample shape with the same element count.
    Reshape { shape: Vec<usize> },
    /// Concatenation of two or more inputs along the channel axis.
    Concat,
    /// Element-wise sum of exactly two equal-shaped inputs.
    ResidualAdd,
    /// Gated recurrent cell mapping `(x[in_dim], h[state_dim])` to the next
    /// `h[state_dim]`.
    RecurrentCell { in_dim: usize, state_dim: usize },
}

impl LayerKind {
    /// Named parameter shapes this layer owns, in initialisation order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
            } => vec![
                ("weight", vec![out_channels, in_channels, 3, 3]),
                ("bias", vec![out_channels]),
            ],
            LayerKind::Dense { in_dim, out_dim } => vec![
                ("weight", vec![out_dim, in_dim]),
                ("bias", vec![out_dim]),
            ],
            LayerKind::BatchNorm { channels } => vec![
                ("weight", vec![channels]),
                ("bias", vec![channels]),
            ],
            LayerKind::RecurrentCell { in_dim, state_dim } => vec![
                ("w_update", vec![state_dim, in_dim]),
                ("u_update", vec![state_dim, state_dim]),
                ("b_update", vec![state_dim]),
                ("w_reset", vec![state_dim, in_dim]),
                ("u_reset", vec![state_dim, state_dim]),
                ("b_reset", vec![state_dim]),
                ("w_cand", vec![state_dim, in_dim]),
                ("u_cand", vec![state_dim, state_dim]),
                ("b_cand", vec![state_dim]),
            ],
            _ => Vec::new(),
        }
    }

    /// Named non-trainable buffer shapes (batch-norm running statistics).
    pub fn buffer_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerKind::BatchNorm { channels } => vec![
                ("running_mean", vec![channels]),
                ("running_var", vec![channels]),
            ],
            _ => Vec::new(),
        }
    }

    /// Fan-in used for the uniform initialisation of a named parameter,
    /// or `None` for parameters initialised to a constant.
    pub fn fan_in(&self, param: &str) -> Option<usize> {
        match *self {
            LayerKind::Conv2d { in_channels, .. } if param == "weight" => Some(in_channels * 9),
            LayerKind::Dense { in_dim, .. } if param == "weight" => Some(in_dim),
            LayerKind::RecurrentCell { in_dim, .. } if param.starts_with("w_") => Some(in_dim),
            LayerKind::RecurrentCell { state_dim, .. } if param.starts_with("u_") => {
                Some(state_dim)
            }
            _ => None,
        }
    }

    /// How many inputs the layer consumes, if fixed (`None` for [`Concat`],
    /// which accepts two or more).
    ///
    /// [`Concat`]: LayerKind::Concat
    pub fn arity(&self) -> Option<usize> {
        match *self {
            LayerKind::Concat => None,
            LayerKind::ResidualAdd | LayerKind::RecurrentCell { .. } => Some(2),
            _ => Some(1),
        }
    }

    /// Per-sample output shape given per-sample input shapes.
    pub fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if let Some(arity) = self.arity() {
            if inputs.len() != arity {
                return bad(format!(
                    "{:?} takes {} input(s), got {}",
                    self,
                    arity,
                    inputs.len()
                ));
            }
        } else if inputs.len() < 2 {
            return bad(format!("Concat needs at least 2 inputs, got {}", inputs.len()));
        }
        match *self {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
            } => {
                let s = inputs[0];
                if s.len() != 3 || s[0] != in_channels || s[1] == 0 || s[2] == 0 {
                    return bad(format!(
                        "Conv2d expects [{in_channels}, h, w] input, got {s:?}"
                    ));
                }
                Ok(vec![out_channels, s[1], s[2]])
            }
            LayerKind::Dense { in_dim, out_dim } => {
                let s = inputs[0];
                if s.len() != 1 || s[0] != in_dim {
                    return bad(format!("Dense expects [{in_dim}] input, got {s:?}"));
                }
                Ok(vec![out_dim])
            }
            LayerKind::BatchNorm { channels } => {
                let s = inputs[0];
                if s.is_empty() || s[0] != channels {
                    return bad(format!(
                        "BatchNorm over {channels} channels cannot take input {s:?}"
                    ));
                }
                Ok(s.to_vec())
            }
            LayerKind::LeakyRelu { .. } | LayerKind::Sigmoid | LayerKind::Tanh => {
                Ok(inputs[0].to_vec())
            }
            LayerKind::Reshape { ref shape } => {
                let have: usize = inputs[0].iter().product();
                let want: usize = shape.iter().product();
                if have != want || shape.is_empty() {
                    return bad(format!(
                        "Reshape {:?} -> {:?} changes the element count",
                        inputs[0], shape
                    ));
                }
                Ok(shape.clone())
            }
            LayerKind::Concat => {
                let first = inputs[0];
                if first.is_empty() {
                    return bad("Concat inputs must have rank >= 1".into());
                }
                let mut channels = 0;
                for s in inputs {
                    if s.len() != first.len() || s[1..] != first[1..] {
                        return bad(format!(
                            "Concat inputs must agree beyond the channel axis: {s:?} vs {first:?}"
                        ));
                    }
                    channels += s[0];
                }
                let mut out = first.to_vec();
                out[0] = channels;
                Ok(out)
            }
            LayerKind::ResidualAdd => {
                if inputs[0] != inputs[1] {
                    return bad(format!(
                        "ResidualAdd needs equal shapes, got {:?} and {:?}",
                        inputs[0], inputs[1]
                    ));
                }
                Ok(inputs[0].to_vec())
            }
            LayerKind::RecurrentCell { in_dim, state_dim } => {
                if inputs[0] != [in_dim] || inputs[1] != [state_dim] {
                    return bad(format!(
                        "RecurrentCell expects [{in_dim}] and [{state_dim}], got {:?} and {:?}",
                        inputs[0], inputs[1]
                    ));
                }
                Ok(vec![state_dim])
            }
        }
    }
}

/// One node of the DAG: a layer applied to earlier values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNode {
    pub kind: LayerKind,
    /// Value ids consumed, each `< n_inputs + node_index`.
    pub inputs: Vec<ValueId>,
    /// Index of an earlier node whose parameters this node reuses.
    pub tied_to: Option<usize>,
}

/// A complete, immutable graph description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Per-sample shapes of the graph inputs.
    pub input_shapes: Vec<Vec<usize>>,
    /// Topologically ordered layer nodes.
    pub nodes: Vec<LayerNode>,
    /// Value ids exposed as graph outputs.
    pub outputs: Vec<ValueId>,
    /// Seed for deterministic parameter initialisation.
    pub init_seed: u64,
}

impl ModelSpec {
    /// Number of graph inputs.
    pub fn n_inputs(&self) -> usize {
        self.input_shapes.len()
    }

    /// Total number of values (inputs plus node outputs).
    pub fn n_values(&self) -> usize {
        self.input_shapes.len() + self.nodes.len()
    }

    /// Resolves a node index to the root of its tie chain.
    pub fn tie_root(&self, mut node: usize) -> usize {
        while let Some(target) = self.nodes[node].tied_to {
            node = target;
        }
        node
    }

    /// Validates the wiring and returns the per-value inferred shapes.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        for (i, shape) in self.input_shapes.iter().enumerate() {
            if shape.is_empty() || shape.iter().any(|&d| d == 0) {
                return Err(Error::InvalidSpec(format!(
                    "input {i} has degenerate shape {shape:?}"
                )));
            }
        }
        let n_inputs = self.n_inputs();
        let mut shapes: Vec<Vec<usize>> = self.input_shapes.clone();
        for (k, node) in self.nodes.iter().enumerate() {
            let limit = n_inputs + k;
            for &vid in &node.inputs {
                if vid >= limit {
                    return Err(Error::InvalidSpec(format!(
                        "node {k} consumes value {vid}, but only {limit} values precede it"
                    )));
                }
            }
            if let Some(target) = node.tied_to {
                if target >= k {
                    return Err(Error::InvalidSpec(format!(
                        "node {k} is tied to node {target}, which does not precede it"
                    )));
                }
                if self.nodes[target].kind != node.kind {
                    return Err(Error::InvalidSpec(format!(
                        "node {k} ({:?}) cannot share parameters with node {target} ({:?})",
                        node.kind, self.nodes[target].kind
                    )));
                }
            }
            let input_shapes: Vec<&[usize]> =
                node.inputs.iter().map(|&vid| shapes[vid].as_slice()).collect();
            let out = node
                .kind
                .infer_shape(&input_shapes)
                .map_err(|e| Error::InvalidSpec(format!("node {k}: {e}")))?;
            shapes.push(out);
        }
        if self.outputs.is_empty() {
            return Err(Error::InvalidSpec("spec declares no outputs".into()));
        }
        for &vid in &self.outputs {
            if vid >= self.n_values() {
                return Err(Error::InvalidSpec(format!(
                    "output value {vid} does not exist"
                )));
            }
        }
        Ok(shapes)
    }

    /// Number of trainable scalars, counting tied nodes once.
    pub fn param_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.tied_to.is_none())
            .map(|n| {
                n.kind
                    .param_shapes()
                    .iter()
                    .map(|(_, s)| s.iter().product::<usize>())
                    .sum::<usize>()
            })
            .sum()
    }
}

/// Maps node indices of a spliced sub-spec to node indices in the host
/// graph. Produced by [`GraphBuilder::splice`] and consumed both for
/// parameter tying across unrolled copies and for extracting a trained
/// sub-model out of a composite training graph.
#[derive(Clone, Debug, PartialEq)]
pub struct SpliceMap {
    /// `nodes[k]` is the host node index of sub-spec node `k`.
    pub nodes: Vec<usize>,
}

/// Incremental constructor for [`ModelSpec`]s.
///
/// Inputs must all be declared before the first node so value ids are
/// stable. `finish` runs full validation.
#[derive(Default)]
pub struct GraphBuilder {
    input_shapes: Vec<Vec<usize>>,
    nodes: Vec<LayerNode>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a graph input and returns its value id.
    ///
    /// # Panics
    /// If any node has already been added (ids would shift otherwise).
    pub fn input(&mut self, shape: &[usize]) -> ValueId {
        assert!(
            self.nodes.is_empty(),
            "declare all graph inputs before adding nodes"
        );
        self.input_shapes.push(shape.to_vec());
        self.input_shapes.len() - 1
    }

    /// Appends a node and returns the id of its output value.
    pub fn add(&mut self, kind: LayerKind, inputs: &[ValueId]) -> ValueId {
        self.nodes.push(LayerNode {
            kind,
            inputs: inputs.to_vec(),
            tied_to: None,
        });
        self.input_shapes.len() + self.nodes.len() - 1
    }

    /// Appends a node sharing the parameters of an earlier node.
    pub fn add_tied(&mut self, kind: LayerKind, inputs: &[ValueId], tie_node: usize) -> ValueId {
        self.nodes.push(LayerNode {
            kind,
            inputs: inputs.to_vec(),
            tied_to: Some(tie_node),
        });
        self.input_shapes.len() + self.nodes.len() - 1
    }

    /// Copies an entire sub-spec into this graph, rewiring its inputs to
    /// the given host values.
    ///
    /// Returns the host value ids of the sub-spec's outputs plus a
    /// [`SpliceMap`] recording where each sub-node landed. When `tie` is a
    /// map from a previous splice of the *same* sub-spec, every copied node
    /// is parameter-tied to its counterpart there — this is how a decoder
    /// cell is unrolled over a frame sequence without duplicating weights.
    pub fn splice(
        &mut self,
        sub: &ModelSpec,
        inputs: &[ValueId],
        tie: Option<&SpliceMap>,
    ) -> Result<(Vec<ValueId>, SpliceMap)> {
        if inputs.len() != sub.n_inputs() {
            return Err(Error::InvalidSpec(format!(
                "splice got {} inputs for a sub-graph with {}",
                inputs.len(),
                sub.n_inputs()
            )));
        }
        if let Some(map) = tie {
            if map.nodes.len() != sub.nodes.len() {
                return Err(Error::InvalidSpec(
                    "tie map does not match the sub-graph being spliced".into(),
                ));
            }
        }
        let mut node_map = Vec::with_capacity(sub.nodes.len());
        for (k, node) in sub.nodes.iter().enumerate() {
            let mapped_inputs: Vec<ValueId> = node
                .inputs
                .iter()
                .map(|&vid| {
                    if vid < sub.n_inputs() {
                        inputs[vid]
                    } else {
                        let sub_node = vid - sub.n_inputs();
                        self.input_shapes.len() + node_map[sub_node]
                    }
                })
                .collect();
            let tied_to = match tie {
                // Tie every copy to the counterpart of its tie root in the
                // earlier splice, collapsing chains as we go.
                Some(map) => Some(map.nodes[sub.tie_root(k)]),
                None => node.tied_to.map(|t| node_map[t]),
            };
            self.nodes.push(LayerNode {
                kind: node.kind.clone(),
                inputs: mapped_inputs,
                tied_to,
            });
            node_map.push(self.nodes.len() - 1);
        }
        let outputs = sub
            .outputs
            .iter()
            .map(|&vid| {
                if vid < sub.n_inputs() {
                    inputs[vid]
                } else {
                    self.input_shapes.len() + node_map[vid - sub.n_inputs()]
                }
            })
            .collect();
        Ok((outputs, SpliceMap { nodes: node_map }))
    }

    /// Seals the graph, validating it as a [`ModelSpec`].
    pub fn finish(self, outputs: &[ValueId], init_seed: u64) -> Result<ModelSpec> {
        let spec = ModelSpec {
            input_shapes: self.input_shapes,
            nodes: self.nodes,
            outputs: outputs.to_vec(),
            init_seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_mlp() -> ModelSpec {
        let mut g = GraphBuilder::new();
        let x = g.input(&[4]);
        let h = g.add(
            LayerKind::Dense {
                in_dim: 4,
                out_dim: 3,
            },
            &[x],
        );
        let a = g.add(LayerKind::Tanh, &[h]);
        let y = g.add(
            LayerKind::Dense {
                in_dim: 3,
                out_dim: 2,
            },
            &[a],
        );
        g.finish(&[y], 7).unwrap()
    }

    #[test]
    fn shapes_and_param_counts_are_inferred() {
        let spec = tiny_mlp();
        let shapes = spec.validate().unwrap();
        assert_eq!(shapes, vec![vec![4], vec![3], vec![3], vec![2]]);
        // 4*3 + 3 weights/biases, then 3*2 + 2.
        assert_eq!(spec.param_count(), 15 + 8);
    }

    #[test]
    fn conv_bn_concat_shapes_work() {
        let mut g = GraphBuilder::new();
        let x = g.input(&[2, 4, 5]);
        let c = g.add(
            LayerKind::Conv2d {
                in_channels: 2,
                out_channels: 6,
            },
            &[x],
        );
        let b = g.add(LayerKind::BatchNorm { channels: 6 }, &[c]);
        let j = g.add(LayerKind::Concat, &[b, x]);
        let spec = g.finish(&[j], 0).unwrap();
        let shapes = spec.validate().unwrap();
        assert_eq!(shapes[3], vec![8, 4, 5]);
    }

    #[test]
    fn forward_references_and_bad_ties_are_rejected() {
        let spec = ModelSpec {
            input_shapes: vec![vec![4]],
            nodes: vec![LayerNode {
                kind: LayerKind::Tanh,
                inputs: vec![1], // its own output
                tied_to: None,
            }],
            outputs: vec![1],
            init_seed: 0,
        };
        assert!(spec.validate().is_err());

        let mut g = GraphBuilder::new();
        let x = g.input(&[4]);
        let d1 = g.add(
            LayerKind::Dense {
                in_dim: 4,
                out_dim: 4,
            },
            &[x],
        );
        // Tie to a node of a different kind.
        g.add_tied(LayerKind::Tanh, &[d1], 0);
        assert!(g.finish(&[d1], 0).is_err());
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let mut g = GraphBuilder::new();
        let x = g.input(&[5]);
        let y = g.add(
            LayerKind::Dense {
                in_dim: 4,
                out_dim: 3,
            },
            &[x],
        );
        assert!(g.finish(&[y], 0).is_err());

        let mut g = GraphBuilder::new();
        let a = g.input(&[2, 3]);
        let b = g.input(&[2, 4]);
        let y = g.add(LayerKind::ResidualAdd, &[a, b]);
        assert!(g.finish(&[y], 0).is_err());
    }

    #[test]
    fn splice_rewires_and_ties() {
        let sub = tiny_mlp();
        let mut g = GraphBuilder::new();
        let x1 = g.input(&[4]);
        let x2 = g.input(&[4]);
        let (out1, map1) = g.splice(&sub, &[x1], None).unwrap();
        let (out2, map2) = g.splice(&sub, &[x2], Some(&map1)).unwrap();
        let spec = g.finish(&[out1[0], out2[0]], 1).unwrap();

        assert_eq!(spec.nodes.len(), 6);
        assert_eq!(map1.nodes, vec![0, 1, 2]);
        assert_eq!(map2.nodes, vec![3, 4, 5]);
        // Second copy owns nothing: every node is tied back to the first.
        assert_eq!(spec.nodes[3].tied_to, Some(0));
        assert_eq!(spec.nodes[5].tied_to, Some(2));
        assert_eq!(spec.param_count(), tiny_mlp().param_count());

        // Tie map for a different-sized sub-graph is rejected.
        let mut g = GraphBuilder::new();
        let x = g.input(&[4]);
        let bad = SpliceMap { nodes: vec![0] };
        assert!(g.splice(&sub, &[x], Some(&bad)).is_err());
    }

    #[test]
    fn tie_roots_collapse_chains() {
        let mut g = GraphBuilder::new();
        let x = g.input(&[3]);
        let d = LayerKind::Dense {
            in_dim: 3,
            out_dim: 3,
        };
        let a = g.add(d.clone(), &[x]);
        let b = g.add_tied(d.clone(), &[a], 0);
        let _c = g.add_tied(d.clone(), &[b], 1);
        let spec = g.finish(&[b], 9).unwrap();
        assert_eq!(spec.tie_root(2), 0);
        assert_eq!(spec.param_count(), 12);
    }

    #[test]
    fn spec_serialises_round_trip() {
        let spec = tiny_mlp();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}

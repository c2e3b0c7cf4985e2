//! CSI feedback codec architectures assembled from the layer vocabulary.
//!
//! Seven codecs share a small set of building blocks:
//!
//! * `csinet` — encoder/decoder autoencoder on the (Re, Im) planes.
//! * `dualnet-mag` / `dualnet-abs` — encoder/decoder pairs whose decoder
//!   additionally sees the co-located uplink planes (magnitude, or
//!   absolute-value planes) as side information.
//! * `u2d-mag` / `u2d-abs` / `u2d-org` — decoder-only translators that
//!   predict the downlink planes from the uplink planes with no feedback
//!   at all.
//! * `csinet-lstm` — a first frame compressed like `csinet` plus a
//!   recurrent decoder that reconstructs the remaining frames of a time
//!   sequence from much shorter codewords.
//!
//! Builders return plain [`ModelSpec`]s; composite *training* graphs are
//! assembled by splicing the encoder and decoder into one spec so the
//! pair trains end-to-end, and the trained halves are pulled back out via
//! the recorded [`SpliceMap`]s.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use csilab_core::represent::{Planes, ReprMode};

use crate::checkpoint::{load_model, save_model};
use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, LayerKind, ModelSpec, SpliceMap, ValueId};
use crate::model::Model;
use crate::tensor::{stack_samples, Scalar, Tensor};

/// Negative-side slope used by every LeakyReLU in the family.
pub const LEAKY_SLOPE: f64 = 0.3;

/// Hidden-state width of the recurrent decoder.
pub const LSTM_STATE_DIM: usize = 128;

/// Codeword length for a compression ratio over `[2, nt, ld]` CSI images:
/// `round(cr * 2 * nt * ld)`, at least 1.
///
/// The reference count is always the two-plane complex image, also for
/// magnitude-only codecs, so equal `cr` means equal feedback budget
/// across codecs.
pub fn codeword_len(cr: f64, nt: usize, ld: usize) -> usize {
    ((cr * (2 * nt * ld) as f64).round() as usize).max(1)
}

/// The codec family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodecKind {
    #[serde(rename = "csinet")]
    CsiNet,
    #[serde(rename = "dualnet-mag")]
    DualNetMag,
    #[serde(rename = "dualnet-abs")]
    DualNetAbs,
    #[serde(rename = "u2d-mag")]
    U2dMag,
    #[serde(rename = "u2d-abs")]
    U2dAbs,
    #[serde(rename = "u2d-org")]
    U2dOrg,
    #[serde(rename = "csinet-lstm")]
    CsiNetLstm,
}

impl CodecKind {
    pub const ALL: [CodecKind; 7] = [
        CodecKind::CsiNet,
        CodecKind::DualNetMag,
        CodecKind::DualNetAbs,
        CodecKind::U2dMag,
        CodecKind::U2dAbs,
        CodecKind::U2dOrg,
        CodecKind::CsiNetLstm,
    ];

    /// Stable identifier used on the CLI and in file names.
    pub fn name(&self) -> &'static str {
        match self {
            CodecKind::CsiNet => "csinet",
            CodecKind::DualNetMag => "dualnet-mag",
            CodecKind::DualNetAbs => "dualnet-abs",
            CodecKind::U2dMag => "u2d-mag",
            CodecKind::U2dAbs => "u2d-abs",
            CodecKind::U2dOrg => "u2d-org",
            CodecKind::CsiNetLstm => "csinet-lstm",
        }
    }

    /// Parses the identifier produced by [`CodecKind::name`].
    pub fn parse(name: &str) -> Option<CodecKind> {
        CodecKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// The plane representation this codec consumes and produces.
    pub fn repr_mode(&self) -> ReprMode {
        match self {
            CodecKind::CsiNet | CodecKind::CsiNetLstm | CodecKind::U2dOrg => ReprMode::Org,
            CodecKind::DualNetMag | CodecKind::U2dMag => ReprMode::Polar,
            CodecKind::DualNetAbs | CodecKind::U2dAbs => ReprMode::Abs,
        }
    }

    /// Indices of the planes (within the representation) the codec
    /// actually models. Magnitude codecs ignore the phase plane.
    pub fn plane_indices(&self) -> &'static [usize] {
        match self {
            CodecKind::DualNetMag | CodecKind::U2dMag => &[0],
            _ => &[0, 1],
        }
    }

    /// Image channels seen by the network.
    pub fn channels(&self) -> usize {
        self.plane_indices().len()
    }

    /// Whether the decoder consumes co-located uplink planes.
    pub fn uses_uplink_side(&self) -> bool {
        !matches!(self, CodecKind::CsiNet | CodecKind::CsiNetLstm)
    }

    /// Whether any feedback codeword exists (false for the translators).
    pub fn has_encoder(&self) -> bool {
        !matches!(self, CodecKind::U2dMag | CodecKind::U2dAbs | CodecKind::U2dOrg)
    }
}

// ---------------------------------------------------------------------------
// Building blocks.
// ---------------------------------------------------------------------------

fn conv_bn_lrelu(
    g: &mut GraphBuilder,
    x: ValueId,
    in_channels: usize,
    out_channels: usize,
) -> ValueId {
    let c = g.add(
        LayerKind::Conv2d {
            in_channels,
            out_channels,
        },
        &[x],
    );
    let b = g.add(
        LayerKind::BatchNorm {
            channels: out_channels,
        },
        &[c],
    );
    g.add(LayerKind::LeakyRelu { slope: LEAKY_SLOPE }, &[b])
}

/// Residual refinement block: 3x3 convs widening `c -> 8 -> 16 -> c` with
/// batch norm throughout, added back onto the input, then activated.
fn refine_block(g: &mut GraphBuilder, x: ValueId, channels: usize) -> ValueId {
    let a1 = conv_bn_lrelu(g, x, channels, 8);
    let a2 = conv_bn_lrelu(g, a1, 8, 16);
    let c3 = g.add(
        LayerKind::Conv2d {
            in_channels: 16,
            out_channels: channels,
        },
        &[a2],
    );
    let b3 = g.add(LayerKind::BatchNorm { channels }, &[c3]);
    let sum = g.add(LayerKind::ResidualAdd, &[b3, x]);
    g.add(LayerKind::LeakyRelu { slope: LEAKY_SLOPE }, &[sum])
}

/// Encoder: one conv stage, flatten, and a dense projection to `m`.
pub fn build_encoder(channels: usize, nt: usize, ld: usize, m: usize, seed: u64) -> Result<ModelSpec> {
    let flat = channels * nt * ld;
    let mut g = GraphBuilder::new();
    let x = g.input(&[channels, nt, ld]);
    let a = conv_bn_lrelu(&mut g, x, channels, channels);
    let f = g.add(LayerKind::Reshape { shape: vec![flat] }, &[a]);
    let cw = g.add(
        LayerKind::Dense {
            in_dim: flat,
            out_dim: m,
        },
        &[f],
    );
    g.finish(&[cw], seed)
}

/// Decoder without side information: dense expansion, two refinement
/// blocks, and a sigmoid output head.
pub fn build_decoder(channels: usize, nt: usize, ld: usize, m: usize, seed: u64) -> Result<ModelSpec> {
    let flat = channels * nt * ld;
    let mut g = GraphBuilder::new();
    let cw = g.input(&[m]);
    let d = g.add(
        LayerKind::Dense {
            in_dim: m,
            out_dim: flat,
        },
        &[cw],
    );
    let img = g.add(
        LayerKind::Reshape {
            shape: vec![channels, nt, ld],
        },
        &[d],
    );
    let r1 = refine_block(&mut g, img, channels);
    let r2 = refine_block(&mut g, r1, channels);
    let head = g.add(
        LayerKind::Conv2d {
            in_channels: channels,
            out_channels: channels,
        },
        &[r2],
    );
    let y = g.add(LayerKind::Sigmoid, &[head]);
    g.finish(&[y], seed)
}

/// Decoder with uplink side information: the expanded codeword is fused
/// with the uplink planes by a 1-stage conv before refinement.
pub fn build_side_decoder(
    channels: usize,
    nt: usize,
    ld: usize,
    m: usize,
    seed: u64,
) -> Result<ModelSpec> {
    let flat = channels * nt * ld;
    let mut g = GraphBuilder::new();
    let cw = g.input(&[m]);
    let side = g.input(&[channels, nt, ld]);
    let d = g.add(
        LayerKind::Dense {
            in_dim: m,
            out_dim: flat,
        },
        &[cw],
    );
    let img = g.add(
        LayerKind::Reshape {
            shape: vec![channels, nt, ld],
        },
        &[d],
    );
    let cat = g.add(LayerKind::Concat, &[img, side]);
    let fused = conv_bn_lrelu(&mut g, cat, 2 * channels, channels);
    let r1 = refine_block(&mut g, fused, channels);
    let r2 = refine_block(&mut g, r1, channels);
    let head = g.add(
        LayerKind::Conv2d {
            in_channels: channels,
            out_channels: channels,
        },
        &[r2],
    );
    let y = g.add(LayerKind::Sigmoid, &[head]);
    g.finish(&[y], seed)
}

/// Feedback-free translator: maps the uplink planes straight to a
/// downlink estimate through two refinement blocks.
pub fn build_translator(channels: usize, nt: usize, ld: usize, seed: u64) -> Result<ModelSpec> {
    let mut g = GraphBuilder::new();
    let side = g.input(&[channels, nt, ld]);
    let r1 = refine_block(&mut g, side, channels);
    let r2 = refine_block(&mut g, r1, channels);
    let head = g.add(
        LayerKind::Conv2d {
            in_channels: channels,
            out_channels: channels,
        },
        &[r2],
    );
    let y = g.add(LayerKind::Sigmoid, &[head]);
    g.finish(&[y], seed)
}

/// Recurrent per-frame decoder for the sequence codec.
///
/// Consumes the short codeword of frame `t`, the reconstruction of frame
/// `t - 1`, and the hidden state; emits the frame-`t` reconstruction and
/// the next hidden state.
pub fn build_seq_decoder(nt: usize, ld: usize, m: usize, seed: u64) -> Result<ModelSpec> {
    let flat = 2 * nt * ld;
    let mut g = GraphBuilder::new();
    let cw = g.input(&[m]);
    let prev = g.input(&[2, nt, ld]);
    let h = g.input(&[LSTM_STATE_DIM]);

    let d = g.add(
        LayerKind::Dense {
            in_dim: m,
            out_dim: flat,
        },
        &[cw],
    );
    let feat = g.add(
        LayerKind::Reshape {
            shape: vec![2, nt, ld],
        },
        &[d],
    );
    let cat = g.add(LayerKind::Concat, &[feat, prev]);
    let fused = conv_bn_lrelu(&mut g, cat, 4, 2);

    // Recurrent path: compress the fused image, advance the hidden state,
    // and expand back to image space.
    let flat_fused = g.add(LayerKind::Reshape { shape: vec![flat] }, &[fused]);
    let enc = g.add(
        LayerKind::Dense {
            in_dim: flat,
            out_dim: LSTM_STATE_DIM,
        },
        &[flat_fused],
    );
    let enc_act = g.add(LayerKind::LeakyRelu { slope: LEAKY_SLOPE }, &[enc]);
    let h_next = g.add(
        LayerKind::RecurrentCell {
            in_dim: LSTM_STATE_DIM,
            state_dim: LSTM_STATE_DIM,
        },
        &[enc_act, h],
    );
    let expand = g.add(
        LayerKind::Dense {
            in_dim: LSTM_STATE_DIM,
            out_dim: flat,
        },
        &[h_next],
    );
    let expand_img = g.add(
        LayerKind::Reshape {
            shape: vec![2, nt, ld],
        },
        &[expand],
    );
    let sum = g.add(LayerKind::ResidualAdd, &[expand_img, fused]);
    let refined = refine_block(&mut g, sum, 2);
    let head = g.add(
        LayerKind::Conv2d {
            in_channels: 2,
            out_channels: 2,
        },
        &[refined],
    );
    let y = g.add(LayerKind::Sigmoid, &[head]);
    g.finish(&[y, h_next], seed)
}

// ---------------------------------------------------------------------------
// Composite training graphs and sub-model extraction.
// ---------------------------------------------------------------------------

/// Pulls a trained sub-model out of a composite graph.
///
/// `map` records where each node of `sub` landed when it was spliced into
/// the trained graph; parameters and buffers are copied from the
/// corresponding (tie-resolved) host nodes.
pub fn extract_model<S: Scalar>(
    trained: &Model<S>,
    sub: &ModelSpec,
    map: &SpliceMap,
) -> Result<Model<S>> {
    if map.nodes.len() != sub.nodes.len() {
        return Err(Error::InvalidSpec(
            "splice map does not match the sub-graph being extracted".into(),
        ));
    }
    let mut out = Model::<S>::init(sub.clone())?;
    for (k, node) in sub.nodes.iter().enumerate() {
        let host = *map
            .nodes
            .get(k)
            .filter(|&&h| h < trained.spec().nodes.len())
            .ok_or_else(|| Error::InvalidSpec(format!("splice map points past node {k}")))?;
        if trained.spec().nodes[host].kind != node.kind {
            return Err(Error::InvalidSpec(format!(
                "sub-graph node {k} ({:?}) does not match host node {host} ({:?})",
                node.kind, trained.spec().nodes[host].kind
            )));
        }
        if node.tied_to.is_some() {
            continue; // resolves through its root inside the sub-graph
        }
        out.nodes[k].params = trained.params_of(host).to_vec();
        let root = trained.tie_root(host);
        out.nodes[k].buffers = trained.nodes[root].buffers.clone();
    }
    Ok(out)
}

/// A composite training graph plus the bookkeeping needed to extract the
/// deployable encoder/decoder afterwards.
pub struct CodecTrainer {
    pub kind: CodecKind,
    pub nt: usize,
    pub ld: usize,
    pub cr: Option<f64>,
    pub m: Option<usize>,
    /// End-to-end spec: inputs are the downlink planes (and uplink planes
    /// for side-aided codecs); output is the reconstruction.
    pub spec: ModelSpec,
    encoder_spec: Option<ModelSpec>,
    decoder_spec: ModelSpec,
    encoder_map: Option<SpliceMap>,
    decoder_map: SpliceMap,
}

/// Training graph for `csinet`, `dualnet-mag`, or `dualnet-abs` (pass a
/// `u2d-*` kind for the translator family).
///
/// Inputs of the composed spec, in order: the downlink planes, then (side
/// codecs only) the uplink planes. `cr` is ignored by translators.
pub fn codec_trainer(
    kind: CodecKind,
    nt: usize,
    ld: usize,
    cr: f64,
    seed: u64,
) -> Result<CodecTrainer> {
    if kind == CodecKind::CsiNetLstm {
        return Err(Error::InvalidSpec(
            "the sequence codec is built with lstm_trainer".into(),
        ));
    }
    let c = kind.channels();
    if !kind.has_encoder() {
        let spec = build_translator(c, nt, ld, seed)?;
        let identity = SpliceMap {
            nodes: (0..spec.nodes.len()).collect(),
        };
        return Ok(CodecTrainer {
            kind,
            nt,
            ld,
            cr: None,
            m: None,
            decoder_spec: spec.clone(),
            spec,
            encoder_spec: None,
            encoder_map: None,
            decoder_map: identity,
        });
    }

    let m = codeword_len(cr, nt, ld);
    let encoder = build_encoder(c, nt, ld, m, seed)?;
    let decoder = if kind.uses_uplink_side() {
        build_side_decoder(c, nt, ld, m, seed.wrapping_add(1))?
    } else {
        build_decoder(c, nt, ld, m, seed.wrapping_add(1))?
    };

    let mut g = GraphBuilder::new();
    let dl = g.input(&[c, nt, ld]);
    let side = kind.uses_uplink_side().then(|| g.input(&[c, nt, ld]));
    let (enc_out, enc_map) = g.splice(&encoder, &[dl], None)?;
    let dec_inputs: Vec<ValueId> = match side {
        Some(s) => vec![enc_out[0], s],
        None => vec![enc_out[0]],
    };
    let (dec_out, dec_map) = g.splice(&decoder, &dec_inputs, None)?;
    let spec = g.finish(&[dec_out[0]], seed)?;

    Ok(CodecTrainer {
        kind,
        nt,
        ld,
        cr: Some(cr),
        m: Some(m),
        spec,
        encoder_spec: Some(encoder),
        decoder_spec: decoder,
        encoder_map: Some(enc_map),
        decoder_map: dec_map,
    })
}

impl CodecTrainer {
    /// Extracts the deployable bundle from the trained composite model.
    pub fn bundle(&self, trained: &Model<f32>) -> Result<CodecBundle> {
        let encoder = match (&self.encoder_spec, &self.encoder_map) {
            (Some(spec), Some(map)) => Some(extract_model(trained, spec, map)?),
            _ => None,
        };
        let decoder = extract_model(trained, &self.decoder_spec, &self.decoder_map)?;
        Ok(CodecBundle {
            kind: self.kind,
            nt: self.nt,
            ld: self.ld,
            m: self.m,
            m_rest: None,
            seq_len: None,
            encoder,
            decoder,
            encoder_rest: None,
            seq_decoder: None,
        })
    }
}

/// Two-stage construction for the sequence codec.
pub struct LstmTrainer {
    /// Stage 1: a plain `csinet` at the first-frame compression ratio.
    pub stage1: CodecTrainer,
    /// Stage 2: the unrolled frames `2..=seq_len`, sharing one rest
    /// encoder and one recurrent decoder. Inputs, in order: the downlink
    /// planes of frames `2..=seq_len`, the stage-1 reconstruction of
    /// frame 1, and the initial hidden state. Outputs: one reconstruction
    /// per later frame.
    pub stage2_spec: ModelSpec,
    pub nt: usize,
    pub ld: usize,
    pub m_first: usize,
    pub m_rest: usize,
    pub seq_len: usize,
    encoder_rest_spec: ModelSpec,
    seq_decoder_spec: ModelSpec,
    encoder_rest_map: SpliceMap,
    seq_decoder_map: SpliceMap,
}

/// Builds both training stages of `csinet-lstm`.
///
/// Frame 1 is compressed at `cr_first`; every later frame at `cr_rest`.
pub fn lstm_trainer(
    nt: usize,
    ld: usize,
    cr_first: f64,
    cr_rest: f64,
    seq_len: usize,
    seed: u64,
) -> Result<LstmTrainer> {
    if seq_len < 2 {
        return Err(Error::InvalidSpec(
            "a sequence codec needs at least 2 frames".into(),
        ));
    }
    let stage1 = codec_trainer(CodecKind::CsiNet, nt, ld, cr_first, seed)?;
    let m_first = stage1.m.expect("csinet always has a codeword");
    let m_rest = codeword_len(cr_rest, nt, ld);
    let encoder_rest = build_encoder(2, nt, ld, m_rest, seed.wrapping_add(2))?;
    let seq_decoder = build_seq_decoder(nt, ld, m_rest, seed.wrapping_add(3))?;

    let mut g = GraphBuilder::new();
    let frames: Vec<ValueId> = (1..seq_len).map(|_| g.input(&[2, nt, ld])).collect();
    let recon1 = g.input(&[2, nt, ld]);
    let h0 = g.input(&[LSTM_STATE_DIM]);

    let mut outputs = Vec::with_capacity(seq_len - 1);
    let mut enc_map_first = None;
    let mut dec_map_first = None;
    let mut prev = recon1;
    let mut h = h0;
    for &frame in &frames {
        let (enc_out, em) = g.splice(&encoder_rest, &[frame], enc_map_first.as_ref())?;
        let (dec_out, dm) = g.splice(&seq_decoder, &[enc_out[0], prev, h], dec_map_first.as_ref())?;
        outputs.push(dec_out[0]);
        prev = dec_out[0];
        h = dec_out[1];
        enc_map_first.get_or_insert(em);
        dec_map_first.get_or_insert(dm);
    }
    let stage2_spec = g.finish(&outputs, seed.wrapping_add(4))?;

    Ok(LstmTrainer {
        stage1,
        stage2_spec,
        nt,
        ld,
        m_first,
        m_rest,
        seq_len,
        encoder_rest_spec: encoder_rest,
        seq_decoder_spec: seq_decoder,
        encoder_rest_map: enc_map_first.expect("at least one later frame"),
        seq_decoder_map: dec_map_first.expect("at least one later frame"),
    })
}

impl LstmTrainer {
    /// Combines the trained stage-1 bundle and stage-2 model into one
    /// deployable sequence codec.
    pub fn bundle(
        &self,
        stage1: &CodecBundle,
        stage2_trained: &Model<f32>,
    ) -> Result<CodecBundle> {
        if stage1.kind != CodecKind::CsiNet {
            return Err(Error::InvalidSpec(
                "stage 1 of the sequence codec must be a csinet bundle".into(),
            ));
        }
        let encoder_rest = extract_model(stage2_trained, &self.encoder_rest_spec, &self.encoder_rest_map)?;
        let seq_decoder = extract_model(stage2_trained, &self.seq_decoder_spec, &self.seq_decoder_map)?;
        Ok(CodecBundle {
            kind: CodecKind::CsiNetLstm,
            nt: self.nt,
            ld: self.ld,
            m: Some(self.m_first),
            m_rest: Some(self.m_rest),
            seq_len: Some(self.seq_len),
            encoder: stage1.encoder.clone(),
            decoder: stage1.decoder.clone(),
            encoder_rest: Some(encoder_rest),
            seq_decoder: Some(seq_decoder),
        })
    }
}

// ---------------------------------------------------------------------------
// Deployable bundles.
// ---------------------------------------------------------------------------

/// A feedback codeword: the float vector the user equipment reports.
#[derive(Clone, Debug, PartialEq)]
pub struct Codeword {
    pub values: Vec<f32>,
}

/// A trained codec ready for inference.
#[derive(Clone, Debug)]
pub struct CodecBundle {
    pub kind: CodecKind,
    pub nt: usize,
    pub ld: usize,
    /// Codeword length (first frame for the sequence codec); `None` for
    /// the feedback-free translators.
    pub m: Option<usize>,
    /// Codeword length of frames after the first (sequence codec only).
    pub m_rest: Option<usize>,
    /// Number of frames per sequence (sequence codec only).
    pub seq_len: Option<usize>,
    pub encoder: Option<Model<f32>>,
    pub decoder: Model<f32>,
    pub encoder_rest: Option<Model<f32>>,
    pub seq_decoder: Option<Model<f32>>,
}

impl CodecBundle {
    /// Average feedback payload in floats per reported frame.
    pub fn feedback_floats_per_frame(&self) -> f64 {
        match self.kind {
            CodecKind::CsiNetLstm => {
                let t = self.seq_len.unwrap_or(1) as f64;
                let first = self.m.unwrap_or(0) as f64;
                let rest = self.m_rest.unwrap_or(0) as f64;
                (first + (t - 1.0) * rest) / t
            }
            _ => self.m.unwrap_or(0) as f64,
        }
    }

    fn encoder_or_err(&self) -> Result<&Model<f32>> {
        self.encoder.as_ref().ok_or_else(|| {
            Error::Codec(format!("codec {} has no encoder", self.kind.name()))
        })
    }

    /// Encodes a batch of `[c, nt, ld]` downlink plane tensors.
    pub fn encode(&self, dl: &[Tensor<f32>]) -> Result<Vec<Codeword>> {
        let enc = self.encoder_or_err()?;
        let refs: Vec<&Tensor<f32>> = dl.iter().collect();
        let batch = stack_samples(&refs)?;
        let out = enc.forward_eval(&[batch])?;
        split_codewords(&out[0])
    }

    /// Decodes a batch of codewords, with uplink side planes where the
    /// codec requires them, into `[c, nt, ld]` reconstructions.
    pub fn decode(&self, cws: &[Codeword], side: Option<&[Tensor<f32>]>) -> Result<Vec<Tensor<f32>>> {
        if !self.kind.has_encoder() {
            return Err(Error::Codec(format!(
                "codec {} is feedback-free; use translate",
                self.kind.name()
            )));
        }
        let m = self.m.expect("feedback codecs have a codeword length");
        let mut flat = Vec::with_capacity(cws.len() * m);
        for cw in cws {
            if cw.values.len() != m {
                return Err(Error::Codec(format!(
                    "codeword has {} floats, codec expects {m}",
                    cw.values.len()
                )));
            }
            flat.extend_from_slice(&cw.values);
        }
        let cw_batch = Tensor::from_vec(&[cws.len(), m], flat)?;
        let inputs = match (self.kind.uses_uplink_side(), side) {
            (true, Some(side)) => {
                if side.len() != cws.len() {
                    return Err(Error::Codec(format!(
                        "{} codewords but {} side tensors",
                        cws.len(),
                        side.len()
                    )));
                }
                let refs: Vec<&Tensor<f32>> = side.iter().collect();
                vec![cw_batch, stack_samples(&refs)?]
            }
            (true, None) => {
                return Err(Error::Codec(format!(
                    "codec {} needs uplink side information to decode",
                    self.kind.name()
                )))
            }
            (false, _) => vec![cw_batch],
        };
        let out = self.decoder.forward_eval(&inputs)?;
        crate::tensor::unstack_samples(&out[0])
    }

    /// Runs a feedback-free translator on a batch of uplink plane tensors.
    pub fn translate(&self, side: &[Tensor<f32>]) -> Result<Vec<Tensor<f32>>> {
        if self.kind.has_encoder() {
            return Err(Error::Codec(format!(
                "codec {} is not a translator; use encode/decode",
                self.kind.name()
            )));
        }
        let refs: Vec<&Tensor<f32>> = side.iter().collect();
        let batch = stack_samples(&refs)?;
        let out = self.decoder.forward_eval(&[batch])?;
        crate::tensor::unstack_samples(&out[0])
    }

    /// Full pipeline for the sequence codec: encodes and reconstructs a
    /// batch of frame sequences (`frames[sample][frame]`, each
    /// `[2, nt, ld]`). Returns reconstructions in the same layout.
    pub fn run_sequence(&self, frames: &[Vec<Tensor<f32>>]) -> Result<Vec<Vec<Tensor<f32>>>> {
        if self.kind != CodecKind::CsiNetLstm {
            return Err(Error::Codec(format!(
                "codec {} does not process sequences",
                self.kind.name()
            )));
        }
        let t = self.seq_len.expect("sequence codec has a length");
        if frames.iter().any(|f| f.len() != t) {
            return Err(Error::Codec(format!("every sequence must have {t} frames")));
        }
        if frames.is_empty() {
            return Err(Error::Codec("empty batch of sequences".into()));
        }
        let n = frames.len();
        let enc_rest = self
            .encoder_rest
            .as_ref()
            .expect("sequence codec has a rest encoder");
        let seq_dec = self
            .seq_decoder
            .as_ref()
            .expect("sequence codec has a recurrent decoder");

        // Frame 1 goes through the high-rate codec.
        let first: Vec<Tensor<f32>> = frames.iter().map(|f| f[0].clone()).collect();
        let cw1 = self.encode(&first)?;
        let recon1 = self.decode(&cw1, None)?;

        let mut recons: Vec<Vec<Tensor<f32>>> = recon1.into_iter().map(|r| vec![r]).collect();
        let mut h = Tensor::zeros(&[n, LSTM_STATE_DIM]);
        for fi in 1..t {
            let frame_refs: Vec<&Tensor<f32>> = frames.iter().map(|f| &f[fi]).collect();
            let frame_batch = stack_samples(&frame_refs)?;
            let cw = enc_rest.forward_eval(std::slice::from_ref(&frame_batch))?;
            let prev_refs: Vec<&Tensor<f32>> =
                recons.iter().map(|r| r.last().expect("non-empty")).collect();
            let prev_batch = stack_samples(&prev_refs)?;
            let out = seq_dec.forward_eval(&[cw[0].clone(), prev_batch, h])?;
            h = out[1].clone();
            for (sample, recon) in crate::tensor::unstack_samples(&out[0])?.into_iter().enumerate()
            {
                recons[sample].push(recon);
            }
        }
        Ok(recons)
    }
}

fn split_codewords(batch: &Tensor<f32>) -> Result<Vec<Codeword>> {
    Ok(crate::tensor::unstack_samples(batch)?
        .into_iter()
        .map(|t| Codeword {
            values: t.into_data(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Plane conversion.
// ---------------------------------------------------------------------------

/// Stacks the normalised planes a codec models into a `[c, nt, ld]`
/// tensor (`f32`).
pub fn planes_to_tensor(kind: CodecKind, planes: &Planes) -> Result<Tensor<f32>> {
    if planes.mode != kind.repr_mode() {
        return Err(Error::Codec(format!(
            "codec {} expects {:?} planes, got {:?}",
            kind.name(),
            kind.repr_mode(),
            planes.mode
        )));
    }
    let idx = kind.plane_indices();
    let (nt, ld) = planes.planes[0].dim();
    let mut data = Vec::with_capacity(idx.len() * nt * ld);
    for &i in idx {
        if planes.planes[i].dim() != (nt, ld) {
            return Err(Error::Codec("plane shapes disagree".into()));
        }
        data.extend(planes.planes[i].iter().map(|&v| v as f32));
    }
    Tensor::from_vec(&[idx.len(), nt, ld], data)
}

/// Unpacks a `[c, nt, ld]` network output back into per-plane arrays
/// (`f64`), one per plane the codec models.
pub fn tensor_to_planes(kind: CodecKind, tensor: &Tensor<f32>) -> Result<Vec<Array2<f64>>> {
    let c = kind.channels();
    if tensor.shape().len() != 3 || tensor.shape()[0] != c {
        return Err(Error::Codec(format!(
            "expected [{}, nt, ld] tensor, got {:?}",
            c,
            tensor.shape()
        )));
    }
    let (nt, ld) = (tensor.shape()[1], tensor.shape()[2]);
    let mut planes = Vec::with_capacity(c);
    for ch in 0..c {
        let slice = &tensor.data()[ch * nt * ld..(ch + 1) * nt * ld];
        let plane = Array2::from_shape_vec((nt, ld), slice.iter().map(|&v| v as f64).collect())
            .expect("length checked above");
        planes.push(plane);
    }
    Ok(planes)
}

// ---------------------------------------------------------------------------
// Bundle persistence.
// ---------------------------------------------------------------------------

fn role_meta(bundle: &CodecBundle, role: &str) -> serde_json::Value {
    json!({
        "codec": bundle.kind.name(),
        "role": role,
        "nt": bundle.nt,
        "ld": bundle.ld,
        "m": bundle.m,
        "m_rest": bundle.m_rest,
        "seq_len": bundle.seq_len,
    })
}

/// Writes every model of the bundle to `<dir>/<stem>.<role>.nnck` and
/// returns the paths written.
pub fn save_bundle(bundle: &CodecBundle, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut save = |model: &Model<f32>, role: &str| -> Result<()> {
        let path = dir.join(format!("{stem}.{role}.nnck"));
        save_model(model, &role_meta(bundle, role), &path)?;
        written.push(path);
        Ok(())
    };
    if let Some(enc) = &bundle.encoder {
        save(enc, "encoder")?;
    }
    save(&bundle.decoder, "decoder")?;
    if let Some(enc) = &bundle.encoder_rest {
        save(enc, "encoder-rest")?;
    }
    if let Some(dec) = &bundle.seq_decoder {
        save(dec, "seq-decoder")?;
    }
    Ok(written)
}

/// Reassembles a bundle previously written by [`save_bundle`].
pub fn load_bundle(dir: &Path, stem: &str) -> Result<CodecBundle> {
    let load_role = |role: &str| -> Result<Option<(Model<f32>, serde_json::Value)>> {
        let path = dir.join(format!("{stem}.{role}.nnck"));
        if path.exists() {
            Ok(Some(load_model(&path)?))
        } else {
            Ok(None)
        }
    };
    let decoder = load_role("decoder")?.ok_or_else(|| {
        Error::Checkpoint(format!("no decoder checkpoint for stem {stem}"))
    })?;
    let meta = decoder.1.clone();
    let kind = meta
        .get("codec")
        .and_then(|v| v.as_str())
        .and_then(CodecKind::parse)
        .ok_or_else(|| Error::Checkpoint("decoder checkpoint lacks a codec name".into()))?;
    let dim = |key: &str| -> Result<usize> {
        meta.get(key)
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
            .ok_or_else(|| Error::Checkpoint(format!("decoder checkpoint lacks {key}")))
    };
    let opt_dim = |key: &str| meta.get(key).and_then(|v| v.as_u64()).map(|v| v as usize);
    Ok(CodecBundle {
        kind,
        nt: dim("nt")?,
        ld: dim("ld")?,
        m: opt_dim("m"),
        m_rest: opt_dim("m_rest"),
        seq_len: opt_dim("seq_len"),
        encoder: load_role("encoder")?.map(|(m, _)| m),
        decoder: decoder.0,
        encoder_rest: load_role("encoder-rest")?.map(|(m, _)| m),
        seq_decoder: load_role("seq-decoder")?.map(|(m, _)| m),
    })
}

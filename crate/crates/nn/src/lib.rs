//! A minimal neural-network substrate for CSI feedback codecs.
//!
//! The crate provides exactly what the codec family needs and nothing
//! more: a static graph description ([`graph`]), dense tensors generic
//! over `f32`/`f64` ([`tensor`]), hand-written forward/backward kernels
//! ([`layers`]), a runtime model with parameter tying ([`model`]), Adam
//! with bias correction ([`adam`]), a deterministic mini-batch training
//! loop ([`train`]), binary checkpoints ([`checkpoint`]), and the codec
//! architectures themselves ([`codecs`]).
//!
//! Determinism: parameter initialisation and batch shuffling derive from
//! explicit seeds, training is single-threaded, and gradient arithmetic
//! uses a fixed accumulation order — re-running any training job with the
//! same seeds reproduces every parameter bit-for-bit. Gradient
//! correctness is verified against `f64` central finite differences in
//! the integration tests.

pub mod adam;
pub mod checkpoint;
pub mod codecs;
pub mod error;
pub mod graph;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_model, save_model};
pub use codecs::{
    build_decoder, build_encoder, build_seq_decoder, build_side_decoder, build_translator,
    codec_trainer, codeword_len, extract_model, load_bundle, lstm_trainer, planes_to_tensor,
    save_bundle, tensor_to_planes, CodecBundle, CodecKind, CodecTrainer, Codeword, LstmTrainer,
    LEAKY_SLOPE, LSTM_STATE_DIM,
};
pub use error::{Error, Result};
pub use graph::{GraphBuilder, LayerKind, LayerNode, ModelSpec, SpliceMap, ValueId};
pub use model::{Cache, Gradients, Model, NodeState};
pub use tensor::{stack_samples, unstack_samples, Scalar, Tensor};
pub use train::{evaluate_mse, mse_loss_and_grad, train, Sample, TrainConfig, TrainReport};

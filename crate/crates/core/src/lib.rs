//! Desk-scale laboratory for FDD massive-MIMO CSI feedback studies.
//!
//! This crate provides the non-learned half of the pipeline:
//!
//! * [`band`] / [`channel`] — paired uplink/downlink band configuration and
//!   cluster-based multipath synthesis with controllable cross-band
//!   decorrelation;
//! * [`transform`] / [`represent`] — angular-delay transforms with delay
//!   truncation and the real-plane decompositions codecs train on;
//! * [`correlation`] — per-plane uplink/downlink correlation reports and the
//!   band-gap x bandwidth sweep machinery;
//! * [`dataset`] — a checksummed binary container for paired CSI samples;
//! * [`quant`] — uniform quantization plus magnitude-dependent phase
//!   feedback with a self-synchronizing tap ranking;
//! * [`cs`] — Gaussian measurement ensembles and OMP recovery as the
//!   non-learned baseline;
//! * [`metrics`] — NMSE and cosine-similarity scoring.
//!
//! Everything is deterministic given the seeds in the configuration structs;
//! no global RNG state is consulted anywhere.

pub mod band;
pub mod channel;
pub mod correlation;
pub mod cs;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod quant;
pub mod represent;
pub mod transform;

pub use band::{BandSpec, ChannelConfig, SPEED_OF_LIGHT};
pub use channel::{
    evolve_paths, sample_paths, synthesize_csi, CsiMatrix, LinkDirection, Path, PathSet,
};
pub use correlation::{
    correlation_report, correlation_report_from_pairs, pearson, sweep_bandgap_bandwidth,
    CorrelationReport, CsiPlane, SweepPoint, SweepTable,
};
pub use cs::{cs_encode, gaussian_ensemble, omp_recover, MeasurementEnsemble, OmpResult};
pub use dataset::{
    build_dataset, DatasetHeader, DatasetReader, DatasetSummary, DatasetWriter,
};
pub use error::{Error, Result};
pub use metrics::{cosine_sim, format_db, nmse_db_complex, nmse_db_real, NmseAccumulator};
pub use quant::{
    deserialize_phase_feedback, mag_phase_quantize, rank_taps, reconstruct_complex,
    reconstruct_with_exact_phases, serialize_phase_feedback, uniform_dequantize,
    uniform_quantize, PhaseFeedback, PhaseTiers,
};
pub use represent::{decompose, recompose, NormScale, Planes, ReprMode};
pub use transform::{
    from_angular_delay, to_angular_delay, to_angular_delay_with, AngularDelayCsi,
};

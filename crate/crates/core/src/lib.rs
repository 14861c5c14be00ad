//! Estimating the kernel of an integral-type operator from noisy input/output pairs.
//!
//! The crate covers the whole simulation pipeline: spectral decay profiles
//! and Sobolev-type kernel classes, three forward operators with their
//! normal-operator eigensystems, grid noise models, the tamed least-squares
//! estimator, probabilistic diagnostics, and a configuration-driven
//! experiment harness.

// Negated comparisons deliberately reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod estimators;
pub mod forward;
pub mod harness;
pub mod noise;
mod par;
pub mod rng;
pub mod spectral;

pub use diagnostics::{
    assouad_set, kl_flip_bound, left_tail_bound, left_tail_bound_all, lower_rate_certificate, AssouadSet,
    DiagnosticsError, TailBoundReport,
};
pub use estimators::{
    assemble_normal_system, decompose_normal_vector, empirical_loss, estimation_error, lse_pinv_solve, tlse_solve,
    tsvd_solve, Dataset, EstimateError, EstimateResult, NormalSystem,
};
pub use forward::{
    eigendecompose_normal, ForwardContext, ForwardError, ForwardModel, InputEnsemble, InputFunction, OutputFunction,
};
pub use harness::{ExperimentConfig, HarnessError, RateSweepResult};
pub use noise::{NoiseError, NoiseModel};
pub use spectral::{
    optimal_dimension, sample_kernel, theoretical_exponent, DecayKind, EigenSystem, KernelFunction, KernelProfile,
    SobolevClass, SpectralDecay, SpectralError,
};

//! Deterministic-equivalent spectra of generally correlated Gaussian Gram
//! matrices.
//!
//! The model is `(1/n) Σ Σ*` where `Σ` is `N × n` with independent columns
//! `ξ_i = Θ_i g_i`, `g_i` circularly-symmetric standard complex Gaussian and
//! `Ω_i = Θ_i Θ_i*`. The crate provides
//!
//! * [`model`]: correlation ensembles and their validation,
//! * [`solver`]: the coupled fixed-point system for `δ_i(z)`, `T_N(z)`,
//!   `m_N(z)` and the `z = 0` system with its Jacobian certificate,
//! * [`spectrum`]: Stieltjes inversion, support detection and the gap at zero,
//! * [`sampler`]: Monte Carlo draws, empirical spectra and scaling experiments,
//! * [`algebra`]: the positive-system, trace and Hadamard-dominance lemmas.

// `!(a <= b)` is deliberate: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
mod error;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod sampler;
pub mod solver;
pub mod spectrum;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use model::{CorrelationEnsemble, EnsembleConfig, ModelConfig};
pub use sampler::{GapReport, ScalingReport, TrialBatch, VarianceReport};
pub use solver::{FixedPointSolution, JacobianReport, SolveOptions, SpectralPoint, ZeroSolution};
pub use spectrum::{DensityCurve, SupportReport};

//! Classical simulation of CT-ECS quantum circuits under local depolarizing noise.
//!
//! A CT-ECS circuit splits as `C = V U` where `U|0ⁿ⟩` is a computationally
//! tractable (CT) state and every `V† Z_j V` is an efficiently computable sparse
//! (ECS) operator. Low-degree Fourier coefficients of the output distribution
//! are estimated by Monte Carlo over the CT state, attenuated by the noise rate
//! and sampled with a sequential marginal sampler that repairs negative mass.
//!
//! Module map:
//! - [`circuit`]: gates, circuits and the four CT-ECS families.
//! - [`ctstate`]: product and phase states with exact amplitudes and sampling.
//! - [`ecs`]: signed Paulis, Clifford conjugation, local operators and column oracles.
//! - [`fourier`]: coefficient estimation, degree cutoff, low-degree tables, noise operators.
//! - [`sampler`]: the marginal sampler and the model A / model B / marginal pipelines.
//! - [`oracle`]: dense small-n ground truth used by tests and verification.
//!
//! # Bit conventions
//!
//! Basis strings and masks are `u64` values. Qubit `j` of an `n`-qubit register
//! is bit `n - 1 - j`, so the integer value of a string is its big-endian index
//! (qubit 0 is the most significant bit). Dense vectors are indexed the same way.

pub mod bits;
pub mod circuit;
pub mod ctstate;
pub mod ecs;
pub mod error;
pub mod fourier;
pub mod oracle;
pub mod sampler;
pub mod seed;

pub use circuit::{Circuit, CtEcsDecomposition, DyadicAngle, Family, Gate, GateKind};
pub use ctstate::{CtState, PhaseState, ProductState};
pub use ecs::{ColumnOracle, EcsOperation, LocalOperator, PauliCombination, SignedPauli};
pub use error::{Error, Result};
pub use fourier::{CoefficientSource, EstimatorConfig, FourierTable, NoiseSpec};
pub use oracle::{DistVector, StateVector};
pub use sampler::{ModelBPlan, PipelineConfig};

pub use num_complex::Complex64;

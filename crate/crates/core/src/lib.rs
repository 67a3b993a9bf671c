//! Hybrid tensor-train / variational-quantum-circuit learning toolkit.
//!
//! The crate is organized around five subsystems:
//!
//! * [`tt`] — tensor-train (matrix product) vectors, matrices, and the TT
//!   linear layer with exact reverse-mode gradients.
//! * [`qsim`] — dense statevector simulation of the VQC: tensor-product
//!   encoding, parametric rotations, CNOT entanglement, Pauli-Z readout, and
//!   two independent gradient engines (adjoint and parameter shift).
//! * [`learn`] — losses, Adam, PCA, the classical head, and the training
//!   pipelines (classical pre-training, frozen-feature fine-tuning,
//!   end-to-end, and the PCA baseline).
//! * [`data`] — dataset ingestion (IDX), split construction, synthetic
//!   charge-stability-diagram and digit generators, and the canonical
//!   on-disk dataset format.
//! * [`diag`] — empirical capacity diagnostics: Rademacher complexity,
//!   representation differences, transfer-risk proxies, and the risk-bound
//!   evaluator.
//!
//! All floating point work is in `f64`; every randomized procedure takes an
//! explicit seed and is bit-reproducible for a fixed (input, seed) pair.

pub mod data;
pub mod diag;
pub mod learn;
pub mod linalg;
pub mod qsim;
pub mod seed;
pub mod tt;

pub use diag::{bound_rhs, rademacher_estimate, BoundInputs, FunctionFamily};
pub use qsim::{EncodingSpec, PqcParams, StateVector};
pub use tt::{TtCore, TtLayer, TtShape, TtVector};

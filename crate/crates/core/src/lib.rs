//! Determinant quantum Monte Carlo for the real-time fidelities of
//! dissipative free fermions.
//!
//! Lindblad evolution of spinless fermions on a periodic square lattice with
//! on-site number-operator jumps is rewritten as imaginary-time evolution of
//! a two-species non-Hermitian Hamiltonian. Its discrete Hubbard-Stratonovich
//! weights are semi-positive, so the trace-averaged Loschmidt echo
//! `M(t) = tr e^{-L0 t} e^{L t}` and relative purity `P(t) = tr e^{L t}`
//! can be sampled with standard BSS machinery and assembled from telescoping
//! products of weight ratios.
//!
//! Module map:
//! - [`lattice`]: geometry and adjacency.
//! - [`model`]: couplings, HS transformation, auxiliary fields, seeds.
//! - [`bss`]: slice propagators, UDT-stabilized chains, Green's functions.
//! - [`sampler`]: Metropolis chains producing weight-ratio samples.
//! - [`estimator`]: binning, telescoping, analytic anchors, series.
//! - [`oracle`]: exact dense references for small systems.
//! - [`cli`]: configuration, orchestration, output and self-validation.

pub mod bss;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod sampler;

pub use error::{Error, Result};
pub use lattice::LatticeSpec;
pub use model::{FieldConfig, ModelParams, Observable};

/// Complex double used throughout.
pub type C64 = num_complex::Complex64;

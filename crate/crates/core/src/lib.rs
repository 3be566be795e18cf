//! Large-N dynamics of a perturbed thermal state in O(N)-symmetric quantum
//! mechanics with Hamiltonian `H = Σ π_a²/2 + N V((1/N) Σ φ_a²)`.
//!
//! At large N the condensate `x(t) = ⟨(1/N) Σ φ_a²⟩` obeys classical motion in
//! an effective potential, while the perturbation `φ_a(t)` obeys a linear
//! equation with periodic coefficient `2V'(x(t))`. This crate builds the
//! thermal initial data, integrates the coupled system, runs the Floquet
//! stability analysis of the perturbation, quantifies its beats, and scans
//! parameter grids for parametric resonance.
//!
//! Pipeline:
//!
//! ```
//! use largen_core::{floquet, thermal, dynamics::IntegratorConfig, potential::PotentialModel};
//!
//! let model = PotentialModel::quartic(1.0, 1.0).unwrap();
//! let setup = thermal::build_setup(&model, "0.5".parse().unwrap(), 1.0, 1e-12).unwrap();
//! let report = floquet::analyze(&setup, &model, &IntegratorConfig::default()).unwrap();
//! assert_eq!(report.classification, floquet::Stability::Oscillatory);
//! ```

// `!(a < b)` is used on purpose so that NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod floquet;
pub mod format;
pub mod potential;
pub mod quadrature;
pub mod roots;
pub mod scan;
pub mod thermal;

pub use error::{Error, Result};
pub use potential::PotentialModel;
pub use thermal::{Beta, PerturbedSetup};

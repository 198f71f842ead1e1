//! Floquet-Bloch spectral toolkit for one-dimensional Hill operators
//! H = -d^2/dx^2 + P(x), and dispersive estimates for the associated
//! Klein-Gordon propagator.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod bloch;
pub mod decay;
pub mod error;
pub mod fit;
pub mod jet;
pub mod kernel;
pub mod kmap;
pub mod ode;
pub mod oscillatory;
pub mod phase;
pub mod potential;
mod par;
pub mod quadrature;
pub mod roots;
pub mod special;

pub use error::{Error, Result};
pub use ode::{monodromy, HillSolver, Monodromy, OdeConfig};
pub use potential::PeriodicPotential;
pub use bands::{find_bands, find_n_bands, Band, BandConfig, BandTable, Gap};
pub use kmap::{build_kmap, EnergyDerivs, KmapConfig, QuasimomentumMap, BandShape};
pub use bloch::{build_bloch_table, BlochConfig, BlochTable};
pub use phase::{find_degenerate_set, DegenerateSet, DsetConfig, PhaseModel};
pub use kernel::{eval_kernel, KernelConfig, KernelRequest, KernelResult, SplitMode};
pub use decay::{decay_scan, DecayConfig, DecayRow};
pub use fit::DecayFit;

//! Lie solutions of the mass-transport equation on flat tori: staggered
//! discrete forms, cost jets, Newton construction of maps `x ↦ cexp(x, η)`,
//! Hodge theory for the induced metric, continuation along the moduli
//! family, and cyclical-monotonicity audits.
//!
//! Everything numeric is generic over [`Real`]; the aliases below fix `f64`.

// index loops mirror the stencil formulas; `!(a >= b)` deliberately catches NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod commands;
pub mod config;
pub mod cost;
pub mod density;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod hodge;
pub mod interp;
pub mod io;
pub mod krylov;
pub mod moduli;
pub mod real;
pub mod small;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use grid::PeriodicGrid;
pub use real::Real;

pub type ScalarField = grid::ScalarField<f64>;
pub type OneFormField = grid::OneFormField<f64>;
pub type TwoFormField = grid::TwoFormField<f64>;
pub type CostModel = cost::CostModel<f64>;
pub type CostJet = cost::CostJet<f64>;
pub type TwistWindow = cost::TwistWindow<f64>;
pub type DensityPair = density::DensityPair<f64>;
pub type TransportState = state::TransportState<f64>;
pub type MetricField = hodge::MetricField<f64>;
pub type HarmonicBasis = hodge::HarmonicBasis<f64>;
pub type HodgeDecomposition = hodge::HodgeDecomposition<f64>;
pub type ModuliChart = moduli::ModuliChart<f64>;
pub type Family = moduli::Family<f64>;
pub type PhiResidual = moduli::PhiResidual<f64>;

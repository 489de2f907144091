//! Defined-contribution pension allocation under a four-factor market with
//! a Vasicek short rate, stochastic salary and De Moivre mortality.
//!
//! The crate covers market coefficients and simulation, the closed-form and
//! first-order-condition optimal strategies, relative-wealth Monte Carlo, and
//! a verification layer for the adjoint construction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxiliary;
pub mod error;
pub mod market;
pub mod mortality;
pub mod numerics;
pub mod sde;
pub mod strategy;
pub mod verifier;
pub mod wealth;

pub use error::{ModelError, Result};
pub use market::{Coefficient, MarketParams};
pub use mortality::{MortalityConvention, MortalityLaw};
pub use sde::{PathState, RngPolicy, SimulationGrid};
pub use strategy::{FormulaVariant, PlanConfig, Strategy, StrategyVector};

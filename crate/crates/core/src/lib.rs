//! Barrier option pricing under one-dimensional local-volatility diffusions.
//!
//! The price of a (time-dependent) single- or double-barrier knock-out is
//! written as the corridor-truncated European value minus a barrier premium
//! that depends only on the option's deltas along the barriers. Those deltas
//! solve a weakly singular Volterra system of the first kind, which
//! [`volterra`] discretizes by product integration and [`laplace`] solves
//! semi-analytically for constant barriers under GBM.

pub mod contract;
pub mod error;
pub mod european;
pub mod laplace;
pub mod model;
pub mod oracle;
pub mod pricing;
pub mod quad;
pub mod specialfn;
pub mod volterra;

pub use contract::{Barrier, BarrierContract, Payoff, Regime, Side};
pub use error::{Error, Result};
pub use european::EuropeanValuator;
pub use model::Diffusion;
pub use pricing::{Ladder, PriceResult};
pub use volterra::{DeltaProfile, KernelSystem, TimeGrid};

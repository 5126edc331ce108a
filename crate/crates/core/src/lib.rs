//! Numerical laboratory for bridge (lq-penalized least squares) regression.
//!
//! The crate computes the optimally tuned asymptotic mean square error of
//! `0.5 ||y - X b||^2 + lambda ||b||_q^q` through its scalar state-evolution fixed point,
//! evaluates closed-form small-noise and large-sample expansions, and checks both
//! against Monte Carlo solves of finite instances.

pub mod cli;
pub mod config;
pub mod dist;
pub mod empirics;
pub mod error;
pub mod prox;
pub mod quadrature;
pub mod risk;
pub mod scalar;
pub mod se;
pub mod theory;

pub use dist::{Moment, SignalDistribution};
pub use empirics::{Instance, LqlsSettings, SolveResult};
pub use error::{Error, Result};
pub use prox::{prox, ProxResult};
pub use quadrature::{Quadrature, QuadratureKind};
pub use risk::{QuadConfig, RiskModel, RiskPoint, SearchConfig, ZRule};
pub use se::{SEOutcome, SeConfig, SolverConfig};
pub use theory::{ExpansionReport, QStarConfig, QStarResult, Validity};

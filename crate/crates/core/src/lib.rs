//! Self-triggered sampling bounds for nonlinear control loops.
//!
//! The pipeline: parse a plant, controller and triggering condition into
//! [`expr::Expr`] trees, build the extended closed loop, homogenize it, derive a
//! Lie-derivative chain, synthesize a linear comparison model and turn it into
//! guaranteed lower bounds on inter-execution times. The [`sim`] module provides
//! the event-triggered ground truth used to validate every bound.

pub mod comparison;
pub mod config;
pub mod error;
pub mod expr;
pub mod manifold;
pub mod model;
pub mod poly;
pub mod runner;
pub mod sampling;
pub mod selftrigger;
pub mod sim;

pub use comparison::{BoundState, ComparisonModel, Sense};
pub use error::{Error, Result};
pub use expr::{Expr, VarAssignment};
pub use model::{ControlModel, ExtendedField, LieChain};
pub use selftrigger::{BetaVector, TriggerBound};
pub use sim::{IntegratorConfig, SimTrace};


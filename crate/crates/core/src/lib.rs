//! Measure-valued simulation of pure selection dynamics.
//!
//! The population is a finite nonnegative measure over a one-dimensional
//! trait space; a selection pressure operator maps the current population to
//! a bounded per-capita growth field, and the measure evolves multiplicatively
//! under that field. The crate provides the measure arithmetic, a zoo of
//! built-in operators with declared growth/stability constants, a small
//! expression language for user-defined operators, time integrators including
//! a contraction (fixed point) solver, closed-form reference solutions, and
//! diagnostics that verify the quantitative estimates the operators declare.

// Positivity guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`
// they also reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dsl;
pub mod engine;
pub mod measure;
pub mod operators;
pub mod oracle;
pub mod profiles;
pub mod scenario;

pub use engine::{EngineConfig, RunStatus, Scheme, Trajectory};
pub use measure::{Atom, FunctionSamples, Grid, GridMeasure, MeasureError, WindowKind};
pub use operators::{OperatorMeta, SelectionField, SelectionOperator};
pub use profiles::{Kernel, Profile};
pub use scenario::{load_scenario, run_scenario, Overrides, Scenario};

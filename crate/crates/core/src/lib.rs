//! Black-box reachability safety layer.
//!
//! The crate over-approximates the forward reachable sets of a robot whose
//! dynamics are only known through recorded trajectory data, checks those sets
//! against obstacle polytopes with a linear program, and nudges candidate
//! action plans out of collision by projected gradient ascent on the LP value.
//!
//! Module map:
//!
//! - [`setgeom`]: intervals, zonotopes and constrained zonotopes.
//! - [`lincheck`]: the emptiness LP, its simplex solver and RHS sensitivities.
//! - [`sysid`]: offline data, Lipschitz/covering-radius estimates, state warp.
//! - [`reach`]: data-driven reach tubes.
//! - [`safety`]: certification, plan adjustment and the receding-horizon loop.
//! - [`nominal`]: analytic stand-in planners.
//! - [`envsim`]: ground-truth simulators and scenarios.
//! - [`harness`]: configuration, dataset files, episodes, CSV reports.

pub mod envsim;
pub mod error;
pub mod harness;
pub mod lincheck;
pub mod nominal;
pub mod reach;
pub mod safety;
pub mod setgeom;
pub mod sysid;

pub use error::{Error, Result};

pub use envsim::{BlackBoxEnv, EnvKind, Obstacle, Scenario, Task};
pub use lincheck::{LpSolution, LpStatus};
pub use nominal::{NominalPlanner, PlannerKind};
pub use reach::{ReachConfig, ReachStepModel, ReachTube, Reachability};
pub use safety::{AdjustScope, Plan, SafetyConfig, SafetyLayer, SafetyOutcome};
pub use setgeom::{ConstrainedZonotope, Interval, Zonotope};
pub use sysid::{LipschitzEstimate, TrajectoryData, Warp};

/// Dense column vector used for states, actions and set centers.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for generators, constraints and models.
pub type Matrix = nalgebra::DMatrix<f64>;

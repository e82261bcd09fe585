//! Optimal feedback planning for systems whose dynamics switch between a
//! finite set of modes according to a continuous-time Markov chain.
//!
//! The value functions of all modes solve a weakly coupled system of static
//! Hamilton–Jacobi–Bellman equations; [`solver::sweep_solve`] computes them
//! with Gauss–Seidel sweeping using either an Eulerian (upwind finite
//! difference) or a semi-Lagrangian local update.

pub mod cli;
pub mod error;
pub mod markov;
pub mod model;
pub mod planners;
pub mod real;
pub mod ring;
pub mod simulate;
pub mod solver;
pub mod updates;

pub use error::{Error, Result};
pub use markov::RateMatrix;
pub use model::{Dynamics, Grid, PointLabel, Problem, Rect, Region, ScalarProfile, VectorProfile};
pub use planners::{Plan, PlannerKind, Policy};
pub use real::{Real, Vec2};
pub use simulate::{Controller, Outcome, SimOptions, SimStats, TrajectoryRecord};
pub use solver::{Scheme, SolveOptions, SolveReport, ValueField};

pub type Problem64 = Problem<f64>;
pub type Problem32 = Problem<f32>;
pub type RateMatrix64 = RateMatrix<f64>;
pub type RateMatrix32 = RateMatrix<f32>;
pub type ValueField64 = ValueField<f64>;
pub type ValueField32 = ValueField<f32>;
pub type Policy64 = Policy<f64>;
pub type Policy32 = Policy<f32>;

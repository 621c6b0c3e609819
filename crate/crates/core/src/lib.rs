//! Weighted energy-dissipation (WED) solvers for controlled gradient flows
//! `ẏ + ∂φ(y) ∋ u` and the associated optimal-control problems.

mod banded;
pub mod cli;
pub mod config;
pub mod control;
pub mod energy;
pub mod error;
pub mod flow;
pub mod grid;
pub mod norms;
pub mod optctl;
pub mod options;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod report;
pub mod sweep;
pub mod trajectory;
mod trajopt;
pub mod wed;

pub use control::{render_control, ControlFamily, ControlPoint, Profile};
pub use energy::{Energy, EnergySpec, Smoothness};
pub use error::{Result, WedError};
pub use flow::{solve_gradient_flow, FlowProblem};
pub use grid::TimeGrid;
pub use options::SolverOptions;
pub use report::SolveReport;
pub use trajectory::Trajectory;
pub use wed::WedProblem;

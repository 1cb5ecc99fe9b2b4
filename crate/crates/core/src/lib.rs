//! Smoothed-penalty subgradient solvers for weakly convex problems with
//! stochastic, weakly convex inequality constraints.
//!
//! The main entry points are [`solver::run_3s_econ`] and
//! [`ssg::run_ssg`]. Problem instances implement [`oracle::Problem`];
//! ready-made builders live in [`problems`].

pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod penalty;
pub mod problems;
pub mod rng;
pub mod set;
pub mod solver;
pub mod spider;
pub mod ssg;

pub use error::{Error, Result};

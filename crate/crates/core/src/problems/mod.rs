//! Problem instances: a noisy two-dimensional quadratic with a linear
//! constraint, a one-dimensional weakly convex constraint, and the three
//! classification problems with fairness or per-class constraints.

mod example1d;
mod fairness;
mod neyman_pearson;
mod synthetic;

pub use example1d::{build_example_1d, Example1d, Objective1d};
pub use fairness::{
    build_dp_scad, build_roc_fairness, norm_sum_variants, GroupMoments, scad, scad_derivative, DpScad, DpScadSpec, RocFairness,
    RocFairnessSpec, ScadForm, SumLimit,
};
pub use neyman_pearson::{build_neyman_pearson, NeymanPearson, NeymanPearsonSpec};
pub use synthetic::{build_synthetic_quadratic, SyntheticNoise, SyntheticQuadratic};

//! Sampling oracles for `min f(x) s.t. g_i(x) <= 0, x in X`.
//!
//! A [`Batch`] is drawn once and can be evaluated at several points, which
//! is what the recursive constraint estimator needs. Finite-sum problems
//! draw sample indices, generic streams draw per-sample seeds.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Rng;
use crate::set::FeasibleSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Finite(usize),
    Infinite,
}

impl Population {
    pub fn size(&self) -> Option<usize> {
        match self {
            Population::Finite(n) => Some(*n),
            Population::Infinite => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    WithReplacement,
    FullPopulation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub size: usize,
    pub sampling: Sampling,
}

impl BatchSpec {
    pub fn sampled(size: usize) -> Self {
        Self { size, sampling: Sampling::WithReplacement }
    }

    pub fn full(n: usize) -> Self {
        Self { size: n, sampling: Sampling::FullPopulation }
    }

    /// Full pass when `size` covers a finite population, otherwise sampling.
    pub fn for_population(size: usize, pop: Population) -> Self {
        match pop {
            Population::Finite(n) if size == n => Self::full(n),
            _ => Self::sampled(size),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Batch {
    /// Every sample of a finite population, in order.
    Full(usize),
    Indices(Vec<usize>),
    Seeds(Vec<u64>),
}

impl Batch {
    pub fn len(&self) -> usize {
        match self {
            Batch::Full(n) => *n,
            Batch::Indices(v) => v.len(),
            Batch::Seeds(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample indices of a finite-sum batch, in evaluation order.
    ///
    /// Panics on a stream batch; finite-sum problems never receive one.
    pub fn indices(&self) -> Box<dyn Iterator<Item = usize> + '_> {
        match self {
            Batch::Full(n) => Box::new(0..*n),
            Batch::Indices(v) => Box::new(v.iter().copied()),
            Batch::Seeds(_) => panic!("stream batch passed to a finite-sum oracle"),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Batch::Full(_))
    }
}

pub fn draw_batch(pop: Population, spec: BatchSpec, rng: &mut Rng) -> Result<Batch> {
    if spec.size == 0 {
        return Err(Error::EmptyBatch);
    }
    match (spec.sampling, pop) {
        (Sampling::FullPopulation, Population::Finite(n)) => {
            if spec.size != n {
                return Err(Error::Sampling(format!(
                    "full-population batch of size {} on a population of {n}",
                    spec.size
                )));
            }
            Ok(Batch::Full(n))
        }
        (Sampling::FullPopulation, Population::Infinite) => Err(Error::Sampling(
            "full-population batch requested on an infinite stream".into(),
        )),
        (Sampling::WithReplacement, Population::Finite(n)) => {
            if n == 0 {
                return Err(Error::Sampling("population is empty".into()));
            }
            Ok(Batch::Indices((0..spec.size).map(|_| rng.random_range(0..n)).collect()))
        }
        (Sampling::WithReplacement, Population::Infinite) => {
            Ok(Batch::Seeds((0..spec.size).map(|_| rng.random::<u64>()).collect()))
        }
    }
}

/// Problem constants used by the schedules and penalty conditions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Bound on objective subgradient norms.
    pub l_f: f64,
    /// Bound on constraint subgradient norms.
    pub l_g: f64,
    /// Weak-convexity modulus of the objective.
    pub rho_f: f64,
    /// Weak-convexity modulus of each constraint.
    pub rho_g: f64,
    /// Standard deviation of sampled constraint values.
    pub sigma: f64,
    /// Standard deviation of sampled objective subgradients.
    pub sigma_f: f64,
    /// Standard deviation of sampled constraint subgradients.
    pub sigma_g: f64,
    /// Mean-square Lipschitz constant of the sampled constraint map.
    pub lipschitz_g: f64,
}

/// A constrained stochastic problem accessed through sampling oracles.
///
/// Oracles do not require `x` to lie in the feasible set. Batch oracles
/// return the mean over the batch. At kinks they return the minimum-norm
/// element of the subdifferential where it is cheap to identify, and the
/// first index on ties of a max.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn feasible_set(&self) -> &FeasibleSet;
    fn constants(&self) -> &Constants;
    fn objective_population(&self) -> Population;
    fn constraint_population(&self) -> Population;

    /// Exact objective value.
    fn objective(&self, x: &[f64]) -> f64;
    /// Exact constraint values when they are computable.
    fn exact_constraints(&self, x: &[f64]) -> Option<Vec<f64>>;

    fn objective_subgradient(&self, x: &[f64], batch: &Batch) -> Vec<f64>;
    fn constraint_values(&self, x: &[f64], batch: &Batch) -> Vec<f64>;
    fn constraint_subgradient(&self, x: &[f64], i: usize, batch: &Batch) -> Vec<f64>;

    /// Objective subgradient from the full population, or the exact one.
    fn full_objective_subgradient(&self, x: &[f64]) -> Vec<f64> {
        match self.objective_population() {
            Population::Finite(n) => self.objective_subgradient(x, &Batch::Full(n)),
            Population::Infinite => self.objective_subgradient(x, &Batch::Seeds(Vec::new())),
        }
    }

    fn full_constraint_subgradient(&self, x: &[f64], i: usize) -> Vec<f64> {
        match self.constraint_population() {
            Population::Finite(n) => self.constraint_subgradient(x, i, &Batch::Full(n)),
            Population::Infinite => self.constraint_subgradient(x, i, &Batch::Seeds(Vec::new())),
        }
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

fn check_point(p: &dyn Problem, x: &[f64]) -> Result<()> {
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: x.len() });
    }
    if !linalg::all_finite(x) {
        return Err(Error::NonFinite("query point".into()));
    }
    Ok(())
}

/// Draws a constraint batch and returns the batch-mean constraint values.
pub fn eval_constraints(
    p: &dyn Problem,
    x: &[f64],
    spec: BatchSpec,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Batch)> {
    check_point(p, x)?;
    let batch = draw_batch(p.constraint_population(), spec, rng)?;
    Ok((p.constraint_values(x, &batch), batch))
}

pub fn sample_subgrad_f(p: &dyn Problem, x: &[f64], spec: BatchSpec, rng: &mut Rng) -> Result<Vec<f64>> {
    check_point(p, x)?;
    let batch = draw_batch(p.objective_population(), spec, rng)?;
    Ok(p.objective_subgradient(x, &batch))
}

pub fn sample_subgrad_g(
    p: &dyn Problem,
    x: &[f64],
    i: usize,
    spec: BatchSpec,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_point(p, x)?;
    if i >= p.num_constraints() {
        return Err(Error::IndexOutOfRange { index: i, m: p.num_constraints() });
    }
    let batch = draw_batch(p.constraint_population(), spec, rng)?;
    Ok(p.constraint_subgradient(x, i, &batch))
}

/// Exact constraint values, falling back to a full finite-sum batch.
pub fn true_constraints(p: &dyn Problem, x: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = p.exact_constraints(x) {
        return Ok(v);
    }
    match p.constraint_population() {
        Population::Finite(n) => Ok(p.constraint_values(x, &Batch::Full(n))),
        Population::Infinite => Err(Error::Unsupported(format!(
            "{} has no exact constraint oracle",
            p.name()
        ))),
    }
}

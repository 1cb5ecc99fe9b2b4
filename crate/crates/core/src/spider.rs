//! Recursive variance-reduced estimator of the constraint values.
//!
//! Every `q` iterations the estimate is reset from a large batch. In between
//! it is corrected by the difference of the constraint values at the new and
//! previous point, both evaluated on one shared small batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{draw_batch, BatchSpec, Population, Problem};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpiderSchedule {
    pub reset: BatchSpec,
    pub step: BatchSpec,
    pub period: usize,
}

impl SpiderSchedule {
    /// Reset batches covering a finite population become full passes.
    pub fn new(pop: Population, s1: usize, s2: usize, q: usize) -> Result<Self> {
        if s1 == 0 || s2 == 0 {
            return Err(Error::EmptyBatch);
        }
        if q == 0 {
            return Err(Error::param("estimator period must be at least 1"));
        }
        if let Population::Finite(n) = pop {
            if s1 > n {
                return Err(Error::param(format!("reset batch {s1} exceeds population {n}")));
            }
        }
        Ok(Self { reset: BatchSpec::for_population(s1, pop), step: BatchSpec::sampled(s2), period: q })
    }

    /// Full pass every iteration on a finite population.
    pub fn deterministic(pop: Population) -> Result<Self> {
        match pop {
            Population::Finite(n) => Self::new(pop, n, n, 1),
            Population::Infinite => Err(Error::Sampling(
                "deterministic schedule needs a finite population".into(),
            )),
        }
    }

    /// `S1 = N`, `q = S2 = ceil(sqrt(N))`.
    pub fn finite_sum(n: usize) -> Result<Self> {
        let q = ((n as f64).sqrt().ceil() as usize).max(1);
        Self::new(Population::Finite(n), n, q, q)
    }
}

#[derive(Clone, Debug)]
pub struct SpiderState {
    u: Vec<f64>,
    k: u64,
    schedule: SpiderSchedule,
    last_point: Vec<f64>,
}

impl SpiderState {
    /// Initial estimate at `x`. Returns the state and the number of
    /// per-sample constraint evaluations spent.
    pub fn reset(p: &dyn Problem, x: &[f64], schedule: SpiderSchedule, rng: &mut Rng) -> Result<(Self, u64)> {
        check_dim(p, x)?;
        let batch = draw_batch(p.constraint_population(), schedule.reset, rng)?;
        let u = p.constraint_values(x, &batch);
        let n = batch.len() as u64;
        Ok((Self { u, k: 0, schedule, last_point: x.to_vec() }, n))
    }

    /// Moves the estimate to the next iterate, resetting or correcting as the
    /// period requires.
    pub fn advance(&mut self, p: &dyn Problem, x: &[f64], rng: &mut Rng) -> Result<u64> {
        if self.due_reset() {
            self.refresh(p, x, rng)
        } else {
            self.step(p, x, rng)
        }
    }

    fn due_reset(&self) -> bool {
        (self.k + 1) % self.schedule.period as u64 == 0
    }

    pub fn refresh(&mut self, p: &dyn Problem, x: &[f64], rng: &mut Rng) -> Result<u64> {
        check_dim(p, x)?;
        if !self.due_reset() {
            return Err(Error::Cadence(format!("reset requested at k = {}", self.k + 1)));
        }
        let batch = draw_batch(p.constraint_population(), self.schedule.reset, rng)?;
        self.u = p.constraint_values(x, &batch);
        self.k += 1;
        self.last_point.copy_from_slice(x);
        Ok(batch.len() as u64)
    }

    pub fn step(&mut self, p: &dyn Problem, x: &[f64], rng: &mut Rng) -> Result<u64> {
        check_dim(p, x)?;
        if self.due_reset() {
            return Err(Error::Cadence(format!("correction requested at reset step k = {}", self.k + 1)));
        }
        let batch = draw_batch(p.constraint_population(), self.schedule.step, rng)?;
        let new = p.constraint_values(x, &batch);
        let old = p.constraint_values(&self.last_point, &batch);
        for i in 0..self.u.len() {
            self.u[i] += new[i] - old[i];
        }
        self.k += 1;
        self.last_point.copy_from_slice(x);
        Ok(2 * batch.len() as u64)
    }

    pub fn estimate(&self) -> &[f64] {
        &self.u
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn schedule(&self) -> &SpiderSchedule {
        &self.schedule
    }

    pub fn last_point(&self) -> &[f64] {
        &self.last_point
    }
}

fn check_dim(p: &dyn Problem, x: &[f64]) -> Result<()> {
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: x.len() });
    }
    if !linalg::all_finite(x) {
        return Err(Error::NonFinite("estimator point".into()));
    }
    Ok(())
}

/// Squared error of an estimate against the true constraint values.
pub fn estimator_error(u: &[f64], g_true: &[f64]) -> f64 {
    linalg::dist(u, g_true).powi(2)
}

//! The smoothed-penalty solver: one projected subgradient step per iteration
//! on `f + beta * sum_i H(g_i)`, with the penalty weights taken from the
//! recursive constraint estimator.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{self, Record, RunTrace};
use crate::oracle::{draw_batch, true_constraints, BatchSpec, Population, Problem};
use crate::penalty::PenaltyConfig;
use crate::rng::{self, Rng};
use crate::spider::{estimator_error, SpiderSchedule, SpiderState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Constant(f64),
    /// `c0 / ceil(sqrt(k / q))`, with the divisor taken as 1 while it is 0.
    Decaying { c0: f64 },
}

impl StepRule {
    pub fn alpha(&self, k: u64, q: usize) -> f64 {
        match *self {
            StepRule::Constant(c) => c,
            StepRule::Decaying { c0 } => c0 / ceil_sqrt_ratio(k, q as u64).max(1) as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let c = match *self {
            StepRule::Constant(c) => c,
            StepRule::Decaying { c0 } => c0,
        };
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::param(format!("step size must be positive, got {c}")));
        }
        Ok(())
    }
}

/// Smallest `s` with `s * s * q >= k`, i.e. `ceil(sqrt(k / q))`.
pub fn ceil_sqrt_ratio(k: u64, q: u64) -> u64 {
    if k == 0 {
        return 0;
    }
    let mut s = ((k as f64 / q as f64).sqrt()) as u64;
    while (s as u128) * (s as u128) * (q as u128) < k as u128 {
        s += 1;
    }
    while s > 0 && ((s - 1) as u128) * ((s - 1) as u128) * (q as u128) >= k as u128 {
        s -= 1;
    }
    s
}

/// When to evaluate the stationarity measure and when to stop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monitoring {
    pub max_dp_g: f64,
    pub max_iters: Option<u64>,
    /// Stop once the stationarity measure drops below this.
    pub svio_stop: Option<f64>,
    /// Iterations between stationarity checks; 0 picks a default.
    pub svio_every: u64,
    /// Tolerance of the inner solve behind the stationarity measure.
    pub svio_tol: f64,
    /// Iterations between trace records; 0 follows `svio_every`.
    pub record_every: u64,
    pub wall_time: bool,
}

impl Default for Monitoring {
    fn default() -> Self {
        Self {
            max_dp_g: 1000.0,
            max_iters: None,
            svio_stop: None,
            svio_every: 0,
            svio_tol: 1e-2,
            record_every: 0,
            wall_time: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub penalty: PenaltyConfig,
    pub schedule: SpiderSchedule,
    pub step: StepRule,
    pub f_batch: BatchSpec,
    pub g_batch: BatchSpec,
    pub monitor: Monitoring,
    pub seed: u64,
}

impl SolverConfig {
    /// Full passes everywhere and a constant step.
    pub fn deterministic(p: &dyn Problem, penalty: PenaltyConfig, alpha: f64) -> Result<Self> {
        let schedule = SpiderSchedule::deterministic(p.constraint_population())?;
        let f_batch = full_or_single(p.objective_population());
        Ok(Self {
            penalty,
            schedule,
            step: StepRule::Constant(alpha),
            f_batch,
            g_batch: schedule.reset,
            monitor: Monitoring::default(),
            seed: 0,
        })
    }

    /// Full-pass resets every `ceil(sqrt(N))` iterations, single-sample
    /// subgradients and a decaying step.
    pub fn stochastic(p: &dyn Problem, penalty: PenaltyConfig, c0: f64) -> Result<Self> {
        let n = p.constraint_population().size().ok_or_else(|| {
            Error::Sampling("stochastic defaults need a finite population; set the schedule explicitly".into())
        })?;
        Ok(Self {
            penalty,
            schedule: SpiderSchedule::finite_sum(n)?,
            step: StepRule::Decaying { c0 },
            f_batch: BatchSpec::sampled(1),
            g_batch: BatchSpec::sampled(1),
            monitor: Monitoring::default(),
            seed: 0,
        })
    }

    pub fn is_deterministic(&self) -> bool {
        self.schedule.period == 1 && self.schedule.reset.sampling == crate::oracle::Sampling::FullPopulation
    }
}

fn full_or_single(pop: Population) -> BatchSpec {
    match pop {
        Population::Finite(n) => BatchSpec::full(n),
        Population::Infinite => BatchSpec::sampled(1),
    }
}

/// Data-pass counter kept as an exact sample count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PassCounter {
    samples: u64,
    population: Option<usize>,
}

impl PassCounter {
    pub fn new(pop: Population) -> Self {
        Self { samples: 0, population: pop.size() }
    }

    pub fn add(&mut self, samples: u64) {
        self.samples += samples;
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Samples over population size; raw sample count on a stream.
    pub fn passes(&self) -> f64 {
        match self.population {
            Some(n) => self.samples as f64 / n as f64,
            None => self.samples as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stationary,
    Budget,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub x: Vec<f64>,
    pub iterations: u64,
    pub stop: StopReason,
    /// `(k, ||u_k - g(x_k)||^2)` near record points, when exact values exist.
    pub estimator_gaps: Vec<(u64, f64)>,
}

impl RunOutcome {
    pub fn last(&self) -> &Record {
        self.trace.records.last().expect("trace always holds the initial record")
    }
}

/// Default stationarity cadence: about one hundred checks over the budget.
pub fn default_svio_every(mon: &Monitoring, per_iter_dp_g: f64) -> u64 {
    let est = match mon.max_iters {
        Some(k) => k as f64,
        None => mon.max_dp_g / per_iter_dp_g.max(1e-12),
    };
    ((est / 100.0).floor() as u64).max(1)
}

/// Average DP(g) per iteration of a schedule, counting one subgradient batch
/// per iteration.
pub fn per_iteration_dp_g(schedule: &SpiderSchedule, g_batch: BatchSpec, pop: Population) -> f64 {
    let n = match pop.size() {
        Some(n) => n as f64,
        None => 1.0,
    };
    let q = schedule.period as f64;
    let per_period = schedule.reset.size as f64 + 2.0 * (q - 1.0) * schedule.step.size as f64;
    (per_period / q + g_batch.size as f64) / n
}

/// Trace recording and stopping checks shared by the solvers.
pub(crate) struct Monitor<'a> {
    mon: &'a Monitoring,
    svio_every: u64,
    record_every: u64,
    started: Instant,
    pub(crate) trace: RunTrace,
}

impl<'a> Monitor<'a> {
    pub(crate) fn new(mon: &'a Monitoring, per_iter_dp_g: f64) -> Self {
        let svio_every = if mon.svio_every == 0 { default_svio_every(mon, per_iter_dp_g) } else { mon.svio_every };
        let record_every = if mon.record_every == 0 { svio_every } else { mon.record_every };
        Self { mon, svio_every, record_every, started: Instant::now(), trace: RunTrace::default() }
    }

    pub(crate) fn out_of_budget(&self, k: u64, dp_g: f64) -> Option<StopReason> {
        if let Some(m) = self.mon.max_iters {
            if k >= m {
                return Some(StopReason::MaxIterations);
            }
        }
        if dp_g >= self.mon.max_dp_g {
            return Some(StopReason::Budget);
        }
        None
    }

    /// Records iterate `k` if it is due (or `force`), returning whether the
    /// stationarity target has been met.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn observe(
        &mut self,
        p: &dyn Problem,
        k: u64,
        alpha: f64,
        x: &[f64],
        dp_f: f64,
        dp_g: f64,
        force: bool,
    ) -> Result<bool> {
        let svio_due = self.mon.svio_stop.is_some() && k % self.svio_every == 0;
        let record_due = k % self.record_every == 0;
        if !(force || svio_due || record_due) {
            return Ok(false);
        }
        if self.trace.records.last().is_some_and(|r| r.k == k) {
            return Ok(false);
        }
        let svio = if svio_due || (force && self.mon.svio_stop.is_some()) {
            Some(metrics::stationarity_violation(p, x, self.mon.svio_tol)?)
        } else {
            None
        };
        let g = true_constraints(p, x)?;
        let wall_ms = if self.mon.wall_time { self.started.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        self.trace.records.push(Record {
            k,
            alpha,
            fv: p.objective(x),
            cvio: metrics::constraint_violation(&g),
            svio,
            dp_f,
            dp_g,
            wall_ms,
        });
        Ok(match (svio, self.mon.svio_stop) {
            (Some(s), Some(t)) => s < t,
            _ => false,
        })
    }
}

/// Iterate, estimator and counters of a running solve.
pub struct SolverState {
    pub x: Vec<f64>,
    pub spider: Option<SpiderState>,
    pub k: u64,
    pub dp_f: PassCounter,
    pub dp_g: PassCounter,
    rng_f: Rng,
    rng_g: Rng,
    rng_batch: Rng,
}

impl SolverState {
    pub fn new(p: &dyn Problem, cfg: &SolverConfig, x0: &[f64]) -> Result<Self> {
        let x = p.feasible_set().project(x0)?;
        Ok(Self {
            x,
            spider: None,
            k: 0,
            dp_f: PassCounter::new(p.objective_population()),
            dp_g: PassCounter::new(p.constraint_population()),
            rng_f: rng::stream(cfg.seed, rng::STREAM_OBJECTIVE),
            rng_g: rng::stream(cfg.seed, rng::STREAM_CONSTRAINT),
            rng_batch: rng::stream(cfg.seed, rng::STREAM_BATCH),
        })
    }

    /// Current constraint estimate, if one has been formed.
    pub fn estimate(&self) -> Option<&[f64]> {
        self.spider.as_ref().map(|s| s.estimate())
    }
}

/// One iteration: refresh the estimate at `x_k`, then step to `x_{k+1}`.
/// Returns the step size used.
pub fn econ_step(p: &dyn Problem, cfg: &SolverConfig, st: &mut SolverState) -> Result<f64> {
    match st.spider.as_mut() {
        None => {
            let (s, used) = SpiderState::reset(p, &st.x, cfg.schedule, &mut st.rng_batch)?;
            st.dp_g.add(used);
            st.spider = Some(s);
        }
        Some(s) => {
            let used = s.advance(p, &st.x, &mut st.rng_batch)?;
            st.dp_g.add(used);
        }
    }
    let u = st.spider.as_ref().unwrap().estimate();
    let weights: Vec<f64> = u.iter().map(|&v| cfg.penalty.weight(v)).collect();

    let fb = draw_batch(p.objective_population(), cfg.f_batch, &mut st.rng_f)?;
    let mut dir = p.objective_subgradient(&st.x, &fb);
    st.dp_f.add(fb.len() as u64);

    if weights.iter().any(|&w| w > 0.0) {
        let gb = draw_batch(p.constraint_population(), cfg.g_batch, &mut st.rng_g)?;
        st.dp_g.add(gb.len() as u64);
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                let z = p.constraint_subgradient(&st.x, i, &gb);
                linalg::axpy(cfg.penalty.beta * w, &z, &mut dir);
            }
        }
    }
    let alpha = cfg.step.alpha(st.k, cfg.schedule.period);
    linalg::axpy(-alpha, &dir, &mut st.x);
    p.feasible_set().project_in_place(&mut st.x);
    if !linalg::all_finite(&st.x) {
        return Err(Error::NonFinite(format!("iterate at k = {}", st.k + 1)));
    }
    st.k += 1;
    Ok(alpha)
}

pub fn run_3s_econ(p: &dyn Problem, cfg: &SolverConfig) -> Result<RunOutcome> {
    run_3s_econ_from(p, cfg, &p.initial_point())
}

pub fn run_3s_econ_from(p: &dyn Problem, cfg: &SolverConfig, x0: &[f64]) -> Result<RunOutcome> {
    cfg.step.validate()?;
    if cfg.f_batch.size == 0 || cfg.g_batch.size == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut st = SolverState::new(p, cfg, x0)?;
    let per_iter = per_iteration_dp_g(&cfg.schedule, cfg.g_batch, p.constraint_population());
    let mut mon = Monitor::new(&cfg.monitor, per_iter);
    let mut gaps = Vec::new();
    let mut alpha = cfg.step.alpha(0, cfg.schedule.period);
    let stop = loop {
        let before = mon.trace.records.len();
        if mon.observe(p, st.k, alpha, &st.x, st.dp_f.passes(), st.dp_g.passes(), st.k == 0)? {
            break StopReason::Stationary;
        }
        if mon.trace.records.len() > before {
            if let Some(s) = st.spider.as_ref() {
                if let Ok(g) = true_constraints(p, s.last_point()) {
                    gaps.push((st.k - 1, estimator_error(s.estimate(), &g)));
                }
            }
        }
        if let Some(r) = mon.out_of_budget(st.k, st.dp_g.passes()) {
            break r;
        }
        alpha = econ_step(p, cfg, &mut st)?;
    };
    mon.observe(p, st.k, alpha, &st.x, st.dp_f.passes(), st.dp_g.passes(), true)?;
    Ok(RunOutcome { trace: mon.trace, x: st.x, iterations: st.k, stop, estimator_gaps: gaps })
}

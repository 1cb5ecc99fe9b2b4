//! Switching subgradient baseline and the inner solver for the proximal
//! subproblem behind the stationarity measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{draw_batch, true_constraints, BatchSpec, Population, Problem};
use crate::rng;
use crate::solver::{Monitor, Monitoring, PassCounter, RunOutcome, StopReason};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintCheck {
    /// Exact constraint values from a full pass.
    Exact,
    /// Batch-mean constraint values.
    Sampled(BatchSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsgConfig {
    pub alpha: f64,
    /// Objective steps are taken while every constraint is below this.
    pub tol: f64,
    /// Polyak step capped at `alpha` on constraint steps; plain `alpha` otherwise.
    pub polyak: bool,
    pub check: ConstraintCheck,
    pub f_batch: BatchSpec,
    pub g_batch: BatchSpec,
    pub monitor: Monitoring,
    pub seed: u64,
    /// Keep one [`SwitchEvent`] per iteration.
    pub log_switches: bool,
}

impl SsgConfig {
    pub fn deterministic(p: &dyn Problem, alpha: f64) -> Result<Self> {
        let f = match p.objective_population() {
            Population::Finite(n) => BatchSpec::full(n),
            Population::Infinite => BatchSpec::sampled(1),
        };
        let g = match p.constraint_population() {
            Population::Finite(n) => BatchSpec::full(n),
            Population::Infinite => {
                return Err(Error::Sampling("exact feasibility checks need a finite population".into()))
            }
        };
        Ok(Self {
            alpha,
            tol: 0.0,
            polyak: true,
            check: ConstraintCheck::Exact,
            f_batch: f,
            g_batch: g,
            monitor: Monitoring::default(),
            seed: 0,
            log_switches: false,
        })
    }

    /// Single-sample subgradients and checks on a batch of `s2` samples.
    pub fn stochastic(alpha: f64, s2: usize) -> Self {
        Self {
            alpha,
            tol: 0.0,
            polyak: true,
            check: ConstraintCheck::Sampled(BatchSpec::sampled(s2)),
            f_batch: BatchSpec::sampled(1),
            g_batch: BatchSpec::sampled(1),
            monitor: Monitoring::default(),
            seed: 0,
            log_switches: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub k: u64,
    pub max_violation: f64,
    pub constraint_step: bool,
}

#[derive(Clone, Debug)]
pub struct SsgOutcome {
    pub run: RunOutcome,
    pub switches: Vec<SwitchEvent>,
}

pub fn run_ssg(p: &dyn Problem, cfg: &SsgConfig) -> Result<SsgOutcome> {
    run_ssg_from(p, cfg, &p.initial_point())
}

pub fn run_ssg_from(p: &dyn Problem, cfg: &SsgConfig, x0: &[f64]) -> Result<SsgOutcome> {
    if !(cfg.alpha > 0.0) || !cfg.alpha.is_finite() {
        return Err(Error::param(format!("step size must be positive, got {}", cfg.alpha)));
    }
    let mut x = p.feasible_set().project(x0)?;
    let mut dp_f = PassCounter::new(p.objective_population());
    let mut dp_g = PassCounter::new(p.constraint_population());
    let mut rng_f = rng::stream(cfg.seed, rng::STREAM_OBJECTIVE);
    let mut rng_g = rng::stream(cfg.seed, rng::STREAM_CONSTRAINT);
    let mut rng_b = rng::stream(cfg.seed, rng::STREAM_BATCH);
    let n_g = p.constraint_population().size().map(|n| n as f64).unwrap_or(1.0);
    let check_size = match cfg.check {
        ConstraintCheck::Exact => n_g,
        ConstraintCheck::Sampled(b) => b.size as f64,
    };
    let mut mon = Monitor::new(&cfg.monitor, (check_size + cfg.g_batch.size as f64) / n_g);
    let mut switches = Vec::new();
    let mut k = 0u64;
    let mut step = cfg.alpha;
    let stop = loop {
        if mon.observe(p, k, step, &x, dp_f.passes(), dp_g.passes(), k == 0)? {
            break StopReason::Stationary;
        }
        if let Some(r) = mon.out_of_budget(k, dp_g.passes()) {
            break r;
        }
        let g = match cfg.check {
            ConstraintCheck::Exact => {
                let v = true_constraints(p, &x)?;
                dp_g.add(p.constraint_population().size().unwrap_or(0) as u64);
                v
            }
            ConstraintCheck::Sampled(spec) => {
                let b = draw_batch(p.constraint_population(), spec, &mut rng_b)?;
                dp_g.add(b.len() as u64);
                p.constraint_values(&x, &b)
            }
        };
        let worst = linalg::argmax_first(&g).unwrap_or(0);
        let violation = g.get(worst).copied().unwrap_or(f64::NEG_INFINITY);
        let constraint_step = violation > cfg.tol;
        if constraint_step {
            let b = draw_batch(p.constraint_population(), cfg.g_batch, &mut rng_g)?;
            dp_g.add(b.len() as u64);
            let z = p.constraint_subgradient(&x, worst, &b);
            let nz = linalg::norm_sq(&z);
            step = if cfg.polyak && nz > 0.0 { (violation / nz).min(cfg.alpha) } else { cfg.alpha };
            linalg::axpy(-step, &z, &mut x);
        } else {
            let b = draw_batch(p.objective_population(), cfg.f_batch, &mut rng_f)?;
            dp_f.add(b.len() as u64);
            let z = p.objective_subgradient(&x, &b);
            step = cfg.alpha;
            linalg::axpy(-step, &z, &mut x);
        }
        p.feasible_set().project_in_place(&mut x);
        if !linalg::all_finite(&x) {
            return Err(Error::NonFinite(format!("iterate at k = {}", k + 1)));
        }
        if cfg.log_switches {
            switches.push(SwitchEvent { k, max_violation: violation, constraint_step });
        }
        k += 1;
    };
    mon.observe(p, k, step, &x, dp_f.passes(), dp_g.passes(), true)?;
    Ok(SsgOutcome {
        run: RunOutcome { trace: mon.trace, x, iterations: k, stop, estimator_gaps: Vec::new() },
        switches,
    })
}

pub const PROX_MAX_ITERS: usize = 5000;
const PLATEAU_WINDOW: usize = 100;
const RESTORE_STEPS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct ProxSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Whether the plateau test fired before the iteration cap.
    pub converged: bool,
}

/// Approximately solves
/// `min f(x) + rho_f ||x - c||^2  s.t.  g_i(x) + rho_g ||x - c||^2 <= 0,  x in X`
/// with exact oracles, by switching subgradient steps `2 / (mu (k + 2))`
/// and a `(k + 1)`-weighted average of the objective-step iterates.
///
/// Stops when the average moves less than `tol` times its distance to the
/// center over a window of iterations, or at [`PROX_MAX_ITERS`]. When the
/// center is feasible the result never has both a larger subproblem objective
/// and a larger violation than the center.
pub fn solve_prox_subproblem(p: &dyn Problem, center: &[f64], tol: f64) -> Result<ProxSolution> {
    solve_prox_subproblem_capped(p, center, tol, PROX_MAX_ITERS)
}

/// [`solve_prox_subproblem`] with an explicit iteration cap.
pub fn solve_prox_subproblem_capped(p: &dyn Problem, center: &[f64], tol: f64, max_iters: usize) -> Result<ProxSolution> {
    if center.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: center.len() });
    }
    if !(tol > 0.0) {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    let c = p.feasible_set().project(center)?;
    let k = p.constants();
    let (rho_f, rho_g) = (k.rho_f, k.rho_g);
    let mu = if rho_f > 0.0 { rho_f } else { 1.0 };
    let d = p.dim();

    let sub_obj = |x: &[f64]| p.objective(x) + rho_f * linalg::dist(x, &c).powi(2);
    let sub_cons = |x: &[f64]| -> Result<Vec<f64>> {
        let r = rho_g * linalg::dist(x, &c).powi(2);
        Ok(true_constraints(p, x)?.into_iter().map(|v| v + r).collect())
    };

    let mut x = c.clone();
    let mut avg = vec![0.0; d];
    let mut wsum = 0.0;
    let mut g_obj = linalg::norm(&p.full_objective_subgradient(&c));
    let mut g_con = (0..p.num_constraints())
        .map(|i| linalg::norm(&p.full_constraint_subgradient(&c, i)))
        .fold(0.0_f64, f64::max);
    let mut snapshot: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut it = 0;
    while it < max_iters {
        let alpha = 2.0 / (mu * (it as f64 + 2.0));
        let psi = sub_cons(&x)?;
        let worst = linalg::argmax_first(&psi);
        let viol = worst.map_or(f64::NEG_INFINITY, |i| psi[i]);
        let threshold = alpha * g_obj.max(1e-12) * g_con.max(1e-12);
        if viol > threshold {
            let i = worst.unwrap();
            let mut z = p.full_constraint_subgradient(&x, i);
            linalg::axpy(2.0 * rho_g, &linalg::sub(&x, &c), &mut z);
            let nz = linalg::norm_sq(&z);
            g_con = g_con.max(nz.sqrt());
            if nz == 0.0 {
                break;
            }
            linalg::axpy(-viol / nz, &z, &mut x);
        } else {
            let w = it as f64 + 1.0;
            wsum += w;
            linalg::axpy(w / wsum, &linalg::sub(&x, &avg), &mut avg);
            let mut z = p.full_objective_subgradient(&x);
            linalg::axpy(2.0 * rho_f, &linalg::sub(&x, &c), &mut z);
            g_obj = g_obj.max(linalg::norm(&z));
            linalg::axpy(-alpha, &z, &mut x);
        }
        p.feasible_set().project_in_place(&mut x);
        it += 1;
        if it % PLATEAU_WINDOW == 0 && wsum > 0.0 {
            if let Some(prev) = &snapshot {
                let moved = linalg::dist(prev, &avg);
                if it >= 2 * PLATEAU_WINDOW && moved <= tol * linalg::dist(&avg, &c).max(1e-12) {
                    converged = true;
                    break;
                }
            }
            snapshot = Some(avg.clone());
        }
    }
    let mut candidate = if wsum > 0.0 { avg } else { x };
    // Objective steps are accepted while slightly infeasible, which biases
    // the average outward along the active constraint normals.
    for _ in 0..RESTORE_STEPS {
        let psi = sub_cons(&candidate)?;
        let Some(i) = linalg::argmax_first(&psi) else { break };
        if psi[i] <= 0.0 {
            break;
        }
        let mut z = p.full_constraint_subgradient(&candidate, i);
        linalg::axpy(2.0 * rho_g, &linalg::sub(&candidate, &c), &mut z);
        let nz = linalg::norm_sq(&z);
        if nz == 0.0 {
            break;
        }
        linalg::axpy(-psi[i] / nz, &z, &mut candidate);
        p.feasible_set().project_in_place(&mut candidate);
    }
    let viol = |v: &[f64]| v.iter().fold(0.0_f64, |a, &g| a.max(g));
    // An infeasible center is never its own prox point, so falling back to it
    // would report a false zero distance.
    let center_viol = viol(&sub_cons(&c)?);
    let cand_worse = sub_obj(&candidate) > sub_obj(&c) && viol(&sub_cons(&candidate)?) > center_viol;
    let keep_center = cand_worse && center_viol <= 0.0;
    Ok(ProxSolution { x: if keep_center { c } else { candidate }, iterations: it, converged })
}

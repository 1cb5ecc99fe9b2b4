//! Huber-smoothed hinge penalty and the parameter schedules that go with it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{self, Batch, Constants, Population, Problem};
use crate::rng::Rng;

/// Penalty weight `beta` and smoothing width `nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub beta: f64,
    pub nu: f64,
}

impl PenaltyConfig {
    pub fn new(beta: f64, nu: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::param(format!("beta must be positive, got {beta}")));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::param(format!("nu must be positive, got {nu}")));
        }
        Ok(Self { beta, nu })
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        huber(z, self.nu)
    }

    #[inline]
    pub fn weight(&self, z: f64) -> f64 {
        (z / self.nu).clamp(0.0, 1.0)
    }

    /// `f + beta * sum_i H(g_i)`.
    pub fn penalized_value(&self, f_val: f64, g_vals: &[f64]) -> f64 {
        let mut s = 0.0;
        for &g in g_vals {
            s += self.value(g);
        }
        f_val + self.beta * s
    }
}

#[inline]
fn huber(z: f64, nu: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z <= nu {
        z * z / (2.0 * nu)
    } else {
        z - 0.5 * nu
    }
}

pub fn huber_value(z: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::param(format!("smoothing width must be positive, got {nu}")));
    }
    Ok(huber(z, nu))
}

/// Derivative of the smoothed hinge, `clamp(z / nu, 0, 1)`.
pub fn huber_weight(z: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::param(format!("smoothing width must be positive, got {nu}")));
    }
    Ok((z / nu).clamp(0.0, 1.0))
}

/// Weak-convexity modulus and subgradient bound of the penalized objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedModuli {
    pub rho: f64,
    pub l_big_f: f64,
}

pub fn derived_moduli(c: &Constants, m: usize, beta: f64) -> DerivedModuli {
    let m = m as f64;
    let rho = c.rho_f + beta * m * c.rho_g;
    let bm2 = beta * beta * m * m;
    let l2 = 2.0 * (c.sigma_f.powi(2) + c.l_f.powi(2) + bm2 * c.sigma_g.powi(2) + bm2 * c.l_g.powi(2));
    DerivedModuli { rho, l_big_f: l2.sqrt() }
}

/// Constraint-qualification parameters: `b`, `b_g` and `rho_bar`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CqParams {
    pub b: f64,
    pub b_g: f64,
    pub rho_bar: f64,
}

pub fn slater_theta(cq: &CqParams, rho_g: f64) -> Result<f64> {
    if !(cq.rho_bar > rho_g) {
        return Err(Error::Infeasible(format!(
            "rho_bar = {} must exceed rho_g = {rho_g}",
            cq.rho_bar
        )));
    }
    if !(cq.b > 0.0) {
        return Err(Error::param(format!("CQ margin b must be positive, got {}", cq.b)));
    }
    Ok((2.0 * cq.b * (cq.rho_bar - rho_g)).sqrt())
}

/// CQ parameters from a strictly feasible point with constraint values `g_y`
/// in a set of diameter `diameter`.
pub fn cq_from_slater(g_y: &[f64], diameter: f64, b_g: f64) -> Result<CqParams> {
    let worst = linalg::max_or(g_y, f64::INFINITY);
    if !(worst < 0.0) {
        return Err(Error::Infeasible(format!(
            "point is not strictly feasible (max constraint {worst})"
        )));
    }
    if !(diameter > 0.0) || !(b_g > 0.0) {
        return Err(Error::param("diameter and b_g must be positive"));
    }
    Ok(CqParams { b: -worst / 2.0, b_g, rho_bar: -worst / (diameter * diameter) })
}

/// Lower bound on the curvature constant of a two-group logistic
/// fairness constraint.
pub fn logistic_cq_bound(n_p: usize, n_u: usize, d_a: f64, d: f64) -> f64 {
    let s = linalg::sigmoid(d_a * d);
    s * (1.0 - s) / n_p.max(n_u) as f64
}

/// Multi-class variant: `max_class` is the largest class size.
pub fn multiclass_cq_bound(max_class: usize, d_a: f64, d: f64) -> f64 {
    let s = linalg::sigmoid(2.0 * d_a * d);
    s * (1.0 - s) / max_class as f64
}

/// Everything about a problem the theoretical schedule depends on.
#[derive(Clone, Debug, Serialize)]
pub struct TheoryInputs {
    pub constants: Constants,
    pub m: usize,
    /// Diameter of the feasible set.
    pub diameter: f64,
    pub population: Population,
    pub cq: CqParams,
}

impl TheoryInputs {
    pub fn from_problem(p: &dyn Problem, cq: CqParams) -> Self {
        Self {
            constants: p.constants().clone(),
            m: p.num_constraints(),
            diameter: p.feasible_set().diameter(),
            population: p.constraint_population(),
            cq,
        }
    }

    /// Range bound of the objective over the set.
    pub fn b_f(&self) -> f64 {
        self.constants.l_f * self.diameter
    }

    /// `b_g - m rho_g D^2`, which must be positive.
    fn margin(&self) -> Result<f64> {
        let c = &self.constants;
        let margin = self.cq.b_g - self.m as f64 * c.rho_g * self.diameter * self.diameter;
        if !(margin > 0.0) {
            return Err(Error::Infeasible(format!(
                "b_g = {} does not exceed m rho_g D^2 = {}",
                self.cq.b_g,
                self.m as f64 * c.rho_g * self.diameter * self.diameter
            )));
        }
        Ok(margin)
    }
}

/// Admissible region for `(beta, nu)` at target accuracy `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenaltyBounds {
    pub theta: f64,
    /// `beta` must be strictly larger than this.
    pub beta_min: f64,
    /// `nu` must be at most this; depends on `beta`.
    pub nu_max: f64,
}

pub fn penalty_bounds(inputs: &TheoryInputs, eps: f64, beta: f64) -> Result<PenaltyBounds> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("eps must be positive, got {eps}")));
    }
    let c = &inputs.constants;
    let margin = inputs.margin()?;
    let theta = slater_theta(&inputs.cq, c.rho_g)?;
    let d2 = inputs.diameter * inputs.diameter;
    let beta_min = ((c.l_f + eps) / theta).max(2.0 * (inputs.b_f() + c.rho_f * d2) / margin);
    let m = inputs.m as f64;
    let nu_max = inputs.cq.b_g.min(eps / beta).min(margin / (2.0 * m)).min(eps / 2.0);
    Ok(PenaltyBounds { theta, beta_min, nu_max })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub s1: usize,
    pub s2: usize,
    pub q: usize,
}

/// Batch sizes and period of the recursive estimator. Finite populations
/// reset with a full pass.
#[allow(clippy::too_many_arguments)]
pub fn batch_schedule(
    eps_bar: f64,
    nu: f64,
    beta: f64,
    m: usize,
    l_g: f64,
    sigma_g: f64,
    sigma: f64,
    population: Population,
) -> BatchSchedule {
    let s1 = match population {
        Population::Finite(n) => n.max(1),
        Population::Infinite => {
            let raw = 16.0 / (eps_bar * eps_bar) / (nu * nu)
                * m as f64
                * (l_g * l_g + sigma_g * sigma_g)
                * beta
                * beta
                * sigma
                * sigma;
            ceil_usize(raw).max(1)
        }
    };
    let q = ceil_usize((s1 as f64).sqrt()).max(1);
    BatchSchedule { s1, s2: q, q }
}

fn ceil_usize(v: f64) -> usize {
    // Guard against representation error pushing an exact integer up.
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremSchedule {
    pub beta: f64,
    pub nu: f64,
    pub eps: f64,
    pub eps_bar: f64,
    pub theta: f64,
    pub rho: f64,
    pub l_big_f: f64,
    pub batches: BatchSchedule,
    pub alpha: f64,
    /// Number of estimator periods; the run length is `outer * q`.
    pub outer: u64,
    pub delta: f64,
}

impl TheoremSchedule {
    pub fn iterations(&self) -> u64 {
        self.outer.saturating_mul(self.batches.q as u64)
    }
}

/// Theoretical schedule for target accuracy `eps` given `(beta, nu)`.
///
/// `eps_bar` is the largest value the conditions allow. `sigma` is the
/// constraint-value noise level used for the reset batch size; `delta`
/// bounds the initial Moreau-envelope gap.
pub fn theorem_schedule(
    inputs: &TheoryInputs,
    penalty: PenaltyConfig,
    eps: f64,
    delta: f64,
    sigma: f64,
) -> Result<TheoremSchedule> {
    let c = &inputs.constants;
    let bounds = penalty_bounds(inputs, eps, penalty.beta)?;
    let PenaltyConfig { beta, nu } = penalty;
    if !(beta > bounds.beta_min) {
        return Err(Error::Infeasible(format!(
            "beta = {beta} must exceed {}",
            bounds.beta_min
        )));
    }
    if !(nu <= bounds.nu_max) {
        return Err(Error::Infeasible(format!("nu = {nu} must be at most {}", bounds.nu_max)));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::param(format!("delta must be positive, got {delta}")));
    }
    let moduli = derived_moduli(c, inputs.m, beta);
    let gap = beta * bounds.theta - c.l_f;
    let m = inputs.m as f64;
    let mut eps_bar = eps * (gap / (2.0 * inputs.cq.b_g)).min(gap / (m * beta * c.l_g + gap));
    if moduli.rho > 0.0 {
        eps_bar = eps_bar.min(eps * 2.0 * moduli.rho);
    }
    let batches = batch_schedule(eps_bar, nu, beta, inputs.m, c.l_g, c.sigma_g, sigma, inputs.population);

    let lf = moduli.l_big_f;
    let mut alpha = f64::INFINITY;
    if moduli.rho > 0.0 {
        alpha = eps_bar * eps_bar / (16.0 * moduli.rho * lf * lf);
    }
    let noise = (m * (c.l_g * c.l_g + c.sigma_g * c.sigma_g)).sqrt();
    if noise * c.lipschitz_g > 0.0 {
        alpha = alpha.min(eps_bar * nu / (4.0 * beta * noise * c.lipschitz_g * lf));
    }
    if !alpha.is_finite() {
        return Err(Error::Unsupported("step size is unbounded for these constants".into()));
    }
    let outer = (16.0 / (eps_bar * eps_bar) / batches.q as f64 / alpha * delta).ceil();
    Ok(TheoremSchedule {
        beta,
        nu,
        eps,
        eps_bar,
        theta: bounds.theta,
        rho: moduli.rho,
        l_big_f: lf,
        batches,
        alpha,
        outer: if outer >= u64::MAX as f64 { u64::MAX } else { outer as u64 },
        delta,
    })
}

/// Default bound on the initial Moreau gap from values at the start point.
pub fn default_delta(inputs: &TheoryInputs, beta: f64, g_x0: &[f64]) -> f64 {
    let worst = g_x0.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    inputs.b_f() + beta * inputs.m as f64 * (inputs.constants.l_g * inputs.diameter + worst)
}

/// Empirical noise levels at `x`, from `draws` single-sample oracle calls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseEstimate {
    pub sigma: f64,
    pub sigma_f: f64,
    pub sigma_g: f64,
}

pub fn estimate_noise(p: &dyn Problem, x: &[f64], draws: usize, rng: &mut Rng) -> Result<NoiseEstimate> {
    if draws < 2 {
        return Err(Error::param("need at least two draws"));
    }
    let m = p.num_constraints();
    let d = p.dim();
    let one = oracle::BatchSpec::sampled(1);
    let mut gv = Vec::with_capacity(draws);
    let mut fs = Vec::with_capacity(draws);
    let mut gs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let (v, _) = oracle::eval_constraints(p, x, one, rng)?;
        gv.push(v);
        fs.push(oracle::sample_subgrad_f(p, x, one, rng)?);
        let mut gsum = vec![0.0; d];
        for i in 0..m {
            let b = oracle::draw_batch(p.constraint_population(), one, rng)?;
            linalg::axpy(1.0, &p.constraint_subgradient(x, i, &b), &mut gsum);
        }
        gs.push(gsum);
    }
    Ok(NoiseEstimate {
        sigma: spread(&gv),
        sigma_f: spread(&fs),
        sigma_g: spread(&gs) / (m.max(1) as f64).sqrt(),
    })
}

/// Root mean squared deviation from the sample mean.
fn spread(samples: &[Vec<f64>]) -> f64 {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mut mean = vec![0.0; d];
    for s in samples {
        linalg::axpy(1.0 / n, s, &mut mean);
    }
    let mut acc = 0.0;
    for s in samples {
        acc += linalg::dist(s, &mean).powi(2);
    }
    (acc / (n - 1.0)).sqrt()
}

/// Penalized objective evaluated exactly, if the problem allows it.
pub fn exact_penalized(p: &dyn Problem, cfg: &PenaltyConfig, x: &[f64]) -> Result<f64> {
    let g = oracle::true_constraints(p, x)?;
    Ok(cfg.penalized_value(p.objective(x), &g))
}

/// Batch-mean penalized value, used when exact constraints are unavailable.
pub fn batch_penalized(p: &dyn Problem, cfg: &PenaltyConfig, x: &[f64], batch: &Batch) -> f64 {
    cfg.penalized_value(p.objective(x), &p.constraint_values(x, batch))
}

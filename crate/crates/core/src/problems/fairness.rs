//! Fairness-constrained linear classification on a 2:1 split.
//!
//! Both problems score rows with a linear model. Quantities comparing the
//! two groups are differences of group means; on a sampled batch each group
//! mean is replaced by its importance-weighted estimate (unbiased), and the
//! outer absolute value or max is applied to the estimates. A full batch
//! gives the exact value.

use rand::Rng as _;
use serde::Serialize;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::linalg::{self, sigmoid};
use crate::oracle::{Batch, Constants, Population, Problem};
use crate::penalty;
use crate::rng;
use crate::set::FeasibleSet;

/// Reading of sums whose upper limit is four times the group size. `Printed`
/// wraps the index around the group, i.e. four times the group sum;
/// `Population` stops at the group size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SumLimit {
    Printed,
    Population,
}

impl SumLimit {
    fn factor(self) -> f64 {
        match self {
            SumLimit::Printed => 4.0,
            SumLimit::Population => 1.0,
        }
    }
}

/// Group means of row norms and squared row norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GroupMoments {
    pub p_norm: f64,
    pub u_norm: f64,
    pub p_norm_sq: f64,
    pub u_norm_sq: f64,
}

pub fn norm_sum_variants(p: &Dataset, u: &Dataset) -> GroupMoments {
    GroupMoments {
        p_norm: p.mean_norm(),
        u_norm: u.mean_norm(),
        p_norm_sq: p.mean_norm_sq(),
        u_norm_sq: u.mean_norm_sq(),
    }
}

/// The held-out groups viewed as one population: indices below `p.len()`
/// are group `p`, the rest group `u`.
#[derive(Clone, Debug)]
struct Groups {
    p: Dataset,
    u: Dataset,
}

impl Groups {
    fn size(&self) -> usize {
        self.p.len() + self.u.len()
    }

    /// Row, and its signed weight in the estimate of `mean_p - mean_u`.
    #[inline]
    fn entry(&self, i: usize, batch_len: usize) -> (&[f64], f64) {
        let n = self.size() as f64;
        let b = batch_len as f64;
        if i < self.p.len() {
            (self.p.row(i), n / (self.p.len() as f64 * b))
        } else {
            (self.u.row(i - self.p.len()), -n / (self.u.len() as f64 * b))
        }
    }

    /// Mean-square Lipschitz constant of one weighted sigmoid sample.
    fn sample_lipschitz(&self) -> f64 {
        let n = self.size() as f64;
        let np = self.p.len() as f64;
        let nu = self.u.len() as f64;
        (n / 16.0 * (self.p.stats().sum_norm_sq / (np * np) + self.u.stats().sum_norm_sq / (nu * nu))).sqrt()
    }
}

fn check_split(split: &Split) -> Result<usize> {
    let d = split.main.dim();
    if split.p.dim() != d || split.u.dim() != d {
        return Err(Error::param("split parts have different dimensions"));
    }
    if split.main.is_empty() || split.p.is_empty() || split.u.is_empty() {
        return Err(Error::param("split has an empty part"));
    }
    Ok(d)
}

/// Mean hinge loss `[1 - b a^T x]_+` over `ds` and its subgradient
/// (zero at the kink), restricted to a batch.
fn hinge(ds: &Dataset, x: &[f64], batch: &Batch, grad: Option<&mut Vec<f64>>) -> f64 {
    let scale = 1.0 / batch.len() as f64;
    let mut s = 0.0;
    match grad {
        None => {
            for i in batch.indices() {
                s += (1.0 - ds.label(i) * linalg::dot(ds.row(i), x)).max(0.0);
            }
        }
        Some(g) => {
            for i in batch.indices() {
                let b = ds.label(i);
                let m = 1.0 - b * linalg::dot(ds.row(i), x);
                if m > 0.0 {
                    s += m;
                    linalg::axpy(-b * scale, ds.row(i), g);
                }
            }
        }
    }
    s * scale
}

fn full_hinge(ds: &Dataset, x: &[f64]) -> f64 {
    hinge(ds, x, &Batch::Full(ds.len()), None)
}

fn finish_constants(p: &dyn Problem, mut c: Constants, x0: &[f64], seed: u64) -> Result<Constants> {
    let mut r = rng::stream(seed, rng::STREAM_AUX);
    let est = penalty::estimate_noise(p, x0, 1000, &mut r)?;
    c.sigma = est.sigma;
    c.sigma_f = est.sigma_f;
    c.sigma_g = est.sigma_g;
    Ok(c)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocFairnessSpec {
    pub thresholds: usize,
    /// Slack as a fraction of the pretrained loss.
    pub kappa_rel: f64,
    /// Ball radius as a multiple of the pretrained model norm.
    pub radius_factor: f64,
    pub pretrain_epochs: usize,
    pub pretrain_step: f64,
    pub seed: u64,
    pub limit: SumLimit,
}

impl Default for RocFairnessSpec {
    fn default() -> Self {
        Self {
            thresholds: 400,
            kappa_rel: 1e-3,
            radius_factor: 5.0,
            pretrain_epochs: 50,
            pretrain_step: 1e-2,
            seed: 0,
            limit: SumLimit::Printed,
        }
    }
}

/// Minimise the largest group gap of the smoothed positive rate over a grid
/// of thresholds, keeping the hinge loss within a slack of its pretrained
/// value.
#[derive(Clone, Debug)]
pub struct RocFairness {
    main: Dataset,
    groups: Groups,
    thresholds: Vec<f64>,
    loss_star: f64,
    kappa: f64,
    x_star: Vec<f64>,
    set: FeasibleSet,
    constants: Constants,
    alternative: Constants,
}

/// Plain stochastic subgradient descent on the mean hinge loss.
fn pretrain(main: &Dataset, epochs: usize, step: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, rng::STREAM_AUX);
    let mut x = vec![0.0; main.dim()];
    for _ in 0..epochs {
        for _ in 0..main.len() {
            let i = r.random_range(0..main.len());
            let b = main.label(i);
            if 1.0 - b * linalg::dot(main.row(i), &x) > 0.0 {
                linalg::axpy(step * b, main.row(i), &mut x);
            }
        }
    }
    x
}

pub fn build_roc_fairness(split: &Split, spec: &RocFairnessSpec) -> Result<RocFairness> {
    let d = check_split(split)?;
    if spec.thresholds < 2 {
        return Err(Error::param("need at least two thresholds"));
    }
    let x_star = pretrain(&split.main, spec.pretrain_epochs, spec.pretrain_step, spec.seed);
    let loss_star = full_hinge(&split.main, &x_star);
    let radius = spec.radius_factor * linalg::norm(&x_star);
    if !(radius > 0.0) {
        return Err(Error::param("pretrained model is zero; cannot size the feasible ball"));
    }
    let groups = Groups { p: split.p.clone(), u: split.u.clone() };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for ds in [&groups.p, &groups.u] {
        for i in 0..ds.len() {
            let s = linalg::dot(ds.row(i), &x_star);
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    let (a, b) = (lo - 0.5 * (hi - lo), hi + 0.5 * (hi - lo));
    let t = spec.thresholds;
    let thresholds = (0..t).map(|j| a + (b - a) * j as f64 / (t - 1) as f64).collect();

    let mut prob = RocFairness {
        main: split.main.clone(),
        groups,
        thresholds,
        loss_star,
        kappa: spec.kappa_rel * loss_star,
        x_star,
        set: FeasibleSet::ball(d, radius)?,
        constants: Constants::default(),
        alternative: Constants::default(),
    };
    let other = match spec.limit {
        SumLimit::Printed => SumLimit::Population,
        SumLimit::Population => SumLimit::Printed,
    };
    let base = prob.constants_for(spec.limit);
    prob.alternative = prob.constants_for(other);
    let x0 = prob.x_star.clone();
    prob.constants = finish_constants(&prob, base, &x0, spec.seed)?;
    Ok(prob)
}

impl RocFairness {
    pub fn constants_for(&self, limit: SumLimit) -> Constants {
        let k = limit.factor();
        let gm = norm_sum_variants(&self.groups.p, &self.groups.u);
        Constants {
            l_f: gm.p_norm + k * gm.u_norm,
            l_g: self.main.mean_norm(),
            rho_f: k * (gm.p_norm_sq + gm.u_norm_sq),
            rho_g: 0.0,
            lipschitz_g: self.main.mean_norm_sq().sqrt(),
            ..Default::default()
        }
    }

    /// Constants under the other reading of the summation limits.
    pub fn alternative_constants(&self) -> &Constants {
        &self.alternative
    }

    pub fn pretrained(&self) -> &[f64] {
        &self.x_star
    }

    pub fn pretrained_loss(&self) -> f64 {
        self.loss_star
    }

    pub fn slack(&self) -> f64 {
        self.kappa
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Estimated group gap at every threshold.
    fn gaps(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let mut gap = vec![0.0; self.thresholds.len()];
        let b = batch.len();
        for i in batch.indices() {
            let (row, w) = self.groups.entry(i, b);
            let s = linalg::dot(row, x);
            for (g, th) in gap.iter_mut().zip(&self.thresholds) {
                *g += w * sigmoid(s - th);
            }
        }
        gap
    }

    fn worst_threshold(gaps: &[f64]) -> usize {
        let abs: Vec<f64> = gaps.iter().map(|g| g.abs()).collect();
        linalg::argmax_first(&abs).unwrap_or(0)
    }
}

impl Problem for RocFairness {
    fn name(&self) -> &str {
        "fair-roc"
    }

    fn dim(&self) -> usize {
        self.main.dim()
    }

    fn num_constraints(&self) -> usize {
        1
    }

    fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }

    fn objective_population(&self) -> Population {
        Population::Finite(self.groups.size())
    }

    fn constraint_population(&self) -> Population {
        Population::Finite(self.main.len())
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let gaps = self.gaps(x, &Batch::Full(self.groups.size()));
        gaps.iter().fold(0.0, |a, g| a.max(g.abs()))
    }

    fn exact_constraints(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.constraint_values(x, &Batch::Full(self.main.len())))
    }

    fn objective_subgradient(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let gaps = self.gaps(x, batch);
        let j = Self::worst_threshold(&gaps);
        let sign = linalg::sign0(gaps[j]);
        let mut z = vec![0.0; self.dim()];
        if sign == 0.0 {
            return z;
        }
        let th = self.thresholds[j];
        let b = batch.len();
        for i in batch.indices() {
            let (row, w) = self.groups.entry(i, b);
            let s = sigmoid(linalg::dot(row, x) - th);
            linalg::axpy(sign * w * s * (1.0 - s), row, &mut z);
        }
        z
    }

    fn constraint_values(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        vec![hinge(&self.main, x, batch, None) - self.loss_star - self.kappa]
    }

    fn constraint_subgradient(&self, x: &[f64], _i: usize, batch: &Batch) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        hinge(&self.main, x, batch, Some(&mut g));
        g
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x_star.clone()
    }
}

// ---------------------------------------------------------------------------

/// Form of the middle piece of the folded-concave penalty. `AsPrinted` uses
/// `-t^2 + 4|t| + 1`, which jumps at `|t| = 1`; `Continuous` uses
/// `-t^2 + 4|t| - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScadForm {
    AsPrinted,
    Continuous,
}

pub fn scad(t: f64, form: ScadForm) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        2.0 * a
    } else if a <= 2.0 {
        let c = match form {
            ScadForm::AsPrinted => 1.0,
            ScadForm::Continuous => -1.0,
        };
        -a * a + 4.0 * a + c
    } else {
        3.0
    }
}

pub fn scad_derivative(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        2.0 * linalg::sign0(t)
    } else if a <= 2.0 {
        (-2.0 * a + 4.0) * linalg::sign0(t)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DpScadSpec {
    pub lambda: f64,
    pub kappa: f64,
    pub radius: f64,
    pub form: ScadForm,
    pub limit: SumLimit,
    /// Seed for the noise-level estimate.
    pub seed: u64,
}

impl Default for DpScadSpec {
    fn default() -> Self {
        Self { lambda: 0.02, kappa: 0.02, radius: 5.0, form: ScadForm::AsPrinted, limit: SumLimit::Printed, seed: 0 }
    }
}

/// Hinge loss plus a sparsity penalty, with the group gap of the mean
/// predicted probability bounded by `kappa`.
///
/// `|gap| <= kappa` is stated as the pair `gap - kappa <= 0` and
/// `-gap - kappa <= 0`. The feasible set and the penalty are the same, but each
/// constraint is then linear in the samples, so single-sample subgradients are
/// unbiased. A batch sign of `gap` is not.
#[derive(Clone, Debug)]
pub struct DpScad {
    main: Dataset,
    groups: Groups,
    spec: DpScadSpec,
    set: FeasibleSet,
    constants: Constants,
    alternative: Constants,
}

pub fn build_dp_scad(split: &Split, spec: &DpScadSpec) -> Result<DpScad> {
    let d = check_split(split)?;
    if !(spec.lambda >= 0.0) || !(spec.kappa > 0.0) {
        return Err(Error::param("lambda must be nonnegative and kappa positive"));
    }
    let mut prob = DpScad {
        main: split.main.clone(),
        groups: Groups { p: split.p.clone(), u: split.u.clone() },
        spec: spec.clone(),
        set: FeasibleSet::cube(d, spec.radius)?,
        constants: Constants::default(),
        alternative: Constants::default(),
    };
    let other = match spec.limit {
        SumLimit::Printed => SumLimit::Population,
        SumLimit::Population => SumLimit::Printed,
    };
    let base = prob.constants_for(spec.limit);
    prob.alternative = prob.constants_for(other);
    let x0 = vec![0.0; d];
    prob.constants = finish_constants(&prob, base, &x0, spec.seed)?;
    Ok(prob)
}

impl DpScad {
    pub fn constants_for(&self, limit: SumLimit) -> Constants {
        let k = limit.factor();
        let gm = norm_sum_variants(&self.groups.p, &self.groups.u);
        let rho = (2.0 * self.spec.lambda).max(k * (gm.p_norm_sq + gm.u_norm_sq));
        Constants {
            l_f: 5.0 * self.spec.lambda + self.main.mean_norm(),
            l_g: gm.p_norm + k * gm.u_norm,
            rho_f: rho,
            rho_g: rho,
            lipschitz_g: self.groups.sample_lipschitz(),
            ..Default::default()
        }
    }

    pub fn alternative_constants(&self) -> &Constants {
        &self.alternative
    }

    pub fn spec(&self) -> &DpScadSpec {
        &self.spec
    }

    /// Mean hinge loss over the training part.
    pub fn loss(&self, x: &[f64]) -> f64 {
        full_hinge(&self.main, x)
    }

    pub fn regularizer(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for &v in x {
            s += scad(v, self.spec.form);
        }
        self.spec.lambda * s
    }

    /// Estimated `mean_p sigma(a^T x) - mean_u sigma(a^T x)`.
    fn gap(&self, x: &[f64], batch: &Batch) -> f64 {
        let b = batch.len();
        let mut s = 0.0;
        for i in batch.indices() {
            let (row, w) = self.groups.entry(i, b);
            s += w * sigmoid(linalg::dot(row, x));
        }
        s
    }
}

impl Problem for DpScad {
    fn name(&self) -> &str {
        "fair-dp"
    }

    fn dim(&self) -> usize {
        self.main.dim()
    }

    fn num_constraints(&self) -> usize {
        2
    }

    fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }

    fn objective_population(&self) -> Population {
        Population::Finite(self.main.len())
    }

    fn constraint_population(&self) -> Population {
        Population::Finite(self.groups.size())
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.loss(x) + self.regularizer(x)
    }

    fn exact_constraints(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.constraint_values(x, &Batch::Full(self.groups.size())))
    }

    fn objective_subgradient(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        hinge(&self.main, x, batch, Some(&mut g));
        for (gj, &xj) in g.iter_mut().zip(x) {
            *gj += self.spec.lambda * scad_derivative(xj);
        }
        g
    }

    fn constraint_values(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let gap = self.gap(x, batch);
        vec![gap - self.spec.kappa, -gap - self.spec.kappa]
    }

    fn constraint_subgradient(&self, x: &[f64], i: usize, batch: &Batch) -> Vec<f64> {
        let sign = if i == 0 { 1.0 } else { -1.0 };
        let mut z = vec![0.0; self.dim()];
        let b = batch.len();
        for i in batch.indices() {
            let (row, w) = self.groups.entry(i, b);
            let s = sigmoid(linalg::dot(row, x));
            linalg::axpy(sign * w * s * (1.0 - s), row, &mut z);
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scad_reference_values() {
        assert!((scad(1.5, ScadForm::AsPrinted) - 4.75).abs() < 1e-15);
        assert_eq!(scad(3.0, ScadForm::AsPrinted), 3.0);
        assert_eq!(scad(-0.5, ScadForm::AsPrinted), 1.0);
        assert!((scad(1.5, ScadForm::Continuous) - 2.75).abs() < 1e-15);
        assert_eq!(scad_derivative(0.0), 0.0);
        assert_eq!(scad_derivative(-1.5), -1.0);
        assert_eq!(scad_derivative(2.5), 0.0);
    }

    #[test]
    fn continuous_form_is_continuous_at_breakpoints() {
        for t in [1.0, 2.0] {
            let l = scad(t - 1e-12, ScadForm::Continuous);
            let r = scad(t + 1e-12, ScadForm::Continuous);
            assert!((l - r).abs() < 1e-9);
        }
    }
}

//! Multi-class Neyman-Pearson classification with one linear scorer per
//! class. Class 1 loss is the objective; every other class has its own loss
//! bounded by `kappa`.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, sigmoid};
use crate::oracle::{Batch, Constants, Population, Problem};
use crate::set::FeasibleSet;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeymanPearsonSpec {
    pub kappa: f64,
    pub radius: f64,
}

impl Default for NeymanPearsonSpec {
    fn default() -> Self {
        Self { kappa: 4.5, radius: 0.3 }
    }
}

/// Scorer `l` occupies block `l` of `x`. Constraint samples are the rows of
/// classes 2..M concatenated; a row of class `c` is weighted by
/// `N / |class c|` so the batch mean is unbiased for each class mean.
#[derive(Clone, Debug)]
pub struct NeymanPearson {
    classes: Vec<Dataset>,
    /// Start offset of each constrained class in the concatenated population.
    offsets: Vec<usize>,
    n_constraint: usize,
    block: usize,
    spec: NeymanPearsonSpec,
    set: FeasibleSet,
    constants: Constants,
}

/// `classes[0]` is the prioritised class.
pub fn build_neyman_pearson(classes: Vec<Dataset>, spec: &NeymanPearsonSpec) -> Result<NeymanPearson> {
    let m = classes.len();
    if m < 2 {
        return Err(Error::param(format!("need at least 2 classes, got {m}")));
    }
    let block = classes[0].dim();
    if block == 0 {
        return Err(Error::param("class data has dimension 0"));
    }
    for (i, c) in classes.iter().enumerate() {
        if c.dim() != block {
            return Err(Error::DimensionMismatch { expected: block, got: c.dim() });
        }
        if c.is_empty() {
            return Err(Error::param(format!("class {} is empty", i + 1)));
        }
    }
    let mut offsets = Vec::with_capacity(m - 1);
    let mut n = 0;
    for c in &classes[1..] {
        offsets.push(n);
        n += c.len();
    }
    let l = classes.iter().map(|c| c.mean_norm()).fold(0.0, f64::max);
    let r = classes.iter().map(|c| c.mean_norm_sq()).fold(0.0, f64::max);
    // One constraint sample of class c moves by at most
    // (N / |c|) (M - 2) / 4 * sqrt(2) * ||a|| per unit step.
    let mut lip2 = 0.0;
    for c in &classes[1..] {
        let w = n as f64 / c.len() as f64 * (m - 2) as f64 / 4.0;
        lip2 += w * w * 2.0 * c.stats().sum_norm_sq / n as f64;
    }
    let constants = Constants { l_f: l, l_g: l, rho_f: r, rho_g: r, lipschitz_g: lip2.sqrt(), ..Default::default() };
    Ok(NeymanPearson {
        set: FeasibleSet::ball_product(m, block, spec.radius)?,
        classes,
        offsets,
        n_constraint: n,
        block,
        spec: spec.clone(),
        constants,
    })
}

impl NeymanPearson {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn block<'a>(&self, x: &'a [f64], l: usize) -> &'a [f64] {
        &x[l * self.block..(l + 1) * self.block]
    }

    /// Class (0-based, >= 1) and row of a constraint sample.
    fn locate(&self, i: usize) -> (usize, usize) {
        let k = self.offsets.partition_point(|&o| o <= i) - 1;
        (k + 1, i - self.offsets[k])
    }

    /// `sum_{l in others} sigma(x_c^T a - x_l^T a)` and, optionally, its
    /// gradient accumulated with weight `w`.
    fn pair_loss(&self, x: &[f64], c: usize, a: &[f64], skip: usize, w: f64, grad: Option<&mut [f64]>) -> f64 {
        let m = self.classes.len();
        let own = linalg::dot(self.block(x, c), a);
        let mut s = 0.0;
        let mut grad = grad;
        for l in 1..m {
            if l == c || l == skip {
                continue;
            }
            let z = sigmoid(own - linalg::dot(self.block(x, l), a));
            s += z;
            if let Some(g) = grad.as_deref_mut() {
                let coef = w * z * (1.0 - z);
                let b = self.block;
                linalg::axpy(coef, a, &mut g[c * b..(c + 1) * b]);
                linalg::axpy(-coef, a, &mut g[l * b..(l + 1) * b]);
            }
        }
        s
    }
}

impl Problem for NeymanPearson {
    fn name(&self) -> &str {
        "neyman-pearson"
    }

    fn dim(&self) -> usize {
        self.block * self.classes.len()
    }

    fn num_constraints(&self) -> usize {
        self.classes.len() - 1
    }

    fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }

    fn objective_population(&self) -> Population {
        Population::Finite(self.classes[0].len())
    }

    fn constraint_population(&self) -> Population {
        Population::Finite(self.n_constraint)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let ds = &self.classes[0];
        let mut s = 0.0;
        for i in 0..ds.len() {
            s += self.pair_loss(x, 0, ds.row(i), usize::MAX, 0.0, None);
        }
        s / ds.len() as f64
    }

    fn exact_constraints(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.constraint_values(x, &Batch::Full(self.n_constraint)))
    }

    fn objective_subgradient(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let ds = &self.classes[0];
        let w = 1.0 / batch.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for i in batch.indices() {
            self.pair_loss(x, 0, ds.row(i), usize::MAX, w, Some(&mut g));
        }
        g
    }

    fn constraint_values(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let mut v = vec![0.0; self.num_constraints()];
        let b = batch.len() as f64;
        let n = self.n_constraint as f64;
        for i in batch.indices() {
            let (c, r) = self.locate(i);
            let w = n / self.classes[c].len() as f64;
            v[c - 1] += w * self.pair_loss(x, c, self.classes[c].row(r), 0, 0.0, None);
        }
        for vi in v.iter_mut() {
            *vi = *vi / b - self.spec.kappa;
        }
        v
    }

    fn constraint_subgradient(&self, x: &[f64], i: usize, batch: &Batch) -> Vec<f64> {
        let c = i + 1;
        let mut g = vec![0.0; self.dim()];
        let b = batch.len() as f64;
        let w = self.n_constraint as f64 / self.classes[c].len() as f64 / b;
        for j in batch.indices() {
            let (cj, r) = self.locate(j);
            if cj == c {
                self.pair_loss(x, c, self.classes[c].row(r), 0, w, Some(&mut g));
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(m: usize) -> Vec<Dataset> {
        (0..m)
            .map(|c| {
                let rows = c + 2;
                let f: Vec<f64> = (0..rows * 3).map(|k| ((k + c) % 5) as f64 * 0.1).collect();
                Dataset::new(3, f, vec![c as f64; rows], None).unwrap()
            })
            .collect()
    }

    #[test]
    fn values_at_origin() {
        let p = build_neyman_pearson(classes(4), &NeymanPearsonSpec::default()).unwrap();
        let x = vec![0.0; p.dim()];
        assert!((p.objective(&x) - 1.5).abs() < 1e-15);
        for v in p.exact_constraints(&x).unwrap() {
            assert!((v - (1.0 - 4.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn needs_two_classes() {
        assert!(build_neyman_pearson(classes(1), &NeymanPearsonSpec::default()).is_err());
    }

    #[test]
    fn locate_maps_concatenated_rows() {
        let p = build_neyman_pearson(classes(3), &NeymanPearsonSpec::default()).unwrap();
        assert_eq!(p.locate(0), (1, 0));
        assert_eq!(p.locate(2), (1, 2));
        assert_eq!(p.locate(3), (2, 0));
    }
}

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{Batch, Constants, Population, Problem};
use crate::rng::{self, Rng};
use crate::set::FeasibleSet;

const TARGET: f64 = 2.0;
const RADIUS: f64 = 10.0;

/// Oracle noise for the quadratic instance.
///
/// Sample `j` carries an objective gradient offset `e_j`, a constraint
/// gradient offset `c_j` and a constraint value offset `v_j`, so that
/// `g_j(x) = <1 + c_j, x> - 2 + v_j`. With a finite population the offsets
/// are centred, which keeps the population means exactly noise-free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticNoise {
    pub sigma: f64,
    pub sigma_f: f64,
    pub sigma_g: f64,
    /// `None` for an infinite stream.
    pub population: Option<usize>,
    pub seed: u64,
}

/// `min (x1-2)^2 + (x2-2)^2  s.t.  x1 + x2 <= 2,  ||x|| <= 10`.
/// Optimum `(1, 1)`, value 2, multiplier 2.
#[derive(Clone, Debug)]
pub struct SyntheticQuadratic {
    set: FeasibleSet,
    constants: Constants,
    noise: Option<SyntheticNoise>,
    /// Per-sample offsets `[e1, e2, c1, c2, v]` of a finite population.
    offsets: Vec<[f64; 5]>,
}

pub fn build_synthetic_quadratic(noise: Option<SyntheticNoise>) -> Result<SyntheticQuadratic> {
    let set = FeasibleSet::ball(2, RADIUS)?;
    let mut offsets = Vec::new();
    if let Some(nz) = &noise {
        if !(nz.sigma >= 0.0 && nz.sigma_f >= 0.0 && nz.sigma_g >= 0.0) {
            return Err(Error::param("noise levels must be nonnegative"));
        }
        if let Some(n) = nz.population {
            if n == 0 {
                return Err(Error::param("population must be nonempty"));
            }
            let mut r = rng::stream(nz.seed, rng::STREAM_AUX);
            offsets = (0..n).map(|_| draw_offsets(nz, &mut r)).collect();
            let mut mean = [0.0; 5];
            for o in &offsets {
                for k in 0..5 {
                    mean[k] += o[k] / n as f64;
                }
            }
            if n > 1 {
                for o in offsets.iter_mut() {
                    for k in 0..5 {
                        o[k] -= mean[k];
                    }
                }
            } else {
                offsets[0] = [0.0; 5];
            }
        }
    }
    let mut p = SyntheticQuadratic { set, constants: Constants::default(), noise, offsets };
    p.constants = p.compute_constants();
    Ok(p)
}

fn draw_offsets(nz: &SyntheticNoise, r: &mut Rng) -> [f64; 5] {
    let mut z = || -> f64 { StandardNormal.sample(r) };
    let sf = nz.sigma_f / 2f64.sqrt();
    let sg = nz.sigma_g / 2f64.sqrt();
    [sf * z(), sf * z(), sg * z(), sg * z(), nz.sigma * z()]
}

impl SyntheticQuadratic {
    pub fn optimum() -> [f64; 2] {
        [1.0, 1.0]
    }

    pub fn noise(&self) -> Option<&SyntheticNoise> {
        self.noise.as_ref()
    }

    fn offsets_of(&self, batch: &Batch) -> Vec<[f64; 5]> {
        match batch {
            Batch::Seeds(seeds) => {
                let nz = self.noise.as_ref().expect("stream batch without noise");
                seeds.iter().map(|&s| draw_offsets(nz, &mut rng::sample_rng(s))).collect()
            }
            _ if self.offsets.is_empty() => Vec::new(),
            _ => batch.indices().map(|i| self.offsets[i]).collect(),
        }
    }

    fn mean_offsets(&self, batch: &Batch) -> [f64; 5] {
        let offs = self.offsets_of(batch);
        let mut m = [0.0; 5];
        if offs.is_empty() {
            return m;
        }
        for o in &offs {
            for k in 0..5 {
                m[k] += o[k];
            }
        }
        for v in m.iter_mut() {
            *v /= offs.len() as f64;
        }
        m
    }

    fn compute_constants(&self) -> Constants {
        let r_max = RADIUS + TARGET * 2f64.sqrt();
        let mut c = Constants {
            l_f: 2.0 * r_max,
            l_g: 2f64.sqrt(),
            lipschitz_g: 2f64.sqrt(),
            ..Default::default()
        };
        let Some(nz) = &self.noise else { return c };
        if self.offsets.is_empty() {
            c.sigma = (nz.sigma * nz.sigma + nz.sigma_g * nz.sigma_g * RADIUS * RADIUS).sqrt();
            c.sigma_f = nz.sigma_f;
            c.sigma_g = nz.sigma_g;
            c.lipschitz_g = (2.0 + nz.sigma_g * nz.sigma_g / 2.0).sqrt();
            return c;
        }
        // Population moments of the realised offsets.
        let n = self.offsets.len() as f64;
        let (mut ef, mut eg, mut vv) = (0.0, 0.0, 0.0);
        let mut cov = [[0.0; 2]; 2];
        let mut cross = [0.0; 2];
        for o in &self.offsets {
            ef += (o[0] * o[0] + o[1] * o[1]) / n;
            eg += (o[2] * o[2] + o[3] * o[3]) / n;
            vv += o[4] * o[4] / n;
            for a in 0..2 {
                cross[a] += o[2 + a] * o[4] / n;
                for b in 0..2 {
                    cov[a][b] += o[2 + a] * o[2 + b] / n;
                }
            }
        }
        c.sigma_f = ef.sqrt();
        c.sigma_g = eg.sqrt();
        let lam = max_eig_2x2(cov);
        c.sigma = (vv + lam * RADIUS * RADIUS + 2.0 * RADIUS * linalg::norm(&cross)).sqrt();
        // E[(1 + c)(1 + c)^T] = 11^T + cov since the offsets are centred.
        let second = [[1.0 + cov[0][0], 1.0 + cov[0][1]], [1.0 + cov[1][0], 1.0 + cov[1][1]]];
        c.lipschitz_g = max_eig_2x2(second).sqrt();
        c
    }
}

fn max_eig_2x2(a: [[f64; 2]; 2]) -> f64 {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    tr / 2.0 + disc
}

impl Problem for SyntheticQuadratic {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn dim(&self) -> usize {
        2
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
        self.constraint_population()
    }

    fn constraint_population(&self) -> Population {
        match &self.noise {
            None => Population::Finite(1),
            Some(nz) => match nz.population {
                Some(n) => Population::Finite(n),
                None => Population::Infinite,
            },
        }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        (x[0] - TARGET).powi(2) + (x[1] - TARGET).powi(2)
    }

    fn exact_constraints(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![x[0] + x[1] - TARGET])
    }

    fn objective_subgradient(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let o = self.mean_offsets(batch);
        vec![2.0 * (x[0] - TARGET) + o[0], 2.0 * (x[1] - TARGET) + o[1]]
    }

    fn constraint_values(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let offs = self.offsets_of(batch);
        if offs.is_empty() {
            return vec![x[0] + x[1] - TARGET];
        }
        let mut s = 0.0;
        for o in &offs {
            s += (1.0 + o[2]) * x[0] + (1.0 + o[3]) * x[1] - TARGET + o[4];
        }
        vec![s / offs.len() as f64]
    }

    fn constraint_subgradient(&self, _x: &[f64], _i: usize, batch: &Batch) -> Vec<f64> {
        let o = self.mean_offsets(batch);
        vec![1.0 + o[2], 1.0 + o[3]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values_at_origin() {
        let p = build_synthetic_quadratic(None).unwrap();
        assert_eq!(p.objective(&[0.0, 0.0]), 8.0);
        assert_eq!(p.exact_constraints(&[0.0, 0.0]).unwrap(), vec![-2.0]);
        assert_eq!(p.objective(&[1.0, 1.0]), 2.0);
    }

    #[test]
    fn finite_noise_has_exact_population_mean() {
        let nz = SyntheticNoise { sigma: 0.3, sigma_f: 0.5, sigma_g: 0.2, population: Some(50), seed: 4 };
        let p = build_synthetic_quadratic(Some(nz)).unwrap();
        let x = [0.7, -1.3];
        let g = p.constraint_values(&x, &Batch::Full(50))[0];
        assert!((g - (x[0] + x[1] - 2.0)).abs() < 1e-12);
        let z = p.objective_subgradient(&x, &Batch::Full(50));
        assert!((z[0] - 2.0 * (x[0] - 2.0)).abs() < 1e-12);
    }
}

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// Euclidean ball.
    Ball,
    /// Sup-norm box.
    Box,
    /// Product of `blocks` equally sized Euclidean balls.
    BallProduct { blocks: usize },
}

/// Closed convex domain: a ball, box or product of balls of radius `radius`
/// around `center`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibleSet {
    kind: SetKind,
    radius: f64,
    center: Vec<f64>,
}

impl FeasibleSet {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(SetKind::Ball, radius, vec![0.0; dim])
    }

    pub fn cube(dim: usize, radius: f64) -> Result<Self> {
        Self::new(SetKind::Box, radius, vec![0.0; dim])
    }

    pub fn ball_product(blocks: usize, block_dim: usize, radius: f64) -> Result<Self> {
        if blocks == 0 || block_dim == 0 {
            return Err(Error::param("ball product needs at least one nonempty block"));
        }
        Self::new(SetKind::BallProduct { blocks }, radius, vec![0.0; blocks * block_dim])
    }

    /// Interval `[lo, hi]` as a one-dimensional box.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::param(format!("empty interval [{lo}, {hi}]")));
        }
        Self::new(SetKind::Box, 0.5 * (hi - lo), vec![0.5 * (hi + lo)])
    }

    pub fn new(kind: SetKind, radius: f64, center: Vec<f64>) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param(format!("radius must be positive and finite, got {radius}")));
        }
        if center.is_empty() {
            return Err(Error::param("feasible set has dimension 0"));
        }
        if !linalg::all_finite(&center) {
            return Err(Error::NonFinite("set center".into()));
        }
        if let SetKind::BallProduct { blocks } = kind {
            if blocks == 0 || center.len() % blocks != 0 {
                return Err(Error::param(format!(
                    "dimension {} is not divisible into {blocks} blocks",
                    center.len()
                )));
            }
        }
        Ok(Self { kind, radius, center })
    }

    pub fn kind(&self) -> SetKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            SetKind::Ball => 2.0 * self.radius,
            SetKind::Box => 2.0 * self.radius * (self.dim() as f64).sqrt(),
            SetKind::BallProduct { blocks } => 2.0 * self.radius * (blocks as f64).sqrt(),
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if !linalg::all_finite(x) {
            return Err(Error::NonFinite("point to project".into()));
        }
        let mut y = x.to_vec();
        self.project_in_place(&mut y);
        Ok(y)
    }

    /// Projects in place. The caller guarantees the dimension.
    pub fn project_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        match self.kind {
            SetKind::Ball => project_ball(x, &self.center, self.radius),
            SetKind::Box => {
                for (v, c) in x.iter_mut().zip(&self.center) {
                    *v = v.clamp(c - self.radius, c + self.radius);
                }
            }
            SetKind::BallProduct { blocks } => {
                let b = self.dim() / blocks;
                for (xs, cs) in x.chunks_mut(b).zip(self.center.chunks(b)) {
                    project_ball(xs, cs, self.radius);
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self.kind {
            SetKind::Ball => linalg::dist(x, &self.center) <= self.radius + tol,
            SetKind::Box => x
                .iter()
                .zip(&self.center)
                .all(|(v, c)| (v - c).abs() <= self.radius + tol),
            SetKind::BallProduct { blocks } => {
                let b = self.dim() / blocks;
                x.chunks(b)
                    .zip(self.center.chunks(b))
                    .all(|(xs, cs)| linalg::dist(xs, cs) <= self.radius + tol)
            }
        }
    }
}

fn project_ball(x: &mut [f64], center: &[f64], radius: f64) {
    let r = linalg::dist(x, center);
    if r > radius {
        let s = radius / r;
        for (v, c) in x.iter_mut().zip(center) {
            *v = c + s * (*v - c);
        }
    }
}

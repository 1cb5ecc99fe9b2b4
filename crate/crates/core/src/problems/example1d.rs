use crate::error::Result;
use crate::oracle::{Batch, Constants, Population, Problem};
use crate::penalty::CqParams;
use crate::set::FeasibleSet;

/// Objective paired with the one-dimensional cubic constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective1d {
    /// `f(x) = slope * x`
    Linear { slope: f64 },
    /// `f(x) = (x - target)^2`
    Quadratic { target: f64 },
}

impl Objective1d {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Objective1d::Linear { slope } => slope * x,
            Objective1d::Quadratic { target } => (x - target).powi(2),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            Objective1d::Linear { slope } => slope,
            Objective1d::Quadratic { target } => 2.0 * (x - target),
        }
    }
}

/// `g(x) = -6 + 8x + x^2 - x^3 <= 0` on `[0, 1]`. The constraint is
/// 4-weakly convex since `g'' = 2 - 6x >= -4`.
#[derive(Clone, Debug)]
pub struct Example1d {
    set: FeasibleSet,
    objective: Objective1d,
    constants: Constants,
}

pub fn cubic(x: f64) -> f64 {
    -6.0 + 8.0 * x + x * x - x * x * x
}

pub fn cubic_derivative(x: f64) -> f64 {
    8.0 + 2.0 * x - 3.0 * x * x
}

pub fn build_example_1d(objective: Objective1d) -> Result<Example1d> {
    let set = FeasibleSet::interval(0.0, 1.0)?;
    let (l_f, rho_f) = match objective {
        Objective1d::Linear { slope } => (slope.abs(), 0.0),
        Objective1d::Quadratic { target } => (2.0 * target.abs().max((1.0 - target).abs()), 0.0),
    };
    // max |g'| on [0, 1] is attained at x = 1/3.
    let l_g = cubic_derivative(1.0 / 3.0);
    let constants = Constants { l_f, l_g, rho_f, rho_g: 4.0, lipschitz_g: l_g, ..Default::default() };
    Ok(Example1d { set, objective, constants })
}

impl Example1d {
    /// Constraint-qualification constants known for this instance.
    pub fn cq_params() -> CqParams {
        CqParams { b: 3.0, b_g: 1000.0, rho_bar: 5.0 }
    }
}

impl Problem for Example1d {
    fn name(&self) -> &str {
        "example-1d"
    }

    fn dim(&self) -> usize {
        1
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
        Population::Finite(1)
    }

    fn constraint_population(&self) -> Population {
        Population::Finite(1)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.objective.value(x[0])
    }

    fn exact_constraints(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![cubic(x[0])])
    }

    fn objective_subgradient(&self, x: &[f64], _batch: &Batch) -> Vec<f64> {
        vec![self.objective.derivative(x[0])]
    }

    fn constraint_values(&self, x: &[f64], _batch: &Batch) -> Vec<f64> {
        vec![cubic(x[0])]
    }

    fn constraint_subgradient(&self, x: &[f64], _i: usize, _batch: &Batch) -> Vec<f64> {
        vec![cubic_derivative(x[0])]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_reference_values() {
        assert_eq!(cubic(0.0), -6.0);
        assert_eq!(cubic(1.0), 2.0);
        let p = build_example_1d(Objective1d::Linear { slope: 1.0 }).unwrap();
        assert_eq!(p.constants().rho_g, 4.0);
        assert_eq!(p.feasible_set().diameter(), 1.0);
    }
}

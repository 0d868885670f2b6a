//! Box-constrained linear programs with a few dense equality rows.

mod parametric;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parametric::ParametricSolver;
pub use simplex::{BoundedSimplex, SimplexControls};

/// Tolerance for box membership of returned points.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Relative tolerance for equality residuals: `|Ax − b| ≤ EQUALITY_TOL (1 + |b|)`.
pub const EQUALITY_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase I residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("numerical failure in simplex: {0}")]
    Numerics(String),
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }

    /// True if `a` is strictly better than `b` by more than `tol`.
    pub fn improves(self, a: f64, b: f64, tol: f64) -> bool {
        match self {
            Sense::Minimize => a < b - tol,
            Sense::Maximize => a > b + tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equality {
    pub coefficients: Vec<f64>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<Equality>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, sense: Sense, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            sense,
            lower,
            upper,
            equalities: Vec::new(),
        }
    }

    pub fn with_equality(mut self, coefficients: Vec<f64>, rhs: f64) -> Self {
        self.equalities.push(Equality { coefficients, rhs });
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed(format!(
                "{} costs but {} lower and {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(LpError::Malformed(format!("variable {j} has box [{l}, {u}]")));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::Malformed(format!("variable {j} has cost {}", self.objective[j])));
            }
        }
        for (r, eq) in self.equalities.iter().enumerate() {
            if eq.coefficients.len() != n {
                return Err(LpError::Malformed(format!("equality {r} has {} coefficients", eq.coefficients.len())));
            }
            if !eq.rhs.is_finite() || eq.coefficients.iter().any(|a| !a.is_finite()) {
                return Err(LpError::Malformed(format!("equality {r} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest box violation and largest scaled equality residual at `x`.
    pub fn violations(&self, x: &[f64]) -> (f64, f64) {
        let box_v = (0..self.num_vars())
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        let eq_v = self
            .equalities
            .iter()
            .map(|eq| {
                let lhs: f64 = eq.coefficients.iter().zip(x).map(|(a, v)| a * v).sum();
                (lhs - eq.rhs).abs() / (1.0 + eq.rhs.abs())
            })
            .fold(0.0, f64::max);
        (box_v, eq_v)
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        let (b, e) = self.violations(x);
        b <= FEASIBILITY_TOL && e <= EQUALITY_TOL
    }
}

/// An optimal point. Infeasibility is reported as `Err(LpError::Infeasible)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Lagrangian dual bound built from the final multipliers and reduced costs.
    pub dual_bound: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn duality_gap(&self) -> f64 {
        (self.objective_value - self.dual_bound).abs()
    }
}

/// Anything that can solve a [`LinearProgram`] to optimality.
pub trait LpSolver: Send + Sync {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError>;
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    BoundedSimplex::default().solve(lp)
}

/// One free weight block with every other block held fixed.
///
/// The objective is `(1/normalizer) Σ y_i g_i (w_i + shift)` where `g_i` is the
/// product of the fixed blocks, subject to `Σ g_i (w_i + shift) = normalizer`,
/// optionally `Σ w_i = block_sum`, and `lower ≤ w ≤ upper`.
#[derive(Clone, Copy, Debug)]
pub struct WeightedFraction<'a> {
    pub outcome: &'a [f64],
    pub fixed_factor: &'a [f64],
    pub shift: f64,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub block_sum: Option<f64>,
    pub normalizer: f64,
    pub sense: Sense,
}

impl WeightedFraction<'_> {
    pub fn to_program(&self) -> Result<LinearProgram, LpError> {
        let n = self.outcome.len();
        if self.fixed_factor.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("weighted fraction pieces differ in length".into()));
        }
        if !(self.normalizer.is_finite() && self.normalizer != 0.0) {
            return Err(LpError::Malformed(format!("normalizer {}", self.normalizer)));
        }
        let objective = self
            .outcome
            .iter()
            .zip(self.fixed_factor)
            .map(|(y, g)| y * g / self.normalizer)
            .collect();
        let mut lp = LinearProgram::new(objective, self.sense, self.lower.to_vec(), self.upper.to_vec());
        if let Some(s) = self.block_sum {
            lp = lp.with_equality(vec![1.0; n], s);
        }
        let g_sum: f64 = self.fixed_factor.iter().sum();
        lp = lp.with_equality(self.fixed_factor.to_vec(), self.normalizer - self.shift * g_sum);
        Ok(lp)
    }

    /// Objective value including the constant from `shift`.
    pub fn value_at(&self, w: &[f64]) -> f64 {
        self.outcome
            .iter()
            .zip(self.fixed_factor)
            .zip(w)
            .map(|((y, g), w)| y * g * (w + self.shift))
            .sum::<f64>()
            / self.normalizer
    }
}

/// Solve a [`WeightedFraction`]; the returned objective and dual bound include the
/// shift constant.
pub fn solve_weighted_fraction_fixed(solver: &dyn LpSolver, problem: &WeightedFraction<'_>) -> Result<LpSolution, LpError> {
    let lp = problem.to_program()?;
    let mut sol = solver.solve(&lp)?;
    let constant = problem
        .outcome
        .iter()
        .zip(problem.fixed_factor)
        .map(|(y, g)| y * g * problem.shift)
        .sum::<f64>()
        / problem.normalizer;
    sol.objective_value += constant;
    sol.dual_bound += constant;
    Ok(sol)
}

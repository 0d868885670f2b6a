//! Exact solver for box LPs whose first equality is a plain sum.
//!
//! With `Σ x = R` alone the program is a continuous knapsack: fill the cheapest
//! coordinates first. A second row `g·x = C` is dualized with multiplier `μ`;
//! the dual `L(μ)` is concave and piecewise linear, and each greedy solution
//! `x(μ)` supplies one of its pieces. Intersecting the pieces that bracket `C`
//! (a Newton step on `L`) finds a new piece or proves optimality, so the search
//! ends after finitely many steps. The optimum is then the convex combination of
//! the two bracketing greedy solutions that meets `g·x = C`.
//!
//! Programs of any other shape, and numerically doubtful cases, go to
//! [`BoundedSimplex`].

use super::{BoundedSimplex, LinearProgram, LpError, LpSolution, LpSolver, EQUALITY_TOL};

#[derive(Clone, Copy, Debug)]
pub struct ParametricSolver {
    pub fallback: BoundedSimplex,
    /// Newton steps before handing the program to the fallback.
    pub max_steps: usize,
}

impl Default for ParametricSolver {
    fn default() -> Self {
        ParametricSolver {
            fallback: BoundedSimplex::default(),
            max_steps: 500,
        }
    }
}

impl LpSolver for ParametricSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        lp.validate()?;
        let sum_row = lp.equalities.first().is_some_and(|e| e.coefficients.iter().all(|&a| a == 1.0));
        let result = match lp.equalities.len() {
            1 if sum_row => Some(single_row(lp)),
            2 if sum_row => two_rows(lp, self.max_steps),
            _ => None,
        };
        match result {
            Some(Ok(sol)) if lp.violations(&sol.values).1 <= EQUALITY_TOL => Ok(sol),
            Some(Err(e @ LpError::Infeasible { .. })) => Err(e),
            _ => self.fallback.solve(lp),
        }
    }
}

struct Greedy {
    x: Vec<f64>,
    /// Key of the last coordinate that received mass, if any.
    marginal: Option<f64>,
}

fn residual_tol(rhs: f64) -> f64 {
    1e-9 * (1.0 + rhs.abs())
}

/// Minimize `Σ key_i x_i` over `Σ x = total`, `lower ≤ x ≤ upper`; ties go to
/// the smaller `tie`, then the smaller index.
fn greedy(key: &[f64], tie: &[f64], lower: &[f64], upper: &[f64], total: f64) -> Result<Greedy, LpError> {
    let n = key.len();
    let base: f64 = lower.iter().sum();
    let room: f64 = lower.iter().zip(upper).map(|(l, u)| u - l).sum();
    let need = total - base;
    let tol = residual_tol(total);
    if need < -tol || need > room + tol {
        let residual = if need < 0.0 { -need } else { need - room };
        return Err(LpError::Infeasible { residual });
    }
    let cmp = |a: &usize, b: &usize| key[*a].total_cmp(&key[*b]).then(tie[*a].total_cmp(&tie[*b])).then(a.cmp(b));
    let room = |i: usize| upper[i] - lower[i];
    let mut order: Vec<usize> = (0..n).collect();
    let mut x = lower.to_vec();
    let mut rem = need.max(0.0);
    let mut marginal: Option<usize> = None;
    // Weighted selection: `order[..lo]` is full, the answer's boundary lies in `order[lo..hi]`.
    let (mut lo, mut hi) = (0, n);
    while hi - lo > 32 && rem > 0.0 {
        let mid = (hi - lo) / 2;
        order[lo..hi].select_nth_unstable_by(mid, cmp);
        let left = &order[lo..lo + mid];
        let left_room: f64 = left.iter().map(|&i| room(i)).sum();
        if left_room >= rem {
            hi = lo + mid;
            continue;
        }
        for &i in left {
            if room(i) > 0.0 {
                x[i] = upper[i];
                if marginal.is_none_or(|m| cmp(&i, &m).is_gt()) {
                    marginal = Some(i);
                }
            }
        }
        rem -= left_room;
        lo += mid;
    }
    order[lo..hi].sort_unstable_by(cmp);
    for &i in &order[lo..hi] {
        if rem <= 0.0 {
            break;
        }
        let take = room(i).min(rem);
        if take > 0.0 {
            x[i] += take;
            rem -= take;
            marginal = Some(i);
        }
    }
    Ok(Greedy {
        x,
        marginal: marginal.map(|i| key[i]),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `min_x Σ (key_i − λ) x_i + λ total` over the box: a Lagrangian lower bound.
fn box_dual(key: &[f64], lambda: f64, lower: &[f64], upper: &[f64], total: f64) -> f64 {
    lambda * total
        + key
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(k, (l, u))| {
                let d = k - lambda;
                if d >= 0.0 {
                    d * l
                } else {
                    d * u
                }
            })
            .sum::<f64>()
}

/// Optimum and dual bound of the sum-row program alone (a relaxation of the
/// two-row program).
fn sum_row_optimum(cost: &[f64], lower: &[f64], upper: &[f64], total: f64) -> Result<(Greedy, f64), LpError> {
    let zeros = vec![0.0; cost.len()];
    let g = greedy(cost, &zeros, lower, upper, total)?;
    let dual = box_dual(cost, g.marginal.unwrap_or(0.0), lower, upper, total);
    Ok((g, dual))
}

fn single_row(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let sign = lp.sense.sign();
    let cost: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();
    let (g, dual) = sum_row_optimum(&cost, &lp.lower, &lp.upper, lp.equalities[0].rhs)?;
    Ok(LpSolution {
        objective_value: lp.objective_at(&g.x),
        dual_bound: sign * dual,
        values: g.x,
        iterations: 1,
    })
}

/// A greedy solution and its line `μ ↦ c·x − μ (g·x − C)`.
struct Piece {
    x: Vec<f64>,
    cx: f64,
    gx: f64,
}

impl Piece {
    fn new(x: Vec<f64>, cost: &[f64], g: &[f64]) -> Self {
        Piece {
            cx: dot(cost, &x),
            gx: dot(g, &x),
            x,
        }
    }

    fn at(&self, mu: f64, rhs: f64) -> f64 {
        self.cx - mu * (self.gx - rhs)
    }
}

fn finish(lp: &LinearProgram, x: Vec<f64>, dual_min_form: f64, steps: usize) -> LpSolution {
    let mut x = x;
    for (j, v) in x.iter_mut().enumerate() {
        *v = v.clamp(lp.lower[j], lp.upper[j]);
    }
    LpSolution {
        objective_value: lp.objective_at(&x),
        dual_bound: lp.sense.sign() * dual_min_form,
        values: x,
        iterations: steps,
    }
}

fn two_rows(lp: &LinearProgram, max_steps: usize) -> Option<Result<LpSolution, LpError>> {
    let sign = lp.sense.sign();
    let cost: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();
    let total = lp.equalities[0].rhs;
    let g = &lp.equalities[1].coefficients;
    let rhs = lp.equalities[1].rhs;
    let tol = residual_tol(rhs);
    let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();

    let lo = match greedy(g, &cost, &lp.lower, &lp.upper, total) {
        Ok(s) => Piece::new(s.x, &cost, g),
        Err(e) => return Some(Err(e)),
    };
    let hi = match greedy(&neg_g, &cost, &lp.lower, &lp.upper, total) {
        Ok(s) => Piece::new(s.x, &cost, g),
        Err(e) => return Some(Err(e)),
    };
    if rhs < lo.gx - tol {
        return Some(Err(LpError::Infeasible { residual: lo.gx - rhs }));
    }
    if rhs > hi.gx + tol {
        return Some(Err(LpError::Infeasible { residual: rhs - hi.gx }));
    }
    if hi.gx - lo.gx <= tol {
        // `g·x` is (numerically) constant on the feasible set.
        let (s, dual) = sum_row_optimum(&cost, &lp.lower, &lp.upper, total).ok()?;
        return Some(Ok(finish(lp, s.x, dual, 1)));
    }
    for end in [&lo, &hi] {
        if (end.gx - rhs).abs() <= tol {
            let (_, dual) = sum_row_optimum(&cost, &lp.lower, &lp.upper, total).ok()?;
            return Some(Ok(finish(lp, end.x.clone(), dual, 1)));
        }
    }

    let (mut a, mut b) = (lo, hi);
    let mut key = vec![0.0; cost.len()];
    for step in 1..=max_steps {
        let mu = (b.cx - a.cx) / (b.gx - a.gx);
        if !mu.is_finite() {
            return None;
        }
        for ((k, c), gi) in key.iter_mut().zip(&cost).zip(g) {
            *k = c - mu * gi;
        }
        let s = greedy(&key, g, &lp.lower, &lp.upper, total).ok()?;
        let p = Piece::new(s.x, &cost, g);
        let dual = p.at(mu, rhs);
        let upper_line = a.at(mu, rhs);
        let scale = 1.0 + a.cx.abs().max(b.cx.abs()) + (mu * rhs).abs();
        if dual >= upper_line - 1e-12 * scale {
            let t = (rhs - a.gx) / (b.gx - a.gx);
            let x: Vec<f64> = a.x.iter().zip(&b.x).map(|(u, v)| u + t * (v - u)).collect();
            return Some(Ok(finish(lp, x, dual, step)));
        }
        if (p.gx - rhs).abs() <= tol {
            return Some(Ok(finish(lp, p.x, dual, step)));
        }
        if p.gx < rhs {
            a = p;
        } else {
            b = p;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpcore::Sense;

    #[test]
    fn knapsack_fills_cheapest_first() {
        let lp = LinearProgram::new(vec![3.0, 1.0, 2.0], Sense::Minimize, vec![0.0; 3], vec![1.0; 3]).with_equality(vec![1.0; 3], 1.5);
        let s = ParametricSolver::default().solve(&lp).unwrap();
        assert_eq!(s.values, vec![0.0, 1.0, 0.5]);
        assert!((s.objective_value - 2.0).abs() < 1e-15);
        assert!(s.duality_gap() < 1e-12);
    }

    #[test]
    fn two_rows_match_simplex() {
        let lp = LinearProgram::new(vec![1.0, -2.0, 0.5, 3.0, -1.0], Sense::Maximize, vec![1.0; 5], vec![3.0, 2.0, 4.0, 2.5, 3.0])
            .with_equality(vec![1.0; 5], 10.0)
            .with_equality(vec![0.5, 1.0, 2.0, 0.25, 1.5], 12.0);
        let a = ParametricSolver::default().solve(&lp).unwrap();
        let b = BoundedSimplex::default().solve(&lp).unwrap();
        assert!((a.objective_value - b.objective_value).abs() < 1e-10, "{} {}", a.objective_value, b.objective_value);
        assert!(lp.is_feasible(&a.values));
        assert!(a.duality_gap() < 1e-9);
    }

    #[test]
    fn infeasible_rows() {
        let lp = LinearProgram::new(vec![0.0; 2], Sense::Minimize, vec![0.0; 2], vec![1.0; 2])
            .with_equality(vec![1.0; 2], 1.0)
            .with_equality(vec![1.0, 2.0], 5.0);
        assert!(matches!(ParametricSolver::default().solve(&lp), Err(LpError::Infeasible { .. })));
    }

    #[test]
    fn other_shapes_use_the_fallback() {
        let lp = LinearProgram::new(vec![1.0, 2.0], Sense::Minimize, vec![0.0; 2], vec![2.0; 2]).with_equality(vec![2.0, 1.0], 2.0);
        let s = ParametricSolver::default().solve(&lp).unwrap();
        assert!((s.objective_value - 1.0).abs() < 1e-12);
    }
}

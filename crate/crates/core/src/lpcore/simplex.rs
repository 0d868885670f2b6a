use super::{LinearProgram, LpError, LpSolution, LpSolver, EQUALITY_TOL, FEASIBILITY_TOL};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexControls {
    /// Reduced-cost tolerance, relative to the largest cost.
    pub optimality_tol: f64,
    /// Basis changes allowed under Dantzig pricing before switching to Bland's rule.
    pub dantzig_pivots: usize,
    /// Consecutive degenerate basis changes that also trigger the switch.
    pub degenerate_pivots: usize,
}

impl Default for SimplexControls {
    fn default() -> Self {
        SimplexControls {
            optimality_tol: 1e-9,
            dantzig_pivots: 500,
            degenerate_pivots: 50,
        }
    }
}

/// Dense bounded-variable primal simplex.
///
/// Nonbasic variables sit at one of their bounds. Entering candidates are priced
/// once per basis and tried in order of decreasing reduced cost magnitude, so a
/// run of bound flips costs `O(m)` each instead of a full pricing pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoundedSimplex {
    pub controls: SimplexControls,
}

impl LpSolver for BoundedSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        lp.validate()?;
        Tableau::new(lp, self.controls).run()
    }
}

struct Tableau<'a> {
    lp: &'a LinearProgram,
    controls: SimplexControls,
    n: usize,
    m: usize,
    /// Row-scaled equality rows.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    art_sign: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    binv: Vec<f64>,
    iterations: usize,
}

impl<'a> Tableau<'a> {
    fn new(lp: &'a LinearProgram, controls: SimplexControls) -> Self {
        let n = lp.num_vars();
        let m = lp.equalities.len();
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        for eq in &lp.equalities {
            let s = eq.coefficients.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(eq.rhs.abs());
            let s = if s > 0.0 { 1.0 / s } else { 1.0 };
            rows.push(eq.coefficients.iter().map(|a| a * s).collect::<Vec<_>>());
            rhs.push(eq.rhs * s);
        }
        let sign = lp.sense.sign();
        let mut x = Vec::with_capacity(n + m);
        let mut at_upper = vec![false; n + m];
        for j in 0..n {
            if sign * lp.objective[j] < 0.0 {
                x.push(lp.upper[j]);
                at_upper[j] = true;
            } else {
                x.push(lp.lower[j]);
            }
        }
        let mut art_sign = Vec::with_capacity(m);
        for r in 0..m {
            let resid = rhs[r] - rows[r].iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
            art_sign.push(if resid >= 0.0 { 1.0 } else { -1.0 });
            x.push(resid.abs());
        }
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        lower.extend(std::iter::repeat_n(0.0, m));
        upper.extend(std::iter::repeat_n(f64::INFINITY, m));
        let basis: Vec<usize> = (n..n + m).collect();
        let mut position = vec![None; n + m];
        for (i, &b) in basis.iter().enumerate() {
            position[b] = Some(i);
        }
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = art_sign[r];
        }
        Tableau {
            lp,
            controls,
            n,
            m,
            rows,
            rhs,
            art_sign,
            lower,
            upper,
            cost: vec![0.0; n + m],
            x,
            at_upper,
            basis,
            position,
            binv,
            iterations: 0,
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        if j < self.n {
            for (r, o) in out.iter_mut().enumerate() {
                *o = self.rows[r][j];
            }
        } else {
            out.fill(0.0);
            out[j - self.n] = self.art_sign[j - self.n];
        }
    }

    fn entry(&self, r: usize, j: usize) -> f64 {
        if j < self.n {
            self.rows[r][j]
        } else if j - self.n == r {
            self.art_sign[r]
        } else {
            0.0
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut b = vec![0.0; m * m];
        for (i, &j) in self.basis.iter().enumerate() {
            for r in 0..m {
                b[r * m + i] = self.entry(r, j);
            }
        }
        self.binv = invert(&b, m).ok_or_else(|| LpError::Numerics("singular basis".into()))?;
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut resid = self.rhs.clone();
        for j in 0..self.n + self.m {
            if self.position[j].is_some() || self.x[j] == 0.0 {
                continue;
            }
            for (r, res) in resid.iter_mut().enumerate() {
                *res -= self.entry(r, j) * self.x[j];
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[i * m + k] * resid[k]).sum();
            self.x[self.basis[i]] = v;
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|k| (0..m).map(|i| self.cost[self.basis[i]] * self.binv[i * m + k]).sum())
            .collect()
    }

    fn reduced_cost(&self, y: &[f64], j: usize) -> f64 {
        if j < self.n {
            self.cost[j] - y.iter().zip(&self.rows).map(|(y, row)| y * row[j]).sum::<f64>()
        } else {
            self.cost[j] - y[j - self.n] * self.art_sign[j - self.n]
        }
    }

    fn optimize(&mut self) -> Result<(), LpError> {
        let total = self.n + self.m;
        let max_cost = self.cost.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let tol = self.controls.optimality_tol * (1.0 + max_cost);
        let iteration_cap = 50 * (total + 10) + self.iterations;
        let mut bland = false;
        let mut pivots = 0usize;
        let mut degenerate_run = 0usize;
        let mut alpha = vec![0.0; self.m];
        let mut col = vec![0.0; self.m];
        loop {
            let y = self.duals();
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            for j in 0..total {
                if self.position[j].is_some() || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = self.reduced_cost(&y, j);
                if !self.at_upper[j] && d < -tol {
                    cands.push((j, -d, 1.0));
                } else if self.at_upper[j] && d > tol {
                    cands.push((j, d, -1.0));
                }
                if bland && !cands.is_empty() {
                    break;
                }
            }
            if cands.is_empty() {
                return Ok(());
            }
            if !bland {
                cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            }
            for &(j, _, dir) in &cands {
                self.iterations += 1;
                if self.iterations > iteration_cap {
                    return Err(LpError::Numerics("iteration limit reached".into()));
                }
                self.column(j, &mut col);
                let m = self.m;
                for i in 0..m {
                    alpha[i] = (0..m).map(|k| self.binv[i * m + k] * col[k]).sum();
                }
                let amax = alpha.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                let ptol = 1e-9 * amax;
                let mut step = self.upper[j] - self.lower[j];
                let mut leave: Option<usize> = None;
                for i in 0..m {
                    let delta = -dir * alpha[i];
                    let b = self.basis[i];
                    let lim = if delta < -ptol && delta < 0.0 {
                        ((self.x[b] - self.lower[b]) / -delta).max(0.0)
                    } else if delta > ptol && delta > 0.0 {
                        ((self.upper[b] - self.x[b]) / delta).max(0.0)
                    } else {
                        continue;
                    };
                    let better = match leave {
                        _ if lim < step => true,
                        Some(cur) if lim == step => {
                            if bland {
                                b < self.basis[cur]
                            } else {
                                delta.abs() > alpha[cur].abs()
                            }
                        }
                        _ => false,
                    };
                    if better {
                        step = lim;
                        leave = Some(i);
                    }
                }
                if !step.is_finite() {
                    return Err(LpError::Numerics("unbounded direction in a bounded program".into()));
                }
                for i in 0..m {
                    let b = self.basis[i];
                    self.x[b] -= dir * alpha[i] * step;
                }
                match leave {
                    None => {
                        self.at_upper[j] = dir > 0.0;
                        self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                        if bland {
                            break;
                        }
                    }
                    Some(i) => {
                        let out = self.basis[i];
                        let to_lower = -dir * alpha[i] < 0.0;
                        self.x[out] = if to_lower { self.lower[out] } else { self.upper[out] };
                        self.at_upper[out] = !to_lower;
                        self.x[j] += dir * step;
                        self.position[out] = None;
                        self.position[j] = Some(i);
                        self.basis[i] = j;
                        self.refactor()?;
                        self.recompute_basics();
                        pivots += 1;
                        degenerate_run = if step <= 1e-12 { degenerate_run + 1 } else { 0 };
                        if pivots > self.controls.dantzig_pivots || degenerate_run > self.controls.degenerate_pivots {
                            bland = true;
                        }
                        break;
                    }
                }
            }
        }
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        let (n, m) = (self.n, self.m);
        for r in 0..m {
            self.cost[n + r] = 1.0;
        }
        self.optimize()?;
        self.recompute_basics();
        let bmax = self.rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let residual: f64 = (n..n + m).map(|j| self.x[j].abs()).sum();
        if residual > 1e-9 * (1.0 + bmax) {
            return Err(LpError::Infeasible { residual });
        }

        let sign = self.lp.sense.sign();
        for j in 0..n {
            self.cost[j] = sign * self.lp.objective[j];
        }
        for j in n..n + m {
            self.cost[j] = 0.0;
            self.upper[j] = 0.0;
            if self.position[j].is_none() {
                self.x[j] = 0.0;
                self.at_upper[j] = false;
            }
        }
        self.optimize()?;
        self.recompute_basics();

        let mut values = self.x[..n].to_vec();
        for j in 0..n {
            let (l, u) = (self.lp.lower[j], self.lp.upper[j]);
            let slack = FEASIBILITY_TOL * (1.0 + l.abs().max(u.abs()));
            if values[j] < l - slack || values[j] > u + slack {
                return Err(LpError::Numerics(format!("variable {j} = {} outside [{l}, {u}]", values[j])));
            }
            values[j] = values[j].clamp(l, u);
        }
        let (_, eq_v) = self.lp.violations(&values);
        if eq_v > EQUALITY_TOL {
            return Err(LpError::Numerics(format!("equality residual {eq_v:.3e} after solve")));
        }

        let y = self.duals();
        let mut dual = y.iter().zip(&self.rhs).map(|(y, b)| y * b).sum::<f64>();
        for j in 0..n {
            let d = self.reduced_cost(&y, j);
            dual += if d >= 0.0 { d * self.lp.lower[j] } else { d * self.lp.upper[j] };
        }
        Ok(LpSolution {
            objective_value: self.lp.objective_at(&values),
            values,
            dual_bound: sign * dual,
            iterations: self.iterations,
        })
    }
}

/// Gauss-Jordan inverse of a row-major `m × m` matrix with partial pivoting.
fn invert(a: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut w = a.to_vec();
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    let scale = a.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    for c in 0..m {
        let p = (c..m).max_by(|&r1, &r2| w[r1 * m + c].abs().total_cmp(&w[r2 * m + c].abs()))?;
        let piv = w[p * m + c];
        if piv.abs() <= 1e-14 * scale || piv == 0.0 {
            return None;
        }
        if p != c {
            for k in 0..m {
                w.swap(p * m + k, c * m + k);
                inv.swap(p * m + k, c * m + k);
            }
        }
        for k in 0..m {
            w[c * m + k] /= piv;
            inv[c * m + k] /= piv;
        }
        for r in 0..m {
            if r == c {
                continue;
            }
            let f = w[r * m + c];
            if f == 0.0 {
                continue;
            }
            for k in 0..m {
                w[r * m + k] -= f * w[c * m + k];
                inv[r * m + k] -= f * inv[c * m + k];
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpcore::Sense;

    #[test]
    fn redundant_rows_are_tolerated() {
        let lp = LinearProgram::new(vec![1.0, 3.0, 2.0], Sense::Minimize, vec![0.0; 3], vec![2.0; 3])
            .with_equality(vec![1.0, 1.0, 1.0], 3.0)
            .with_equality(vec![2.0, 2.0, 2.0], 6.0);
        let s = BoundedSimplex::default().solve(&lp).unwrap();
        assert!((s.objective_value - 4.0).abs() < 1e-12);
        assert!(lp.is_feasible(&s.values));
    }

    #[test]
    fn deterministic() {
        let lp = LinearProgram::new(vec![0.3, -1.2, 0.7, 0.1], Sense::Maximize, vec![-1.0; 4], vec![1.5; 4])
            .with_equality(vec![1.0, 2.0, -1.0, 0.5], 0.4)
            .with_equality(vec![0.0, 1.0, 1.0, 1.0], 1.0);
        let a = BoundedSimplex::default().solve(&lp).unwrap();
        let b = BoundedSimplex::default().solve(&lp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invert_small() {
        let inv = invert(&[2.0, 1.0, 1.0, 3.0], 2).unwrap();
        let expect = [0.6, -0.2, -0.2, 0.4];
        for (a, b) in inv.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }
}

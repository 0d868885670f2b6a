//! Exhaustive basic-solution enumeration for small linear programs.

use crate::lpcore::{LinearProgram, LpError};

/// Row-reduce `[A | b]` to independent rows. Returns `None` when inconsistent.
fn independent_rows(lp: &LinearProgram) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = lp.num_vars();
    let mut rows: Vec<Vec<f64>> = lp
        .equalities
        .iter()
        .map(|e| {
            let mut r = e.coefficients.clone();
            r.push(e.rhs);
            r
        })
        .collect();
    let scale = rows.iter().flat_map(|r| &r[..n]).fold(1e-300_f64, |a, v| a.max(v.abs()));
    let mut out = Vec::new();
    let mut col = 0;
    while !rows.is_empty() && col < n {
        let (best, mag) = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r[col].abs() / scale))
            .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if mag <= 1e-10 {
            col += 1;
            continue;
        }
        let pivot = rows.swap_remove(best);
        for r in rows.iter_mut() {
            let f = r[col] / pivot[col];
            for k in 0..=n {
                r[k] -= f * pivot[k];
            }
        }
        out.push(pivot);
        col += 1;
    }
    for r in &rows {
        let scale = 1.0 + r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if r[n].abs() > 1e-9 * scale {
            return None;
        }
    }
    let b = out.iter().map(|r| r[n]).collect();
    let a = out.into_iter().map(|mut r| {
        r.pop();
        r
    });
    Some((a.collect(), b))
}

fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = b.len();
    let mut w: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v]).collect()).collect();
    let scale = a.iter().flatten().fold(0.0_f64, |s, v| s.max(v.abs()));
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| w[i][c].abs().total_cmp(&w[j][c].abs()))?;
        if w[p][c].abs() <= 1e-12 * scale {
            return None;
        }
        w.swap(p, c);
        for r in 0..m {
            if r != c {
                let f = w[r][c] / w[c][c];
                for k in c..=m {
                    w[r][k] -= f * w[c][k];
                }
            }
        }
    }
    Some((0..m).map(|i| w[i][m] / w[i][i]).collect())
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] != i + n - k {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return;
            }
        }
        if k == 0 {
            return;
        }
    }
}

/// Calls `visit` on every feasible basic solution of `lp`.
pub fn for_each_vertex(lp: &LinearProgram, mut visit: impl FnMut(&[f64])) -> Result<(), LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    let (a, b) = independent_rows(lp).ok_or(LpError::Infeasible { residual: f64::NAN })?;
    let r = b.len();
    let mut x = vec![0.0; n];
    let mut found = false;
    combinations(n, r, |basic| {
        let sub: Vec<Vec<f64>> = a.iter().map(|row| basic.iter().map(|&j| row[j]).collect()).collect();
        if solve_square(&sub, &vec![0.0; r]).is_none() {
            return;
        }
        let nonbasic: Vec<usize> = (0..n).filter(|j| !basic.contains(j)).collect();
        for mask in 0u64..(1u64 << nonbasic.len()) {
            for (k, &j) in nonbasic.iter().enumerate() {
                x[j] = if mask >> k & 1 == 1 { lp.upper[j] } else { lp.lower[j] };
            }
            let rhs: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(row, &bi)| bi - nonbasic.iter().map(|&j| row[j] * x[j]).sum::<f64>())
                .collect();
            let Some(xb) = solve_square(&sub, &rhs) else { return };
            let mut ok = true;
            for (&j, &v) in basic.iter().zip(&xb) {
                let slack = 1e-9 * (1.0 + lp.lower[j].abs().max(lp.upper[j].abs()));
                if v < lp.lower[j] - slack || v > lp.upper[j] + slack {
                    ok = false;
                    break;
                }
                x[j] = v.clamp(lp.lower[j], lp.upper[j]);
            }
            if ok {
                found = true;
                visit(&x);
            }
        }
    });
    if found {
        Ok(())
    } else {
        Err(LpError::Infeasible { residual: f64::NAN })
    }
}

/// Best objective over all vertices, with the attaining point.
pub fn vertex_optimum(lp: &LinearProgram) -> Result<(f64, Vec<f64>), LpError> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for_each_vertex(lp, |x| {
        let v = lp.objective_at(x);
        let better = match &best {
            None => true,
            Some((b, _)) => lp.sense.improves(v, *b, 0.0),
        };
        if better {
            best = Some((v, x.to_vec()));
        }
    })?;
    Ok(best.expect("at least one vertex"))
}

/// Minimum and maximum objective over the feasible polytope.
pub fn vertex_range(lp: &LinearProgram) -> Result<(f64, f64), LpError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for_each_vertex(lp, |x| {
        let v = lp.objective_at(x);
        lo = lo.min(v);
        hi = hi.max(v);
    })?;
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpcore::Sense;

    #[test]
    fn counts_combinations() {
        let mut c = 0;
        combinations(5, 2, |_| c += 1);
        assert_eq!(c, 10);
        let mut c = 0;
        combinations(4, 0, |s| {
            assert!(s.is_empty());
            c += 1
        });
        assert_eq!(c, 1);
    }

    #[test]
    fn simple_range() {
        let lp = LinearProgram::new(vec![1.0, 2.0], Sense::Minimize, vec![1.0; 2], vec![2.0; 2]).with_equality(vec![1.0, 1.0], 3.0);
        assert_eq!(vertex_range(&lp).unwrap(), (4.0, 5.0));
        let (v, x) = vertex_optimum(&lp).unwrap();
        assert_eq!(v, 4.0);
        assert_eq!(x, vec![2.0, 1.0]);
    }

    #[test]
    fn redundant_and_inconsistent_rows() {
        let lp = LinearProgram::new(vec![1.0, 0.0], Sense::Maximize, vec![0.0; 2], vec![1.0; 2])
            .with_equality(vec![1.0, 1.0], 1.0)
            .with_equality(vec![2.0, 2.0], 2.0);
        assert_eq!(vertex_optimum(&lp).unwrap().0, 1.0);
        let bad = LinearProgram::new(vec![1.0, 0.0], Sense::Maximize, vec![0.0; 2], vec![1.0; 2])
            .with_equality(vec![1.0, 1.0], 1.0)
            .with_equality(vec![2.0, 2.0], 1.0);
        assert!(vertex_optimum(&bad).is_err());
    }
}

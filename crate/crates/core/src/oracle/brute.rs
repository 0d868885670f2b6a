//! Grid search over weight blocks for tiny bound programs.

use super::vertex::vertex_optimum;
use crate::bounds::{alternate_from, AlternationControls, BoundProblem, BoundsError};
use crate::lpcore::{BoundedSimplex, LinearProgram, LpError, LpSolution, LpSolver, Sense, WeightedFraction};

pub const MAX_ROWS: usize = 8;
pub const MAX_GRID: f64 = 1e7;

/// Exact LP solver by vertex enumeration.
#[derive(Clone, Copy, Debug, Default)]
pub struct VertexSolver;

impl LpSolver for VertexSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let (v, x) = vertex_optimum(lp)?;
        Ok(LpSolution {
            values: x,
            objective_value: v,
            dual_bound: v,
            iterations: 0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Interior points per variable in addition to the two endpoints.
    pub interior: usize,
    /// Best grid points per sense that are polished by alternating vertex LPs.
    pub polish: usize,
    /// Best grid points per sense that are first refined by a pattern search
    /// over the outer blocks.
    pub refine: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            interior: 3,
            polish: 8,
            refine: 3,
        }
    }
}

impl GridSpec {
    /// Largest number of interior points (at least one) whose grid for
    /// `problem` stays within `max_points`.
    pub fn within(problem: &BoundProblem, max_points: f64) -> Self {
        let base = GridSpec::default();
        let outer = split_blocks(problem).map_or_else(Vec::new, |(_, o)| o);
        let mut interior = 1;
        while interior < 100_000 && grid_size(problem, &outer, interior + 1) <= max_points.min(MAX_GRID) {
            interior += 1;
        }
        GridSpec { interior, ..base }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteForceBounds {
    /// Extremes over grid points with the last free block solved exactly.
    pub grid_min: f64,
    pub grid_max: f64,
    /// Extremes after polishing; never inside the grid extremes.
    pub min: f64,
    pub max: f64,
    pub grid_points: usize,
}

/// Candidate vectors for one block: every variable on the grid except one
/// designated variable, which is solved from the sum equality.
fn block_grid(lower: &[f64], upper: &[f64], sum: f64, interior: usize) -> Vec<Vec<f64>> {
    let n = lower.len();
    let (lower, upper) = &sum_tightened_box(lower, upper, sum);
    let levels: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            if lower[j] == upper[j] {
                return vec![lower[j]];
            }
            (0..interior + 2)
                .map(|k| lower[j] + (upper[j] - lower[j]) * k as f64 / (interior + 1) as f64)
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for free in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != free).collect();
        let mut idx = vec![0usize; others.len()];
        loop {
            let mut w = vec![0.0; n];
            let mut s = 0.0;
            for (k, &j) in others.iter().enumerate() {
                w[j] = levels[j][idx[k]];
                s += w[j];
            }
            let v = sum - s;
            let slack = 1e-12 * (1.0 + upper[free].abs());
            if v >= lower[free] - slack && v <= upper[free] + slack {
                w[free] = v.clamp(lower[free], upper[free]);
                out.push(w);
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < levels[others[k]].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    out
}

/// The block solved exactly (the one with the widest box, so that the set of
/// outer grid points with a feasible inner block is as thick as possible) and
/// the outer blocks.
fn split_blocks(problem: &BoundProblem) -> Option<(usize, Vec<usize>)> {
    let active = problem.active_blocks();
    let width = |b: usize| {
        let blk = &problem.blocks[b];
        let (lo, hi) = sum_tightened_box(&blk.lower, &blk.upper, blk.sum_rhs);
        hi.iter().zip(&lo).map(|(u, l)| u - l).sum::<f64>()
    };
    let inner = active.iter().copied().rev().max_by(|&a, &b| width(a).total_cmp(&width(b)))?;
    Some((inner, active.into_iter().filter(|&b| b != inner).collect()))
}

/// The box shrunk to the range each variable can take on `Σ x = sum`.
fn sum_tightened_box(lower: &[f64], upper: &[f64], sum: f64) -> (Vec<f64>, Vec<f64>) {
    let lo_total: f64 = lower.iter().sum();
    let hi_total: f64 = upper.iter().sum();
    lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            let lo = l.max(sum - (hi_total - u)).min(u);
            let hi = u.min(sum - (lo_total - l)).max(lo);
            (lo, hi)
        })
        .unzip()
}

fn grid_size(problem: &BoundProblem, outer: &[usize], interior: usize) -> f64 {
    let n = problem.len() as f64;
    outer
        .iter()
        .map(|_| n * ((interior + 2) as f64).powf(n - 1.0))
        .product()
}

/// Optimum over block `b` with the other blocks fixed, by the simplex.
fn inner_optimum(problem: &BoundProblem, w: &[Vec<f64>], b: usize, sense: Sense) -> Option<(f64, Vec<f64>)> {
    let g: Vec<f64> = (0..problem.len()).map(|i| problem.product(w, i, Some(b))).collect();
    let blk = &problem.blocks[b];
    let wf = WeightedFraction {
        outcome: &problem.outcome,
        fixed_factor: &g,
        shift: blk.shift,
        lower: &blk.lower,
        upper: &blk.upper,
        block_sum: Some(blk.sum_rhs),
        normalizer: problem.normalizer,
        sense,
    };
    let sol = BoundedSimplex::default().solve(&wf.to_program().ok()?).ok()?;
    Some((wf.value_at(&sol.values), sol.values))
}

/// Pattern search over the outer blocks: shift mass between two rows of one
/// block (keeping its sum) and re-solve the inner block exactly; accepted moves
/// must improve, and the step halves whenever no move does.
fn refine(problem: &BoundProblem, sense: Sense, mut w: Vec<Vec<f64>>, outer: &[usize], inner: usize) -> Option<(f64, Vec<Vec<f64>>)> {
    const MAX_EVALUATIONS: usize = 200_000;
    let (mut value, x) = inner_optimum(problem, &w, inner, sense)?;
    w[inner] = x;
    let n = problem.len();
    let width = |b: usize| {
        let blk = &problem.blocks[b];
        let (lo, hi) = sum_tightened_box(&blk.lower, &blk.upper, blk.sum_rhs);
        (0..n).map(|i| hi[i] - lo[i]).fold(0.0, f64::max)
    };
    let mut step: Vec<f64> = outer.iter().map(|&b| 0.25 * width(b)).collect();
    let floor: Vec<f64> = outer.iter().map(|&b| 1e-12 * (1.0 + width(b))).collect();
    let mut evaluations = 0;
    while step.iter().zip(&floor).any(|(h, f)| h > f) && evaluations < MAX_EVALUATIONS {
        let mut improved = false;
        for (k, &b) in outer.iter().enumerate() {
            if step[k] <= floor[k] {
                continue;
            }
            let blk = &problem.blocks[b];
            for from in 0..n {
                for to in 0..n {
                    let h = step[k].min(w[b][from] - blk.lower[from]).min(blk.upper[to] - w[b][to]);
                    if from == to || h <= 0.0 {
                        continue;
                    }
                    let mut trial = w.clone();
                    trial[b][from] -= h;
                    trial[b][to] += h;
                    evaluations += 1;
                    if let Some((v, x)) = inner_optimum(problem, &trial, inner, sense) {
                        if sense.improves(v, value, 1e-15 * (1.0 + value.abs())) {
                            trial[inner] = x;
                            w = trial;
                            value = v;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|h| *h *= 0.5);
        }
    }
    Some((value, w))
}

/// Range of the objective over the polytope of block `b` with the other blocks fixed.
fn inner_range(problem: &BoundProblem, w: &[Vec<f64>], b: usize) -> Result<(f64, f64, Vec<f64>, Vec<f64>), LpError> {
    let g: Vec<f64> = (0..problem.len()).map(|i| problem.product(w, i, Some(b))).collect();
    let blk = &problem.blocks[b];
    let mk = |sense| WeightedFraction {
        outcome: &problem.outcome,
        fixed_factor: &g,
        shift: blk.shift,
        lower: &blk.lower,
        upper: &blk.upper,
        block_sum: Some(blk.sum_rhs),
        normalizer: problem.normalizer,
        sense,
    };
    let lo = mk(Sense::Minimize);
    let hi = mk(Sense::Maximize);
    let (_, xlo) = vertex_optimum(&lo.to_program()?)?;
    let (_, xhi) = vertex_optimum(&hi.to_program()?)?;
    Ok((lo.value_at(&xlo), hi.value_at(&xhi), xlo, xhi))
}

/// Global range estimate of a tiny bound program.
pub fn brute_force_bounds(problem: &BoundProblem, grid: GridSpec) -> Result<BruteForceBounds, BoundsError> {
    if problem.len() > MAX_ROWS {
        return Err(BoundsError::TooManyRows {
            rows: problem.len(),
            limit: MAX_ROWS,
        });
    }
    let start = problem.start();
    let v0 = problem.objective(&start);
    let Some((inner, outer)) = split_blocks(problem) else {
        return Ok(BruteForceBounds {
            grid_min: v0,
            grid_max: v0,
            min: v0,
            max: v0,
            grid_points: 1,
        });
    };
    let size = grid_size(problem, &outer, grid.interior);
    if size > MAX_GRID {
        return Err(BoundsError::GridTooLarge { size, limit: MAX_GRID });
    }
    let grids: Vec<Vec<Vec<f64>>> = outer
        .iter()
        .map(|&b| {
            let blk = &problem.blocks[b];
            block_grid(&blk.lower, &blk.upper, blk.sum_rhs, grid.interior)
        })
        .collect();
    let lp_err = |sense, source| BoundsError::Lp {
        target: problem.target,
        sense,
        source,
    };

    let mut lows: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    let mut highs: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    let mut points = 0usize;
    let mut idx = vec![0usize; outer.len()];
    loop {
        let mut w = start.clone();
        for (k, &b) in outer.iter().enumerate() {
            w[b] = grids[k][idx[k]].clone();
        }
        match inner_range(problem, &w, inner) {
            Ok((lo, hi, xlo, xhi)) => {
                points += 1;
                let mut wl = w.clone();
                wl[inner] = xlo;
                let mut wh = w;
                wh[inner] = xhi;
                lows.push((lo, wl));
                highs.push((hi, wh));
            }
            Err(LpError::Infeasible { .. }) => {}
            Err(e) => return Err(lp_err(Sense::Minimize, e)),
        }
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < grids[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    if lows.is_empty() {
        lows.push((v0, start.clone()));
        highs.push((v0, start.clone()));
    }
    lows.sort_by(|a, b| a.0.total_cmp(&b.0));
    highs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let grid_min = lows[0].0;
    let grid_max = highs[0].0;

    let controls = AlternationControls::default();
    let mut extremes = [grid_min, grid_max];
    for (k, (sense, seeds)) in [(Sense::Minimize, lows), (Sense::Maximize, highs)].into_iter().enumerate() {
        let mut starts: Vec<Vec<Vec<f64>>> = seeds.iter().take(grid.refine).filter_map(|(_, w)| refine(problem, sense, w.clone(), &outer, inner).map(|r| r.1)).collect();
        starts.extend(seeds.into_iter().take(grid.polish).map(|(_, w)| w));
        for w in starts {
            if let Ok(out) = alternate_from(problem, sense, &controls, &VertexSolver, w) {
                if sense.improves(out.value, extremes[k], 0.0) {
                    extremes[k] = out.value;
                }
            }
        }
    }
    let [min, max] = extremes;
    Ok(BruteForceBounds {
        grid_min,
        grid_max,
        min,
        max,
        grid_points: points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Target;

    #[test]
    fn grid_respects_sum_and_box() {
        let g = block_grid(&[1.0, 1.0, 2.0], &[2.0, 3.0, 2.0], 5.0, 3);
        assert!(!g.is_empty());
        for w in &g {
            assert!((w.iter().sum::<f64>() - 5.0).abs() < 1e-12);
            assert!(w[2] == 2.0 && (1.0..=2.0).contains(&w[0]) && (1.0..=3.0).contains(&w[1]));
        }
    }

    #[test]
    fn zero_radius_is_a_point() {
        let p = vec![vec![0.4, 0.6], vec![0.8, 0.7]];
        let prob = BoundProblem::from_parts(Target::Y1M1, vec![0, 1], vec![1.0, 2.0], &p, &[0.0, 0.0], 1e-6).unwrap();
        let bf = brute_force_bounds(&prob, GridSpec::default()).unwrap();
        let v = prob.objective(&prob.start());
        assert_eq!((bf.min, bf.max), (v, v));
    }

    #[test]
    fn two_row_single_block_matches_exchange() {
        let p = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let prob = BoundProblem::from_parts(Target::Y1M1, vec![0, 1], vec![1.0, 3.0], &p, &[0.5, 0.0], 1e-6).unwrap();
        let bf = brute_force_bounds(&prob, GridSpec::default()).unwrap();
        let (a, b) = (4.0 - 1.0 / 0.75, 1.0 / 0.75);
        assert!((bf.min - (a + 3.0 * b) / 4.0).abs() < 1e-10);
        assert!((bf.max - (b + 3.0 * a) / 4.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_large_instances() {
        let p = vec![vec![0.5; 9], vec![0.5; 9]];
        let prob = BoundProblem::from_parts(Target::Y1M1, (0..9).collect(), vec![1.0; 9], &p, &[0.1, 0.1], 1e-6).unwrap();
        assert!(matches!(brute_force_bounds(&prob, GridSpec::default()), Err(BoundsError::TooManyRows { .. })));
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_problem, BoundProblem, BoundsError, MpoBounds, TargetBounds};
use crate::calibration::EntropyBudget;
use crate::dataset::AnalysisSample;
use crate::exec::{self, Execution};
use crate::lpcore::{solve_weighted_fraction_fixed, ParametricSolver, LpSolver, Sense, WeightedFraction};
use crate::propensity::{PerTarget, PropensityScores};
use crate::Target;

/// Relative slack before a worse LP step counts as a solver bug.
const MONOTONE_SLACK: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlternationControls {
    /// Converged when a full sweep moves the objective by at most `tolerance (1 + |v|)`.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Number of starting points; extra starts are random vertices of the first free block.
    pub starts: usize,
    pub seed: u64,
}

impl Default for AlternationControls {
    fn default() -> Self {
        AlternationControls {
            tolerance: 1e-9,
            max_sweeps: 200,
            starts: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub value: f64,
    pub weights: Vec<Vec<f64>>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Optimal weights of a previous run, reused as extra starting points.
pub type WarmStart = PerTarget<[Option<Vec<Vec<f64>>>; 2]>;

fn sense_index(sense: Sense) -> usize {
    match sense {
        Sense::Minimize => 0,
        Sense::Maximize => 1,
    }
}

/// Alternating sweeps from the given feasible weights.
pub fn alternate_from(
    problem: &BoundProblem,
    sense: Sense,
    controls: &AlternationControls,
    solver: &dyn LpSolver,
    mut w: Vec<Vec<f64>>,
) -> Result<SolveOutcome, BoundsError> {
    let active = problem.active_blocks();
    let mut value = problem.objective(&w);
    if active.is_empty() {
        return Ok(SolveOutcome {
            value,
            weights: w,
            converged: true,
            sweeps: 0,
        });
    }
    let n = problem.len();
    let mut g = vec![0.0; n];
    for sweep in 1..=controls.max_sweeps {
        let before_sweep = value;
        for &b in &active {
            for (i, gi) in g.iter_mut().enumerate() {
                *gi = problem.product(&w, i, Some(b));
            }
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
            let sol = solve_weighted_fraction_fixed(solver, &wf).map_err(|source| BoundsError::Lp {
                target: problem.target,
                sense,
                source,
            })?;
            let v = wf.value_at(&sol.values);
            if sense.improves(value, v, MONOTONE_SLACK * (1.0 + value.abs())) {
                return Err(BoundsError::NonMonotoneStep {
                    target: problem.target,
                    sense,
                    before: value,
                    after: v,
                });
            }
            if sense.improves(v, value, 0.0) {
                w[b] = sol.values;
                value = v;
            }
        }
        if active.len() == 1 || (value - before_sweep).abs() <= controls.tolerance * (1.0 + value.abs()) {
            return Ok(SolveOutcome {
                value,
                weights: w,
                converged: true,
                sweeps: sweep,
            });
        }
    }
    Ok(SolveOutcome {
        value,
        weights: w,
        converged: false,
        sweeps: controls.max_sweeps,
    })
}

fn random_start(problem: &BoundProblem, solver: &dyn LpSolver, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<f64>>> {
    let &b = problem.active_blocks().first()?;
    let mut w = problem.start();
    let g: Vec<f64> = (0..problem.len()).map(|i| problem.product(&w, i, Some(b))).collect();
    let costs: Vec<f64> = (0..problem.len()).map(|_| rng.random::<f64>() - 0.5).collect();
    let blk = &problem.blocks[b];
    let wf = WeightedFraction {
        outcome: &costs,
        fixed_factor: &g,
        shift: blk.shift,
        lower: &blk.lower,
        upper: &blk.upper,
        block_sum: Some(blk.sum_rhs),
        normalizer: problem.normalizer,
        sense: Sense::Minimize,
    };
    let sol = solve_weighted_fraction_fixed(solver, &wf).ok()?;
    w[b] = sol.values;
    Some(w)
}

fn stream_seed(seed: u64, target: Target, sense: Sense) -> u64 {
    let tag = (target.index() * 2 + sense_index(sense)) as u64 + 1;
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Block-coordinate extremum of `problem` from the IPW starting weights.
pub fn alternate_solve(problem: &BoundProblem, sense: Sense, controls: &AlternationControls) -> Result<SolveOutcome, BoundsError> {
    alternate_solve_with(problem, sense, controls, &ParametricSolver::default(), &[])
}

/// As [`alternate_solve`], with a chosen LP solver and additional feasible starts.
/// Returns the best outcome over all starts.
pub fn alternate_solve_with(
    problem: &BoundProblem,
    sense: Sense,
    controls: &AlternationControls,
    solver: &dyn LpSolver,
    extra_starts: &[Vec<Vec<f64>>],
) -> Result<SolveOutcome, BoundsError> {
    let mut best = alternate_from(problem, sense, controls, solver, problem.start())?;
    let consider = |out: SolveOutcome, best: &mut SolveOutcome| {
        if sense.improves(out.value, best.value, 0.0) {
            *best = out;
        }
    };
    for w in extra_starts {
        if w.len() != problem.blocks.len() || w.iter().any(|b| b.len() != problem.len()) || problem.max_violation(w) > 1e-7 {
            log::debug!("discarding infeasible warm start for {}", problem.target);
            continue;
        }
        let out = alternate_from(problem, sense, controls, solver, w.clone())?;
        consider(out, &mut best);
    }
    if controls.starts > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(controls.seed, problem.target, sense));
        for _ in 1..controls.starts {
            if let Some(w) = random_start(problem, solver, &mut rng) {
                let out = alternate_from(problem, sense, controls, solver, w)?;
                consider(out, &mut best);
            }
        }
    }
    Ok(best)
}

/// Lower and upper bounds for all four targets.
pub fn all_bounds(
    sample: &AnalysisSample,
    scores: &PropensityScores,
    budget: &EntropyBudget,
    controls: &AlternationControls,
    execution: Execution,
) -> Result<MpoBounds, BoundsError> {
    all_bounds_with(sample, scores, budget, controls, execution, &ParametricSolver::default(), &[]).map(|(b, _)| b)
}

/// As [`all_bounds`], also starting from each warm start and returning the optimal
/// weights for reuse.
pub fn all_bounds_with(
    sample: &AnalysisSample,
    scores: &PropensityScores,
    budget: &EntropyBudget,
    controls: &AlternationControls,
    execution: Execution,
    solver: &dyn LpSolver,
    warm: &[&WarmStart],
) -> Result<(MpoBounds, WarmStart), BoundsError> {
    let problems = Target::ALL
        .iter()
        .map(|&t| build_problem(t, sample, scores, budget))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, Sense)> = (0..4).flat_map(|t| [(t, Sense::Minimize), (t, Sense::Maximize)]).collect();
    let results = exec::map(execution, &jobs, |&(t, sense)| {
        let problem = &problems[t];
        let extra: Vec<Vec<Vec<f64>>> = warm
            .iter()
            .filter_map(|ws| ws.get_ref(problem.target)[sense_index(sense)].clone())
            .collect();
        alternate_solve_with(problem, sense, controls, solver, &extra)
    });
    let mut outcomes = Vec::with_capacity(8);
    for r in results {
        outcomes.push(r?);
    }
    let mut slots: Vec<Option<SolveOutcome>> = outcomes.into_iter().map(Some).collect();
    let mut weights: WarmStart = PerTarget::default();
    let mut targets = PerTarget::from_fn(|_| None::<TargetBounds>);
    for (t, problem) in problems.iter().enumerate() {
        let lo = slots[2 * t].take().expect("lower outcome");
        let hi = slots[2 * t + 1].take().expect("upper outcome");
        let tb = TargetBounds {
            lower: lo.value,
            upper: hi.value,
            point: problem.objective(&problem.start()),
            lower_sweeps: lo.sweeps,
            upper_sweeps: hi.sweeps,
            lower_converged: lo.converged,
            upper_converged: hi.converged,
        };
        let target = problem.target;
        *slot_mut(&mut targets, target) = Some(tb);
        *slot_mut(&mut weights, target) = [Some(lo.weights), Some(hi.weights)];
    }
    let targets = PerTarget::from_fn(|t| targets.get(t).expect("all targets solved"));
    Ok((MpoBounds { targets }, weights))
}

fn slot_mut<T>(p: &mut PerTarget<T>, t: Target) -> &mut T {
    match t {
        Target::Y1M1 => &mut p.y1m1,
        Target::Y0M0 => &mut p.y0m0,
        Target::Y1M0 => &mut p.y1m0,
        Target::Y0M1 => &mut p.y0m1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_converges_immediately() {
        let p = vec![vec![0.4, 0.6, 0.5], vec![0.8, 0.7, 0.9]];
        let prob = BoundProblem::from_parts(Target::Y1M1, vec![0, 1, 2], vec![1.0, 2.0, 4.0], &p, &[0.0, 0.0], 1e-6).unwrap();
        for sense in [Sense::Minimize, Sense::Maximize] {
            let out = alternate_solve(&prob, sense, &AlternationControls::default()).unwrap();
            assert_eq!(out.sweeps, 0);
            assert!(out.converged);
            assert_eq!(out.value, prob.objective(&prob.start()));
        }
    }

    #[test]
    fn two_row_single_block_exchange() {
        let p = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let prob = BoundProblem::from_parts(Target::Y1M1, vec![0, 1], vec![1.0, 3.0], &p, &[0.5, 0.0], 1e-6).unwrap();
        let lo = alternate_solve(&prob, Sense::Minimize, &AlternationControls::default()).unwrap();
        let hi = alternate_solve(&prob, Sense::Maximize, &AlternationControls::default()).unwrap();
        // ω ∈ [1/0.75, 1/0.25] with ω_1 + ω_2 = 4: the exchange puts the most weight
        // allowed on the cheaper (or dearer) row.
        let (a, b) = (4.0 - 1.0 / 0.75, 1.0 / 0.75);
        assert!((lo.value - (a * 1.0 + b * 3.0) / 4.0).abs() < 1e-10);
        assert!((hi.value - (b * 1.0 + a * 3.0) / 4.0).abs() < 1e-10);
    }

    #[test]
    fn contains_start_and_is_deterministic() {
        let p = vec![vec![0.3, 0.6, 0.5, 0.45], vec![0.5, 0.4, 0.6, 0.3], vec![0.8, 0.7, 0.9, 0.6]];
        let prob = BoundProblem::from_parts(Target::Y1M0, (0..4).collect(), vec![1.0, -2.0, 0.5, 3.0], &p, &[0.3, 0.2, 0.25], 1e-6)
            .unwrap();
        let start = prob.objective(&prob.start());
        let c = AlternationControls {
            starts: 3,
            seed: 11,
            ..Default::default()
        };
        let lo = alternate_solve(&prob, Sense::Minimize, &c).unwrap();
        let hi = alternate_solve(&prob, Sense::Maximize, &c).unwrap();
        assert!(lo.value <= start + 1e-12 && start <= hi.value + 1e-12);
        assert!(prob.max_violation(&lo.weights) < 1e-7);
        assert!(prob.max_violation(&hi.weights) < 1e-7);
        assert_eq!(lo, alternate_solve(&prob, Sense::Minimize, &c).unwrap());
    }
}

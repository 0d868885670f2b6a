//! End-to-end evaluation of a relaxation grid, with optional subsampling.

use serde::{Deserialize, Serialize};

use crate::bounds::{all_bounds_with, compose_effects, AlternationControls, EffectBounds, MpoBounds, WarmStart};
use crate::calibration::{Calibrator, EntropyBudget, PredictorGrouping};
use crate::config::{CellSpec, RunConfig};
use crate::dataset::AnalysisSample;
use crate::exec::{self, Execution};
use crate::glm::{FitControls, LinkFunction};
use crate::inference::{assemble_ci, run_replications, BoundCI, SubsamplingPlan};
use crate::lpcore::ParametricSolver;
use crate::propensity::{estimate_propensities, ipw_point_estimates, PointEstimates, PropensityScores};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub link: LinkFunction,
    pub fit: FitControls,
    pub grouping: PredictorGrouping,
    pub alternation: AlternationControls,
    pub execution: Execution,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            link: LinkFunction::Logit,
            fit: FitControls::default(),
            grouping: PredictorGrouping::default(),
            alternation: AlternationControls::default(),
            execution: Execution::Parallel,
        }
    }
}

impl PipelineOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        PipelineOptions {
            link: cfg.link,
            fit: cfg.fit_controls(),
            grouping: cfg.grouping.clone(),
            alternation: AlternationControls {
                seed: cfg.alternation.seed ^ cfg.seed,
                ..cfg.alternation
            },
            execution: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub spec: CellSpec,
    pub budget: EntropyBudget,
    pub bounds: MpoBounds,
    pub effects: EffectBounds,
}

#[derive(Clone, Debug)]
pub struct GridEvaluation {
    pub scores: PropensityScores,
    pub point: PointEstimates,
    pub cells: Vec<CellOutcome>,
}

/// Solve order: cells grouped into levels so that every cell comes after all
/// cells whose budget it dominates. For each cell also returns the maximal
/// dominated cells, whose optimal weights seed its solve.
fn dominance_plan(budgets: &[EntropyBudget]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n = budgets.len();
    let sum = |b: &EntropyBudget| b.values.iter().flatten().sum::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sum(&budgets[a]).total_cmp(&sum(&budgets[b])).then(a.cmp(&b)));
    let mut pos = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    let below = |j: usize, i: usize| pos[j] < pos[i] && budgets[j].dominated_by(&budgets[i]);
    let mut level = vec![0usize; n];
    let mut seeds = vec![Vec::new(); n];
    for &i in &order {
        let dominated: Vec<usize> = order.iter().copied().filter(|&j| below(j, i)).collect();
        level[i] = dominated.iter().map(|&j| level[j] + 1).max().unwrap_or(0);
        seeds[i] = dominated
            .iter()
            .copied()
            .filter(|&j| !dominated.iter().any(|&k| k != j && below(j, k)))
            .collect();
    }
    let depth = level.iter().max().map_or(0, |l| l + 1);
    let mut levels = vec![Vec::new(); depth];
    for &i in &order {
        levels[level[i]].push(i);
    }
    (levels, seeds)
}

/// Bounds for every cell given their budgets.
pub fn solve_cells(
    sample: &AnalysisSample,
    scores: &PropensityScores,
    budgets: &[EntropyBudget],
    alternation: &AlternationControls,
    execution: Execution,
) -> Result<Vec<(MpoBounds, EffectBounds)>> {
    let (levels, seeds) = dominance_plan(budgets);
    let solver = ParametricSolver::default();
    let mut results: Vec<Option<(MpoBounds, WarmStart)>> = vec![None; budgets.len()];
    for level in levels {
        let solved = exec::map(execution, &level, |&i| {
            let warm: Vec<&WarmStart> = seeds[i].iter().map(|&j| &results[j].as_ref().expect("seed solved earlier").1).collect();
            all_bounds_with(sample, scores, &budgets[i], alternation, execution, &solver, &warm)
        });
        for (&i, r) in level.iter().zip(solved) {
            results[i] = Some(r?);
        }
    }
    Ok(results
        .into_iter()
        .map(|r| {
            let (b, _) = r.expect("every cell solved");
            (b, compose_effects(&b))
        })
        .collect())
}

/// Fit the propensity models, calibrate each cell (unless `budgets` is given)
/// and bound all targets.
pub fn evaluate_grid(
    sample: &AnalysisSample,
    cells: &[CellSpec],
    opts: &PipelineOptions,
    budgets: Option<&[EntropyBudget]>,
) -> Result<GridEvaluation> {
    let scores = estimate_propensities(sample, opts.link, &opts.fit)?;
    let point = ipw_point_estimates(sample, &scores)?;
    let budgets: Vec<EntropyBudget> = match budgets {
        Some(b) if b.len() == cells.len() => b.to_vec(),
        Some(b) => return Err(Error::Config(format!("{} frozen budgets for {} cells", b.len(), cells.len()))),
        None => {
            let cal = Calibrator::new(sample, &scores, &opts.grouping, opts.fit.clone(), opts.execution);
            cells
                .iter()
                .map(|c| cal.budget(c.assumptions, &c.rule))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let solved = solve_cells(sample, &scores, &budgets, &opts.alternation, opts.execution)?;
    let cells = cells
        .iter()
        .zip(budgets)
        .zip(solved)
        .map(|((spec, budget), (bounds, effects))| CellOutcome {
            spec: spec.clone(),
            budget,
            bounds,
            effects,
        })
        .collect();
    Ok(GridEvaluation { scores, point, cells })
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub evaluation: GridEvaluation,
    /// One entry per cell when subsampling ran.
    pub ci: Option<Vec<BoundCI>>,
}

/// Full-sample evaluation plus subsampling intervals when `plan` is given.
pub fn run_analysis(sample: &AnalysisSample, cells: &[CellSpec], opts: &PipelineOptions, plan: Option<&SubsamplingPlan>) -> Result<Analysis> {
    let evaluation = evaluate_grid(sample, cells, opts, None)?;
    let Some(plan) = plan else {
        return Ok(Analysis { evaluation, ci: None });
    };
    let frozen: Vec<EntropyBudget> = evaluation.cells.iter().map(|c| c.budget.clone()).collect();
    let inner = PipelineOptions {
        execution: Execution::Sequential,
        ..opts.clone()
    };
    let n = sample.n();
    let (per_cell, failed, m) = run_replications(n, cells.len(), plan, opts.execution, |rows| {
        let sub = sample.subset(rows)?;
        let fixed = (!plan.recalibrate).then_some(frozen.as_slice());
        let ev = evaluate_grid(&sub, cells, &inner, fixed)?;
        Ok::<_, Error>(ev.cells.into_iter().map(|c| (c.bounds, c.effects)).collect())
    })?;
    let ci = evaluation
        .cells
        .iter()
        .zip(&per_cell)
        .map(|(c, reps)| assemble_ci(&(c.bounds, c.effects), reps, failed, n, m, plan.alpha))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Analysis { evaluation, ci: Some(ci) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Assumption, AssumptionSet};

    fn budget(values: [[f64; 2]; 3]) -> EntropyBudget {
        EntropyBudget {
            values,
            ..EntropyBudget::zero()
        }
    }

    #[test]
    fn levels_respect_dominance() {
        let b = vec![
            budget([[0.2, 0.2], [0.0, 0.0], [0.0, 0.0]]),
            budget([[0.1, 0.1], [0.0, 0.0], [0.0, 0.0]]),
            budget([[0.2, 0.2], [0.1, 0.1], [0.0, 0.0]]),
            budget([[0.0, 0.0], [0.0, 0.0], [0.5, 0.5]]),
            budget([[0.1, 0.1], [0.0, 0.0], [0.0, 0.0]]),
        ];
        let (levels, seeds) = dominance_plan(&b);
        assert_eq!(levels[0], vec![1, 3]);
        assert_eq!(levels[1], vec![4]);
        assert_eq!(levels[2], vec![0]);
        assert_eq!(levels[3], vec![2]);
        assert_eq!(seeds[2], vec![0]);
        assert_eq!(seeds[0], vec![4]);
        assert!(seeds[3].is_empty());
    }

    #[test]
    fn uniform_budgets_nest() {
        let a = EntropyBudget::uniform(AssumptionSet::new(&[Assumption::A2]), 0.1);
        let b = EntropyBudget::uniform(AssumptionSet::ALL, 0.1);
        let (levels, seeds) = dominance_plan(&[b, a]);
        assert_eq!(levels, vec![vec![1], vec![0]]);
        assert_eq!(seeds[0], vec![1]);
    }
}

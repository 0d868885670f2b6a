use serde::{Deserialize, Serialize};

use super::BoundsError;
use crate::calibration::EntropyBudget;
use crate::dataset::AnalysisSample;
use crate::propensity::PropensityScores;
use crate::{Assumption, Target};

fn centred_interval(centre: f64, s: f64, epsilon: f64, floor: f64) -> (f64, f64) {
    let lo = (centre - epsilon * s).max(floor).min(centre);
    let hi = (centre + epsilon * s).min(1.0 - floor).max(centre);
    (lo, hi)
}

/// Admissible `q` around `p`: `[max(floor, p − ε s), min(1 − floor, p + ε s)]` with
/// `s = sqrt(p (1 − p))`.
pub fn probability_interval(p: f64, epsilon: f64, floor: f64) -> (f64, f64) {
    centred_interval(p, (p * (1.0 - p)).sqrt(), epsilon, floor)
}

/// Admissible `1 − q`, computed directly around `1 − p`.
pub fn complement_interval(p: f64, epsilon: f64, floor: f64) -> (f64, f64) {
    centred_interval(1.0 - p, (p * (1.0 - p)).sqrt(), epsilon, floor)
}

/// Box for `ω = 1/q` (or `ω̄ = 1/(1 − q)` when `complement`).
pub fn weight_box(p: f64, epsilon: f64, floor: f64, complement: bool) -> (f64, f64) {
    let centre = if complement { 1.0 - p } else { p };
    if epsilon == 0.0 {
        let w = 1.0 / centre;
        return (w, w);
    }
    let (lo, hi) = if complement {
        complement_interval(p, epsilon, floor)
    } else {
        probability_interval(p, epsilon, floor)
    };
    (1.0 / hi, 1.0 / lo)
}

/// Which weight a block holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    /// `ω^{AK} = 1/q^{AK}`.
    Omega(Assumption),
    /// `ω̄^{AK} = 1/(1 − q^{AK})`.
    OmegaBar(Assumption),
}

impl BlockKind {
    pub fn assumption(self) -> Assumption {
        match self {
            BlockKind::Omega(a) | BlockKind::OmegaBar(a) => a,
        }
    }

    pub fn is_complement(self) -> bool {
        matches!(self, BlockKind::OmegaBar(_))
    }

    pub fn label(self) -> String {
        match self {
            BlockKind::Omega(a) => format!("omega_{a}"),
            BlockKind::OmegaBar(a) => format!("omega_bar_{a}"),
        }
    }
}

/// One block of weights over the retained rows.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBlock {
    pub kind: BlockKind,
    /// Added to the weight inside the product (`−1` for the mediator block of cross-world targets).
    pub shift: f64,
    pub start: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Right-hand side of `Σ w_i = sum_rhs`, equal to the sum of the starting weights.
    pub sum_rhs: f64,
}

impl WeightBlock {
    pub fn is_collapsed(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(l, u)| l == u)
    }
}

/// The program for one mean potential outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundProblem {
    pub target: Target,
    /// Sample indices of the retained rows.
    pub rows: Vec<usize>,
    pub outcome: Vec<f64>,
    pub blocks: Vec<WeightBlock>,
    /// `c`: right-hand side of the product constraint and objective denominator.
    pub normalizer: f64,
}

/// Blocks of each target, in sweep order.
pub fn target_blocks(target: Target) -> Vec<(BlockKind, f64)> {
    use Assumption::*;
    match target {
        Target::Y1M1 => vec![(BlockKind::Omega(A1), 0.0), (BlockKind::Omega(A3), 0.0)],
        Target::Y0M0 => vec![(BlockKind::OmegaBar(A1), 0.0), (BlockKind::Omega(A3), 0.0)],
        Target::Y1M0 => vec![
            (BlockKind::OmegaBar(A1), 0.0),
            (BlockKind::Omega(A2), -1.0),
            (BlockKind::Omega(A3), 0.0),
        ],
        Target::Y0M1 => vec![
            (BlockKind::Omega(A1), 0.0),
            (BlockKind::OmegaBar(A2), -1.0),
            (BlockKind::Omega(A3), 0.0),
        ],
    }
}

impl BoundProblem {
    /// Assemble a program from raw pieces: per row, the propensity of each block's
    /// assumption and the block's radius.
    pub fn from_parts(
        target: Target,
        rows: Vec<usize>,
        outcome: Vec<f64>,
        propensities: &[Vec<f64>],
        epsilons: &[f64],
        floor: f64,
    ) -> Result<Self, BoundsError> {
        if rows.is_empty() {
            return Err(BoundsError::EmptyRetainedSet(target));
        }
        let spec = target_blocks(target);
        let mut blocks = Vec::with_capacity(spec.len());
        for ((kind, shift), (p, &eps)) in spec.into_iter().zip(propensities.iter().zip(epsilons)) {
            let complement = kind.is_complement();
            let start: Vec<f64> = p.iter().map(|&p| if complement { 1.0 / (1.0 - p) } else { 1.0 / p }).collect();
            let (lower, upper): (Vec<f64>, Vec<f64>) = p
                .iter()
                .zip(&start)
                .map(|(&p, &w)| {
                    let (l, u) = weight_box(p, eps, floor, complement);
                    (l.min(w), u.max(w))
                })
                .unzip();
            let sum_rhs = start.iter().sum();
            blocks.push(WeightBlock {
                kind,
                shift,
                start,
                lower,
                upper,
                sum_rhs,
            });
        }
        let normalizer: f64 = (0..rows.len())
            .map(|i| blocks.iter().map(|b| b.start[i] + b.shift).product::<f64>())
            .sum();
        if !(normalizer.is_finite() && normalizer > f64::MIN_POSITIVE) {
            return Err(BoundsError::ZeroNormalizer(target));
        }
        Ok(BoundProblem {
            target,
            rows,
            outcome,
            blocks,
            normalizer,
        })
    }

    /// Start weights of every block.
    pub fn start(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.start.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Objective `(1/c) Σ y_i Π_b (w_bi + shift_b)`.
    pub fn objective(&self, weights: &[Vec<f64>]) -> f64 {
        (0..self.len())
            .map(|i| self.outcome[i] * self.product(weights, i, None))
            .sum::<f64>()
            / self.normalizer
    }

    /// `Π_b (w_bi + shift_b)`, skipping block `skip`.
    pub fn product(&self, weights: &[Vec<f64>], i: usize, skip: Option<usize>) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(b, _)| Some(*b) != skip)
            .map(|(b, blk)| weights[b][i] + blk.shift)
            .product()
    }

    /// Largest relative violation of any constraint at `weights`.
    pub fn max_violation(&self, weights: &[Vec<f64>]) -> f64 {
        let mut v: f64 = 0.0;
        for (b, blk) in self.blocks.iter().enumerate() {
            for i in 0..self.len() {
                let w = weights[b][i];
                v = v.max((blk.lower[i] - w).max(w - blk.upper[i]).max(0.0) / (1.0 + blk.upper[i]));
            }
            let s: f64 = weights[b].iter().sum();
            v = v.max((s - blk.sum_rhs).abs() / (1.0 + blk.sum_rhs.abs()));
        }
        let c: f64 = (0..self.len()).map(|i| self.product(weights, i, None)).sum();
        v.max((c - self.normalizer).abs() / (1.0 + self.normalizer.abs()))
    }

    pub fn active_blocks(&self) -> Vec<usize> {
        (0..self.blocks.len()).filter(|&b| !self.blocks[b].is_collapsed()).collect()
    }
}

/// Build the program for `target` from fitted propensities and budgets.
pub fn build_problem(
    target: Target,
    sample: &AnalysisSample,
    scores: &PropensityScores,
    budget: &EntropyBudget,
) -> Result<BoundProblem, BoundsError> {
    let arm = target.arm();
    let rows = sample.retained_rows(arm);
    let outcome = rows.iter().map(|&i| sample.selected_outcome(i)).collect();
    let spec = target_blocks(target);
    let propensities: Vec<Vec<f64>> = spec
        .iter()
        .map(|(k, _)| {
            let p = scores.get(k.assumption());
            rows.iter().map(|&i| p[i]).collect()
        })
        .collect();
    let epsilons: Vec<f64> = spec.iter().map(|(k, _)| budget.get(k.assumption(), arm)).collect();
    BoundProblem::from_parts(target, rows, outcome, &propensities, &epsilons, scores.clip_floor)
}

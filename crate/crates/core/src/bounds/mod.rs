//! Bounds on mean potential outcomes under relaxed weighting assumptions.
//!
//! Each target is a bilinear (or trilinear) program over weight blocks. With all
//! but one block fixed the program is an LP, so the bounds are found by sweeping
//! over blocks and solving one LP per block until the objective stops moving.

mod problem;
mod solve;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use problem::{
    build_problem, complement_interval, probability_interval, target_blocks, weight_box, BlockKind, BoundProblem, WeightBlock,
};
pub use solve::{all_bounds, all_bounds_with, alternate_from, alternate_solve, alternate_solve_with, AlternationControls, SolveOutcome, WarmStart};

use crate::lpcore::{LpError, Sense};
use crate::propensity::{PerEffect, PerTarget};
use crate::{Effect, Target};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("no retained observations for {0}")]
    EmptyRetainedSet(Target),
    #[error("normalizing constant for {0} is zero or not finite")]
    ZeroNormalizer(Target),
    #[error("LP for {target} ({sense:?}) failed: {source}")]
    Lp {
        target: Target,
        sense: Sense,
        #[source]
        source: LpError,
    },
    #[error("alternating step for {target} ({sense:?}) worsened the objective from {before} to {after}")]
    NonMonotoneStep { target: Target, sense: Sense, before: f64, after: f64 },
    #[error("brute-force grid has {size} points, above the limit of {limit}")]
    GridTooLarge { size: f64, limit: f64 },
    #[error("brute force supports at most {limit} retained rows, got {rows}")]
    TooManyRows { rows: usize, limit: usize },
}

/// Interval for one mean potential outcome with solver diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetBounds {
    pub lower: f64,
    pub upper: f64,
    /// Objective at the starting weights (the Hájek IPW estimate).
    pub point: f64,
    pub lower_sweeps: usize,
    pub upper_sweeps: usize,
    pub lower_converged: bool,
    pub upper_converged: bool,
}

impl TargetBounds {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn converged(&self) -> bool {
        self.lower_converged && self.upper_converged
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpoBounds {
    pub targets: PerTarget<TargetBounds>,
}

impl MpoBounds {
    pub fn get(&self, t: Target) -> TargetBounds {
        self.targets.get(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectInterval {
    pub lower: f64,
    pub upper: f64,
    /// False where the composed interval need not be the tightest one.
    pub sharp: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectBounds {
    pub effects: PerEffect<EffectInterval>,
}

impl EffectBounds {
    pub fn get(&self, e: Effect) -> EffectInterval {
        self.effects.get(e)
    }
}

/// Interval differences: `LB = A_LB − B_UB`, `UB = A_UB − B_LB` for effect `A − B`.
pub fn compose_effects(mpo: &MpoBounds) -> EffectBounds {
    EffectBounds {
        effects: PerEffect::from_fn(|e| {
            let (a, b) = e.components();
            let (a, b) = (mpo.get(a), mpo.get(b));
            EffectInterval {
                lower: a.lower - b.upper,
                upper: a.upper - b.lower,
                sharp: e.is_sharp(),
            }
        }),
    }
}

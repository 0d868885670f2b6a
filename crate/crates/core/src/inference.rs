//! Subsampling confidence intervals for the lower and upper bounds.
//!
//! Each replication draws `m` rows without replacement and reruns the whole
//! pipeline on them. With roots `r_b = √m (θ_b − θ̂)` the interval endpoints are
//! `LB̂ − q_{1−α/2}(r^LB) / √n` and `UB̂ − q_{α/2}(r^UB) / √n`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{EffectBounds, MpoBounds};
use crate::exec::{self, Execution};
use crate::propensity::{PerEffect, PerTarget};
use crate::{Effect, Target};

/// Largest tolerated share of failed replications.
pub const MAX_FAILED_SHARE: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("{failed} of {total} subsampling replications failed (limit {limit:.0}%)", limit = MAX_FAILED_SHARE * 100.0)]
    TooManyFailedReplications { failed: usize, total: usize },
    #[error("invalid subsampling plan: {0}")]
    InvalidPlan(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsamplingPlan {
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Subsample size; `⌊n^0.7⌋` when absent.
    #[serde(default)]
    pub subsample_size: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Recalibrate entropy budgets inside each replication instead of reusing the
    /// full-sample budgets.
    #[serde(default = "default_true")]
    pub recalibrate: bool,
}

fn default_replications() -> usize {
    500
}

fn default_alpha() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

impl Default for SubsamplingPlan {
    fn default() -> Self {
        SubsamplingPlan {
            replications: default_replications(),
            subsample_size: None,
            rng_seed: 0,
            alpha: default_alpha(),
            recalibrate: true,
        }
    }
}

impl SubsamplingPlan {
    /// Subsample size for a sample of `n` rows, validated against the plan invariants.
    pub fn resolved_size(&self, n: usize) -> Result<usize, InferenceError> {
        let m = self.subsample_size.unwrap_or_else(|| subsample_size(n));
        if m < 2 || m >= n {
            return Err(InferenceError::InvalidPlan(format!("subsample size {m} must satisfy 2 <= m < n = {n}")));
        }
        if self.replications < 2 {
            return Err(InferenceError::InvalidPlan(format!("{} replications; need at least 2", self.replications)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(InferenceError::InvalidPlan(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(m)
    }
}

/// `⌊n^0.7⌋`, exact: the floating estimate is corrected with integer arithmetic
/// (`k^10 ≤ n^7 < (k+1)^10`) whenever the powers fit in 128 bits.
pub fn subsample_size(n: usize) -> usize {
    let mut k = (n as f64).powf(0.7).floor() as usize;
    let pow = |b: usize, e: u32| (b as u128).checked_pow(e);
    if let Some(n7) = pow(n, 7) {
        while k > 0 && pow(k, 10).is_none_or(|v| v > n7) {
            k -= 1;
        }
        while pow(k + 1, 10).is_some_and(|v| v <= n7) {
            k += 1;
        }
    }
    k
}

/// Seed of replication `index`: a bijective 64-bit mix of `master + (index + 1) γ`,
/// so distinct indices always give distinct seeds.
pub fn derive_replication_seed(master_seed: u64, replication_index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(replication_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sorted row indices of replication `index`.
pub fn draw_subsample(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, n, m).into_vec();
    rows.sort_unstable();
    rows
}

/// Linear-interpolation empirical quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiInterval {
    /// Confidence limit below the lower bound.
    pub ci_low: f64,
    /// Confidence limit above the upper bound.
    pub ci_high: f64,
}

/// Intervals for every target and effect of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCI {
    pub targets: PerTarget<CiInterval>,
    pub effects: PerEffect<CiInterval>,
    pub successful_replications: usize,
    pub failed_replications: usize,
    pub subsample_size: usize,
    pub alpha: f64,
    /// Intervals whose estimated bounds fall outside their own CI (soft diagnostic).
    pub containment_warnings: Vec<String>,
    /// Intervals with `ci_low > ci_high`.
    pub crossed: Vec<String>,
}

/// Interval from the full-sample bounds and replication bounds.
pub fn root_interval(lb: f64, ub: f64, lb_reps: &[f64], ub_reps: &[f64], n: usize, m: usize, alpha: f64) -> CiInterval {
    let (sn, sm) = ((n as f64).sqrt(), (m as f64).sqrt());
    let mut lr: Vec<f64> = lb_reps.iter().map(|b| sm * (b - lb)).collect();
    let mut ur: Vec<f64> = ub_reps.iter().map(|b| sm * (b - ub)).collect();
    lr.sort_by(f64::total_cmp);
    ur.sort_by(f64::total_cmp);
    CiInterval {
        ci_low: lb - quantile(&lr, 1.0 - alpha / 2.0) / sn,
        ci_high: ub - quantile(&ur, alpha / 2.0) / sn,
    }
}

/// Bounds of one cell in one replication.
pub type ReplicationBounds = (MpoBounds, EffectBounds);

/// Combine full-sample bounds with replication results into intervals.
pub fn assemble_ci(
    full: &ReplicationBounds,
    reps: &[ReplicationBounds],
    failed: usize,
    n: usize,
    m: usize,
    alpha: f64,
) -> Result<BoundCI, InferenceError> {
    let total = reps.len() + failed;
    if failed as f64 > MAX_FAILED_SHARE * total as f64 || reps.is_empty() {
        return Err(InferenceError::TooManyFailedReplications { failed, total });
    }
    let mut containment = Vec::new();
    let mut crossed = Vec::new();
    let mut check = |name: &str, lb: f64, ub: f64, ci: CiInterval| {
        if ci.ci_low > ci.ci_high {
            log::warn!("{name}: confidence limits cross ({} > {})", ci.ci_low, ci.ci_high);
            crossed.push(name.to_string());
        }
        if ci.ci_low > lb || ci.ci_high < ub {
            containment.push(name.to_string());
        }
    };
    let targets = PerTarget::from_fn(|t: Target| {
        let f = full.0.get(t);
        let lbs: Vec<f64> = reps.iter().map(|r| r.0.get(t).lower).collect();
        let ubs: Vec<f64> = reps.iter().map(|r| r.0.get(t).upper).collect();
        let ci = root_interval(f.lower, f.upper, &lbs, &ubs, n, m, alpha);
        check(t.key(), f.lower, f.upper, ci);
        ci
    });
    let effects = PerEffect::from_fn(|e: Effect| {
        let f = full.1.get(e);
        let lbs: Vec<f64> = reps.iter().map(|r| r.1.get(e).lower).collect();
        let ubs: Vec<f64> = reps.iter().map(|r| r.1.get(e).upper).collect();
        let ci = root_interval(f.lower, f.upper, &lbs, &ubs, n, m, alpha);
        check(e.key(), f.lower, f.upper, ci);
        ci
    });
    if !containment.is_empty() {
        log::warn!("estimated bounds outside their confidence interval for {}", containment.join(", "));
    }
    Ok(BoundCI {
        targets,
        effects,
        successful_replications: reps.len(),
        failed_replications: failed,
        subsample_size: m,
        alpha,
        containment_warnings: containment,
        crossed,
    })
}

/// Run `replicate` on every subsample of the plan and collect per-cell results.
///
/// `replicate` returns bounds for all `cells` cells, or an error that marks the
/// replication as failed. The result holds, per cell, the successful replication
/// bounds in replication order, and the failure count.
pub fn run_replications<F, E>(
    n: usize,
    cells: usize,
    plan: &SubsamplingPlan,
    execution: Execution,
    replicate: F,
) -> Result<(Vec<Vec<ReplicationBounds>>, usize, usize), InferenceError>
where
    F: Fn(&[usize]) -> Result<Vec<ReplicationBounds>, E> + Sync + Send,
    E: std::fmt::Display,
{
    let m = plan.resolved_size(n)?;
    let outcomes = exec::map_range(execution, plan.replications, |b| {
        let rows = draw_subsample(n, m, derive_replication_seed(plan.rng_seed, b as u64));
        replicate(&rows).map_err(|e| {
            log::debug!("replication {b} failed: {e}");
        })
    });
    let mut per_cell: Vec<Vec<ReplicationBounds>> = vec![Vec::with_capacity(plan.replications); cells];
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(v) if v.len() == cells => {
                for (slot, r) in per_cell.iter_mut().zip(v) {
                    slot.push(r);
                }
            }
            _ => failed += 1,
        }
    }
    if failed as f64 > MAX_FAILED_SHARE * plan.replications as f64 {
        return Err(InferenceError::TooManyFailedReplications {
            failed,
            total: plan.replications,
        });
    }
    Ok((per_cell, failed, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_sizes() {
        assert_eq!(subsample_size(1024), 128);
        assert_eq!(subsample_size(6658), 474);
        assert_eq!(subsample_size(1), 1);
        for n in [10usize, 100, 1000, 5000, 123_456] {
            let k = subsample_size(n) as u128;
            let n7 = (n as u128).pow(7);
            assert!(k.pow(10) <= n7 && n7 < (k + 1).pow(10), "{n}");
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_ne!(derive_replication_seed(7, 0), derive_replication_seed(7, 1));
        assert_eq!(derive_replication_seed(7, 0), derive_replication_seed(7, 0));
        let mut all: Vec<u64> = (0..10_000).map(|i| derive_replication_seed(42, i)).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 10_000);
    }

    #[test]
    fn subsample_rows_are_distinct_and_sorted() {
        let rows = draw_subsample(100, 30, 5);
        assert_eq!(rows.len(), 30);
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(rows, draw_subsample(100, 30, 5));
    }

    #[test]
    fn quantile_interpolates() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&d, 0.0), 1.0);
        assert_eq!(quantile(&d, 1.0), 4.0);
        assert!((quantile(&d, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn constant_replications_collapse() {
        let ci = root_interval(2.0, 2.0, &[2.0; 10], &[2.0; 10], 1000, 125, 0.05);
        assert_eq!(ci, CiInterval { ci_low: 2.0, ci_high: 2.0 });
    }

    #[test]
    fn narrower_level_is_nested() {
        let lbs: Vec<f64> = (0..50).map(|i| 1.0 + ((i * 37 % 50) as f64 - 25.0) / 100.0).collect();
        let ubs: Vec<f64> = lbs.iter().map(|v| v + 0.5).collect();
        let a = root_interval(1.0, 1.5, &lbs, &ubs, 900, 116, 0.05);
        let b = root_interval(1.0, 1.5, &lbs, &ubs, 900, 116, 0.10);
        assert!(a.ci_low <= b.ci_low && b.ci_high <= a.ci_high);
    }

    #[test]
    fn plan_validation() {
        let p = SubsamplingPlan::default();
        assert_eq!(p.resolved_size(1024).unwrap(), 128);
        let bad = SubsamplingPlan {
            subsample_size: Some(10),
            ..Default::default()
        };
        assert!(bad.resolved_size(10).is_err());
    }
}

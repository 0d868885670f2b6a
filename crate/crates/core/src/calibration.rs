//! Entropy budgets from data-driven rules.
//!
//! A rule says how far a propensity score may plausibly move if a confounder
//! were omitted: either by actually omitting the `j`-th most important observed
//! predictor (by deviance drop) or by swapping the link. The per-row change,
//! scaled by the binomial standard deviation, is averaged over the selected rows
//! of each treatment arm.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnalysisSample, ColumnRole, DesignMatrix};
use crate::exec::Execution;
use crate::glm::{self, ColumnGroup, FitControls, GlmError, PredictorImportance};
use crate::propensity::{estimate_propensities, model_inputs, PropensityError, PropensityScores};
use crate::{Arm, Assumption, AssumptionSet};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("probability {0} is not strictly inside (0, 1)")]
    DegenerateProbability(f64),
    #[error("{assumption} model has no {source_kind} predictors to omit")]
    InvalidSource { assumption: Assumption, source_kind: PredictorSource },
    #[error("requested the predictor ranked {rank} but only {available} candidates exist")]
    RankOutOfRange { rank: usize, available: usize },
    #[error("{assumption} model refit: {source}")]
    Refit {
        assumption: Assumption,
        #[source]
        source: GlmError,
    },
    #[error(transparent)]
    Propensity(#[from] PropensityError),
    #[error("fitted models are required for predictor-drop calibration")]
    MissingModels,
    #[error("negative or non-finite fixed epsilon {0}")]
    InvalidFixedEpsilon(f64),
}

/// Which block of regressors a predictor-drop rule omits from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredictorSource {
    X,
    M,
}

impl std::fmt::Display for PredictorSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PredictorSource::X => "covariate",
            PredictorSource::M => "mediator",
        })
    }
}

impl PredictorSource {
    fn role(self) -> ColumnRole {
        match self {
            PredictorSource::X => ColumnRole::Covariate,
            PredictorSource::M => ColumnRole::Mediator,
        }
    }
}

/// How the entropy budget of each relaxed assumption is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelaxationRule {
    /// Omit the `rank`-th most important covariate.
    XRank { rank: usize },
    /// Omit the `rank`-th most important mediator.
    MRank { rank: usize },
    /// Compare against the fit under the other link.
    LinkSwap,
    /// User-supplied budgets: `epsilon` everywhere unless `per_arm` overrides an
    /// assumption with `[control, treated]` values.
    Fixed {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        per_arm: BTreeMap<Assumption, [f64; 2]>,
    },
}

impl RelaxationRule {
    pub fn fixed(epsilon: f64) -> Self {
        RelaxationRule::Fixed {
            epsilon,
            per_arm: BTreeMap::new(),
        }
    }

    /// Short column label (`X1`, `M2`, `probit`, `eps=0.100`).
    pub fn label(&self, primary_link: glm::LinkFunction) -> String {
        match self {
            RelaxationRule::XRank { rank } => format!("X{rank}"),
            RelaxationRule::MRank { rank } => format!("M{rank}"),
            RelaxationRule::LinkSwap => primary_link.swapped().to_string(),
            RelaxationRule::Fixed { epsilon, per_arm } if per_arm.is_empty() => format!("eps={epsilon:.3}"),
            RelaxationRule::Fixed { .. } => "eps=custom".to_string(),
        }
    }

    pub fn is_mediator_rule(&self) -> bool {
        matches!(self, RelaxationRule::MRank { .. })
    }
}

/// How one assumption's budget was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetProvenance {
    pub assumption: Assumption,
    /// Omitted predictor group, for predictor-drop rules.
    pub omitted: Option<String>,
    pub deviance_drop: Option<f64>,
    /// `[control, treated]`.
    pub epsilon: [f64; 2],
}

/// Entropy radii indexed by assumption and arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyBudget {
    /// `values[assumption][arm]`, arm 0 = control, 1 = treated.
    pub values: [[f64; 2]; 3],
    pub rule: Option<RelaxationRule>,
    pub active: AssumptionSet,
    pub provenance: Vec<BudgetProvenance>,
}

impl EntropyBudget {
    pub fn zero() -> Self {
        EntropyBudget {
            values: [[0.0; 2]; 3],
            rule: None,
            active: AssumptionSet::EMPTY,
            provenance: Vec::new(),
        }
    }

    /// Same `epsilon` for every active assumption and both arms.
    pub fn uniform(active: AssumptionSet, epsilon: f64) -> Self {
        let mut b = EntropyBudget::zero();
        b.active = active;
        b.rule = Some(RelaxationRule::fixed(epsilon));
        for a in active.iter() {
            b.values[a.index()] = [epsilon; 2];
        }
        b
    }

    pub fn get(&self, assumption: Assumption, arm: Arm) -> f64 {
        self.values[assumption.index()][arm.index()]
    }

    pub fn set(&mut self, assumption: Assumption, arm: Arm, value: f64) {
        self.values[assumption.index()][arm.index()] = value;
    }

    /// Componentwise `self ≤ other`.
    pub fn dominated_by(&self, other: &EntropyBudget) -> bool {
        self.values.iter().flatten().zip(other.values.iter().flatten()).all(|(a, b)| a <= b)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().all(|&v| v == 0.0)
    }
}

/// `|p_reduced − p_full| / sqrt(p_full (1 − p_full))`.
pub fn per_observation_epsilon(p_full: f64, p_reduced: f64) -> Result<f64, CalibrationError> {
    if !(p_full > 0.0 && p_full < 1.0) {
        return Err(CalibrationError::DegenerateProbability(p_full));
    }
    Ok((p_reduced - p_full).abs() / (p_full * (1.0 - p_full)).sqrt())
}

/// Averages of `per_row` over `{D=0,S=1}` and `{D=1,S=1}`.
pub fn arm_averages(sample: &AnalysisSample, per_row: &[f64]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for arm in [Arm::Control, Arm::Treated] {
        let rows = sample.retained_rows(arm);
        out[arm.index()] = rows.iter().map(|&i| per_row[i]).sum::<f64>() / rows.len() as f64;
    }
    out
}

fn epsilon_arms(sample: &AnalysisSample, p_full: &[f64], p_reduced: &[f64]) -> Result<[f64; 2], CalibrationError> {
    let per_row = p_full
        .iter()
        .zip(p_reduced)
        .map(|(&f, &r)| per_observation_epsilon(f, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(arm_averages(sample, &per_row))
}

/// Optional joint-omission groups, by column name. Columns outside any group are
/// candidates on their own.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorGrouping {
    #[serde(default)]
    pub groups: BTreeMap<String, Vec<String>>,
}

impl PredictorGrouping {
    /// Candidate groups of `source` in `design`, in design column order.
    pub fn candidates(&self, design: &DesignMatrix, source: PredictorSource) -> Vec<ColumnGroup> {
        let mut out: Vec<ColumnGroup> = Vec::new();
        let mut emitted: Vec<&str> = Vec::new();
        for (j, col) in design.columns.iter().enumerate() {
            if col.role != source.role() {
                continue;
            }
            let owner = self.groups.iter().find(|(_, members)| members.iter().any(|m| m == &col.name));
            match owner {
                Some((gname, members)) => {
                    if emitted.contains(&gname.as_str()) {
                        continue;
                    }
                    emitted.push(gname);
                    let columns = members.iter().filter_map(|m| design.column_index(m)).collect();
                    out.push(ColumnGroup {
                        name: gname.clone(),
                        columns,
                    });
                }
                None => out.push(ColumnGroup::single(col.name.clone(), j)),
            }
        }
        out
    }
}

/// Ranked predictors for one model and source.
pub fn rank_model_predictors(
    sample: &AnalysisSample,
    scores: &PropensityScores,
    assumption: Assumption,
    source: PredictorSource,
    grouping: &PredictorGrouping,
    controls: &FitControls,
    exec: Execution,
) -> Result<Vec<PredictorImportance>, CalibrationError> {
    if assumption == Assumption::A1 && source == PredictorSource::M {
        return Err(CalibrationError::InvalidSource {
            assumption,
            source_kind: source,
        });
    }
    let full = scores.model(assumption).ok_or(CalibrationError::MissingModels)?;
    let (design, response) = model_inputs(sample, assumption)?;
    let candidates = grouping.candidates(&design, source);
    if candidates.is_empty() {
        return Err(CalibrationError::InvalidSource {
            assumption,
            source_kind: source,
        });
    }
    glm::rank_predictors_from(full, design.matrix.view(), &response, &candidates, controls, exec)
        .map_err(|source| CalibrationError::Refit { assumption, source })
}

/// Budget for one assumption from omitting its `rank`-th most important predictor.
pub fn calibrate_by_predictor_drop(
    sample: &AnalysisSample,
    scores: &PropensityScores,
    assumption: Assumption,
    source: PredictorSource,
    rank: usize,
    grouping: &PredictorGrouping,
    controls: &FitControls,
) -> Result<BudgetProvenance, CalibrationError> {
    let ranking = rank_model_predictors(sample, scores, assumption, source, grouping, controls, Execution::Sequential)?;
    budget_from_ranking(sample, scores, assumption, &ranking, rank, controls)
}

fn budget_from_ranking(
    sample: &AnalysisSample,
    scores: &PropensityScores,
    assumption: Assumption,
    ranking: &[PredictorImportance],
    rank: usize,
    controls: &FitControls,
) -> Result<BudgetProvenance, CalibrationError> {
    if rank == 0 || rank > ranking.len() {
        return Err(CalibrationError::RankOutOfRange {
            rank,
            available: ranking.len(),
        });
    }
    let chosen = &ranking[rank - 1];
    let full = scores.model(assumption).ok_or(CalibrationError::MissingModels)?;
    let (design, response) = model_inputs(sample, assumption)?;
    let reduced = glm::reduced_probabilities(full, design.matrix.view(), &response, &chosen.group.columns, controls)
        .map_err(|source| CalibrationError::Refit { assumption, source })?;
    let epsilon = epsilon_arms(sample, scores.get(assumption), &reduced)?;
    Ok(BudgetProvenance {
        assumption,
        omitted: Some(chosen.group.name.clone()),
        deviance_drop: Some(chosen.deviance_drop),
        epsilon,
    })
}

/// Budget for one assumption from the difference between two links' fits.
pub fn calibrate_by_link_swap(
    sample: &AnalysisSample,
    scores_primary: &PropensityScores,
    scores_alternative: &PropensityScores,
    assumption: Assumption,
) -> Result<BudgetProvenance, CalibrationError> {
    let epsilon = epsilon_arms(sample, scores_primary.get(assumption), scores_alternative.get(assumption))?;
    Ok(BudgetProvenance {
        assumption,
        omitted: None,
        deviance_drop: None,
        epsilon,
    })
}

/// Computes budgets for a sample, caching predictor rankings and the
/// alternative-link fit across rules.
pub struct Calibrator<'a> {
    sample: &'a AnalysisSample,
    scores: &'a PropensityScores,
    grouping: &'a PredictorGrouping,
    controls: FitControls,
    exec: Execution,
    rankings: Mutex<HashMap<(Assumption, PredictorSource), Arc<Vec<PredictorImportance>>>>,
    alternative: Mutex<Option<Arc<PropensityScores>>>,
    per_assumption: Mutex<HashMap<(Assumption, String), BudgetProvenance>>,
}

impl<'a> Calibrator<'a> {
    pub fn new(
        sample: &'a AnalysisSample,
        scores: &'a PropensityScores,
        grouping: &'a PredictorGrouping,
        controls: FitControls,
        exec: Execution,
    ) -> Self {
        Calibrator {
            sample,
            scores,
            grouping,
            controls,
            exec,
            rankings: Mutex::new(HashMap::new()),
            alternative: Mutex::new(None),
            per_assumption: Mutex::new(HashMap::new()),
        }
    }

    pub fn ranking(&self, assumption: Assumption, source: PredictorSource) -> Result<Arc<Vec<PredictorImportance>>, CalibrationError> {
        if let Some(r) = self.rankings.lock().unwrap().get(&(assumption, source)) {
            return Ok(r.clone());
        }
        let r = Arc::new(rank_model_predictors(
            self.sample,
            self.scores,
            assumption,
            source,
            self.grouping,
            &self.controls,
            self.exec,
        )?);
        self.rankings.lock().unwrap().insert((assumption, source), r.clone());
        Ok(r)
    }

    fn alternative_scores(&self) -> Result<Arc<PropensityScores>, CalibrationError> {
        if let Some(s) = self.alternative.lock().unwrap().as_ref() {
            return Ok(s.clone());
        }
        let alt = Arc::new(estimate_propensities(self.sample, self.scores.link.swapped(), &self.controls)?);
        *self.alternative.lock().unwrap() = Some(alt.clone());
        Ok(alt)
    }

    /// Budget of one assumption under `rule`.
    pub fn assumption_budget(&self, assumption: Assumption, rule: &RelaxationRule) -> Result<BudgetProvenance, CalibrationError> {
        let key = (assumption, format!("{rule:?}"));
        if let Some(b) = self.per_assumption.lock().unwrap().get(&key) {
            return Ok(b.clone());
        }
        let b = match rule {
            RelaxationRule::XRank { rank } | RelaxationRule::MRank { rank } => {
                let source = if matches!(rule, RelaxationRule::XRank { .. }) {
                    PredictorSource::X
                } else {
                    PredictorSource::M
                };
                let ranking = self.ranking(assumption, source)?;
                budget_from_ranking(self.sample, self.scores, assumption, &ranking, *rank, &self.controls)?
            }
            RelaxationRule::LinkSwap => {
                let alt = self.alternative_scores()?;
                calibrate_by_link_swap(self.sample, self.scores, &alt, assumption)?
            }
            RelaxationRule::Fixed { epsilon, per_arm } => {
                let values = per_arm.get(&assumption).copied().unwrap_or([*epsilon; 2]);
                if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(CalibrationError::InvalidFixedEpsilon(bad));
                }
                BudgetProvenance {
                    assumption,
                    omitted: None,
                    deviance_drop: None,
                    epsilon: values,
                }
            }
        };
        self.per_assumption.lock().unwrap().insert(key, b.clone());
        Ok(b)
    }

    /// Joint budget for relaxing every assumption in `active` under `rule`.
    pub fn budget(&self, active: AssumptionSet, rule: &RelaxationRule) -> Result<EntropyBudget, CalibrationError> {
        if rule.is_mediator_rule() && active.contains(Assumption::A1) {
            return Err(CalibrationError::InvalidSource {
                assumption: Assumption::A1,
                source_kind: PredictorSource::M,
            });
        }
        let mut budget = EntropyBudget::zero();
        budget.active = active;
        budget.rule = Some(rule.clone());
        for a in active.iter() {
            let p = self.assumption_budget(a, rule)?;
            budget.values[a.index()] = p.epsilon;
            budget.provenance.push(p);
        }
        Ok(budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_observation_examples() {
        assert!((per_observation_epsilon(0.5, 0.75).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(per_observation_epsilon(0.3, 0.3).unwrap(), 0.0);
        assert!((per_observation_epsilon(0.8, 0.6).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(per_observation_epsilon(1.0, 0.5), Err(CalibrationError::DegenerateProbability(_))));
        assert!(per_observation_epsilon(0.0, 0.5).is_err());
    }

    #[test]
    fn budget_dominance() {
        let a = EntropyBudget::uniform(AssumptionSet::new(&[Assumption::A1]), 0.1);
        let b = EntropyBudget::uniform(AssumptionSet::ALL, 0.1);
        assert!(a.dominated_by(&b));
        assert!(!b.dominated_by(&a));
        assert!(EntropyBudget::zero().is_zero());
    }

    #[test]
    fn rule_labels() {
        let l = glm::LinkFunction::Logit;
        assert_eq!(RelaxationRule::XRank { rank: 2 }.label(l), "X2");
        assert_eq!(RelaxationRule::MRank { rank: 1 }.label(l), "M1");
        assert_eq!(RelaxationRule::LinkSwap.label(l), "probit");
        assert_eq!(RelaxationRule::fixed(0.1).label(l), "eps=0.100");
    }

    #[test]
    fn rule_serde_shape() {
        let r: RelaxationRule = serde_json::from_str(r#"{"kind":"x_rank","rank":3}"#).unwrap();
        assert_eq!(r, RelaxationRule::XRank { rank: 3 });
        let r: RelaxationRule = serde_json::from_str(r#"{"kind":"fixed","epsilon":0.2}"#).unwrap();
        assert_eq!(r, RelaxationRule::fixed(0.2));
        let r: RelaxationRule = serde_json::from_str(r#"{"kind":"link_swap"}"#).unwrap();
        assert_eq!(r, RelaxationRule::LinkSwap);
    }
}

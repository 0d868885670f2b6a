//! The three propensity models and the normalized IPW point estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{design_matrix, AnalysisSample, Conditioning, DataError, DesignMatrix};
use crate::glm::{self, FitControls, FittedBinaryModel, GlmError, LinkFunction};
use crate::{Assumption, Effect, Target};

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("{assumption} propensity model: {source}")]
    Model {
        assumption: Assumption,
        #[source]
        source: GlmError,
    },
    #[error("{assumption} propensity design: {source}")]
    Design {
        assumption: Assumption,
        #[source]
        source: DataError,
    },
    #[error("weights for {0} sum to a non-positive or non-finite value")]
    DegenerateWeights(&'static str),
    #[error("propensity vector length {got} does not match sample size {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

impl Assumption {
    /// Conditioning set of this assumption's propensity model.
    pub fn conditioning(self) -> Conditioning {
        match self {
            Assumption::A1 => Conditioning::Covariates,
            Assumption::A2 => Conditioning::MediatorsCovariates,
            Assumption::A3 => Conditioning::TreatmentMediatorsCovariates,
        }
    }

    /// Binary response of this assumption's model: `D` for A1/A2, `S` for A3.
    pub fn response(self, sample: &AnalysisSample) -> Vec<bool> {
        match self {
            Assumption::A1 | Assumption::A2 => sample.treatment().to_vec(),
            Assumption::A3 => sample.selection().to_vec(),
        }
    }
}

/// Design and response of one propensity model.
pub fn model_inputs(sample: &AnalysisSample, assumption: Assumption) -> Result<(DesignMatrix, Vec<bool>), PropensityError> {
    let design = design_matrix(sample, assumption.conditioning()).map_err(|source| PropensityError::Design { assumption, source })?;
    Ok((design, assumption.response(sample)))
}

/// Per-observation `P̂(D=1|X)`, `P̂(D=1|M,X)`, `P̂(S=1|D,M,X)`, all clipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensityScores {
    pub link: LinkFunction,
    pub p_a1: Vec<f64>,
    pub p_a2: Vec<f64>,
    pub p_a3: Vec<f64>,
    pub clip_floor: f64,
    /// Fitted models in A1, A2, A3 order; absent when scores were supplied directly.
    #[serde(skip)]
    pub models: Option<Box<[FittedBinaryModel; 3]>>,
}

impl PropensityScores {
    /// Scores supplied directly (tests, oracle instances). Values are clipped.
    pub fn from_values(p_a1: Vec<f64>, p_a2: Vec<f64>, p_a3: Vec<f64>, clip_floor: f64) -> Result<Self, PropensityError> {
        let n = p_a1.len();
        for v in [&p_a2, &p_a3] {
            if v.len() != n {
                return Err(PropensityError::LengthMismatch { expected: n, got: v.len() });
            }
        }
        let clip = |v: Vec<f64>| v.into_iter().map(|p| p.clamp(clip_floor, 1.0 - clip_floor)).collect();
        Ok(PropensityScores {
            link: LinkFunction::Logit,
            p_a1: clip(p_a1),
            p_a2: clip(p_a2),
            p_a3: clip(p_a3),
            clip_floor,
            models: None,
        })
    }

    pub fn n(&self) -> usize {
        self.p_a1.len()
    }

    pub fn get(&self, assumption: Assumption) -> &[f64] {
        match assumption {
            Assumption::A1 => &self.p_a1,
            Assumption::A2 => &self.p_a2,
            Assumption::A3 => &self.p_a3,
        }
    }

    pub fn model(&self, assumption: Assumption) -> Option<&FittedBinaryModel> {
        self.models.as_ref().map(|m| &m[assumption.index()])
    }

    /// Total number of clipped probabilities across the three models.
    pub fn clipped(&self) -> usize {
        self.models.as_ref().map_or(0, |m| m.iter().map(|f| f.clipped).sum())
    }

    /// IPW weight of row `i` for `target` (before normalization).
    pub fn weight(&self, target: Target, i: usize) -> f64 {
        let (p1, p2, p3) = (self.p_a1[i], self.p_a2[i], self.p_a3[i]);
        match target {
            Target::Y1M1 => 1.0 / (p1 * p3),
            Target::Y0M0 => 1.0 / ((1.0 - p1) * p3),
            Target::Y1M0 => (1.0 / p2 - 1.0) / ((1.0 - p1) * p3),
            Target::Y0M1 => (1.0 / (1.0 - p2) - 1.0) / (p1 * p3),
        }
    }
}

/// Fit the three propensity models with the given link.
pub fn estimate_propensities(sample: &AnalysisSample, link: LinkFunction, controls: &FitControls) -> Result<PropensityScores, PropensityError> {
    let fit_one = |assumption: Assumption| -> Result<FittedBinaryModel, PropensityError> {
        let (design, response) = model_inputs(sample, assumption)?;
        glm::fit(&design.matrix, &response, link, controls).map_err(|source| PropensityError::Model { assumption, source })
    };
    let m1 = fit_one(Assumption::A1)?;
    let m2 = fit_one(Assumption::A2)?;
    let m3 = fit_one(Assumption::A3)?;
    let clipped = m1.clipped + m2.clipped + m3.clipped;
    if clipped > 0 {
        log::debug!("{clipped} fitted propensities clipped to [{}, {}]", controls.clip_floor, 1.0 - controls.clip_floor);
    }
    Ok(PropensityScores {
        link,
        p_a1: m1.fitted_probabilities.clone(),
        p_a2: m2.fitted_probabilities.clone(),
        p_a3: m3.fitted_probabilities.clone(),
        clip_floor: controls.clip_floor,
        models: Some(Box::new([m1, m2, m3])),
    })
}

/// Values indexed by [`Target`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerTarget<T> {
    pub y1m1: T,
    pub y0m0: T,
    pub y1m0: T,
    pub y0m1: T,
}

impl<T> PerTarget<T> {
    pub fn from_fn(mut f: impl FnMut(Target) -> T) -> Self {
        PerTarget {
            y1m1: f(Target::Y1M1),
            y0m0: f(Target::Y0M0),
            y1m0: f(Target::Y1M0),
            y0m1: f(Target::Y0M1),
        }
    }

    pub fn get_ref(&self, t: Target) -> &T {
        match t {
            Target::Y1M1 => &self.y1m1,
            Target::Y0M0 => &self.y0m0,
            Target::Y1M0 => &self.y1m0,
            Target::Y0M1 => &self.y0m1,
        }
    }
}

impl<T: Copy> PerTarget<T> {
    pub fn get(&self, t: Target) -> T {
        *self.get_ref(t)
    }
}

/// Values indexed by [`Effect`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerEffect<T> {
    pub ate: T,
    pub theta1: T,
    pub theta0: T,
    pub delta1: T,
    pub delta0: T,
}

impl<T> PerEffect<T> {
    pub fn from_fn(mut f: impl FnMut(Effect) -> T) -> Self {
        PerEffect {
            ate: f(Effect::Ate),
            theta1: f(Effect::Theta1),
            theta0: f(Effect::Theta0),
            delta1: f(Effect::Delta1),
            delta0: f(Effect::Delta0),
        }
    }

    pub fn get_ref(&self, e: Effect) -> &T {
        match e {
            Effect::Ate => &self.ate,
            Effect::Theta1 => &self.theta1,
            Effect::Theta0 => &self.theta0,
            Effect::Delta1 => &self.delta1,
            Effect::Delta0 => &self.delta0,
        }
    }
}

impl<T: Copy> PerEffect<T> {
    pub fn get(&self, e: Effect) -> T {
        *self.get_ref(e)
    }
}

/// Hájek IPW estimates of the four mean potential outcomes and the five effects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub mean_potential_outcomes: PerTarget<f64>,
    pub effects: PerEffect<f64>,
    /// Largest normalized weight per target (common-support diagnostic).
    pub max_normalized_weight: PerTarget<f64>,
}

/// Above this normalized weight a single observation dominates an estimate.
pub const WEIGHT_CAP_WARNING: f64 = 0.05;

pub fn ipw_point_estimates(sample: &AnalysisSample, scores: &PropensityScores) -> Result<PointEstimates, PropensityError> {
    if scores.n() != sample.n() {
        return Err(PropensityError::LengthMismatch {
            expected: sample.n(),
            got: scores.n(),
        });
    }
    let mut mpo = PerTarget::default();
    let mut max_w = PerTarget::default();
    for target in Target::ALL {
        let rows = sample.retained_rows(target.arm());
        let weights: Vec<f64> = rows.iter().map(|&i| scores.weight(target, i)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(PropensityError::DegenerateWeights(target.label()));
        }
        let value = rows.iter().zip(&weights).map(|(&i, w)| w * sample.selected_outcome(i)).sum::<f64>() / total;
        let wmax = weights.iter().fold(0.0_f64, |m, w| m.max(*w)) / total;
        if wmax > WEIGHT_CAP_WARNING {
            log::debug!("{}: largest normalized weight {wmax:.3} exceeds {WEIGHT_CAP_WARNING}", target.label());
        }
        match target {
            Target::Y1M1 => (mpo.y1m1, max_w.y1m1) = (value, wmax),
            Target::Y0M0 => (mpo.y0m0, max_w.y0m0) = (value, wmax),
            Target::Y1M0 => (mpo.y1m0, max_w.y1m0) = (value, wmax),
            Target::Y0M1 => (mpo.y0m1, max_w.y0m1) = (value, wmax),
        }
    }
    let effects = PerEffect::from_fn(|e| {
        let (a, b) = e.components();
        mpo.get(a) - mpo.get(b)
    });
    Ok(PointEstimates {
        mean_potential_outcomes: mpo,
        effects,
        max_normalized_weight: max_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VariableRoles;
    use ndarray::Array2;

    fn roles() -> VariableRoles {
        VariableRoles {
            outcome: "Y".into(),
            treatment: "D".into(),
            selection: "S".into(),
            mediators: vec![],
            covariates: vec![],
        }
    }

    #[test]
    fn equal_weights_reduce_to_mean() {
        // Two treated selected rows plus one control row so both arms exist.
        let s = AnalysisSample::from_parts(
            roles(),
            vec![Some(2.0), Some(4.0), Some(1.0)],
            vec![true, true, false],
            vec![true, true, true],
            Array2::zeros((3, 0)),
            Array2::zeros((3, 0)),
        )
        .unwrap();
        let sc = PropensityScores::from_values(vec![0.5; 3], vec![0.5; 3], vec![0.5; 3], 1e-6).unwrap();
        let est = ipw_point_estimates(&s, &sc).unwrap();
        assert!((est.mean_potential_outcomes.y1m1 - 3.0).abs() < 1e-15);
        assert!((est.mean_potential_outcomes.y0m0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_follow_the_four_formulas() {
        let sc = PropensityScores::from_values(vec![0.4], vec![0.25], vec![0.8], 1e-6).unwrap();
        assert!((sc.weight(Target::Y1M1, 0) - 1.0 / (0.4 * 0.8)).abs() < 1e-12);
        assert!((sc.weight(Target::Y0M0, 0) - 1.0 / (0.6 * 0.8)).abs() < 1e-12);
        assert!((sc.weight(Target::Y1M0, 0) - 3.0 / (0.6 * 0.8)).abs() < 1e-12);
        assert!((sc.weight(Target::Y0M1, 0) - (1.0 / 0.75 - 1.0) / (0.4 * 0.8)).abs() < 1e-12);
    }

    #[test]
    fn clipping_in_from_values() {
        let sc = PropensityScores::from_values(vec![0.0], vec![1.0], vec![0.5], 1e-6).unwrap();
        assert_eq!(sc.p_a1[0], 1e-6);
        assert_eq!(sc.p_a2[0], 1.0 - 1e-6);
    }
}

//! Synthetic samples with known mean potential outcomes.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisSample, VariableRoles};
use crate::propensity::{PerEffect, PerTarget};
use crate::Target;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    #[default]
    Gaussian,
    /// Bernoulli(1/2) covariates; logistic-threshold mediators.
    Binary,
}

/// `D = 1{intercept + covariates·X + confounder·U + logistic noise > 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreatmentEquation {
    pub intercept: f64,
    pub covariates: Vec<f64>,
    #[serde(default)]
    pub confounder: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediatorEquation {
    pub intercept: f64,
    pub treatment: f64,
    pub covariates: Vec<f64>,
    #[serde(default)]
    pub confounder: f64,
    /// Standard deviation of Gaussian noise (ignored for binary mediators).
    pub noise_sd: f64,
}

/// `S = 1{intercept + treatment·D + mediators·M + covariates·X + confounder·U + logistic noise > 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionEquation {
    pub intercept: f64,
    pub treatment: f64,
    pub mediators: Vec<f64>,
    pub covariates: Vec<f64>,
    #[serde(default)]
    pub confounder: f64,
}

/// `Y = intercept + treatment·D + mediators·M + D·(interaction·M) + covariates·X + confounder·U + noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEquation {
    pub intercept: f64,
    pub treatment: f64,
    pub mediators: Vec<f64>,
    pub interaction: Vec<f64>,
    pub covariates: Vec<f64>,
    #[serde(default)]
    pub confounder: f64,
    pub noise_sd: f64,
}

/// A data generating process satisfying the weighting assumptions unless an
/// unobserved confounder `U ~ N(0, 1)` is switched on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDgp {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub covariate_kind: VariableKind,
    #[serde(default)]
    pub mediator_kind: VariableKind,
    pub treatment: TreatmentEquation,
    /// Treat exactly this many rows (those with the largest latent index).
    #[serde(default)]
    pub treated_count: Option<usize>,
    pub mediators: Vec<MediatorEquation>,
    pub selection: SelectionEquation,
    pub outcome: OutcomeEquation,
    #[serde(default)]
    pub inject_confounder: bool,
    /// Draws for the Monte Carlo truth when no closed form applies.
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
}

fn default_truth_draws() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub sample: AnalysisSample,
    pub truth: PerTarget<f64>,
}

impl SyntheticSample {
    pub fn true_effects(&self) -> PerEffect<f64> {
        effects_from(&self.truth)
    }
}

pub fn effects_from(mpo: &PerTarget<f64>) -> PerEffect<f64> {
    PerEffect::from_fn(|e| {
        let (a, b) = e.components();
        mpo.get(a) - mpo.get(b)
    })
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logistic_noise(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SyntheticDgp {
    pub fn num_covariates(&self) -> usize {
        self.treatment.covariates.len()
    }

    pub fn num_mediators(&self) -> usize {
        self.mediators.len()
    }

    /// Moderate random coefficients drawn from `seed`; Gaussian covariates and mediators.
    pub fn random(n: usize, covariates: usize, mediators: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C0EF_F1C1_E475);
        let px = covariates.max(1) as f64;
        let pm = mediators.max(1) as f64;
        let mut coefs = |k: usize, scale: f64| -> Vec<f64> { (0..k).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect() };
        let treatment = TreatmentEquation {
            intercept: 0.0,
            covariates: coefs(covariates, 1.0 / px.sqrt()),
            confounder: 0.0,
        };
        let mut med: Vec<MediatorEquation> = (0..mediators)
            .map(|_| MediatorEquation {
                intercept: 0.0,
                treatment: 0.0,
                covariates: Vec::new(),
                confounder: 0.0,
                noise_sd: 1.0,
            })
            .collect();
        for m in med.iter_mut() {
            let c = coefs(covariates + 2, 1.0);
            m.intercept = 0.5 * c[0];
            m.treatment = 0.3 * c[1] + 0.2;
            m.covariates = c[2..].iter().map(|v| 0.5 * v / px.sqrt()).collect();
        }
        let selection = SelectionEquation {
            intercept: 1.0,
            treatment: 0.3,
            mediators: coefs(mediators, 0.4 / pm.sqrt()),
            covariates: coefs(covariates, 0.4 / px.sqrt()),
            confounder: 0.0,
        };
        let outcome = OutcomeEquation {
            intercept: 1.0,
            treatment: 0.5,
            mediators: coefs(mediators, 1.0 / pm.sqrt()),
            interaction: coefs(mediators, 0.3 / pm.sqrt()),
            covariates: coefs(covariates, 1.0 / px.sqrt()),
            confounder: 0.0,
            noise_sd: 1.0,
        };
        SyntheticDgp {
            n,
            seed,
            covariate_kind: VariableKind::Gaussian,
            mediator_kind: VariableKind::Gaussian,
            treatment,
            treated_count: None,
            mediators: med,
            selection,
            outcome,
            inject_confounder: false,
            truth_draws: default_truth_draws(),
        }
    }

    /// Outcome unrelated to treatment and mediators.
    pub fn null(n: usize, covariates: usize, mediators: usize, seed: u64) -> Self {
        let mut d = SyntheticDgp::random(n, covariates, mediators, seed);
        d.outcome.treatment = 0.0;
        d.outcome.mediators = vec![0.0; mediators];
        d.outcome.interaction = vec![0.0; mediators];
        d
    }

    pub fn validate(&self) -> Result<(), String> {
        let px = self.num_covariates();
        let pm = self.num_mediators();
        if self.n < 2 {
            return Err(format!("n = {} is too small", self.n));
        }
        for (k, m) in self.mediators.iter().enumerate() {
            if m.covariates.len() != px {
                return Err(format!("mediator {k} has {} covariate coefficients, expected {px}", m.covariates.len()));
            }
            if !(m.noise_sd >= 0.0) {
                return Err(format!("mediator {k} has negative noise"));
            }
        }
        let checks = [
            ("selection mediators", self.selection.mediators.len(), pm),
            ("selection covariates", self.selection.covariates.len(), px),
            ("outcome mediators", self.outcome.mediators.len(), pm),
            ("outcome interaction", self.outcome.interaction.len(), pm),
            ("outcome covariates", self.outcome.covariates.len(), px),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(format!("{what}: {got} coefficients, expected {want}"));
            }
        }
        if let Some(k) = self.treated_count {
            if k == 0 || k >= self.n {
                return Err(format!("treated_count {k} must be in 1..{}", self.n));
            }
        }
        Ok(())
    }

    fn draw_covariates(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = match self.covariate_kind {
                VariableKind::Gaussian => rng.sample(StandardNormal),
                VariableKind::Binary => f64::from(u8::from(rng.random::<bool>())),
            };
        }
    }

    fn mediator_index(&self, k: usize, d: f64, x: &[f64], u: f64) -> f64 {
        let m = &self.mediators[k];
        m.intercept + m.treatment * d + dot(&m.covariates, x) + m.confounder * u
    }

    fn covariate_mean(&self) -> f64 {
        match self.covariate_kind {
            VariableKind::Gaussian => 0.0,
            VariableKind::Binary => 0.5,
        }
    }

    /// `E[Y(d, M(d'))]`, in closed form for Gaussian mediators and by Monte Carlo over
    /// `(X, U)` with exact conditional means otherwise.
    pub fn truth(&self) -> PerTarget<f64> {
        let px = self.num_covariates();
        let pm = self.num_mediators();
        let ex = vec![self.covariate_mean(); px];
        let o = &self.outcome;
        let mediator_means: [Vec<f64>; 2] = match self.mediator_kind {
            VariableKind::Gaussian => [0.0, 1.0].map(|d| (0..pm).map(|k| self.mediator_index(k, d, &ex, 0.0)).collect()),
            VariableKind::Binary => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7A17_7A17_7A17_7A17);
                let mut acc = [vec![0.0; pm], vec![0.0; pm]];
                let mut x = vec![0.0; px];
                let draws = self.truth_draws.max(1);
                for _ in 0..draws {
                    self.draw_covariates(&mut rng, &mut x);
                    let u: f64 = if self.inject_confounder { rng.sample(StandardNormal) } else { 0.0 };
                    for (di, a) in acc.iter_mut().enumerate() {
                        for (k, slot) in a.iter_mut().enumerate() {
                            *slot += logistic(self.mediator_index(k, di as f64, &x, u));
                        }
                    }
                }
                acc.map(|a| a.into_iter().map(|s| s / draws as f64).collect())
            }
        };
        let value = |d: f64, dm: usize| -> f64 {
            let mut v = o.intercept + o.treatment * d + dot(&o.covariates, &ex);
            for k in 0..pm {
                v += (o.mediators[k] + d * o.interaction[k]) * mediator_means[dm][k];
            }
            v
        };
        PerTarget::from_fn(|t| match t {
            Target::Y1M1 => value(1.0, 1),
            Target::Y0M0 => value(0.0, 0),
            Target::Y1M0 => value(1.0, 0),
            Target::Y0M1 => value(0.0, 1),
        })
    }

    /// Draw a sample and simulate the observed data.
    pub fn generate(&self) -> crate::Result<SyntheticSample> {
        self.validate().map_err(|msg| crate::Error::Config(format!("invalid synthetic design: {msg}")))?;
        let n = self.n;
        let px = self.num_covariates();
        let pm = self.num_mediators();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut xs = Array2::<f64>::zeros((n, px));
        let mut us = vec![0.0; n];
        let mut latent = vec![0.0; n];
        let mut x = vec![0.0; px];
        for i in 0..n {
            self.draw_covariates(&mut rng, &mut x);
            xs.row_mut(i).iter_mut().zip(&x).for_each(|(s, v)| *s = *v);
            us[i] = if self.inject_confounder { rng.sample(StandardNormal) } else { 0.0 };
            latent[i] = self.treatment.intercept + dot(&self.treatment.covariates, &x) + self.treatment.confounder * us[i] + logistic_noise(&mut rng);
        }
        let treatment: Vec<bool> = match self.treated_count {
            None => latent.iter().map(|&l| l > 0.0).collect(),
            Some(k) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| latent[b].total_cmp(&latent[a]).then(a.cmp(&b)));
                let mut t = vec![false; n];
                for &i in &order[..k] {
                    t[i] = true;
                }
                t
            }
        };
        let mut ms = Array2::<f64>::zeros((n, pm));
        let mut selection = Vec::with_capacity(n);
        let mut outcome = Vec::with_capacity(n);
        let o = &self.outcome;
        let s = &self.selection;
        for i in 0..n {
            let d = f64::from(u8::from(treatment[i]));
            let xi: Vec<f64> = xs.row(i).to_vec();
            let u = us[i];
            let mut m = vec![0.0; pm];
            for (k, mk) in m.iter_mut().enumerate() {
                let idx = self.mediator_index(k, d, &xi, u);
                *mk = match self.mediator_kind {
                    VariableKind::Gaussian => {
                        let z: f64 = rng.sample(StandardNormal);
                        idx + self.mediators[k].noise_sd * z
                    }
                    VariableKind::Binary => f64::from(u8::from(idx + logistic_noise(&mut rng) > 0.0)),
                };
                ms[[i, k]] = *mk;
            }
            let sl = s.intercept + s.treatment * d + dot(&s.mediators, &m) + dot(&s.covariates, &xi) + s.confounder * u + logistic_noise(&mut rng);
            let sel = sl > 0.0;
            let z: f64 = rng.sample(StandardNormal);
            let y = o.intercept
                + o.treatment * d
                + dot(&o.mediators, &m)
                + d * dot(&o.interaction, &m)
                + dot(&o.covariates, &xi)
                + o.confounder * u
                + o.noise_sd * z;
            selection.push(sel);
            outcome.push(sel.then_some(y));
        }
        let roles = VariableRoles {
            outcome: "y".into(),
            treatment: "d".into(),
            selection: "s".into(),
            mediators: (1..=pm).map(|k| format!("m{k}")).collect(),
            covariates: (1..=px).map(|k| format!("x{k}")).collect(),
        };
        let sample = AnalysisSample::from_parts(roles, outcome, treatment, selection, ms, xs)?;
        Ok(SyntheticSample {
            sample,
            truth: self.truth(),
        })
    }

    /// Monte Carlo estimate of the four truths by simulating both potential worlds
    /// from shared noise draws.
    pub fn simulate_truth(&self, draws: usize, seed: u64) -> PerTarget<f64> {
        let px = self.num_covariates();
        let pm = self.num_mediators();
        let o = &self.outcome;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = [0.0; 4];
        let mut x = vec![0.0; px];
        let mut m = [vec![0.0; pm], vec![0.0; pm]];
        for _ in 0..draws {
            self.draw_covariates(&mut rng, &mut x);
            let u: f64 = if self.inject_confounder { rng.sample(StandardNormal) } else { 0.0 };
            for k in 0..pm {
                match self.mediator_kind {
                    VariableKind::Gaussian => {
                        let z: f64 = rng.sample(StandardNormal);
                        for d in 0..2 {
                            m[d][k] = self.mediator_index(k, d as f64, &x, u) + self.mediators[k].noise_sd * z;
                        }
                    }
                    VariableKind::Binary => {
                        let e = logistic_noise(&mut rng);
                        for d in 0..2 {
                            m[d][k] = f64::from(u8::from(self.mediator_index(k, d as f64, &x, u) + e > 0.0));
                        }
                    }
                }
            }
            let z: f64 = rng.sample(StandardNormal);
            let y = |d: f64, dm: usize| {
                o.intercept
                    + o.treatment * d
                    + dot(&o.mediators, &m[dm])
                    + d * dot(&o.interaction, &m[dm])
                    + dot(&o.covariates, &x)
                    + o.confounder * u
                    + o.noise_sd * z
            };
            acc[0] += y(1.0, 1);
            acc[1] += y(0.0, 0);
            acc[2] += y(1.0, 0);
            acc[3] += y(0.0, 1);
        }
        let k = draws as f64;
        PerTarget {
            y1m1: acc[0] / k,
            y0m0: acc[1] / k,
            y1m0: acc[2] / k,
            y0m1: acc[3] / k,
        }
    }
}

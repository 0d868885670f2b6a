//! Set-identified bounds on natural direct and indirect effects.
//!
//! Inverse-probability weights built from three propensity models are
//! perturbed inside entropy balls around the fitted probabilities. Each
//! mean potential outcome is then bounded by alternating exact linear
//! programs over one weight block at a time, and effect bounds follow by
//! interval differences. Subsampling supplies confidence intervals for the
//! lower and upper bounds separately.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] loads and validates the analysis sample.
//! * [`glm`] fits logit/probit models by IRLS.
//! * [`propensity`] assembles the three propensity scores and the Hájek IPW
//!   point estimates.
//! * [`calibration`] turns predictor omission or a link swap into entropy
//!   budgets.
//! * [`lpcore`] is a bounded-variable simplex.
//! * [`bounds`] builds and solves the weight programs.
//! * [`inference`] runs subsampling.
//! * [`pipeline`], [`config`] and [`report`] wire everything together for
//!   the command-line front end.
//! * [`oracle`] holds the synthetic data generator and brute-force checkers.

pub mod bounds;
pub mod calibration;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod glm;
pub mod inference;
pub mod lpcore;
pub mod oracle;
pub mod pipeline;
pub mod propensity;
pub mod report;

pub use error::{Error, Result};

/// Probabilities are clipped to `[CLIP_FLOOR, 1 - CLIP_FLOOR]` before any weighting.
pub const DEFAULT_CLIP_FLOOR: f64 = 1e-6;

/// One of the three identifying assumptions whose propensity model can be relaxed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Assumption {
    /// Treatment exogeneity given covariates, model `P(D=1|X)`.
    A1,
    /// Mediator exogeneity, model `P(D=1|M,X)`.
    A2,
    /// Missing-at-random attrition, model `P(S=1|D,M,X)`.
    A3,
}

impl Assumption {
    pub const ALL: [Assumption; 3] = [Assumption::A1, Assumption::A2, Assumption::A3];

    pub fn index(self) -> usize {
        match self {
            Assumption::A1 => 0,
            Assumption::A2 => 1,
            Assumption::A3 => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Assumption::A1 => "A1",
            Assumption::A2 => "A2",
            Assumption::A3 => "A3",
        }
    }
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Assumption {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "A1" | "a1" => Ok(Assumption::A1),
            "A2" | "a2" => Ok(Assumption::A2),
            "A3" | "a3" => Ok(Assumption::A3),
            other => Err(format!("unknown assumption {other:?}")),
        }
    }
}

/// A subset of `{A1, A2, A3}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssumptionSet(u8);

impl AssumptionSet {
    pub const EMPTY: AssumptionSet = AssumptionSet(0);
    pub const ALL: AssumptionSet = AssumptionSet(0b111);

    pub fn new(items: &[Assumption]) -> Self {
        let mut set = AssumptionSet(0);
        for &a in items {
            set.insert(a);
        }
        set
    }

    pub fn insert(&mut self, a: Assumption) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(self, a: Assumption) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Assumption> {
        Assumption::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// Row label in the `A1 + A2` style.
    pub fn label(self) -> String {
        if self.is_empty() {
            return "none".to_string();
        }
        self.iter().map(|a| a.label()).collect::<Vec<_>>().join(" + ")
    }
}

impl std::fmt::Display for AssumptionSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl serde::Serialize for AssumptionSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let items: Vec<Assumption> = self.iter().collect();
        let mut seq = serializer.serialize_seq(Some(items.len()))?;
        for a in items {
            seq.serialize_element(&a)?;
        }
        seq.end()
    }
}

impl<'de> serde::Deserialize<'de> for AssumptionSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let items = Vec::<Assumption>::deserialize(deserializer)?;
        Ok(AssumptionSet::new(&items))
    }
}

/// Treatment arm `d ∈ {0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn from_indicator(d: bool) -> Self {
        if d {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn is_treated(self) -> bool {
        matches!(self, Arm::Treated)
    }
}

/// The four mean potential outcomes `E[Y(d, M(d'))]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Target {
    /// `E[Y(1, M(1))]`
    Y1M1,
    /// `E[Y(0, M(0))]`
    Y0M0,
    /// `E[Y(1, M(0))]`
    Y1M0,
    /// `E[Y(0, M(1))]`
    Y0M1,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::Y1M1, Target::Y0M0, Target::Y1M0, Target::Y0M1];

    pub fn index(self) -> usize {
        match self {
            Target::Y1M1 => 0,
            Target::Y0M0 => 1,
            Target::Y1M0 => 2,
            Target::Y0M1 => 3,
        }
    }

    /// Treatment arm whose selected rows carry this target.
    pub fn arm(self) -> Arm {
        match self {
            Target::Y1M1 | Target::Y1M0 => Arm::Treated,
            Target::Y0M0 | Target::Y0M1 => Arm::Control,
        }
    }

    /// Cross-world targets need the mediator model as well.
    pub fn is_cross_world(self) -> bool {
        matches!(self, Target::Y1M0 | Target::Y0M1)
    }

    pub fn label(self) -> &'static str {
        match self {
            Target::Y1M1 => "E[Y(1,M(1))]",
            Target::Y0M0 => "E[Y(0,M(0))]",
            Target::Y1M0 => "E[Y(1,M(0))]",
            Target::Y0M1 => "E[Y(0,M(1))]",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Target::Y1M1 => "y1m1",
            Target::Y0M0 => "y0m0",
            Target::Y1M0 => "y1m0",
            Target::Y0M1 => "y0m1",
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Effects defined as differences of two mean potential outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Effect {
    /// Total effect `Δ`.
    Ate,
    /// Natural direct effect `θ(1)`.
    Theta1,
    /// Natural direct effect `θ(0)`.
    Theta0,
    /// Natural indirect effect `δ(1)`.
    Delta1,
    /// Natural indirect effect `δ(0)`.
    Delta0,
}

impl Effect {
    pub const ALL: [Effect; 5] = [Effect::Ate, Effect::Theta1, Effect::Theta0, Effect::Delta1, Effect::Delta0];

    pub fn index(self) -> usize {
        match self {
            Effect::Ate => 0,
            Effect::Theta1 => 1,
            Effect::Theta0 => 2,
            Effect::Delta1 => 3,
            Effect::Delta0 => 4,
        }
    }

    /// `(minuend, subtrahend)`.
    pub fn components(self) -> (Target, Target) {
        match self {
            Effect::Ate => (Target::Y1M1, Target::Y0M0),
            Effect::Theta1 => (Target::Y1M1, Target::Y0M1),
            Effect::Theta0 => (Target::Y1M0, Target::Y0M0),
            Effect::Delta1 => (Target::Y1M1, Target::Y1M0),
            Effect::Delta0 => (Target::Y0M1, Target::Y0M0),
        }
    }

    /// Interval differences are sharp when the two components use disjoint rows.
    pub fn is_sharp(self) -> bool {
        let (a, b) = self.components();
        a.arm() != b.arm()
    }

    pub fn key(self) -> &'static str {
        match self {
            Effect::Ate => "ate",
            Effect::Theta1 => "theta1",
            Effect::Theta0 => "theta0",
            Effect::Delta1 => "delta1",
            Effect::Delta0 => "delta0",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Effect::Ate => "total effect (ATE)",
            Effect::Theta1 => "natural direct effect, d=1",
            Effect::Theta0 => "natural direct effect, d=0",
            Effect::Delta1 => "natural indirect effect, d=1",
            Effect::Delta0 => "natural indirect effect, d=0",
        }
    }
}

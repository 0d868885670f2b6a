//! Run configuration: one JSON document per analysis.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::AlternationControls;
use crate::calibration::{PredictorGrouping, RelaxationRule};
use crate::dataset::{LoadOptions, VariableRoles};
use crate::glm::{FitControls, LinkFunction};
use crate::inference::SubsamplingPlan;
use crate::{Assumption, AssumptionSet, Error, Result, DEFAULT_CLIP_FLOOR};

/// One relaxation: a set of assumptions relaxed together under one budget rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub assumptions: AssumptionSet,
    pub rule: RelaxationRule,
}

impl CellSpec {
    pub fn new(assumptions: &[Assumption], rule: RelaxationRule) -> Self {
        CellSpec {
            assumptions: AssumptionSet::new(assumptions),
            rule,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    /// Seven assumption rows by X1–X3 and the link swap, plus A2, A3 and A2 + A3
    /// by M1–M3.
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Preset(GridPreset),
    Cells(Vec<CellSpec>),
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::Preset(GridPreset::Paper)
    }
}

/// Row order of the assumption sets in the tables.
pub fn assumption_rows() -> Vec<AssumptionSet> {
    use Assumption::*;
    [
        &[A1][..],
        &[A2],
        &[A3],
        &[A1, A2],
        &[A2, A3],
        &[A1, A3],
        &[A1, A2, A3],
    ]
    .iter()
    .map(|s| AssumptionSet::new(s))
    .collect()
}

impl GridConfig {
    pub fn cells(&self) -> Vec<CellSpec> {
        match self {
            GridConfig::Cells(c) => c.clone(),
            GridConfig::Preset(GridPreset::Paper) => {
                let mut cells = Vec::new();
                for set in assumption_rows() {
                    for rank in 1..=3 {
                        cells.push(CellSpec {
                            assumptions: set,
                            rule: RelaxationRule::XRank { rank },
                        });
                    }
                    cells.push(CellSpec {
                        assumptions: set,
                        rule: RelaxationRule::LinkSwap,
                    });
                }
                for set in assumption_rows().into_iter().filter(|s| !s.contains(Assumption::A1)) {
                    for rank in 1..=3 {
                        cells.push(CellSpec {
                            assumptions: set,
                            rule: RelaxationRule::MRank { rank },
                        });
                    }
                }
                cells
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_tables")]
    pub tables: String,
    /// File name for the per-cell CSV; not written when absent.
    #[serde(default)]
    pub bounds_csv: Option<String>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_report() -> String {
    "report.json".into()
}

fn default_tables() -> String {
    "tables.txt".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            report: default_report(),
            tables: default_tables(),
            bounds_csv: None,
        }
    }
}

fn default_clip_floor() -> f64 {
    DEFAULT_CLIP_FLOOR
}

fn default_plan() -> Option<SubsamplingPlan> {
    Some(SubsamplingPlan::default())
}

fn default_max_iterations() -> usize {
    FitControls::default().max_iterations
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub roles: VariableRoles,
    #[serde(default)]
    pub load: LoadOptions,
    #[serde(default)]
    pub link: LinkFunction,
    #[serde(default = "default_clip_floor")]
    pub clip_floor: f64,
    #[serde(default = "default_max_iterations")]
    pub max_irls_iterations: usize,
    #[serde(default)]
    pub grid: GridConfig,
    /// `null` disables confidence intervals.
    #[serde(default = "default_plan")]
    pub subsampling: Option<SubsamplingPlan>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grouping: PredictorGrouping,
    #[serde(default)]
    pub alternation: AlternationControls,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Minimal configuration with defaults for everything but data and roles.
    pub fn new(data: impl Into<PathBuf>, roles: VariableRoles) -> Self {
        RunConfig {
            data: data.into(),
            roles,
            load: LoadOptions::default(),
            link: LinkFunction::default(),
            clip_floor: default_clip_floor(),
            max_irls_iterations: default_max_iterations(),
            grid: GridConfig::default(),
            subsampling: default_plan(),
            output: OutputConfig::default(),
            seed: 0,
            grouping: PredictorGrouping::default(),
            alternation: AlternationControls::default(),
            threads: None,
        }
    }

    /// Parse a config file. Relative data and output paths are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            if cfg.data.is_relative() {
                cfg.data = base.join(&cfg.data);
            }
            if cfg.output.dir.is_relative() {
                cfg.output.dir = base.join(&cfg.output.dir);
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fit_controls(&self) -> FitControls {
        FitControls {
            max_iterations: self.max_irls_iterations,
            clip_floor: self.clip_floor,
            ..FitControls::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.clip_floor > 0.0 && self.clip_floor < 0.5) {
            return bad(format!("clip_floor {} must lie in (0, 0.5)", self.clip_floor));
        }
        if self.max_irls_iterations == 0 {
            return bad("max_irls_iterations must be positive".into());
        }
        let cells = self.grid.cells();
        if cells.is_empty() {
            return bad("relaxation grid is empty".into());
        }
        for c in &cells {
            if c.assumptions.is_empty() {
                return bad("a grid cell relaxes no assumption".into());
            }
            match &c.rule {
                RelaxationRule::XRank { rank } | RelaxationRule::MRank { rank } if *rank == 0 => {
                    return bad("predictor ranks start at 1".into());
                }
                RelaxationRule::MRank { .. } if c.assumptions.contains(Assumption::A1) => {
                    return bad(format!("{}: the A1 model has no mediators to omit", c.assumptions));
                }
                RelaxationRule::Fixed { epsilon, per_arm } => {
                    let all = std::iter::once(*epsilon).chain(per_arm.values().flatten().copied());
                    for v in all {
                        if !(v.is_finite() && v >= 0.0) {
                            return bad(format!("fixed epsilon {v} must be finite and nonnegative"));
                        }
                    }
                }
                _ => {}
            }
        }
        if let Some(plan) = &self.subsampling {
            if plan.replications < 2 {
                return bad("subsampling needs at least 2 replications".into());
            }
            if !(plan.alpha > 0.0 && plan.alpha < 1.0) {
                return bad(format!("alpha {} outside (0, 1)", plan.alpha));
            }
        }
        if self.alternation.max_sweeps == 0 || self.alternation.starts == 0 {
            return bad("alternation needs at least one sweep and one start".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        self.roles.check_disjoint().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"data": "d.csv", "roles": {"outcome": "y", "treatment": "d", "selection": "s", "mediators": ["m"], "covariates": ["x"]}}"#
    }

    #[test]
    fn defaults() {
        let c = RunConfig::from_json(minimal()).unwrap();
        assert_eq!(c.link, LinkFunction::Logit);
        assert_eq!(c.grid.cells().len(), 37);
        assert_eq!(c.subsampling.as_ref().unwrap().replications, 500);
        assert_eq!(c.clip_floor, 1e-6);
    }

    #[test]
    fn explicit_null_disables_subsampling() {
        let text = minimal().replace("\"data\"", "\"subsampling\": null, \"data\"");
        assert!(RunConfig::from_json(&text).unwrap().subsampling.is_none());
    }

    #[test]
    fn explicit_grid() {
        let text = minimal().replace(
            "\"data\"",
            r#""grid": [{"assumptions": ["A1", "A3"], "rule": {"kind": "fixed", "epsilon": 0.1}}], "data""#,
        );
        let c = RunConfig::from_json(&text).unwrap();
        let cells = c.grid.cells();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].assumptions.label(), "A1 + A3");
    }

    #[test]
    fn rejects_bad_values() {
        for patch in [
            r#""grid": [], "data""#,
            r#""grid": [{"assumptions": ["A1"], "rule": {"kind": "m_rank", "rank": 1}}], "data""#,
            r#""grid": [{"assumptions": ["A2"], "rule": {"kind": "fixed", "epsilon": -0.1}}], "data""#,
            r#""clip_floor": 0.7, "data""#,
            r#""unknown_field": 1, "data""#,
        ] {
            let text = minimal().replace("\"data\"", patch);
            assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))), "{patch}");
        }
    }

    #[test]
    fn paper_grid_layout() {
        let cells = GridConfig::default().cells();
        assert_eq!(cells.iter().filter(|c| c.rule.is_mediator_rule()).count(), 9);
        assert!(cells.iter().all(|c| !(c.rule.is_mediator_rule() && c.assumptions.contains(Assumption::A1))));
    }
}

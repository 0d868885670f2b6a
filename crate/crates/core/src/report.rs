//! Report assembly: `report.json`, `tables.txt`, `bounds.csv` and the
//! predictor-importance table.
//!
//! The JSON schema is fixed: every field is always present and analyses that
//! did not run are `null`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::calibration::{Calibrator, EntropyBudget, PredictorSource, RelaxationRule};
use crate::config::{assumption_rows, OutputConfig, RunConfig};
use crate::dataset::AnalysisSample;
use crate::glm::LinkFunction;
use crate::inference::{BoundCI, SubsamplingPlan};
use crate::lpcore::{EQUALITY_TOL, FEASIBILITY_TOL};
use crate::pipeline::Analysis;
use crate::propensity::{PerEffect, PerTarget, PointEstimates};
use crate::{Arm, Assumption, AssumptionSet, Effect, Error, Result, Target};

pub const SCHEMA_VERSION: u32 = 1;

/// Modelling and numerical choices echoed into every report.
pub const DECISIONS: &[&str] = &[
    "fitted probabilities are clipped to [clip_floor, 1 - clip_floor] before weighting",
    "perturbed probabilities are confined to [clip_floor, 1 - clip_floor], so omega and omega-bar boxes are exact mirror images",
    "every weight block sums to the sum of its unperturbed weights and is normalized by the product of its unperturbed weights",
    "E[Y(0,M(0))] uses omega-bar for the treatment block, i.e. weights 1/(1 - q) built from 1 - p(A1)",
    "E[Y(1,M(0))] and E[Y(0,M(1))] normalize each block against its own propensity score; the normalizer for E[Y(1,M(0))] uses 1/(1 - p(A1))",
    "E[Y(0,M(1))] uses the control-arm budgets with sqrt(p(1 - p)) scaling in every block",
    "alternating sweeps visit the A1, A2 and A3 blocks in that order and stop when a sweep moves the objective by at most tolerance * (1 + |v|)",
    "lower bounds are never below and upper bounds never above the global optimum; alternation can stop at partial optima, so intervals may be narrower than the global ones",
    "cells are solved in order of budget dominance and warm-started from dominated cells, so nested budgets give nested intervals",
    "indirect effects delta(1) and delta(0) share rows between their two components and their composed intervals are not sharp",
    "confidence limits are computed separately for the lower and upper bound from subsampling roots sqrt(m)(b - b_hat) with type-7 empirical quantiles",
    "subsamples recalibrate budgets unless recalibrate is false, in which case full-sample budgets are reused",
    "crossed confidence limits and bounds outside their own interval are reported as warnings",
    "predictor importance is the deviance increase from omitting one predictor (or a configured group) and refitting",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub dropped_rows: usize,
    pub treated: usize,
    pub control: usize,
    pub selected_treated: usize,
    pub selected_control: usize,
    pub mediators: usize,
    pub covariates: usize,
}

impl SampleSummary {
    pub fn of(sample: &AnalysisSample) -> Self {
        SampleSummary {
            n: sample.n(),
            dropped_rows: sample.dropped_rows(),
            treated: sample.arm_size(Arm::Treated),
            control: sample.arm_size(Arm::Control),
            selected_treated: sample.retained_rows(Arm::Treated).len(),
            selected_control: sample.retained_rows(Arm::Control).len(),
            mediators: sample.mediators().ncols(),
            covariates: sample.covariates().ncols(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub assumption: Assumption,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub deviance: Option<f64>,
    pub clipped: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensitySummary {
    pub link: LinkFunction,
    pub clip_floor: f64,
    pub models: Vec<ModelSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub lower_sweeps: usize,
    pub upper_sweeps: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEntry {
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    pub sharp: bool,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiDiagnostics {
    pub successful_replications: usize,
    pub failed_replications: usize,
    pub containment_warnings: Vec<String>,
    pub crossed: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub assumptions: AssumptionSet,
    pub assumptions_label: String,
    pub rule: RelaxationRule,
    pub rule_label: String,
    pub budget: EntropyBudget,
    pub targets: PerTarget<BoundEntry>,
    pub effects: PerEffect<EffectEntry>,
    pub ci: Option<CiDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsamplingSummary {
    pub replications: usize,
    pub subsample_size: usize,
    pub alpha: f64,
    pub rng_seed: u64,
    pub recalibrate: bool,
    pub failed_replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub starts: usize,
    pub lp_feasibility_tol: f64,
    pub lp_equality_tol: f64,
    pub all_converged: bool,
    /// `cell / target / sense` for every solve that hit the sweep limit.
    pub unconverged: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub seed: u64,
    pub data: String,
    pub sample: SampleSummary,
    pub propensity: PropensitySummary,
    pub point_estimates: PointEstimates,
    pub cells: Vec<CellReport>,
    pub subsampling: Option<SubsamplingSummary>,
    pub solver: SolverSummary,
    pub decisions: Vec<String>,
    pub warnings: Vec<String>,
}

fn tool() -> ToolInfo {
    ToolInfo {
        name: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

impl Report {
    pub fn build(cfg: &RunConfig, sample: &AnalysisSample, analysis: &Analysis, plan: Option<&SubsamplingPlan>) -> Report {
        let ev = &analysis.evaluation;
        let link = ev.scores.link;
        let mut warnings = Vec::new();
        let mut unconverged = Vec::new();
        let cells: Vec<CellReport> = ev
            .cells
            .iter()
            .enumerate()
            .map(|(k, cell)| {
                let ci = analysis.ci.as_ref().map(|v| &v[k]);
                let label = format!("{} / {}", cell.spec.assumptions, cell.spec.rule.label(link));
                for t in Target::ALL {
                    let b = cell.bounds.get(t);
                    if !b.lower_converged {
                        unconverged.push(format!("{label} / {} / lower", t.key()));
                    }
                    if !b.upper_converged {
                        unconverged.push(format!("{label} / {} / upper", t.key()));
                    }
                }
                if let Some(ci) = ci {
                    for name in &ci.crossed {
                        warnings.push(format!("{label}: confidence limits cross for {name}"));
                    }
                    for name in &ci.containment_warnings {
                        warnings.push(format!("{label}: estimated bounds outside their confidence interval for {name}"));
                    }
                }
                cell_report(cell, ci, &ev.point, link)
            })
            .collect();
        let clipped = ev.scores.clipped();
        if clipped > 0 {
            warnings.push(format!("{clipped} fitted probabilities were clipped at {}", ev.scores.clip_floor));
        }
        for t in Target::ALL {
            let w = ev.point.max_normalized_weight.get(t);
            if w > crate::propensity::WEIGHT_CAP_WARNING {
                warnings.push(format!("{}: largest normalized weight {w:.3}", t.label()));
            }
        }
        let models: Vec<ModelSummary> = Assumption::ALL
            .iter()
            .map(|&a| {
                let m = ev.scores.model(a);
                ModelSummary {
                    assumption: a,
                    converged: m.map(|m| m.converged),
                    iterations: m.map(|m| m.iterations),
                    deviance: m.map(|m| m.deviance),
                    clipped: m.map(|m| m.clipped),
                }
            })
            .collect();
        for m in &models {
            if m.converged == Some(false) {
                warnings.push(format!("{} propensity model did not converge", m.assumption));
            }
        }
        let subsampling = match (plan, &analysis.ci) {
            (Some(p), Some(ci)) => Some(SubsamplingSummary {
                replications: p.replications,
                subsample_size: ci.first().map_or(0, |c| c.subsample_size),
                alpha: p.alpha,
                rng_seed: p.rng_seed,
                recalibrate: p.recalibrate,
                failed_replications: ci.first().map_or(0, |c| c.failed_replications),
            }),
            _ => None,
        };
        Report {
            schema_version: SCHEMA_VERSION,
            tool: tool(),
            seed: cfg.seed,
            data: cfg.data.display().to_string(),
            sample: SampleSummary::of(sample),
            propensity: PropensitySummary {
                link,
                clip_floor: ev.scores.clip_floor,
                models,
            },
            point_estimates: ev.point.clone(),
            cells,
            subsampling,
            solver: SolverSummary {
                tolerance: cfg.alternation.tolerance,
                max_sweeps: cfg.alternation.max_sweeps,
                starts: cfg.alternation.starts,
                lp_feasibility_tol: FEASIBILITY_TOL,
                lp_equality_tol: EQUALITY_TOL,
                all_converged: unconverged.is_empty(),
                unconverged,
            },
            decisions: DECISIONS.iter().map(|s| s.to_string()).collect(),
            warnings,
        }
    }
}

fn cell_report(cell: &crate::pipeline::CellOutcome, ci: Option<&BoundCI>, point: &PointEstimates, link: LinkFunction) -> CellReport {
    let targets = PerTarget::from_fn(|t| {
        let b = cell.bounds.get(t);
        let c = ci.map(|c| c.targets.get(t));
        BoundEntry {
            lower: b.lower,
            upper: b.upper,
            point: b.point,
            ci_low: c.map(|c| c.ci_low),
            ci_high: c.map(|c| c.ci_high),
            lower_sweeps: b.lower_sweeps,
            upper_sweeps: b.upper_sweeps,
            converged: b.converged(),
        }
    });
    let effects = PerEffect::from_fn(|e| {
        let b = cell.effects.get(e);
        let c = ci.map(|c| c.effects.get(e));
        EffectEntry {
            lower: b.lower,
            upper: b.upper,
            point: point.effects.get(e),
            sharp: b.sharp,
            ci_low: c.map(|c| c.ci_low),
            ci_high: c.map(|c| c.ci_high),
        }
    });
    CellReport {
        assumptions: cell.spec.assumptions,
        assumptions_label: cell.spec.assumptions.label(),
        rule: cell.spec.rule.clone(),
        rule_label: cell.spec.rule.label(link),
        budget: cell.budget.clone(),
        targets,
        effects,
        ci: ci.map(|c| CiDiagnostics {
            successful_replications: c.successful_replications,
            failed_replications: c.failed_replications,
            containment_warnings: c.containment_warnings.clone(),
            crossed: c.crossed.clone(),
        }),
    }
}

fn ordinal(k: usize) -> String {
    let suffix = match (k % 10, k % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{k}{suffix}")
}

fn column_title(rule: &RelaxationRule, link: LinkFunction) -> String {
    match rule {
        RelaxationRule::XRank { rank } => format!("X {}", ordinal(*rank)),
        RelaxationRule::MRank { rank } => format!("M {}", ordinal(*rank)),
        RelaxationRule::LinkSwap => {
            let name = link.swapped().to_string();
            let mut c = name.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        }
        other => other.label(link),
    }
}

/// `[ lb   ub ]`, three decimals.
pub fn bracket(lower: f64, upper: f64) -> String {
    format!("[ {lower:.3}   {upper:.3} ]")
}

/// `( lo   hi )`, three decimals.
pub fn paren(lower: f64, upper: f64) -> String {
    format!("( {lower:.3}   {upper:.3} )")
}

fn effect_title(e: Effect, point: f64) -> String {
    let name = match e {
        Effect::Ate => "Bounds on the total effect".to_string(),
        Effect::Theta1 => "Bounds on the natural direct effect under d=1".to_string(),
        Effect::Theta0 => "Bounds on the natural direct effect under d=0".to_string(),
        Effect::Delta1 => "Bounds on the natural indirect effect under d=1".to_string(),
        Effect::Delta0 => "Bounds on the natural indirect effect under d=0".to_string(),
    };
    format!("{name} (point estimate: {point:.3})")
}

/// Row order: the standard assumption rows first, then any other set.
fn row_rank(set: AssumptionSet) -> usize {
    assumption_rows().iter().position(|s| *s == set).unwrap_or(usize::MAX)
}

fn render_panel(out: &mut String, e: Effect, cells: &[&CellReport], link: LinkFunction) {
    let mut columns: Vec<&RelaxationRule> = Vec::new();
    for c in cells {
        if !columns.contains(&&c.rule) {
            columns.push(&c.rule);
        }
    }
    let mut rows: Vec<AssumptionSet> = Vec::new();
    for c in cells {
        if !rows.contains(&c.assumptions) {
            rows.push(c.assumptions);
        }
    }
    rows.sort_by_key(|s| (row_rank(*s), *s));

    let mut grid: Vec<Vec<[String; 2]>> = Vec::new();
    for r in &rows {
        let mut line = Vec::new();
        for rule in &columns {
            let cell = cells.iter().find(|c| c.assumptions == *r && c.rule == **rule);
            line.push(match cell {
                Some(c) => {
                    let b = c.effects.get_ref(e);
                    let ci = match (b.ci_low, b.ci_high) {
                        (Some(lo), Some(hi)) => paren(lo, hi),
                        _ => String::new(),
                    };
                    [bracket(b.lower, b.upper), ci]
                }
                None => [String::new(), String::new()],
            });
        }
        grid.push(line);
    }
    let head_w = rows.iter().map(|r| r.label().len()).max().unwrap_or(0).max("Relaxed".len());
    let widths: Vec<usize> = (0..columns.len())
        .map(|j| {
            grid.iter()
                .flat_map(|l| l[j].iter().map(|s| s.len()))
                .chain(std::iter::once(column_title(columns[j], link).len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let _ = write!(out, "{:<head_w$}", "Relaxed");
    for (j, rule) in columns.iter().enumerate() {
        let _ = write!(out, "  {:^w$}", column_title(rule, link), w = widths[j]);
    }
    out.push('\n');
    let total = head_w + widths.iter().map(|w| w + 2).sum::<usize>();
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for (r, line) in rows.iter().zip(&grid) {
        for k in 0..2 {
            let head = if k == 0 { r.label() } else { String::new() };
            let mut text = format!("{head:<head_w$}");
            for (j, cell) in line.iter().enumerate() {
                let _ = write!(text, "  {:<w$}", cell[k], w = widths[j]);
            }
            if k == 1 && text.trim().is_empty() {
                continue;
            }
            out.push_str(text.trim_end());
            out.push('\n');
        }
    }
}

/// Plain-text tables: one per effect, each with a covariate/link panel and a
/// mediator panel. Bounds in square brackets, confidence intervals in parentheses.
pub fn render_tables(report: &Report) -> String {
    let link = report.propensity.link;
    let mut out = String::new();
    for e in [Effect::Theta1, Effect::Theta0, Effect::Delta1, Effect::Delta0, Effect::Ate] {
        let point = report.point_estimates.effects.get(e);
        let _ = writeln!(out, "{}", effect_title(e, point));
        if !e.is_sharp() {
            out.push_str("(composed from two bounds that share observations; not sharp)\n");
        }
        out.push('\n');
        let (m_cells, x_cells): (Vec<&CellReport>, Vec<&CellReport>) = report.cells.iter().partition(|c| c.rule.is_mediator_rule());
        if !x_cells.is_empty() {
            render_panel(&mut out, e, &x_cells, link);
            out.push('\n');
        }
        if !m_cells.is_empty() {
            render_panel(&mut out, e, &m_cells, link);
            out.push('\n');
        }
        match &report.subsampling {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{:.0}% confidence intervals from {} subsamples of size {}.",
                    100.0 * (1.0 - s.alpha),
                    s.replications,
                    s.subsample_size
                );
            }
            None => out.push_str("Confidence intervals not computed.\n"),
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsCsvRow {
    pub effect: String,
    pub assumptions: String,
    pub rule: String,
    #[serde(rename = "LB")]
    pub lb: f64,
    #[serde(rename = "UB")]
    pub ub: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

pub fn bounds_rows(report: &Report) -> Vec<BoundsCsvRow> {
    let mut rows = Vec::new();
    for c in &report.cells {
        for e in Effect::ALL {
            let b = c.effects.get(e);
            rows.push(BoundsCsvRow {
                effect: e.key().to_string(),
                assumptions: c.assumptions_label.clone(),
                rule: c.rule_label.clone(),
                lb: b.lower,
                ub: b.upper,
                ci_low: b.ci_low,
                ci_high: b.ci_high,
            });
        }
    }
    rows
}

pub fn write_bounds_csv<W: std::io::Write>(report: &Report, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in bounds_rows(report) {
        w.serialize(row).map_err(|e| Error::Config(format!("cannot write bounds CSV: {e}")))?;
    }
    w.flush().map_err(|e| Error::Config(format!("cannot write bounds CSV: {e}")))?;
    Ok(())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("cannot write {}: {e}", path.display()))
}

/// Write the report, the tables and (if configured) the CSV. Returns the paths written.
pub fn write_artifacts(output: &OutputConfig, report: &Report) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&output.dir).map_err(|e| io_err(&output.dir, e))?;
    let mut written = Vec::new();
    let json_path = output.dir.join(&output.report);
    let json = serde_json::to_string_pretty(report).map_err(|e| io_err(&json_path, e))?;
    std::fs::write(&json_path, json + "\n").map_err(|e| io_err(&json_path, e))?;
    written.push(json_path);
    let tables_path = output.dir.join(&output.tables);
    std::fs::write(&tables_path, render_tables(report)).map_err(|e| io_err(&tables_path, e))?;
    written.push(tables_path);
    if let Some(name) = &output.bounds_csv {
        let path = output.dir.join(name);
        let file = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        write_bounds_csv(report, file)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPredictor {
    pub rank: usize,
    pub name: String,
    pub deviance_drop: f64,
    pub df: usize,
    /// 95th percentile of `χ²(df)`.
    pub critical_value: f64,
    /// Drop below the critical value.
    pub weak: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRanking {
    pub assumption: Assumption,
    pub model: String,
    pub covariates: Vec<RankedPredictor>,
    /// `null` for the treatment model, which has no mediators.
    pub mediators: Option<Vec<RankedPredictor>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub link: LinkFunction,
    pub top: usize,
    pub models: Vec<ModelRanking>,
}

fn model_name(a: Assumption) -> &'static str {
    match a {
        Assumption::A1 => "P(D=1|X)",
        Assumption::A2 => "P(D=1|M,X)",
        Assumption::A3 => "P(S=1|D,M,X)",
    }
}

/// 95th percentile of `χ²(df)`.
pub fn chi_squared_critical(df: usize) -> f64 {
    ChiSquared::new(df.max(1) as f64).map(|d| d.inverse_cdf(0.95)).unwrap_or(f64::INFINITY)
}

/// Top `top` covariates and mediators of each propensity model by deviance drop.
pub fn rank_report(calibrator: &Calibrator<'_>, link: LinkFunction, top: usize) -> Result<RankReport> {
    let list = |a: Assumption, source: PredictorSource| -> Result<Vec<RankedPredictor>> {
        let ranking = calibrator.ranking(a, source)?;
        Ok(ranking
            .iter()
            .take(top)
            .enumerate()
            .map(|(k, p)| {
                let df = p.group.columns.len();
                let critical_value = chi_squared_critical(df);
                RankedPredictor {
                    rank: k + 1,
                    name: p.group.name.clone(),
                    deviance_drop: p.deviance_drop,
                    df,
                    critical_value,
                    weak: p.deviance_drop < critical_value,
                }
            })
            .collect())
    };
    let mut models = Vec::new();
    for a in Assumption::ALL {
        let covariates = list(a, PredictorSource::X)?;
        let mediators = if a == Assumption::A1 {
            None
        } else {
            Some(list(a, PredictorSource::M)?)
        };
        models.push(ModelRanking {
            assumption: a,
            model: model_name(a).to_string(),
            covariates,
            mediators,
        });
    }
    Ok(RankReport { link, top, models })
}

pub fn render_rank(report: &RankReport) -> String {
    let mut out = String::from("Covariates and mediators with the highest predictive power\n");
    let _ = writeln!(out, "(change in deviance, {} link; * marks drops below the 95% chi-square reference)\n", report.link);
    let section = |out: &mut String, title: &str, list: &[RankedPredictor]| {
        for (k, p) in list.iter().enumerate() {
            let head = if k == 0 { title } else { "" };
            let flag = if p.weak { " *" } else { "" };
            let _ = writeln!(out, "  {head:<18}{:<5}{:<40}{:>12.3}{flag}", ordinal(p.rank), p.name, p.deviance_drop);
        }
    };
    for m in &report.models {
        let _ = writeln!(out, "Assumption {}  {}", m.assumption, m.model);
        if let Some(meds) = &m.mediators {
            section(&mut out, "Most important M", meds);
        }
        section(&mut out, "Most important X", &m.covariates);
        out.push('\n');
    }
    out
}

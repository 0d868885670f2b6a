//! Binary-response GLMs fitted by iteratively reweighted least squares.

mod link;

pub use link::LinkFunction;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GlmError {
    #[error("design is rank deficient: column {column} is (numerically) collinear with earlier columns")]
    RankDeficient { column: usize },
    #[error("response is constant; probabilities are degenerate")]
    AllSameResponse,
    #[error("design has {design} rows but response has {response}")]
    LengthMismatch { design: usize, response: usize },
    #[error("column group is empty or contains the intercept or an out-of-range column")]
    InvalidGroup,
    #[error("no candidate predictors to rank")]
    NoCandidates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitControls {
    pub max_iterations: usize,
    /// Relative deviance change and relative coefficient step that together count as convergence.
    pub tolerance: f64,
    /// Fitted probabilities are clipped to `[clip_floor, 1 - clip_floor]`.
    pub clip_floor: f64,
}

impl Default for FitControls {
    fn default() -> Self {
        FitControls {
            max_iterations: 100,
            tolerance: 1e-10,
            clip_floor: crate::DEFAULT_CLIP_FLOOR,
        }
    }
}

/// Result of a binary-response fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedBinaryModel {
    pub link: LinkFunction,
    pub coefficients: Vec<f64>,
    /// Clipped fitted probabilities, one per row.
    pub fitted_probabilities: Vec<f64>,
    /// `-2` times the maximised log-likelihood.
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Deviance after each accepted iteration, starting with the initial value.
    pub deviance_trace: Vec<f64>,
    /// Number of fitted probabilities moved by clipping.
    pub clipped: usize,
}

impl FittedBinaryModel {
    /// Score vector `Σ_i x_ij (y_i − μ_i) μ'_i / (μ_i(1 − μ_i))` at the fitted coefficients.
    pub fn score(&self, design: ArrayView2<f64>, response: &[bool]) -> Vec<f64> {
        let eta = linear_predictor(design, &self.coefficients);
        let mut score = vec![0.0; design.ncols()];
        for (i, row) in design.rows().into_iter().enumerate() {
            let mu = self.link.inverse(eta[i]);
            let w = match self.link {
                LinkFunction::Logit => 1.0,
                LinkFunction::Probit => self.link.derivative(eta[i]) / (mu * (1.0 - mu)),
            };
            let r = (if response[i] { 1.0 } else { 0.0 } - mu) * w;
            for (s, x) in score.iter_mut().zip(row) {
                *s += x * r;
            }
        }
        score
    }
}

fn linear_predictor(design: ArrayView2<f64>, beta: &[f64]) -> Vec<f64> {
    design
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect()
}

/// Binomial deviance of linear predictors `eta` against `response`.
pub fn binomial_deviance(link: LinkFunction, eta: &[f64], response: &[bool]) -> f64 {
    -2.0 * eta
        .iter()
        .zip(response)
        .map(|(&e, &y)| {
            let (lp, lq) = link.log_probabilities(e);
            if y {
                lp
            } else {
                lq
            }
        })
        .sum::<f64>()
}

/// `D(η + δ) − D(η)` summed from per-row changes, so steps far below the
/// rounding level of `D` itself still have a reliable sign.
fn deviance_change(link: LinkFunction, eta: &[f64], next: &[f64], response: &[bool]) -> f64 {
    -2.0 * eta
        .iter()
        .zip(next)
        .zip(response)
        .map(|((&e, &f), &y)| {
            let (up, down) = link.log_probability_change(e, f - e);
            if y {
                up
            } else {
                down
            }
        })
        .sum::<f64>()
}

/// Accumulate `XᵀWX` (lower triangle mirrored) and `XᵀWz`.
fn weighted_normal_equations(design: ArrayView2<f64>, w: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = design.ncols();
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    let mut row_buf = vec![0.0; p];
    for (i, row) in design.rows().into_iter().enumerate() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for (dst, x) in row_buf.iter_mut().zip(row) {
            *dst = *x;
        }
        let wz = wi * z[i];
        for j in 0..p {
            let wxj = wi * row_buf[j];
            if wxj == 0.0 {
                continue;
            }
            b[j] += row_buf[j] * wz;
            let arow = &mut a[j * p..j * p + j + 1];
            for (ak, xk) in arow.iter_mut().zip(&row_buf[..=j]) {
                *ak += wxj * xk;
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[k * p + j] = a[j * p + k];
        }
    }
    (a, b)
}

/// Solve the SPD system `a x = b` after Jacobi scaling. Fails with the index of the first
/// pivot below `1e-10 ×` the largest pivot seen.
fn solve_spd(a: &[f64], b: &[f64], p: usize) -> Result<Vec<f64>, usize> {
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let d = a[j * p + j];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if let Some(j) = scale.iter().position(|&s| s == 0.0) {
        return Err(j);
    }
    let mut l = vec![0.0; p * p];
    let mut max_pivot: f64 = 0.0;
    for j in 0..p {
        let mut d = a[j * p + j] * scale[j] * scale[j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        max_pivot = max_pivot.max(d);
        if d <= 1e-10 * max_pivot || !d.is_finite() {
            return Err(j);
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in j + 1..p {
            let mut s = a[i * p + j] * scale[i] * scale[j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / djj;
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i] * scale[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    for (xi, si) in x.iter_mut().zip(&scale) {
        *xi *= si;
    }
    Ok(x)
}

/// Structural rank check on `XᵀX`.
pub fn check_full_rank(design: ArrayView2<f64>) -> Result<(), GlmError> {
    let n = design.nrows();
    let (a, _) = weighted_normal_equations(design, &vec![1.0; n], &vec![0.0; n]);
    solve_spd(&a, &vec![0.0; design.ncols()], design.ncols())
        .map(|_| ())
        .map_err(|column| GlmError::RankDeficient { column })
}

/// Fit a binary-response model by IRLS with step halving.
pub fn fit(design: &Array2<f64>, response: &[bool], link: LinkFunction, controls: &FitControls) -> Result<FittedBinaryModel, GlmError> {
    fit_from(design.view(), response, link, controls, None)
}

/// [`fit`] with an optional starting coefficient vector.
pub fn fit_from(
    design: ArrayView2<f64>,
    response: &[bool],
    link: LinkFunction,
    controls: &FitControls,
    start: Option<&[f64]>,
) -> Result<FittedBinaryModel, GlmError> {
    let n = design.nrows();
    let p = design.ncols();
    if response.len() != n {
        return Err(GlmError::LengthMismatch {
            design: n,
            response: response.len(),
        });
    }
    let ones = response.iter().filter(|&&y| y).count();
    if ones == 0 || ones == n {
        return Err(GlmError::AllSameResponse);
    }
    check_full_rank(design)?;

    let mut beta = match start {
        Some(s) if s.len() == p => s.to_vec(),
        _ => {
            let mut b = vec![0.0; p];
            let ybar = ones as f64 / n as f64;
            let intercept_only = design.column(0).iter().all(|&v| v == 1.0);
            if intercept_only {
                b[0] = link.link(ybar);
            }
            b
        }
    };
    let mut eta = linear_predictor(design, &beta);
    let mut deviance = binomial_deviance(link, &eta, response);
    let mut trace = vec![deviance];
    let mut converged = false;
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    while iterations < controls.max_iterations {
        iterations += 1;
        for i in 0..n {
            let mu = link.inverse(eta[i]).clamp(1e-15, 1.0 - 1e-15);
            let dmu = link.derivative(eta[i]).max(1e-300);
            w[i] = dmu * dmu / (mu * (1.0 - mu));
            let y = if response[i] { 1.0 } else { 0.0 };
            z[i] = eta[i] + (y - mu) / dmu;
        }
        let (a, b) = weighted_normal_equations(design, &w, &z);
        let target = match solve_spd(&a, &b, p) {
            Ok(t) => t,
            Err(_) => break,
        };
        let step: Vec<f64> = target.iter().zip(&beta).map(|(t, b)| t - b).collect();

        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + factor * s).collect();
            let cand_eta = linear_predictor(design, &candidate);
            let cand_dev = deviance + deviance_change(link, &eta, &cand_eta, response);
            if cand_dev.is_finite() && cand_dev <= deviance {
                accepted = Some((candidate, cand_eta, cand_dev));
                break;
            }
            factor *= 0.5;
        }
        let Some((new_beta, new_eta, new_dev)) = accepted else {
            // No descent along the Newton direction: the current point is optimal to
            // working precision.
            converged = true;
            break;
        };
        let change = (deviance - new_dev).abs() / (new_dev.abs() + 0.1);
        let moved = new_beta.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = 1.0 + new_beta.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        beta = new_beta;
        eta = new_eta;
        deviance = new_dev;
        trace.push(deviance);
        if change < controls.tolerance && moved < controls.tolerance * scale {
            converged = true;
            break;
        }
    }

    let lo = controls.clip_floor;
    let mut clipped = 0;
    let fitted_probabilities = eta
        .iter()
        .map(|&e| {
            let mu = link.inverse(e);
            let c = mu.clamp(lo, 1.0 - lo);
            if c != mu {
                clipped += 1;
            }
            c
        })
        .collect();
    if !converged {
        log::warn!("{link} IRLS did not converge after {iterations} iterations (possible separation)");
    }
    Ok(FittedBinaryModel {
        link,
        coefficients: beta,
        fitted_probabilities,
        deviance,
        converged,
        iterations,
        deviance_trace: trace,
        clipped,
    })
}

/// Named set of design columns that are dropped together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub name: String,
    pub columns: Vec<usize>,
}

impl ColumnGroup {
    pub fn single(name: impl Into<String>, column: usize) -> Self {
        ColumnGroup {
            name: name.into(),
            columns: vec![column],
        }
    }
}

fn check_group(group: &[usize], p: usize) -> Result<(), GlmError> {
    if group.is_empty() || group.iter().any(|&j| j == 0 || j >= p) {
        return Err(GlmError::InvalidGroup);
    }
    Ok(())
}

fn reduced_fit(
    full: &FittedBinaryModel,
    design: ArrayView2<f64>,
    response: &[bool],
    group: &[usize],
    controls: &FitControls,
) -> Result<FittedBinaryModel, GlmError> {
    let keep: Vec<usize> = (0..design.ncols()).filter(|j| !group.contains(j)).collect();
    let reduced = design.select(ndarray::Axis(1), &keep);
    let start: Vec<f64> = keep.iter().map(|&j| full.coefficients[j]).collect();
    fit_from(reduced.view(), response, full.link, controls, Some(&start))
}

/// Deviance increase from dropping `group` given an existing full fit.
pub fn deviance_drop_from(
    full: &FittedBinaryModel,
    design: ArrayView2<f64>,
    response: &[bool],
    group: &[usize],
    controls: &FitControls,
) -> Result<f64, GlmError> {
    check_group(group, design.ncols())?;
    let reduced = reduced_fit(full, design, response, group, controls)?;
    let drop = reduced.deviance - full.deviance;
    if drop < -1e-8 {
        log::warn!("reduced model fits better than the full model by {:.3e}; clamping to 0", -drop);
    }
    Ok(drop.max(0.0))
}

/// Deviance of the model without `group` minus the deviance of the full model.
pub fn deviance_drop(
    design: &Array2<f64>,
    response: &[bool],
    link: LinkFunction,
    group: &[usize],
    controls: &FitControls,
) -> Result<f64, GlmError> {
    check_group(group, design.ncols())?;
    let full = fit(design, response, link, controls)?;
    deviance_drop_from(&full, design.view(), response, group, controls)
}

/// A ranked predictor group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorImportance {
    pub group: ColumnGroup,
    pub deviance_drop: f64,
}

/// Rank candidate groups by deviance drop, descending; ties keep declaration order.
pub fn rank_predictors(
    design: &Array2<f64>,
    response: &[bool],
    link: LinkFunction,
    candidates: &[ColumnGroup],
    controls: &FitControls,
    exec: Execution,
) -> Result<Vec<PredictorImportance>, GlmError> {
    let full = fit(design, response, link, controls)?;
    rank_predictors_from(&full, design.view(), response, candidates, controls, exec)
}

pub fn rank_predictors_from(
    full: &FittedBinaryModel,
    design: ArrayView2<f64>,
    response: &[bool],
    candidates: &[ColumnGroup],
    controls: &FitControls,
    exec: Execution,
) -> Result<Vec<PredictorImportance>, GlmError> {
    if candidates.is_empty() {
        return Err(GlmError::NoCandidates);
    }
    let drops = exec::map(exec, candidates, |g| deviance_drop_from(full, design, response, &g.columns, controls));
    let mut ranked = candidates
        .iter()
        .zip(drops)
        .map(|(g, d)| {
            d.map(|deviance_drop| PredictorImportance {
                group: g.clone(),
                deviance_drop,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(|a, b| b.deviance_drop.total_cmp(&a.deviance_drop));
    Ok(ranked)
}

/// Refit without `group`, returning the reduced model's clipped probabilities.
pub fn reduced_probabilities(
    full: &FittedBinaryModel,
    design: ArrayView2<f64>,
    response: &[bool],
    group: &[usize],
    controls: &FitControls,
) -> Result<Vec<f64>, GlmError> {
    check_group(group, design.ncols())?;
    Ok(reduced_fit(full, design, response, group, controls)?.fitted_probabilities)
}

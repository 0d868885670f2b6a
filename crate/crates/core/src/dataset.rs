//! Loading, validating and indexing the analysis sample.
//!
//! Only empty cells count as missing. Treatment and selection must be coded
//! exactly `0`/`1`; categorical regressors must already be dummy coded.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Arm;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited file: {0}")]
    Csv(#[from] csv::Error),
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("column {0:?} is assigned to more than one role")]
    DuplicateRole(String),
    #[error("treatment column has non-binary value {value:?} at data row {row}")]
    NonBinaryTreatment { row: usize, value: String },
    #[error("selection column has non-binary value {value:?} at data row {row}")]
    NonBinarySelection { row: usize, value: String },
    #[error("outcome missing or non-finite at data row {row} although the row is selected (S = 1)")]
    OutcomeMissingWhileSelected { row: usize },
    #[error("missing value in column {column:?} at data row {row}")]
    MissingValue { row: usize, column: String },
    #[error("cannot parse {value:?} in column {column:?} at data row {row} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("subpopulation {0} is empty")]
    EmptyArm(&'static str),
    #[error("sample has {0} rows; at least 2 are required")]
    TooFewRows(usize),
    #[error("design has {k} non-intercept columns but only {n} rows")]
    DimensionOverflow { k: usize, n: usize },
    #[error("row index {index} out of range for a sample of {n} rows")]
    IndexOutOfRange { index: usize, n: usize },
}

/// Column names for each role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableRoles {
    pub outcome: String,
    pub treatment: String,
    pub selection: String,
    #[serde(default)]
    pub mediators: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl VariableRoles {
    fn all_names(&self) -> impl Iterator<Item = &String> {
        [&self.outcome, &self.treatment, &self.selection]
            .into_iter()
            .chain(self.mediators.iter())
            .chain(self.covariates.iter())
    }

    /// Roles must be pairwise disjoint.
    pub fn check_disjoint(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for name in self.all_names() {
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateRole(name.clone()));
            }
        }
        Ok(())
    }
}

/// Ingestion options.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Drop rows with missing mediator or covariate values instead of failing.
    #[serde(default)]
    pub listwise_deletion: bool,
}

fn default_delimiter() -> char {
    ','
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: ',',
            listwise_deletion: false,
        }
    }
}

/// A validated sample of `(Y, D, M, X, S)` records.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisSample {
    roles: VariableRoles,
    outcome: Vec<Option<f64>>,
    treatment: Vec<bool>,
    selection: Vec<bool>,
    mediators: Array2<f64>,
    covariates: Array2<f64>,
    dropped_rows: usize,
}

impl AnalysisSample {
    /// Build a sample from in-memory columns, enforcing every sample invariant.
    pub fn from_parts(
        roles: VariableRoles,
        outcome: Vec<Option<f64>>,
        treatment: Vec<bool>,
        selection: Vec<bool>,
        mediators: Array2<f64>,
        covariates: Array2<f64>,
    ) -> Result<Self, DataError> {
        roles.check_disjoint()?;
        let n = outcome.len();
        assert_eq!(treatment.len(), n, "treatment length mismatch");
        assert_eq!(selection.len(), n, "selection length mismatch");
        assert_eq!(mediators.nrows(), n, "mediator rows mismatch");
        assert_eq!(covariates.nrows(), n, "covariate rows mismatch");
        assert_eq!(mediators.ncols(), roles.mediators.len(), "mediator columns mismatch");
        assert_eq!(covariates.ncols(), roles.covariates.len(), "covariate columns mismatch");
        let sample = AnalysisSample {
            roles,
            outcome,
            treatment,
            selection,
            mediators,
            covariates,
            dropped_rows: 0,
        };
        sample.validate()?;
        Ok(sample)
    }

    fn validate(&self) -> Result<(), DataError> {
        let n = self.n();
        if n < 2 {
            return Err(DataError::TooFewRows(n));
        }
        for i in 0..n {
            if self.selection[i] && !self.outcome[i].is_some_and(f64::is_finite) {
                return Err(DataError::OutcomeMissingWhileSelected { row: i + 1 });
            }
        }
        let treated = self.treatment.iter().filter(|&&d| d).count();
        if treated == 0 {
            return Err(DataError::EmptyArm("D=1"));
        }
        if treated == n {
            return Err(DataError::EmptyArm("D=0"));
        }
        if self.retained_rows(Arm::Treated).is_empty() {
            return Err(DataError::EmptyArm("D=1,S=1"));
        }
        if self.retained_rows(Arm::Control).is_empty() {
            return Err(DataError::EmptyArm("D=0,S=1"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn roles(&self) -> &VariableRoles {
        &self.roles
    }

    pub fn outcome(&self) -> &[Option<f64>] {
        &self.outcome
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn selection(&self) -> &[bool] {
        &self.selection
    }

    pub fn mediators(&self) -> &Array2<f64> {
        &self.mediators
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    /// Rows removed by listwise deletion while loading.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    /// Membership flags for `{D = arm, S = 1}`.
    pub fn subpop_mask(&self, arm: Arm) -> Vec<bool> {
        self.treatment
            .iter()
            .zip(&self.selection)
            .map(|(&d, &s)| s && d == arm.is_treated())
            .collect()
    }

    /// Row indices of `{D = arm, S = 1}` in increasing order.
    pub fn retained_rows(&self, arm: Arm) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.selection[i] && self.treatment[i] == arm.is_treated())
            .collect()
    }

    pub fn arm_size(&self, arm: Arm) -> usize {
        self.treatment.iter().filter(|&&d| d == arm.is_treated()).count()
    }

    /// Outcome of a selected row. Panics if the row is unselected.
    pub fn selected_outcome(&self, i: usize) -> f64 {
        self.outcome[i].expect("outcome requested for an unselected row")
    }

    /// Restrict to the given rows (duplicates allowed), re-validating the result.
    pub fn subset(&self, rows: &[usize]) -> Result<AnalysisSample, DataError> {
        let n = self.n();
        if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
            return Err(DataError::IndexOutOfRange { index: bad, n });
        }
        let sample = AnalysisSample {
            roles: self.roles.clone(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            selection: rows.iter().map(|&i| self.selection[i]).collect(),
            mediators: self.mediators.select(Axis(0), rows),
            covariates: self.covariates.select(Axis(0), rows),
            dropped_rows: 0,
        };
        sample.validate()?;
        Ok(sample)
    }
}

fn parse_binary(raw: &str) -> Option<bool> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v == 0.0 => Some(false),
        Ok(v) if v == 1.0 => Some(true),
        _ => None,
    }
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<Option<f64>, DataError> {
    let t = raw.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| DataError::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// Load a delimited file with a header row and resolve it against `roles`.
pub fn load_sample(
    path: impl AsRef<Path>,
    roles: &VariableRoles,
    options: &LoadOptions,
) -> Result<AnalysisSample, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_sample(file, roles, options)
}

/// Like [`load_sample`] but from any reader.
pub fn read_sample<R: std::io::Read>(
    reader: R,
    roles: &VariableRoles,
    options: &LoadOptions,
) -> Result<AnalysisSample, DataError> {
    roles.check_disjoint()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter as u8)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let y_col = find(&roles.outcome)?;
    let d_col = find(&roles.treatment)?;
    let s_col = find(&roles.selection)?;
    let m_cols = roles.mediators.iter().map(|m| find(m)).collect::<Result<Vec<_>, _>>()?;
    let x_cols = roles.covariates.iter().map(|x| find(x)).collect::<Result<Vec<_>, _>>()?;

    let mut outcome = Vec::new();
    let mut treatment = Vec::new();
    let mut selection = Vec::new();
    let mut m_vals = Vec::new();
    let mut x_vals = Vec::new();
    let mut dropped = 0;

    let mut row_m = Vec::with_capacity(m_cols.len());
    let mut row_x = Vec::with_capacity(x_cols.len());
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let field = |c: usize| record.get(c).unwrap_or("");

        let d = parse_binary(field(d_col)).ok_or_else(|| DataError::NonBinaryTreatment {
            row,
            value: field(d_col).to_string(),
        })?;
        let s = parse_binary(field(s_col)).ok_or_else(|| DataError::NonBinarySelection {
            row,
            value: field(s_col).to_string(),
        })?;
        let y = parse_number(field(y_col), row, &roles.outcome)?;

        row_m.clear();
        row_x.clear();
        let mut missing = None;
        for (k, &c) in m_cols.iter().enumerate() {
            match parse_number(field(c), row, &roles.mediators[k])? {
                Some(v) => row_m.push(v),
                None => {
                    missing.get_or_insert_with(|| roles.mediators[k].clone());
                }
            }
        }
        for (k, &c) in x_cols.iter().enumerate() {
            match parse_number(field(c), row, &roles.covariates[k])? {
                Some(v) => row_x.push(v),
                None => {
                    missing.get_or_insert_with(|| roles.covariates[k].clone());
                }
            }
        }
        if let Some(column) = missing {
            if options.listwise_deletion {
                dropped += 1;
                continue;
            }
            return Err(DataError::MissingValue { row, column });
        }
        if s && !y.is_some_and(f64::is_finite) {
            return Err(DataError::OutcomeMissingWhileSelected { row });
        }
        outcome.push(y);
        treatment.push(d);
        selection.push(s);
        m_vals.extend_from_slice(&row_m);
        x_vals.extend_from_slice(&row_x);
    }

    let n = outcome.len();
    let mediators = Array2::from_shape_vec((n, m_cols.len()), m_vals).expect("rectangular mediators");
    let covariates = Array2::from_shape_vec((n, x_cols.len()), x_vals).expect("rectangular covariates");
    let mut sample = AnalysisSample {
        roles: roles.clone(),
        outcome,
        treatment,
        selection,
        mediators,
        covariates,
        dropped_rows: dropped,
    };
    sample.validate()?;
    if dropped > 0 {
        log::warn!("listwise deletion removed {dropped} rows with missing mediators or covariates");
    }
    sample.dropped_rows = dropped;
    Ok(sample)
}

/// Write the sample in role order (outcome, treatment, selection, mediators, covariates).
pub fn write_sample(sample: &AnalysisSample, path: impl AsRef<Path>, delimiter: char) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_sample_to(sample, file, delimiter)
}

pub fn write_sample_to<W: std::io::Write>(sample: &AnalysisSample, writer: W, delimiter: char) -> Result<(), DataError> {
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter as u8).from_writer(writer);
    let roles = &sample.roles;
    let header: Vec<&str> = roles.all_names().map(String::as_str).collect();
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..sample.n() {
        record.clear();
        record.push(sample.outcome[i].map(|v| v.to_string()).unwrap_or_default());
        record.push(if sample.treatment[i] { "1" } else { "0" }.to_string());
        record.push(if sample.selection[i] { "1" } else { "0" }.to_string());
        record.extend(sample.mediators.row(i).iter().map(|v| v.to_string()));
        record.extend(sample.covariates.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|source| DataError::Io {
        path: "<writer>".to_string(),
        source,
    })?;
    Ok(())
}

/// Conditioning sets of the three propensity models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Conditioning {
    /// `{X}`, used by `P(D=1|X)`.
    Covariates,
    /// `{M, X}`, used by `P(D=1|M,X)`.
    MediatorsCovariates,
    /// `{D, M, X}`, used by `P(S=1|D,M,X)`.
    TreatmentMediatorsCovariates,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Intercept,
    Treatment,
    Mediator,
    Covariate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub role: ColumnRole,
}

/// Regressor matrix with an intercept in column 0.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    pub matrix: Array2<f64>,
    pub columns: Vec<DesignColumn>,
    /// Constant non-intercept columns removed during construction.
    pub dropped: Vec<String>,
}

impl DesignMatrix {
    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Design with the given column indices removed.
    pub fn without_columns(&self, remove: &[usize]) -> DesignMatrix {
        let keep: Vec<usize> = (0..self.ncols()).filter(|j| !remove.contains(j)).collect();
        DesignMatrix {
            matrix: self.matrix.select(Axis(1), &keep),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            dropped: self.dropped.clone(),
        }
    }
}

/// Build the design for one conditioning set: intercept, then `D`, then
/// mediators, then covariates, each in role order. Constant columns are dropped.
pub fn design_matrix(sample: &AnalysisSample, spec: Conditioning) -> Result<DesignMatrix, DataError> {
    let n = sample.n();
    let mut candidates: Vec<(DesignColumn, Vec<f64>)> = Vec::new();
    if spec == Conditioning::TreatmentMediatorsCovariates {
        candidates.push((
            DesignColumn {
                name: sample.roles.treatment.clone(),
                role: ColumnRole::Treatment,
            },
            sample.treatment.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect(),
        ));
    }
    if spec != Conditioning::Covariates {
        for (k, name) in sample.roles.mediators.iter().enumerate() {
            candidates.push((
                DesignColumn {
                    name: name.clone(),
                    role: ColumnRole::Mediator,
                },
                sample.mediators.column(k).to_vec(),
            ));
        }
    }
    for (k, name) in sample.roles.covariates.iter().enumerate() {
        candidates.push((
            DesignColumn {
                name: name.clone(),
                role: ColumnRole::Covariate,
            },
            sample.covariates.column(k).to_vec(),
        ));
    }

    let mut columns = vec![DesignColumn {
        name: "(intercept)".to_string(),
        role: ColumnRole::Intercept,
    }];
    let mut data: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut dropped = Vec::new();
    for (col, values) in candidates {
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            log::warn!("dropping constant column {:?} from the {:?} design", col.name, spec);
            dropped.push(col.name);
        } else {
            columns.push(col);
            data.push(values);
        }
    }
    let k = columns.len() - 1;
    if k >= n {
        return Err(DataError::DimensionOverflow { k, n });
    }
    let p = columns.len();
    let matrix = Array2::from_shape_fn((n, p), |(i, j)| data[j][i]);
    Ok(DesignMatrix {
        matrix,
        columns,
        dropped,
    })
}

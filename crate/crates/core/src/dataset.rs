//! Two-arm trial data: CSV ingestion, invariants and validation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary outcomes with an event rate below this are flagged as rare.
pub const RARE_OUTCOME_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutcomeKind::Continuous => f.write_str("continuous"),
            OutcomeKind::Binary => f.write_str("binary"),
        }
    }
}

/// Which CSV columns hold the outcome, the treatment and the covariates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
    /// `None` infers binary when every outcome is 0 or 1.
    pub outcome_kind: Option<OutcomeKind>,
}

impl ColumnSchema {
    pub fn new(outcome: &str, treatment: &str, covariates: &[&str]) -> Self {
        ColumnSchema {
            outcome: outcome.to_string(),
            treatment: treatment.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            outcome_kind: None,
        }
    }

    pub fn with_kind(mut self, kind: OutcomeKind) -> Self {
        self.outcome_kind = Some(kind);
        self
    }
}

/// Outcomes, treatment indicators and baseline covariates of a two-arm trial.
///
/// Immutable once built; `x` is `N × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    y: Vec<f64>,
    z: Vec<u8>,
    x: DMatrix<f64>,
    covariate_names: Vec<String>,
    outcome_kind: OutcomeKind,
    outcome_name: String,
    treatment_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl TrialDataset {
    /// Builds and validates a dataset. Covariate names default to `x1..xp`.
    pub fn new(
        y: Vec<f64>,
        z: Vec<u8>,
        x: DMatrix<f64>,
        covariate_names: Option<Vec<String>>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let p = x.ncols();
        let names = covariate_names.unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect());
        let ds = Self::from_parts_unchecked(y, z, x, names, outcome_kind);
        ds.ensure_valid()?;
        Ok(ds)
    }

    /// Assembles a dataset without checking invariants. Use [`validate`] to
    /// inspect such a dataset; estimators assume a valid one.
    pub fn from_parts_unchecked(
        y: Vec<f64>,
        z: Vec<u8>,
        x: DMatrix<f64>,
        covariate_names: Vec<String>,
        outcome_kind: OutcomeKind,
    ) -> Self {
        TrialDataset {
            y,
            z,
            x,
            covariate_names,
            outcome_kind,
            outcome_name: "y".to_string(),
            treatment_name: "z".to_string(),
        }
    }

    pub fn with_column_names(mut self, outcome: &str, treatment: &str) -> Self {
        self.outcome_name = outcome.to_string();
        self.treatment_name = treatment.to_string();
        self
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = validate(self);
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidDataset(v.clone())),
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_treated(&self) -> usize {
        self.z.iter().filter(|&&z| z == 1).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    /// Treatment indicators as `f64` (0.0 / 1.0).
    pub fn z_f64(&self) -> Vec<f64> {
        self.z.iter().map(|&z| f64::from(z)).collect()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    /// Copy restricted to the named covariates, in the given order.
    pub fn select_covariates(&self, names: &[String]) -> Result<TrialDataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.covariate_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::MissingColumn(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let x = self.x.select_columns(idx.iter());
        let mut out = self.clone();
        out.x = x;
        out.covariate_names = names.to_vec();
        Ok(out)
    }

    /// Copy with outcome values replaced (same length), keeping everything else.
    pub fn with_outcome(&self, y: Vec<f64>, kind: OutcomeKind) -> Result<TrialDataset> {
        let mut out = self.clone();
        out.y = y;
        out.outcome_kind = kind;
        out.ensure_valid()?;
        Ok(out)
    }

    /// Copy with treatment labels swapped (`z → 1 − z`).
    pub fn swap_arms(&self) -> TrialDataset {
        let mut out = self.clone();
        out.z = self.z.iter().map(|&z| 1 - z).collect();
        out
    }

    /// Resample rows by index (bootstrap). Indices may repeat.
    pub fn resample(&self, rows: &[usize]) -> TrialDataset {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let z = rows.iter().map(|&i| self.z[i]).collect();
        let x = self.x.select_rows(rows.iter());
        let mut out = self.clone();
        out.y = y;
        out.z = z;
        out.x = x;
        out
    }
}

/// Checks the dataset invariants; never mutates.
pub fn validate(ds: &TrialDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = ds.y.len();
    if ds.z.len() != n || ds.x.nrows() != n {
        report.violations.push(format!(
            "length mismatch: y has {}, z has {}, x has {} rows",
            n,
            ds.z.len(),
            ds.x.nrows()
        ));
        return report;
    }
    if n < 2 {
        report.violations.push(format!("at least 2 units required, got {n}"));
    }
    if ds.covariate_names.len() != ds.x.ncols() {
        report.violations.push(format!(
            "{} covariate names for {} columns",
            ds.covariate_names.len(),
            ds.x.ncols()
        ));
    }
    if let Some(i) = ds.z.iter().position(|&z| z > 1) {
        report.violations.push(format!("treatment not binary at row {}", i + 1));
    }
    let n1 = ds.z.iter().filter(|&&z| z == 1).count();
    if n1 == 0 || n1 == n {
        report.violations.push("both arms required".to_string());
    }
    if let Some(i) = ds.y.iter().position(|v| !v.is_finite()) {
        report.violations.push(format!("non-finite outcome at row {}", i + 1));
    }
    if ds.x.iter().any(|v| !v.is_finite()) {
        report.violations.push("non-finite covariate value".to_string());
    }
    if ds.outcome_kind == OutcomeKind::Binary {
        if let Some(i) = ds.y.iter().position(|&v| v != 0.0 && v != 1.0) {
            report
                .violations
                .push(format!("binary outcome not in {{0,1}} at row {}", i + 1));
        } else if n > 0 {
            let prev = ds.y.iter().sum::<f64>() / n as f64;
            if prev.min(1.0 - prev) < RARE_OUTCOME_THRESHOLD {
                report.warnings.push(format!(
                    "rare outcome: prevalence {prev:.4} outside [{RARE_OUTCOME_THRESHOLD}, {}]",
                    1.0 - RARE_OUTCOME_THRESHOLD
                ));
            }
        }
    }
    for (j, name) in ds.covariate_names.iter().enumerate().take(ds.x.ncols()) {
        let col = ds.x.column(j);
        if n > 0 && col.iter().all(|&v| v == col[0]) {
            report.warnings.push(format!("constant covariate {name}"));
        }
    }
    report
}

/// Reads a header-bearing UTF-8 CSV into a validated dataset.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<TrialDataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

/// Parses CSV text; see [`load_csv`].
pub fn parse_csv(text: &str, schema: &ColumnSchema) -> Result<TrialDataset> {
    if text.trim().is_empty() {
        return Err(Error::EmptyFile);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let yi = find(&schema.outcome)?;
    let zi = find(&schema.treatment)?;
    let xi = schema.covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let cell = |i: usize, what: &str, column: &str| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            if raw.is_empty() {
                return Err(Error::MissingValue {
                    what: what.to_string(),
                    row,
                });
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumeric {
                    column: column.to_string(),
                    row,
                    value: raw.to_string(),
                }),
            }
        };
        y.push(cell(yi, "outcome", &schema.outcome)?);
        let zraw = rec.get(zi).unwrap_or("");
        let zv = cell(zi, "treatment", &schema.treatment)?;
        z.push(match zv {
            0.0 => 0u8,
            1.0 => 1u8,
            _ => {
                return Err(Error::TreatmentNotBinary {
                    row,
                    value: zraw.to_string(),
                })
            }
        });
        for (&ci, name) in xi.iter().zip(&schema.covariates) {
            xs.push(cell(ci, &format!("covariate '{name}'"), name)?);
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyFile);
    }
    let n = y.len();
    let p = schema.covariates.len();
    let x = DMatrix::from_row_slice(n, p, &xs);
    let kind = schema.outcome_kind.unwrap_or_else(|| {
        if y.iter().all(|&v| v == 0.0 || v == 1.0) {
            OutcomeKind::Binary
        } else {
            OutcomeKind::Continuous
        }
    });
    TrialDataset::new(y, z, x, Some(schema.covariates.clone()), kind)
        .map(|ds| ds.with_column_names(&schema.outcome, &schema.treatment))
}

/// Writes the dataset as CSV (outcome, treatment, covariates) using the
/// shortest decimal representation that round-trips each `f64` exactly.
pub fn write_csv(ds: &TrialDataset, mut out: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(&mut out);
    let mut header = vec![ds.outcome_name.clone(), ds.treatment_name.clone()];
    header.extend(ds.covariate_names.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = Vec::with_capacity(ds.p() + 2);
        rec.push(format!("{}", ds.y[i]));
        rec.push(format!("{}", ds.z[i]));
        for j in 0..ds.p() {
            rec.push(format!("{}", ds.x[(i, j)]));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Convenience: write to a file path.
pub fn write_csv_file(ds: &TrialDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, std::io::BufWriter::new(f))
}

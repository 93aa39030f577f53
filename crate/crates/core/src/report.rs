//! Human-readable TSV tables and machine-readable JSON for estimates and
//! covariate balance.

use serde::Serialize;

use crate::dataset::TrialDataset;
use crate::error::{Error, Result};
use crate::estimators::{EffectEstimate, EstimandKind};
use crate::propensity::{fit_propensity, LogisticOptions};
use crate::weighting::{asd, unit_weights, WeightingScheme};

/// `%g`-style formatting with six significant digits.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{x:.5e}");
        let (mant, e) = s.split_once('e').unwrap();
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

/// Balance columns use three decimals.
pub fn format_asd(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        let s = format!("{x:.3}");
        if s == "-0.000" {
            "0.000".into()
        } else {
            s
        }
    }
}

fn clean_cell(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// One method × estimand outcome, successful or not.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub method: String,
    pub estimand: EstimandKind,
    pub estimate: Option<EffectEstimate>,
    pub error: Option<String>,
}

impl EstimateRow {
    pub fn from_result(method: &str, estimand: EstimandKind, res: Result<EffectEstimate>) -> Self {
        match res {
            Ok(est) => EstimateRow {
                method: method.to_string(),
                estimand,
                estimate: Some(est),
                error: None,
            },
            Err(e) => EstimateRow {
                method: method.to_string(),
                estimand,
                estimate: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Columns: method, estimand, estimate, SE, CI, p-value, status.
pub fn estimate_table_tsv(rows: &[EstimateRow], level: f64) -> String {
    let mut out = format!(
        "method\testimand\testimate\tse\t{}% CI\tp-value\tstatus\n",
        format_sig(level * 100.0)
    );
    for r in rows {
        let cells = match &r.estimate {
            Some(e) => [
                format_sig(e.point),
                format_sig(e.se),
                format!("({}, {})", format_sig(e.ci.0), format_sig(e.ci.1)),
                format_sig(e.p_value),
                "ok".to_string(),
            ],
            None => [
                "NA".into(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                format!("failed: {}", clean_cell(r.error.as_deref().unwrap_or("unknown"))),
            ],
        };
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            clean_cell(&r.method),
            r.estimand,
            cells.join("\t")
        ));
    }
    out
}

pub fn estimate_table_json(rows: &[EstimateRow]) -> String {
    serde_json::to_string_pretty(rows).expect("estimate rows serialize")
}

/// Mean and SD (denominator `n − 1`) of the selected values.
fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateBalance {
    pub name: String,
    /// `(mean, sd)` over all units, treated and controls.
    pub all: (f64, f64),
    pub treated: (f64, f64),
    pub control: (f64, f64),
    /// ASD per weighting column, aligned with `BalanceReport::columns`.
    pub asd: Vec<f64>,
    pub in_propensity_model: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub outcome: String,
    pub n_treated: usize,
    pub n_control: usize,
    pub columns: Vec<String>,
    pub propensity_covariates: Vec<String>,
    pub rows: Vec<CovariateBalance>,
}

/// Descriptive statistics and ASD under unit weights and each scheme, with
/// the propensity model fit on `ps_covariates` (all covariates when `None`).
pub fn balance_report(
    ds: &TrialDataset,
    ps_covariates: Option<&[String]>,
    schemes: &[WeightingScheme],
    opts: &LogisticOptions,
) -> Result<BalanceReport> {
    let ps_names: Vec<String> = match ps_covariates {
        Some(names) => names.to_vec(),
        None => ds.covariate_names().to_vec(),
    };
    for n in &ps_names {
        if !ds.covariate_names().contains(n) {
            return Err(Error::MissingColumn(n.clone()));
        }
    }
    let ps_ds = ds.select_covariates(&ps_names)?;
    let mut columns = vec!["UNADJ".to_string()];
    let mut tables = vec![asd(ds, &vec![1.0; ds.n()], "UNADJ")?];
    if !schemes.is_empty() {
        let fit = fit_propensity(&ps_ds, opts)?;
        for s in schemes {
            let w = unit_weights(s, &fit.e_hat, ds.z())?;
            tables.push(asd(ds, &w, s.label())?);
            columns.push(s.label().to_string());
        }
    }
    let x = ds.x();
    let z = ds.z();
    let rows = ds
        .covariate_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = x.column(j);
            CovariateBalance {
                name: name.clone(),
                all: mean_sd(col.iter().copied()),
                treated: mean_sd(col.iter().zip(z).filter(|(_, &zi)| zi == 1).map(|(v, _)| *v)),
                control: mean_sd(col.iter().zip(z).filter(|(_, &zi)| zi == 0).map(|(v, _)| *v)),
                asd: tables.iter().map(|t| t.rows[j].asd).collect(),
                in_propensity_model: ps_names.contains(name),
            }
        })
        .collect();
    Ok(BalanceReport {
        outcome: ds.outcome_name().to_string(),
        n_treated: ds.n_treated(),
        n_control: ds.n_control(),
        columns,
        propensity_covariates: ps_names,
        rows,
    })
}

fn mean_sd_cell((m, s): (f64, f64)) -> String {
    format!("{} ({})", format_sig(m), format_sig(s))
}

/// Columns: covariate, All, Treated, Control (mean (sd)), one ASD column per
/// weighting, note.
pub fn balance_table_tsv(report: &BalanceReport) -> String {
    let mut out = format!(
        "covariate\tAll (N={})\tTreated (N={})\tControl (N={})",
        report.n_treated + report.n_control,
        report.n_treated,
        report.n_control
    );
    for c in &report.columns {
        out.push_str(&format!("\tASD_{c}"));
    }
    out.push_str("\tnote\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}",
            clean_cell(&r.name),
            mean_sd_cell(r.all),
            mean_sd_cell(r.treated),
            mean_sd_cell(r.control)
        ));
        for a in &r.asd {
            out.push_str(&format!("\t{}", format_asd(*a)));
        }
        let note = if r.in_propensity_model {
            ""
        } else {
            "not in propensity model"
        };
        out.push_str(&format!("\t{note}\n"));
    }
    out
}

pub fn balance_table_json(report: &BalanceReport) -> String {
    serde_json::to_string_pretty(report).expect("balance report serializes")
}

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{Analysis, EstimandKind, Method, DEFAULT_LEVEL};
use crate::variance::OwVarianceForm;

use super::{generate_replicate, Scenario};

#[derive(Debug, Clone)]
pub struct MonteCarloOptions {
    pub methods: Vec<Method>,
    /// Empty means the scenario's default estimands.
    pub estimands: Vec<EstimandKind>,
    pub level: f64,
    pub ow_form: OwVarianceForm,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            methods: Method::standard_set(),
            estimands: Vec::new(),
            level: DEFAULT_LEVEL,
            ow_form: OwVarianceForm::default(),
            threads: None,
        }
    }
}

/// One method × estimand result on one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: String,
    pub estimand: EstimandKind,
    pub point: Option<f64>,
    pub variance: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub covered: Option<bool>,
    pub failure: Option<String>,
}

/// Runs every method × estimand on replicate `index`; also returns the
/// number of treatment redraws.
pub fn run_replicate(
    sc: &Scenario,
    index: usize,
    opts: &MonteCarloOptions,
    estimands: &[EstimandKind],
    truths: &[f64],
) -> (Vec<ReplicateRecord>, usize) {
    let rep = generate_replicate(sc, sc.seed, index as u64);
    let mut analysis = Analysis::new(&rep.dataset);
    analysis.ow_form = opts.ow_form;
    let mut out = Vec::with_capacity(opts.methods.len() * estimands.len());
    for method in &opts.methods {
        for (k, &estimand) in estimands.iter().enumerate() {
            let res = analysis.estimate(method, estimand).and_then(|est| {
                if est.point.is_finite() && est.variance.is_finite() {
                    Ok(est.with_level(opts.level))
                } else {
                    Err(Error::SingularMatrix("non-finite estimate".into()))
                }
            });
            out.push(match res {
                Ok(est) => ReplicateRecord {
                    replicate: index,
                    method: method.label(),
                    estimand,
                    point: Some(est.point),
                    variance: Some(est.variance),
                    ci_lo: Some(est.ci.0),
                    ci_hi: Some(est.ci.1),
                    covered: Some(est.covers(truths[k])),
                    failure: None,
                },
                Err(e) => ReplicateRecord {
                    replicate: index,
                    method: method.label(),
                    estimand,
                    point: None,
                    variance: None,
                    ci_lo: None,
                    ci_hi: None,
                    covered: None,
                    failure: Some(e.kind().to_string()),
                },
            });
        }
    }
    (out, rep.arm_redraws)
}

/// Monte Carlo metrics for one method × estimand.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub estimand: EstimandKind,
    pub truth: f64,
    pub estimable: usize,
    pub non_estimable: usize,
    pub failures: BTreeMap<String, usize>,
    pub mean_estimate: Option<f64>,
    pub bias: Option<f64>,
    /// Sample variance of the estimates (denominator `R − 1`).
    pub mc_variance: Option<f64>,
    pub mse: Option<f64>,
    /// `MCVar(UNADJ) / MCVar(method)`.
    pub relative_efficiency: Option<f64>,
    pub mean_est_variance: Option<f64>,
    /// `mean estimated variance / MCVar`.
    pub variance_ratio: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub scenario: Scenario,
    pub replicates: usize,
    pub level: f64,
    pub arm_redraws: usize,
    pub rows: Vec<MethodSummary>,
    #[serde(skip)]
    pub records: Vec<ReplicateRecord>,
}

impl SimulationSummary {
    pub fn get(&self, method: &str, estimand: EstimandKind) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method && r.estimand == estimand)
    }

    /// Estimates of one method × estimand in replicate order (`None` when failed).
    pub fn estimates(&self, method: &str, estimand: EstimandKind) -> Vec<Option<f64>> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.estimand == estimand)
            .map(|r| r.point)
            .collect()
    }
}

fn positive_ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(a), Some(b)) if b > 0.0 && a.is_finite() => Some(a / b),
        _ => None,
    }
}

fn summarize(method: &str, estimand: EstimandKind, truth: f64, recs: &[&ReplicateRecord]) -> MethodSummary {
    let mut failures = BTreeMap::new();
    let mut points = Vec::new();
    let mut vars = Vec::new();
    let mut covered = 0usize;
    for r in recs {
        match (r.point, r.variance) {
            (Some(p), Some(v)) => {
                points.push(p);
                vars.push(v);
                covered += usize::from(r.covered == Some(true));
            }
            _ => {
                *failures
                    .entry(r.failure.clone().unwrap_or_else(|| "unknown".into()))
                    .or_insert(0) += 1;
            }
        }
    }
    let m = points.len();
    let mf = m as f64;
    let mean = (m > 0).then(|| points.iter().sum::<f64>() / mf);
    let mc_variance = mean
        .filter(|_| m > 1)
        .map(|mu| points.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / (mf - 1.0));
    let mse = (m > 0).then(|| points.iter().map(|p| (p - truth).powi(2)).sum::<f64>() / mf);
    let mean_est_variance = (m > 0).then(|| vars.iter().sum::<f64>() / mf);
    MethodSummary {
        method: method.to_string(),
        estimand,
        truth,
        estimable: m,
        non_estimable: recs.len() - m,
        failures,
        mean_estimate: mean,
        bias: mean.map(|mu| mu - truth),
        mc_variance,
        mse,
        relative_efficiency: None,
        mean_est_variance,
        variance_ratio: positive_ratio(mean_est_variance, mc_variance),
        coverage: (m > 0).then(|| covered as f64 / mf),
    }
}

/// Runs `sc.replicates` replicates in parallel and aggregates them in
/// replicate order, so results do not depend on the thread count.
pub fn run_monte_carlo(sc: &Scenario, opts: &MonteCarloOptions) -> Result<SimulationSummary> {
    sc.validate()?;
    if opts.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let estimands = if opts.estimands.is_empty() {
        sc.default_estimands()
    } else {
        opts.estimands.clone()
    };
    let truths = estimands
        .iter()
        .map(|&e| sc.true_effect(e))
        .collect::<Result<Vec<_>>>()?;

    let work = || {
        (0..sc.replicates)
            .into_par_iter()
            .map(|i| run_replicate(sc, i, opts, &estimands, &truths))
            .collect::<Vec<_>>()
    };
    let per_rep = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let arm_redraws = per_rep.iter().map(|(_, r)| r).sum();
    let records: Vec<ReplicateRecord> = per_rep.into_iter().flat_map(|(recs, _)| recs).collect();

    let mut rows = Vec::new();
    for method in &opts.methods {
        let label = method.label();
        for (k, &estimand) in estimands.iter().enumerate() {
            let recs: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| r.method == label && r.estimand == estimand)
                .collect();
            rows.push(summarize(&label, estimand, truths[k], &recs));
        }
    }
    for k in 0..rows.len() {
        let reference = rows
            .iter()
            .find(|r| r.method == "UNADJ" && r.estimand == rows[k].estimand)
            .and_then(|r| r.mc_variance);
        rows[k].relative_efficiency = positive_ratio(reference, rows[k].mc_variance);
    }

    Ok(SimulationSummary {
        scenario: sc.clone(),
        replicates: sc.replicates,
        level: opts.level,
        arm_redraws,
        rows,
        records,
    })
}

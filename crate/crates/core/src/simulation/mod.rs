//! Monte Carlo engine: data-generating processes, replicate execution and
//! summary metrics.

mod engine;
mod report;

use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{OutcomeKind, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::EstimandKind;
use crate::propensity::expit;

pub use engine::{
    run_monte_carlo, run_replicate, MethodSummary, MonteCarloOptions, ReplicateRecord, SimulationSummary,
};
pub use report::{write_replicates_csv, write_summary_json, write_summary_tsv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    /// Linear potential-outcome model with optional treatment-by-covariate interactions.
    Model1,
    /// Model 1 plus products of consecutive covariate pairs.
    Model2,
    /// Logistic potential-outcome model for binary outcomes.
    #[serde(alias = "binary")]
    BinaryLogistic,
}

impl FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "model1" | "1" => Ok(Dgp::Model1),
            "model2" | "2" => Ok(Dgp::Model2),
            "binary_logistic" | "binary" => Ok(Dgp::BinaryLogistic),
            other => Err(Error::Scenario(format!("unknown dgp '{other}'"))),
        }
    }
}

fn default_p() -> usize {
    10
}
fn default_sigma_y2() -> f64 {
    2.0
}
fn default_prevalence() -> f64 {
    0.5
}
fn default_replicates() -> usize {
    2000
}
fn default_dgp() -> Dgp {
    Dgp::Model1
}

/// One simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    /// Randomization probability.
    pub r: f64,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Main-effect multiplier; defaults to the value giving `Σβ₀ⱼ² = σ²`.
    #[serde(default)]
    pub b0: Option<f64>,
    #[serde(default)]
    pub b1: f64,
    #[serde(default = "default_sigma_y2")]
    pub sigma_y2: f64,
    /// Residual variance of the potential outcomes; `sigma_y2` when unset.
    #[serde(default)]
    pub noise_var: Option<f64>,
    #[serde(default = "default_dgp")]
    pub dgp: Dgp,
    /// Target control-arm event probability for the binary DGP.
    #[serde(default = "default_prevalence")]
    pub prevalence: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn new(n: usize, r: f64, dgp: Dgp, b1: f64) -> Self {
        Scenario {
            n,
            r,
            p: default_p(),
            b0: None,
            b1,
            sigma_y2: default_sigma_y2(),
            noise_var: None,
            dgp,
            prevalence: default_prevalence(),
            replicates: default_replicates(),
            seed: 0,
        }
    }

    pub fn binary(n: usize, r: f64, prevalence: f64, b1: f64) -> Self {
        Scenario {
            prevalence,
            ..Scenario::new(n, r, Dgp::BinaryLogistic, b1)
        }
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = Some(noise_var);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        match self.dgp {
            Dgp::BinaryLogistic => OutcomeKind::Binary,
            _ => OutcomeKind::Continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Scenario(m.to_string()));
        if self.n < 2 {
            return fail("n must be at least 2");
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return fail("r must lie in (0, 1)");
        }
        if self.p == 0 {
            return fail("p must be positive");
        }
        if !(self.sigma_y2 >= 0.0)
            || self.noise_var.is_some_and(|v| !(v >= 0.0))
            || !self.b1.is_finite()
            || self.b0.is_some_and(|b| !b.is_finite())
        {
            return fail("sigma_y2 must be non-negative and coefficients finite");
        }
        if self.dgp == Dgp::BinaryLogistic && !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return fail("prevalence must lie in (0, 1)");
        }
        if self.replicates == 0 {
            return fail("replicates must be positive");
        }
        Ok(())
    }

    /// Parses `key = value` lines (`#` comments allowed) or a JSON object.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let sc: Scenario = if trimmed.starts_with('{') {
            serde_json::from_str(trimmed).map_err(|e| Error::Scenario(e.to_string()))?
        } else {
            let mut map = serde_json::Map::new();
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Scenario(format!("line {}: expected key = value", lineno + 1)))?;
                let (k, v) = (k.trim(), v.trim());
                let value = if let Ok(i) = v.parse::<u64>() {
                    serde_json::Value::from(i)
                } else if let Ok(f) = v.parse::<f64>() {
                    serde_json::Value::from(f)
                } else {
                    serde_json::Value::from(v.to_ascii_lowercase())
                };
                if map.insert(k.to_string(), value).is_some() {
                    return Err(Error::Scenario(format!("duplicate key '{k}'")));
                }
            }
            // integer-valued floats such as `b1 = 0` are fine, but `dgp = 1` must be a name
            if let Some(v) = map.get_mut("dgp") {
                if let Some(n) = v.as_u64() {
                    *v = serde_json::Value::from(format!("model{n}"));
                }
            }
            serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| Error::Scenario(e.to_string()))?
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn pattern(&self) -> Vec<f64> {
        (0..self.p).map(|j| f64::from(1u32 << (j / 2).min(30))).collect()
    }

    /// `β₀ = b₀ (1, 1, 2, 2, 4, 4, …)`.
    pub fn beta0(&self) -> Vec<f64> {
        let pat = self.pattern();
        let b0 = self.b0.unwrap_or_else(|| {
            let ss: f64 = pat.iter().map(|v| v * v).sum();
            (self.sigma_y2 / ss).sqrt()
        });
        pat.iter().map(|v| b0 * v).collect()
    }

    /// `β₁ = b₁ · 1`.
    pub fn beta1(&self) -> Vec<f64> {
        vec![self.b1; self.p]
    }

    /// Coefficient on each consecutive-pair product in model 2.
    pub fn gamma(&self) -> f64 {
        (self.sigma_y2 / self.p as f64).sqrt()
    }

    /// Binary-DGP main effects: `b0` times the pattern when set, otherwise
    /// scaled so the linear predictor has unit SD.
    pub fn beta0_binary(&self) -> Vec<f64> {
        let pat = self.pattern();
        let scale = self
            .b0
            .unwrap_or_else(|| 1.0 / pat.iter().map(|v| v * v).sum::<f64>().sqrt());
        pat.iter().map(|v| v * scale).collect()
    }

    /// Intercept of the binary DGP hitting the target control-arm prevalence.
    pub fn binary_intercept(&self) -> f64 {
        let s = self.beta0_binary().iter().map(|b| b * b).sum::<f64>().sqrt();
        solve_intercept(self.prevalence, s)
    }

    /// True arm means `(μ₁, μ₀)` of the scenario.
    pub fn true_means(&self) -> (f64, f64) {
        match self.dgp {
            Dgp::Model1 | Dgp::Model2 => (0.0, 0.0),
            Dgp::BinaryLogistic => {
                let eta0 = self.binary_intercept();
                let b0 = self.beta0_binary();
                let s1 = b0.iter().map(|b| (b + self.b1).powi(2)).sum::<f64>().sqrt();
                (logistic_normal_mean(eta0, s1), self.prevalence)
            }
        }
    }

    /// True value of the estimand under the scenario.
    pub fn true_effect(&self, estimand: EstimandKind) -> Result<f64> {
        let (mu1, mu0) = self.true_means();
        estimand.transform(mu1, mu0)
    }

    pub fn default_estimands(&self) -> Vec<EstimandKind> {
        match self.outcome_kind() {
            OutcomeKind::Continuous => vec![EstimandKind::Rd],
            OutcomeKind::Binary => EstimandKind::ALL.to_vec(),
        }
    }
}

/// `E[expit(η + sU)]`, `U ~ N(0, 1)`, by trapezoidal quadrature on ±10 SD.
pub fn logistic_normal_mean(eta: f64, s: f64) -> f64 {
    if s == 0.0 {
        return expit(eta);
    }
    const K: usize = 4000;
    let h = 20.0 / K as f64;
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    (0..=K)
        .map(|k| {
            let u = -10.0 + h * k as f64;
            let wt = if k == 0 || k == K { 0.5 } else { 1.0 };
            wt * expit(eta + s * u) * (-0.5 * u * u).exp() / norm
        })
        .sum::<f64>()
        * h
}

/// Intercept `η` with `E[expit(η + sU)] = target`, by bisection.
pub fn solve_intercept(target: f64, s: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if logistic_normal_mean(mid, s) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Per-replicate random stream: ChaCha8 keyed by the base seed, stream = replicate index.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// A generated replicate with both potential outcomes retained.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub dataset: TrialDataset,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    /// Number of treatment vectors redrawn because an arm was empty.
    pub arm_redraws: usize,
}

fn draw_treatment(rng: &mut ChaCha8Rng, n: usize, r: f64) -> (Vec<u8>, usize) {
    let mut redraws = 0;
    loop {
        let z: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(r))).collect();
        let n1 = z.iter().filter(|&&v| v == 1).count();
        if n1 > 0 && n1 < n {
            return (z, redraws);
        }
        redraws += 1;
    }
}

/// Draws one replicate from the scenario's DGP using `replicate_rng(seed, index)`.
pub fn generate_replicate(sc: &Scenario, seed: u64, index: u64) -> Replicate {
    let mut rng = replicate_rng(seed, index);
    let (n, p) = (sc.n, sc.p);
    let mut x = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let (z, arm_redraws) = draw_treatment(&mut rng, n, sc.r);
    let (mut y1, mut y0) = (vec![0.0; n], vec![0.0; n]);
    let sd = sc.noise_var.unwrap_or(sc.sigma_y2).sqrt();
    match sc.dgp {
        Dgp::Model1 | Dgp::Model2 => {
            let (b0, b1, gamma) = (sc.beta0(), sc.beta1(), sc.gamma());
            for i in 0..n {
                let xi = x.row(i);
                let mut m0: f64 = (0..p).map(|j| xi[j] * b0[j]).sum();
                if sc.dgp == Dgp::Model2 {
                    m0 += gamma * (1..p).map(|j| xi[j - 1] * xi[j]).sum::<f64>();
                }
                let m1 = m0 + (0..p).map(|j| xi[j] * b1[j]).sum::<f64>();
                let e1: f64 = rng.sample(StandardNormal);
                let e0: f64 = rng.sample(StandardNormal);
                y1[i] = m1 + sd * e1;
                y0[i] = m0 + sd * e0;
            }
        }
        Dgp::BinaryLogistic => {
            let (b0, eta0) = (sc.beta0_binary(), sc.binary_intercept());
            for i in 0..n {
                let xi = x.row(i);
                let l0 = eta0 + (0..p).map(|j| xi[j] * b0[j]).sum::<f64>();
                let l1 = l0 + sc.b1 * (0..p).map(|j| xi[j]).sum::<f64>();
                y1[i] = f64::from(u8::from(rng.random::<f64>() < expit(l1)));
                y0[i] = f64::from(u8::from(rng.random::<f64>() < expit(l0)));
            }
        }
    }
    let y: Vec<f64> = (0..n).map(|i| if z[i] == 1 { y1[i] } else { y0[i] }).collect();
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let dataset = TrialDataset::from_parts_unchecked(y, z, x, names, sc.outcome_kind());
    Replicate {
        dataset,
        y1,
        y0,
        arm_redraws,
    }
}

/// Binary-outcome replicate; same as `generate_replicate` for a binary scenario.
pub fn binary_dgp(sc: &Scenario, seed: u64, index: u64) -> Result<Replicate> {
    if sc.dgp != Dgp::BinaryLogistic {
        return Err(Error::Scenario("binary_dgp requires dgp = binary_logistic".into()));
    }
    Ok(generate_replicate(sc, seed, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta0_signal_to_noise_one() {
        let sc = Scenario::new(50, 0.5, Dgp::Model1, 0.0);
        let ss: f64 = sc.beta0().iter().map(|b| b * b).sum();
        assert!((ss - 2.0).abs() < 1e-12);
        assert_eq!(sc.beta0()[9] / sc.beta0()[0], 16.0);
        assert!((sc.gamma() - 0.2_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parse_key_value_and_json() {
        let kv = "# model 1 scenario\nn = 500\nr = 0.5\nb1 = 0\ndgp = model1\nreplicates = 10\nseed = 7\n";
        let a = Scenario::parse(kv).unwrap();
        let b = Scenario::parse(r#"{"n": 500, "r": 0.5, "b1": 0.0, "dgp": "model1", "replicates": 10, "seed": 7}"#)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.p, 10);
        assert_eq!(a.sigma_y2, 2.0);
    }

    #[test]
    fn parse_errors() {
        assert!(Scenario::parse("n = 50\nr = 1.5\n").is_err());
        assert!(Scenario::parse("n = 50\nr = 0.5\nfoo = 1\n").is_err());
        assert!(Scenario::parse("n 50\n").is_err());
        assert!(Scenario::parse("n = 50\nr = 0.5\nn = 60\n").is_err());
    }

    #[test]
    fn replicate_is_deterministic() {
        let sc = Scenario::new(40, 0.5, Dgp::Model2, 0.5);
        let a = generate_replicate(&sc, 11, 3);
        let b = generate_replicate(&sc, 11, 3);
        assert_eq!(a.dataset.y(), b.dataset.y());
        assert_eq!(a.dataset.z(), b.dataset.z());
        let c = generate_replicate(&sc, 11, 4);
        assert_ne!(a.dataset.y(), c.dataset.y());
    }

    #[test]
    fn no_noise_no_heterogeneity_gives_equal_potential_outcomes() {
        let mut sc = Scenario::new(30, 0.5, Dgp::Model1, 0.0);
        sc.b0 = Some(0.1);
        sc.sigma_y2 = 0.0;
        let rep = generate_replicate(&sc, 1, 0);
        assert!(rep.y1.iter().zip(&rep.y0).all(|(a, b)| a == b));
    }

    #[test]
    fn intercept_inversion() {
        assert!((solve_intercept(0.5, 1.0)).abs() < 1e-10);
        let eta = solve_intercept(0.12, 0.0);
        assert!((eta - (0.12_f64 / 0.88).ln()).abs() < 1e-10);
        let eta = solve_intercept(0.12, 1.0);
        assert!((logistic_normal_mean(eta, 1.0) - 0.12).abs() < 1e-10);
    }
}

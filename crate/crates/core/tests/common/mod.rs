#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use owadj::propensity::expit;
use owadj::{OutcomeKind, TrialDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Continuous outcome, Bernoulli(1/2) treatment, `p` standard normal covariates
/// with a mild effect on treatment so the propensity model is non-trivial.
pub fn continuous(seed: u64, n: usize, p: usize) -> TrialDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut x = DMatrix::<f64>::zeros(n, p);
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut z = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let lin: f64 = (0..p).map(|j| x[(i, j)] * 0.3 / (j + 1) as f64).sum();
            let zi = u8::from(rng.random::<f64>() < expit(lin));
            let signal: f64 = (0..p).map(|j| x[(i, j)] * (1.0 + j as f64)).sum();
            let noise: f64 = rng.sample(StandardNormal);
            y.push(1.0 + 0.5 * f64::from(zi) + signal + 0.4 * f64::from(zi) * x[(i, 0)] + noise);
            z.push(zi);
        }
        let n1 = z.iter().filter(|&&v| v == 1).count();
        if n1 >= 3 && n - n1 >= 3 {
            return TrialDataset::new(y, z, x, None, OutcomeKind::Continuous).unwrap();
        }
    }
}

/// Binary outcome from a logistic model in two covariates.
pub fn binary(seed: u64, n: usize) -> TrialDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 2;
    let mut x = DMatrix::<f64>::zeros(n, p);
    for v in x.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let zi = u8::from(rng.random_bool(0.5));
        let eta = -0.3 + 0.4 * f64::from(zi) + 0.8 * x[(i, 0)] - 0.5 * x[(i, 1)];
        y.push(f64::from(u8::from(rng.random::<f64>() < expit(eta))));
        z.push(zi);
    }
    TrialDataset::new(y, z, x, None, OutcomeKind::Binary).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Solves `M b = r` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let k = r.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        r.swap(c, piv);
        for row in c + 1..k {
            let f = m[row][c] / m[c][c];
            for col in c..k {
                m[row][col] -= f * m[c][col];
            }
            r[row] -= f * r[c];
        }
    }
    let mut b = vec![0.0; k];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|j| m[c][j] * b[j]).sum();
        b[c] = (r[c] - s) / m[c][c];
    }
    b
}

/// Ordinary least squares through the normal equations.
pub fn ols(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = rows[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (r, &yi) in rows.iter().zip(y) {
        for a in 0..k {
            xty[a] += r[a] * yi;
            for b in 0..k {
                xtx[a][b] += r[a] * r[b];
            }
        }
    }
    gauss_solve(xtx, xty)
}

/// Inverse of a small dense matrix, one solve per column.
pub fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = m.len();
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|c| gauss_solve(m.to_vec(), (0..k).map(|r| f64::from(u8::from(r == c))).collect()))
        .collect();
    (0..k).map(|r| (0..k).map(|c| cols[c][r]).collect()).collect()
}

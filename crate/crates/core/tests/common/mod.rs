//! Slow reference implementations shared by the integration tests.
#![allow(dead_code)]

use mcbatch::{ChainMatrix, LagWindow};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn mean(chain: &ChainMatrix, len: usize) -> Vec<f64> {
    let p = chain.p();
    let mut m = vec![0.0; p];
    for t in 0..len {
        for (i, x) in chain.row(t).iter().enumerate() {
            m[i] += x;
        }
    }
    m.iter().map(|s| s / len as f64).collect()
}

fn block_mean(chain: &ChainMatrix, start: usize, len: usize) -> Vec<f64> {
    let mut m = vec![0.0; chain.p()];
    for t in start..start + len {
        for (i, x) in chain.row(t).iter().enumerate() {
            m[i] += x;
        }
    }
    m.iter().map(|s| s / len as f64).collect()
}

fn add_outer(acc: &mut DMatrix<f64>, d: &[f64], w: f64) {
    for i in 0..d.len() {
        for j in 0..d.len() {
            acc[(i, j)] += w * d[i] * d[j];
        }
    }
}

/// Non-overlapping batch means computed batch by batch.
pub fn naive_bm(chain: &ChainMatrix, b: usize) -> DMatrix<f64> {
    let a = chain.n() / b;
    let ybar = mean(chain, a * b);
    let p = chain.p();
    let mut acc = DMatrix::zeros(p, p);
    for l in 0..a {
        let m = block_mean(chain, l * b, b);
        let d: Vec<f64> = m.iter().zip(&ybar).map(|(x, y)| x - y).collect();
        add_outer(&mut acc, &d, 1.0);
    }
    acc * (b as f64 / (a as f64 - 1.0))
}

/// `n⁻¹ Σ_l (Ȳ_l(k) - Ȳ)(Ȳ_l(k) - Ȳ)ᵀ` over all `n - k + 1` overlapping windows.
fn naive_overlapping(chain: &ChainMatrix, k: usize) -> DMatrix<f64> {
    let n = chain.n();
    let ybar = mean(chain, n);
    let p = chain.p();
    let mut acc = DMatrix::zeros(p, p);
    for l in 0..=n - k {
        let m = block_mean(chain, l, k);
        let d: Vec<f64> = m.iter().zip(&ybar).map(|(x, y)| x - y).collect();
        add_outer(&mut acc, &d, 1.0);
    }
    acc / n as f64
}

pub fn naive_obm(chain: &ChainMatrix, b: usize) -> DMatrix<f64> {
    naive_overlapping(chain, b) * b as f64
}

/// Generalized OBM summed over every lag `1..=b`, not just the non-zero
/// second differences.
pub fn naive_generalized_obm(chain: &ChainMatrix, window: &LagWindow) -> DMatrix<f64> {
    let p = chain.p();
    let mut acc = DMatrix::zeros(p, p);
    for k in 1..=window.b() {
        let d2 = window.delta2(k as i64);
        if d2 != 0.0 {
            acc += naive_overlapping(chain, k) * ((k * k) as f64 * d2);
        }
    }
    acc
}

/// Largest entrywise error, each entry scaled by
/// `max(|ref_ij|, √|ref_ii·ref_jj|)`.
pub fn max_rel_err(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    let p = want.nrows();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let scale = want[(i, j)]
                .abs()
                .max((want[(i, i)] * want[(j, j)]).abs().sqrt())
                .max(f64::MIN_POSITIVE);
            worst = worst.max((got[(i, j)] - want[(i, j)]).abs() / scale);
        }
    }
    worst
}

/// A chain with VAR-like dependence and per-component offsets.
pub fn random_chain<R: Rng>(rng: &mut R, n: usize, p: usize) -> ChainMatrix {
    let phi: f64 = rng.random_range(0.0..0.9);
    let offsets: Vec<f64> = (0..p).map(|_| rng.random_range(-100.0..100.0)).collect();
    let scales: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..10.0)).collect();
    let mut state = vec![0.0; p];
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n {
        let common: f64 = StandardNormal.sample(rng);
        for i in 0..p {
            let e: f64 = StandardNormal.sample(rng);
            state[i] = phi * state[i] + e + 0.5 * common;
            data.push(offsets[i] + scales[i] * state[i]);
        }
    }
    ChainMatrix::new(data, n, p).unwrap()
}

/// Autocovariances of a causal AR model from its ψ-weights:
/// `γ(k) = σ² Σ_j ψ_j ψ_{j+k}`, truncated once the weights are negligible.
/// With `max_lag = None` every lag with a non-negligible value is returned.
pub fn psi_autocovariances(phi: &[f64], sigma2: f64, max_lag: Option<usize>) -> Vec<f64> {
    let mut psi = vec![1.0];
    let mut quiet = 0;
    while quiet < 50 && psi.len() < 200_000 {
        let j = psi.len();
        let next: f64 = phi
            .iter()
            .enumerate()
            .filter(|(i, _)| *i + 1 <= j)
            .map(|(i, f)| f * psi[j - i - 1])
            .sum();
        quiet = if next.abs() < 1e-17 { quiet + 1 } else { 0 };
        psi.push(next);
    }
    (0..=max_lag.unwrap_or(psi.len()))
        .map(|k| {
            sigma2
                * psi
                    .iter()
                    .zip(psi.iter().skip(k))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
        .collect()
}

/// Stationary AR(m) coefficients from partial autocorrelations in `(-0.85, 0.85)`.
pub fn random_ar<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::new();
    for k in 0..m {
        let kappa: f64 = rng.random_range(-0.85..0.85);
        let prev = phi.clone();
        phi.push(kappa);
        for j in 0..k {
            phi[j] = prev[j] - kappa * prev[k - 1 - j];
        }
    }
    phi
}

/// `V = Σ_k Φ^k Φ^kᵀ`, `Σ = V + Σ_{k≥1}(Φ^k V + VΦ^kᵀ)`,
/// `Γ = -Σ_{k≥1} k(Φ^k V + VΦ^kᵀ)` by direct summation.
pub fn var1_series(phi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let p = phi.nrows();
    let mut v = DMatrix::<f64>::zeros(p, p);
    let mut power = DMatrix::<f64>::identity(p, p);
    for _ in 0..200_000 {
        let term = &power * power.transpose();
        v += &term;
        if term.amax() < 1e-20 * v.amax() {
            break;
        }
        power = phi * &power;
    }
    let mut sigma = v.clone();
    let mut gamma = DMatrix::<f64>::zeros(p, p);
    let mut power = phi.clone();
    for k in 1..200_000 {
        let r = &power * &v;
        let term = &r + r.transpose();
        sigma += &term;
        gamma -= &term * k as f64;
        if (k as f64) * term.amax() < 1e-20 * sigma.amax().max(1.0) {
            break;
        }
        power = phi * &power;
    }
    (v, sigma, gamma)
}

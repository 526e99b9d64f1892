//! Batch-means family estimators of the asymptotic covariance matrix.
//!
//! Overlapping estimators share one kernel: compensated prefix sums of the
//! centered chain give every overlapping batch mean in `O(p)`, so an
//! overlapping sum costs `O(n·p²)` regardless of the batch size.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::ChainMatrix;
use crate::error::{Error, Result};
use crate::window::{Family, LagWindow, WindowKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bm,
    Obm,
    GeneralizedObm,
    FlatTopBm,
    FlatTopObm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bm => "bm",
            Method::Obm => "obm",
            Method::GeneralizedObm => "generalized-obm",
            Method::FlatTopBm => "ft-bm",
            Method::FlatTopObm => "ft-obm",
        }
    }
}

/// A symmetric `p × p` estimate of Σ and how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub sigma: DMatrix<f64>,
    pub method: Method,
    pub window: Option<WindowKind>,
    pub b: usize,
    pub n: usize,
}

impl CovEstimate {
    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.sigma)
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Prefix sums `S_t = Σ_{s<t} (Y_s - Ȳ)` stored as a compensated pair
/// `hi + lo`, `(n + 1) × p` row-major.
struct CenteredPrefix {
    hi: Vec<f64>,
    lo: Vec<f64>,
    p: usize,
}

impl CenteredPrefix {
    fn new(chain: &ChainMatrix, len: usize) -> Self {
        let p = chain.p();
        let mean = compensated_mean(chain, len);
        let mut hi = vec![0.0; (len + 1) * p];
        let mut lo = vec![0.0; (len + 1) * p];
        let mut sum = vec![0.0; p];
        let mut comp = vec![0.0; p];
        for t in 0..len {
            let row = chain.row(t);
            for j in 0..p {
                let x = row[j] - mean[j];
                // Neumaier summation
                let s = sum[j] + x;
                if sum[j].abs() >= x.abs() {
                    comp[j] += (sum[j] - s) + x;
                } else {
                    comp[j] += (x - s) + sum[j];
                }
                sum[j] = s;
                hi[(t + 1) * p + j] = s;
                lo[(t + 1) * p + j] = comp[j];
            }
        }
        CenteredPrefix { hi, lo, p }
    }

    /// Writes `Σ_{s=start}^{end-1} (Y_s - Ȳ)` into `out`.
    #[inline]
    fn window_sum(&self, start: usize, end: usize, out: &mut [f64]) {
        let p = self.p;
        let (a, b) = (start * p, end * p);
        for j in 0..p {
            out[j] = (self.hi[b + j] - self.hi[a + j]) + (self.lo[b + j] - self.lo[a + j]);
        }
    }

    fn len(&self) -> usize {
        self.hi.len() / self.p - 1
    }

    /// `Σ_{l=0}^{len-k} (Ȳ_l(k) - Ȳ)(Ȳ_l(k) - Ȳ)ᵀ`.
    fn overlapping_outer_sum(&self, k: usize) -> DMatrix<f64> {
        let p = self.p;
        let n = self.len();
        let inv_k = 1.0 / k as f64;
        let mut acc = vec![0.0; p * p];
        let mut d = vec![0.0; p];
        for l in 0..=(n - k) {
            self.window_sum(l, l + k, &mut d);
            for x in d.iter_mut() {
                *x *= inv_k;
            }
            for i in 0..p {
                let di = d[i];
                let row = &mut acc[i * p..(i + 1) * p];
                for j in i..p {
                    row[j] += di * d[j];
                }
            }
        }
        symmetric_from_upper(p, &acc)
    }
}

fn compensated_mean(chain: &ChainMatrix, len: usize) -> Vec<f64> {
    let p = chain.p();
    let mut sum = vec![0.0; p];
    let mut comp = vec![0.0; p];
    for t in 0..len {
        for (j, &x) in chain.row(t).iter().enumerate() {
            let s = sum[j] + x;
            if sum[j].abs() >= x.abs() {
                comp[j] += (sum[j] - s) + x;
            } else {
                comp[j] += (x - s) + sum[j];
            }
            sum[j] = s;
        }
    }
    sum.iter()
        .zip(&comp)
        .map(|(s, c)| (s + c) / len as f64)
        .collect()
}

fn symmetric_from_upper(p: usize, upper: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| {
        if i <= j {
            upper[i * p + j]
        } else {
            upper[j * p + i]
        }
    })
}

fn check_overlapping_b(b: usize, n: usize) -> Result<()> {
    if b == 0 || b >= n {
        return Err(Error::BatchSize {
            b,
            n,
            reason: "need 1 <= b <= n - 1".into(),
        });
    }
    Ok(())
}

fn check_bm_b(b: usize, n: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::BatchSize {
            b,
            n,
            reason: "need b >= 1".into(),
        });
    }
    if n / b < 2 {
        return Err(Error::BatchSize {
            b,
            n,
            reason: "need at least two batches".into(),
        });
    }
    Ok(())
}

/// Non-overlapping batch means.
///
/// Uses the first `a·b` observations with `a = ⌊n/b⌋`; the mean is taken over
/// the retained observations. Divisor is `a - 1`.
pub fn bm(chain: &ChainMatrix, b: usize) -> Result<CovEstimate> {
    let n = chain.n();
    check_bm_b(b, n)?;
    let a = n / b;
    let p = chain.p();
    let prefix = CenteredPrefix::new(chain, a * b);
    let inv_b = 1.0 / b as f64;
    let mut acc = vec![0.0; p * p];
    let mut d = vec![0.0; p];
    for l in 0..a {
        prefix.window_sum(l * b, (l + 1) * b, &mut d);
        for x in d.iter_mut() {
            *x *= inv_b;
        }
        for i in 0..p {
            for j in i..p {
                acc[i * p + j] += d[i] * d[j];
            }
        }
    }
    let scale = b as f64 / (a - 1) as f64;
    Ok(CovEstimate {
        sigma: symmetric_from_upper(p, &acc) * scale,
        method: Method::Bm,
        window: Some(WindowKind::Bartlett),
        b,
        n,
    })
}

/// Overlapping batch means, `(b/n) Σ_{l=0}^{n-b} (Ȳ_l(b) - Ȳ)(Ȳ_l(b) - Ȳ)ᵀ`.
pub fn obm(chain: &ChainMatrix, b: usize) -> Result<CovEstimate> {
    let n = chain.n();
    check_overlapping_b(b, n)?;
    let prefix = CenteredPrefix::new(chain, n);
    let sigma = prefix.overlapping_outer_sum(b) * (b as f64 / n as f64);
    Ok(CovEstimate {
        sigma,
        method: Method::Obm,
        window: Some(WindowKind::Bartlett),
        b,
        n,
    })
}

/// Generalized OBM, `n⁻¹ Σ_k k²Δ₂w(k) Σ_l (Ȳ_l(k) - Ȳ)(Ȳ_l(k) - Ȳ)ᵀ`,
/// summed over the lags where `Δ₂w` is non-zero.
pub fn generalized_obm(chain: &ChainMatrix, window: &LagWindow) -> Result<CovEstimate> {
    let n = chain.n();
    let b = window.b();
    check_overlapping_b(b, n)?;
    let prefix = CenteredPrefix::new(chain, n);
    let p = chain.p();
    let mut sigma = DMatrix::zeros(p, p);
    for (k, d2) in window.delta2_support() {
        let weight = (k * k) as f64 * d2 / n as f64;
        sigma += prefix.overlapping_outer_sum(k) * weight;
    }
    Ok(CovEstimate {
        sigma,
        method: Method::GeneralizedObm,
        window: Some(window.kind()),
        b,
        n,
    })
}

fn check_flat_top_b(b: usize, n: usize) -> Result<()> {
    if b % 2 != 0 {
        return Err(Error::OddFlatTop(b));
    }
    check_bm_b(b, n)
}

/// `2·bm(b) - bm(b/2)`.
pub fn flat_top_bm(chain: &ChainMatrix, b: usize) -> Result<CovEstimate> {
    let n = chain.n();
    check_flat_top_b(b, n)?;
    let full = bm(chain, b)?;
    let half = bm(chain, b / 2)?;
    Ok(CovEstimate {
        sigma: full.sigma * 2.0 - half.sigma,
        method: Method::FlatTopBm,
        window: Some(WindowKind::FlatTop),
        b,
        n,
    })
}

/// `2·obm(b) - obm(b/2)`.
pub fn flat_top_obm(chain: &ChainMatrix, b: usize) -> Result<CovEstimate> {
    let n = chain.n();
    check_flat_top_b(b, n)?;
    let prefix = CenteredPrefix::new(chain, n);
    let scale = 1.0 / n as f64;
    let full = prefix.overlapping_outer_sum(b) * (b as f64 * scale);
    let half = prefix.overlapping_outer_sum(b / 2) * ((b / 2) as f64 * scale);
    Ok(CovEstimate {
        sigma: full * 2.0 - half,
        method: Method::FlatTopObm,
        window: Some(WindowKind::FlatTop),
        b,
        n,
    })
}

/// Estimator selector used by the CLI and the replication harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Bm,
    Obm,
    FtBm,
    FtObm,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Bm, Estimator::Obm, Estimator::FtBm, Estimator::FtObm];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Bm => "bm",
            Estimator::Obm => "obm",
            Estimator::FtBm => "ft-bm",
            Estimator::FtObm => "ft-obm",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Estimator::Bm | Estimator::FtBm => Family::Bm,
            Estimator::Obm | Estimator::FtObm => Family::Obm,
        }
    }

    pub fn is_flat_top(self) -> bool {
        matches!(self, Estimator::FtBm | Estimator::FtObm)
    }

    pub fn estimate(self, chain: &ChainMatrix, b: usize) -> Result<CovEstimate> {
        match self {
            Estimator::Bm => bm(chain, b),
            Estimator::Obm => obm(chain, b),
            Estimator::FtBm => flat_top_bm(chain, b),
            Estimator::FtObm => flat_top_obm(chain, b),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bm" => Ok(Estimator::Bm),
            "obm" => Ok(Estimator::Obm),
            "ft-bm" | "bm-ft" => Ok(Estimator::FtBm),
            "ft-obm" | "obm-ft" => Ok(Estimator::FtObm),
            _ => Err(Error::InvalidArgument(format!("unknown estimator {s:?}"))),
        }
    }
}

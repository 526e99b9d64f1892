//! Confidence ellipsoids for the mean and univariate effective sample size.

use nalgebra::{DMatrix, DVector};

use crate::chain::ChainMatrix;
use crate::error::{Error, Result};
use crate::estimators::CovEstimate;
use crate::select::PilotEstimates;

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // series
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum.ln() + log_prefix).exp().min(1.0)
    } else {
        // continued fraction for Q, modified Lentz
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        (1.0 - (log_prefix.exp() * h)).max(0.0)
    }
}

/// Chi-square CDF with `df` degrees of freedom.
pub fn chi_square_cdf(x: f64, df: f64) -> f64 {
    gamma_p(df / 2.0, x / 2.0)
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// F distribution CDF.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    beta_inc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Inverts a continuous CDF on `[0, ∞)` by bracketing and bisection.
fn invert_cdf(level: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while cdf(hi) < level {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

pub fn chi_square_quantile(level: f64, df: usize) -> Result<f64> {
    check_level(level)?;
    if df == 0 {
        return Err(Error::InvalidArgument("df must be >= 1".into()));
    }
    Ok(invert_cdf(level, |x| chi_square_cdf(x, df as f64)))
}

pub fn f_quantile(level: f64, d1: usize, d2: usize) -> Result<f64> {
    check_level(level)?;
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidArgument("F degrees of freedom must be >= 1".into()));
    }
    Ok(invert_cdf(level, |x| f_cdf(x, d1 as f64, d2 as f64)))
}

/// Reference distribution for the quadratic form `n(Ȳ - θ)ᵀΣ̂⁻¹(Ȳ - θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quantile {
    /// `χ²_p` (large-sample).
    #[default]
    ChiSquare,
    /// Hotelling `T²` with `df` degrees of freedom for `Σ̂`, e.g. `a - 1` for
    /// batch means with `a` batches: `p·df/(df - p + 1) · F_{p, df-p+1}`.
    HotellingF { df: usize },
}

impl Quantile {
    pub fn threshold(self, level: f64, p: usize) -> Result<f64> {
        match self {
            Quantile::ChiSquare => chi_square_quantile(level, p),
            Quantile::HotellingF { df } => {
                if df < p {
                    return Err(Error::InvalidArgument(format!(
                        "Hotelling df {df} must be >= p = {p}"
                    )));
                }
                let d2 = df - p + 1;
                Ok(f_quantile(level, p, d2)? * (p * df) as f64 / d2 as f64)
            }
        }
    }
}

/// `{θ : n(Ȳ - θ)ᵀΣ̂⁻¹(Ȳ - θ) ≤ q}`.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub center: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
    pub level: f64,
    pub threshold: f64,
    chol_l: DMatrix<f64>,
}

/// Chi-square region from an estimate of Σ.
pub fn confidence_region(mean: &[f64], est: &CovEstimate, n: usize, level: f64) -> Result<ConfidenceRegion> {
    ConfidenceRegion::new(mean, &est.sigma, n, level, Quantile::ChiSquare)
}

impl ConfidenceRegion {
    pub fn new(mean: &[f64], sigma: &DMatrix<f64>, n: usize, level: f64, quantile: Quantile) -> Result<Self> {
        let p = mean.len();
        let threshold = quantile.threshold(level, p.max(1))?;
        let mut region = Self::with_threshold(mean, sigma, n, threshold)?;
        region.level = level;
        Ok(region)
    }

    /// Region with an explicit threshold `q`; `level` is left as NaN.
    pub fn with_threshold(mean: &[f64], sigma: &DMatrix<f64>, n: usize, threshold: f64) -> Result<Self> {
        let p = mean.len();
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::Dimension {
                expected: p,
                found: sigma.nrows(),
            });
        }
        if n == 0 || !(threshold > 0.0) {
            return Err(Error::InvalidArgument("need n >= 1 and threshold > 0".into()));
        }
        let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let scale = sigma.diagonal().amax();
        if l.diagonal().iter().any(|d| !(d * d > 1e-14 * scale)) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(ConfidenceRegion {
            center: mean.to_vec(),
            sigma: sigma.clone(),
            n,
            level: f64::NAN,
            threshold,
            chol_l: l,
        })
    }

    pub fn p(&self) -> usize {
        self.center.len()
    }

    /// `n(Ȳ - θ)ᵀΣ̂⁻¹(Ȳ - θ)`.
    pub fn statistic(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.p() {
            return Err(Error::Dimension {
                expected: self.p(),
                found: point.len(),
            });
        }
        let diff = DVector::from_iterator(self.p(), self.center.iter().zip(point).map(|(c, x)| c - x));
        let z = self
            .chol_l
            .solve_lower_triangular(&diff)
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(self.n as f64 * z.norm_squared())
    }

    /// Boundary points count as inside.
    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        Ok(self.statistic(point)? <= self.threshold)
    }

    /// Half-widths of the bounding box, `√(q·Σ̂_ii/n)`; the interval for `p = 1`.
    pub fn half_widths(&self) -> Vec<f64> {
        self.sigma
            .diagonal()
            .iter()
            .map(|s| (self.threshold * s / self.n as f64).sqrt())
            .collect()
    }
}

/// `n·γ̂_i(0) / Σ_{p,i}` per component.
pub fn ess_univariate(chain: &ChainMatrix, pilot: &PilotEstimates) -> Result<Vec<f64>> {
    if pilot.sigma_p.len() != chain.p() {
        return Err(Error::Dimension {
            expected: chain.p(),
            found: pilot.sigma_p.len(),
        });
    }
    let n = chain.n() as f64;
    (0..chain.p())
        .map(|i| {
            let sp = pilot.sigma_p[i];
            if !(sp > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "pilot variance for component {i} must be positive"
                )));
            }
            let var = chain.sample_autocovariance(i, 0)?.values[0];
            Ok(n * var / sp)
        })
        .collect()
}

//! Batch size selection.
//!
//! Three procedures are provided:
//!
//! * **AR(m) fit** – each marginal is approximated by a Yule-Walker AR(m) model
//!   with AIC order selection, giving closed forms for the pilot quantities
//!   `Σ_{p,i} = Σ_k γ(k)` and `Γ_{p,i} = -2 Σ_{k≥1} kγ(k)`.
//! * **Nonparametric** – flat-top weighted sums of sample autocovariances at
//!   bandwidth `2r` from the lag rule.
//! * **Lag rule** – `b = 2r` where `r` is the first lag after which the next
//!   five maximum absolute autocorrelations fall below `2√(log n / n)`.
//!
//! Pilot quantities are combined over the diagonal into the coefficient
//! `(Σ_i Γ_{p,i}² / Σ_i Σ_{p,i}²)^{1/3}`, which scales `n^{1/3}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{autocovariance_centered, AutocorrelationScan, ChainMatrix};
use crate::error::{Error, Result};
use crate::window::{mse_constants, Family, LagWindow, WindowKind};

/// Fitted models with `Σφ ≥ 1 - STATIONARITY_MARGIN` are rejected.
pub const STATIONARITY_MARGIN: f64 = 1e-6;

/// Fitted AR(m) marginal model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArFit {
    pub m: usize,
    pub phi: Vec<f64>,
    pub sigma2_e: f64,
    /// `γ̂(0..=m)`.
    pub gamma_hat: Vec<f64>,
    pub n: usize,
    pub aic: f64,
}

impl ArFit {
    /// Order-0 model: the series is treated as white noise.
    pub fn white_noise(gamma0: f64, n: usize) -> Self {
        ArFit {
            m: 0,
            phi: Vec::new(),
            sigma2_e: gamma0,
            gamma_hat: vec![gamma0],
            n,
            aic: f64::NAN,
        }
    }

    /// Fit record for a known model, carrying its exact autocovariances.
    pub fn from_model(phi: &[f64], sigma2_e: f64) -> Result<Self> {
        let gamma_hat = ar_autocovariances(phi, sigma2_e, phi.len())?;
        Ok(ArFit {
            m: phi.len(),
            phi: phi.to_vec(),
            sigma2_e,
            gamma_hat,
            n: 0,
            aic: f64::NAN,
        })
    }

    pub fn phi_sum(&self) -> f64 {
        self.phi.iter().sum()
    }

    fn check_stationary(&self) -> Result<f64> {
        let s = self.phi_sum();
        if s >= 1.0 {
            return Err(Error::NonStationary(s));
        }
        Ok(1.0 - s)
    }
}

/// Autocovariances `γ(0..=max_lag)` of a causal AR model, from the linear
/// Yule-Walker system in `γ(0..=m)` followed by the recursion.
pub fn ar_autocovariances(phi: &[f64], sigma2_e: f64, max_lag: usize) -> Result<Vec<f64>> {
    let m = phi.len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    rhs[0] = sigma2_e;
    for k in 0..=m {
        a[(k, k)] += 1.0;
        for (i, &ph) in phi.iter().enumerate() {
            let lag = (k as isize - (i as isize + 1)).unsigned_abs();
            a[(k, lag)] -= ph;
        }
    }
    let gamma = a.lu().solve(&rhs).ok_or(Error::Singular)?;
    let mut out: Vec<f64> = gamma.iter().copied().collect();
    for k in (m + 1)..=max_lag {
        let next = phi.iter().enumerate().map(|(i, ph)| ph * out[k - i - 1]).sum();
        out.push(next);
    }
    out.truncate(max_lag + 1);
    Ok(out)
}

/// Levinson-Durbin recursion over orders `1..=max_order`.
///
/// Entry `m - 1` holds the order-`m` coefficients, or `None` once the
/// Toeplitz system becomes singular.
fn levinson_durbin(acov: &[f64], max_order: usize) -> Vec<Option<Vec<f64>>> {
    let mut out = Vec::with_capacity(max_order);
    let mut phi: Vec<f64> = Vec::new();
    let mut err = acov[0];
    for m in 1..=max_order {
        if !(err > acov[0] * 1e-14) {
            out.push(None);
            continue;
        }
        let acc: f64 = phi
            .iter()
            .enumerate()
            .map(|(j, ph)| ph * acov[m - j - 1])
            .sum();
        let kappa = (acov[m] - acc) / err;
        if !kappa.is_finite() || kappa.abs() >= 1.0 {
            err = 0.0;
            out.push(None);
            continue;
        }
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - kappa * prev[prev.len() - 1 - j];
        }
        phi.push(kappa);
        err *= 1.0 - kappa * kappa;
        out.push(Some(phi.clone()));
    }
    out
}

/// Solves the order-`order` Yule-Walker system `γ(k) = Σ_i φ_i γ(k-i)`.
/// Returns `(φ, σ²_e)` with `σ²_e = γ(0) - Σ φ_i γ(i)`.
pub fn yule_walker(acov: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    if order == 0 || acov.len() <= order {
        return Err(Error::InvalidArgument(format!(
            "order {order} needs autocovariances up to that lag (have {})",
            acov.len().saturating_sub(1)
        )));
    }
    if !(acov[0] > 0.0) {
        return Err(Error::ArFit("zero variance".into()));
    }
    let phi = levinson_durbin(acov, order)
        .pop()
        .flatten()
        .ok_or(Error::Singular)?;
    let sigma2 = innovation_variance(acov, &phi);
    Ok((phi, sigma2))
}

fn innovation_variance(acov: &[f64], phi: &[f64]) -> f64 {
    acov[0] - phi.iter().zip(&acov[1..]).map(|(p, g)| p * g).sum::<f64>()
}

/// Default maximum AR order, `⌊10·log10 n⌋`.
pub fn default_max_order(n: usize) -> usize {
    (10.0 * (n as f64).log10()).floor() as usize
}

/// Fits an AR(m) model by Yule-Walker, choosing `m ∈ 1..=max_order` by
/// `AIC = n·log σ̂²_e + 2m`. Orders whose fit violates the stationarity
/// margin are skipped in favour of the next-best AIC.
pub fn fit_ar(series: &[f64], max_order: usize) -> Result<ArFit> {
    let n = series.len();
    if n < 10 {
        return Err(Error::ArFit(format!("need n >= 10, got {n}")));
    }
    if max_order == 0 || 2 * max_order >= n {
        return Err(Error::ArFit(format!(
            "max_order {max_order} must satisfy 1 <= max_order < n/2"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let acov: Vec<f64> = (0..=max_order)
        .map(|k| autocovariance_centered(&centered, k))
        .collect();
    if !(acov[0] > 0.0) {
        return Err(Error::ArFit("degenerate series (zero variance)".into()));
    }

    let mut candidates: Vec<(f64, usize, Vec<f64>, f64)> = Vec::new();
    for (idx, phi) in levinson_durbin(&acov, max_order).into_iter().enumerate() {
        let m = idx + 1;
        let Some(phi) = phi else { continue };
        let sigma2 = innovation_variance(&acov, &phi);
        if !(sigma2 > 0.0) {
            continue;
        }
        let aic = n as f64 * sigma2.ln() + 2.0 * m as f64;
        candidates.push((aic, m, phi, sigma2));
    }
    if candidates.is_empty() {
        return Err(Error::ArFit("Toeplitz system singular at every order".into()));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (aic, m, phi, sigma2_e) = candidates
        .into_iter()
        .find(|(_, _, phi, _)| phi.iter().sum::<f64>() < 1.0 - STATIONARITY_MARGIN)
        .ok_or_else(|| Error::ArFit("every fitted order violates the stationarity margin".into()))?;
    Ok(ArFit {
        m,
        phi,
        sigma2_e,
        gamma_hat: acov[..=m].to_vec(),
        n,
        aic,
    })
}

/// `Σ_{p,i} = σ̂²_e / (1 - Σφ̂)²`.
pub fn ar_sigma(fit: &ArFit) -> Result<f64> {
    let margin = fit.check_stationary()?;
    Ok(fit.sigma2_e / (margin * margin))
}

/// Which closed form to use for `Γ_{p,i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaFormula {
    /// `-2T` with `T = [A + G·Σ iφ_i] / (1 - Σφ)` and `G = (Σ_{p,i} - γ̂(0))/2`.
    #[default]
    Exact,
    /// `(σ̂²_e - γ̂(0))/2` in place of `G`, with `1/(1 - Σφ)` applied to the
    /// second term only. Kept for comparison runs.
    InnovationTail,
}

/// `Γ_{p,i} = -2 Σ_{k≥1} kγ(k)` under the fitted model.
pub fn ar_gamma(fit: &ArFit) -> Result<f64> {
    ar_gamma_with(fit, GammaFormula::Exact)
}

pub fn ar_gamma_with(fit: &ArFit, formula: GammaFormula) -> Result<f64> {
    let margin = fit.check_stationary()?;
    let gamma = &fit.gamma_hat;
    // A = Σ_i φ_i Σ_{k=1}^{i} k γ(k - i)
    let head: f64 = fit
        .phi
        .iter()
        .enumerate()
        .map(|(idx, ph)| {
            let i = idx + 1;
            ph * (1..=i).map(|k| k as f64 * gamma[i - k]).sum::<f64>()
        })
        .sum();
    let weighted: f64 = fit
        .phi
        .iter()
        .enumerate()
        .map(|(idx, ph)| (idx + 1) as f64 * ph)
        .sum();
    let t = match formula {
        GammaFormula::Exact => {
            let tail_sum = (ar_sigma(fit)? - gamma[0]) / 2.0;
            (head + tail_sum * weighted) / margin
        }
        GammaFormula::InnovationTail => head + (fit.sigma2_e - gamma[0]) / 2.0 * weighted / margin,
    };
    Ok(-2.0 * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotMethod {
    Ar,
    Nonparametric,
}

/// Per-component pilot estimates of `Σ_ii` and `Γ_ii`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotEstimates {
    pub sigma_p: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub method: PilotMethod,
}

impl PilotEstimates {
    /// `(Σ Γ_{p,i}² / Σ Σ_{p,i}²)^{1/3}`.
    pub fn coefficient(&self) -> Result<f64> {
        let num: f64 = self.gamma_p.iter().map(|g| g * g).sum();
        let den: f64 = self.sigma_p.iter().map(|s| s * s).sum();
        if !(den > 0.0) {
            return Err(Error::ZeroPilot);
        }
        Ok((num / den).cbrt())
    }
}

/// AR(m)-fit pilot for every component.
pub fn ar_pilot(chain: &ChainMatrix, max_order: Option<usize>) -> Result<PilotEstimates> {
    let n = chain.n();
    let max_order = max_order
        .unwrap_or_else(|| default_max_order(n))
        .min(n.saturating_sub(1) / 2)
        .max(1);
    let mut sigma_p = Vec::with_capacity(chain.p());
    let mut gamma_p = Vec::with_capacity(chain.p());
    for i in 0..chain.p() {
        let col = chain.column(i);
        if col.iter().all(|&x| x == col[0]) {
            return Err(Error::ConstantComponent { component: i });
        }
        let wrap = |e: Error| Error::Component {
            component: i,
            source: Box::new(e),
        };
        let fit = fit_ar(&col, max_order).map_err(wrap)?;
        sigma_p.push(ar_sigma(&fit).map_err(wrap)?);
        gamma_p.push(ar_gamma(&fit).map_err(wrap)?);
    }
    Ok(PilotEstimates {
        sigma_p,
        gamma_p,
        method: PilotMethod::Ar,
    })
}

/// Flat-top weighted autocovariance sums at bandwidth `M = 2r`.
pub fn nonparametric_pilot(chain: &ChainMatrix) -> Result<PilotEstimates> {
    let n = chain.n();
    if n < 100 {
        return Err(Error::InvalidArgument(format!(
            "nonparametric pilot needs n >= 100, got {n}"
        )));
    }
    let bandwidth = 2 * lag_rule(chain)?;
    let window = LagWindow::flat_top(bandwidth)?;
    let weights: Vec<f64> = (0..=bandwidth).map(|k| window.value(k as i64)).collect();
    let mut sigma_p = Vec::with_capacity(chain.p());
    let mut gamma_p = Vec::with_capacity(chain.p());
    for i in 0..chain.p() {
        let acov = chain.sample_autocovariance(i, bandwidth)?.values;
        let mut sigma = acov[0];
        let mut gamma = 0.0;
        for k in 1..=bandwidth {
            sigma += 2.0 * weights[k] * acov[k];
            gamma -= 2.0 * weights[k] * k as f64 * acov[k];
        }
        let floor = acov[0] * 1e-6;
        if sigma <= 0.0 {
            sigma = floor;
        }
        sigma_p.push(sigma);
        gamma_p.push(gamma);
    }
    Ok(PilotEstimates {
        sigma_p,
        gamma_p,
        method: PilotMethod::Nonparametric,
    })
}

/// Smallest `r ≥ 1` with `ρ(r + s) < 2√(log n / n)` for `s = 1..=5`,
/// where `ρ(k)` is the largest absolute lag-`k` autocorrelation over the
/// components. The search stops at `r = n/4`.
pub fn lag_rule(chain: &ChainMatrix) -> Result<usize> {
    let n = chain.n();
    if n < 10 {
        return Err(Error::InvalidArgument(format!("lag rule needs n >= 10, got {n}")));
    }
    let scan = AutocorrelationScan::new(chain)?;
    let threshold = 2.0 * ((n as f64).ln() / n as f64).sqrt();
    let cap = n / 4;
    // below[k] caches whether ρ(k) < threshold
    let mut below: Vec<Option<bool>> = vec![None; cap + 7];
    let mut is_below = |k: usize| -> Result<bool> {
        if let Some(v) = below[k] {
            return Ok(v);
        }
        let v = scan.max_abs(k)? < threshold;
        below[k] = Some(v);
        Ok(v)
    };
    let mut r = 1;
    'outer: while r <= cap {
        // scan from the far end so a failure lets us skip past it
        for s in (1..=5).rev() {
            if !is_below(r + s)? {
                r += s;
                continue 'outer;
            }
        }
        return Ok(r);
    }
    Err(Error::NoCutoff { cap })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    Ar,
    Np,
    Lag,
    #[serde(rename = "cuberoot")]
    CubeRoot,
    #[serde(rename = "sqrt")]
    SquareRoot,
    Fixed,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 5] = [
        SelectionMethod::Ar,
        SelectionMethod::Np,
        SelectionMethod::Lag,
        SelectionMethod::CubeRoot,
        SelectionMethod::SquareRoot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::Ar => "ar",
            SelectionMethod::Np => "np",
            SelectionMethod::Lag => "lag",
            SelectionMethod::CubeRoot => "cuberoot",
            SelectionMethod::SquareRoot => "sqrt",
            SelectionMethod::Fixed => "fixed",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ar" => Ok(SelectionMethod::Ar),
            "np" | "nonparametric" => Ok(SelectionMethod::Np),
            "lag" => Ok(SelectionMethod::Lag),
            "cuberoot" | "n13" => Ok(SelectionMethod::CubeRoot),
            "sqrt" | "n12" => Ok(SelectionMethod::SquareRoot),
            _ => Err(Error::InvalidArgument(format!("unknown batch method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSizeResult {
    pub b: usize,
    /// `(Σ Γ_ii² / Σ Σ_ii²)^{1/3}` for the pilot-based methods.
    pub coefficient: Option<f64>,
    /// Multiplier of `coefficient · n^{1/3}`.
    pub family_constant: Option<f64>,
    pub method: SelectionMethod,
    pub n: usize,
}

fn even_floor(x: usize) -> usize {
    x - x % 2
}

/// Clamps to `[1, n/2]`, or to even values in `[2, n/2]` for flat-top targets
/// (rounding odd values up).
pub fn clamp_batch_size(b: usize, n: usize, flat_top_target: bool) -> usize {
    if flat_top_target {
        let hi = even_floor(n / 2).max(2);
        let b = b + b % 2;
        b.clamp(2, hi)
    } else {
        b.clamp(1, (n / 2).max(1))
    }
}

/// `b = 2r` from [`lag_rule`], clamped to even values in `[2, n/2]`.
///
/// The result is always even, so it already suits flat-top estimators and
/// `_flat_top_target` does not change it.
pub fn lag_based_batchsize(chain: &ChainMatrix, _flat_top_target: bool) -> Result<BatchSizeResult> {
    let n = chain.n();
    let r = lag_rule(chain)?;
    Ok(BatchSizeResult {
        b: clamp_batch_size(2 * r, n, true),
        coefficient: None,
        family_constant: None,
        method: SelectionMethod::Lag,
        n,
    })
}

/// `⌊n^{1/3}⌋` or `⌊n^{1/2}⌋`, clamped like the other selectors.
pub fn power_batchsize(n: usize, method: SelectionMethod, flat_top_target: bool) -> Result<BatchSizeResult> {
    let raw = match method {
        SelectionMethod::CubeRoot => integer_root(n, 3),
        SelectionMethod::SquareRoot => integer_root(n, 2),
        other => {
            return Err(Error::InvalidArgument(format!(
                "{other} is not a fixed-power rule"
            )))
        }
    };
    Ok(BatchSizeResult {
        b: clamp_batch_size(raw, n, flat_top_target),
        coefficient: None,
        family_constant: None,
        method,
        n,
    })
}

/// `⌊n^{1/k}⌋` without floating-point edge errors at perfect powers.
fn integer_root(n: usize, k: u32) -> usize {
    let mut r = (n as f64).powf(1.0 / k as f64).round() as usize;
    while r > 0 && r.pow(k) > n {
        r -= 1;
    }
    while (r + 1).pow(k) <= n {
        r += 1;
    }
    r
}

/// `(C²/S)^{1/3}`: the diagonal of the MSE-optimal batch size is
/// `(2C²/S · Γ_ii² n / (2Σ_ii²))^{1/3}`.
pub fn family_constant(kind: WindowKind, family: Family) -> Result<f64> {
    let kind = match kind {
        // C = 0 would give b = 0; use the Bartlett-optimal size instead
        WindowKind::FlatTop => WindowKind::Bartlett,
        k => k,
    };
    let c = mse_constants(kind, family)?;
    Ok((c.c * c.c / c.s).cbrt())
}

/// MSE-optimal batch size from pilot estimates,
/// `round((C²/S)^{1/3} · (ΣΓ²/ΣΣ²)^{1/3} · n^{1/3})`.
pub fn optimal_batchsize(
    pilot: &PilotEstimates,
    n: usize,
    kind: WindowKind,
    family: Family,
    flat_top_target: bool,
) -> Result<BatchSizeResult> {
    let constant = family_constant(kind, family)?;
    let coefficient = pilot.coefficient()?;
    let raw = constant * coefficient * (n as f64).cbrt();
    let rounded = if raw.is_finite() { raw.round() as usize } else { usize::MAX };
    Ok(BatchSizeResult {
        b: clamp_batch_size(rounded, n, flat_top_target),
        coefficient: Some(coefficient),
        family_constant: Some(constant),
        method: match pilot.method {
            PilotMethod::Ar => SelectionMethod::Ar,
            PilotMethod::Nonparametric => SelectionMethod::Np,
        },
        n,
    })
}

//! Lag windows, their difference operators and MSE constants.
//!
//! Bartlett and flat-top windows take rational values `num(k)/b` for integer
//! lags, so their differences are formed on integer numerators and divided by
//! `b` only at the end. Identities such as `Σ kΔ₂w(k) = 1` then hold exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Bartlett,
    FlatTop,
    TukeyHanning,
}

impl WindowKind {
    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Bartlett => "bartlett",
            WindowKind::FlatTop => "flat-top",
            WindowKind::TukeyHanning => "tukey-hanning",
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bartlett" => Ok(WindowKind::Bartlett),
            "flat-top" | "flattop" | "ft" => Ok(WindowKind::FlatTop),
            "tukey-hanning" | "tukeyhanning" | "th" => Ok(WindowKind::TukeyHanning),
            _ => Err(Error::InvalidArgument(format!("unknown window {s:?}"))),
        }
    }
}

/// Batch means (non-overlapping) or overlapping batch means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bm,
    Obm,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Bm => "bm",
            Family::Obm => "obm",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bm" => Ok(Family::Bm),
            "obm" => Ok(Family::Obm),
            _ => Err(Error::InvalidArgument(format!("unknown family {s:?}"))),
        }
    }
}

/// A lag window with batch size (bandwidth) `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagWindow {
    kind: WindowKind,
    b: usize,
}

impl LagWindow {
    pub fn new(kind: WindowKind, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidArgument("window batch size must be >= 1".into()));
        }
        if kind == WindowKind::FlatTop && b % 2 != 0 {
            return Err(Error::OddFlatTop(b));
        }
        Ok(LagWindow { kind, b })
    }

    pub fn bartlett(b: usize) -> Result<Self> {
        Self::new(WindowKind::Bartlett, b)
    }

    pub fn flat_top(b: usize) -> Result<Self> {
        Self::new(WindowKind::FlatTop, b)
    }

    pub fn tukey_hanning(b: usize) -> Result<Self> {
        Self::new(WindowKind::TukeyHanning, b)
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// `b·w(k)` as an integer, for the piecewise-linear windows.
    fn numerator(&self, k: i64) -> Option<i64> {
        let k = k.unsigned_abs() as i64;
        let b = self.b as i64;
        match self.kind {
            WindowKind::Bartlett => Some(if k <= b { b - k } else { 0 }),
            WindowKind::FlatTop => Some(if 2 * k <= b {
                b
            } else if k <= b {
                2 * (b - k)
            } else {
                0
            }),
            WindowKind::TukeyHanning => None,
        }
    }

    /// `w(k)`; zero outside the support.
    pub fn value(&self, k: i64) -> f64 {
        match self.numerator(k) {
            Some(num) => num as f64 / self.b as f64,
            None => {
                let k = k.unsigned_abs() as f64;
                let b = self.b as f64;
                if k <= b {
                    0.5 * (1.0 + (std::f64::consts::PI * k / b).cos())
                } else {
                    0.0
                }
            }
        }
    }

    /// `Δ₁w(k) = w(k-1) - w(k)`.
    pub fn delta1(&self, k: i64) -> f64 {
        match (self.numerator(k - 1), self.numerator(k)) {
            (Some(a), Some(c)) => (a - c) as f64 / self.b as f64,
            _ => self.value(k - 1) - self.value(k),
        }
    }

    /// `b·Δ₂w(k)` as an integer for the piecewise-linear windows.
    fn delta2_numerator(&self, k: i64) -> Option<i64> {
        Some(self.numerator(k - 1)? - 2 * self.numerator(k)? + self.numerator(k + 1)?)
    }

    /// `Δ₂w(k) = w(k-1) - 2w(k) + w(k+1)`.
    pub fn delta2(&self, k: i64) -> f64 {
        match self.delta2_numerator(k) {
            Some(num) => num as f64 / self.b as f64,
            None => self.value(k - 1) - 2.0 * self.value(k) + self.value(k + 1),
        }
    }

    /// Lags `k ∈ 1..=b` with `Δ₂w(k) ≠ 0`, paired with `Δ₂w(k)`.
    pub fn delta2_support(&self) -> Vec<(usize, f64)> {
        match self.kind {
            WindowKind::Bartlett => vec![(self.b, 1.0 / self.b as f64)],
            WindowKind::FlatTop => {
                let b = self.b as f64;
                vec![(self.b / 2, -2.0 / b), (self.b, 2.0 / b)]
            }
            WindowKind::TukeyHanning => (1..=self.b)
                .map(|k| (k, self.delta2(k as i64)))
                .filter(|&(_, d)| d != 0.0)
                .collect(),
        }
    }
}

/// Bias constant `C` and variance constant `S` of the element-wise MSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseConstants {
    pub c: f64,
    pub s: f64,
    pub family: Family,
}

pub fn mse_constants(kind: WindowKind, family: Family) -> Result<MseConstants> {
    let (c, s) = match (kind, family) {
        (WindowKind::Bartlett, Family::Obm) => (1.0, 2.0 / 3.0),
        (WindowKind::Bartlett, Family::Bm) => (1.0, 1.0),
        (WindowKind::FlatTop, Family::Obm) => (0.0, 4.0 / 3.0),
        (WindowKind::FlatTop, Family::Bm) => (0.0, 5.0 / 2.0),
        (WindowKind::TukeyHanning, _) => {
            return Err(Error::UnsupportedConstants(WindowKind::TukeyHanning.name()))
        }
    };
    Ok(MseConstants { c, s, family })
}

/// Numerical check of the MSE-theorem window conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub kind: WindowKind,
    pub b: usize,
    /// `Σ_{k=1}^{b} kΔ₂w(k)`, should be 1.
    pub sum_k_delta2: f64,
    pub sum_sq_delta2: f64,
    pub expected_sum_sq_delta2: f64,
    pub sum_abs_delta2: f64,
    pub expected_sum_abs_delta2: f64,
    /// `C = bΣΔ₂w(k)`.
    pub c: f64,
    pub expected_c: f64,
    pub passed: bool,
}

const WINDOW_TOL: f64 = 1e-12;

pub fn verify_window_conditions(window: &LagWindow) -> Result<WindowReport> {
    let b = window.b();
    let bi = b as i64;
    let (expected_sq, expected_abs, expected_c) = match window.kind() {
        WindowKind::Bartlett => (1i64, 1i64, 1.0),
        WindowKind::FlatTop => (8, 4, 0.0),
        WindowKind::TukeyHanning => {
            return Err(Error::UnsupportedConstants(WindowKind::TukeyHanning.name()))
        }
    };
    let nums: Vec<i64> = (1..=bi)
        .map(|k| window.delta2_numerator(k).expect("piecewise-linear window"))
        .collect();
    let sum_k: i64 = nums.iter().zip(1..).map(|(d, k)| k * d).sum();
    let sum_sq: i64 = nums.iter().map(|d| d * d).sum();
    let sum_abs: i64 = nums.iter().map(|d| d.abs()).sum();
    let sum: i64 = nums.iter().sum();

    let bf = b as f64;
    let sum_k_delta2 = sum_k as f64 / bf;
    let sum_sq_delta2 = sum_sq as f64 / (bf * bf);
    let expected_sum_sq_delta2 = expected_sq as f64 / (bf * bf);
    let sum_abs_delta2 = sum_abs as f64 / bf;
    let expected_sum_abs_delta2 = expected_abs as f64 / bf;
    let c = sum as f64;

    let passed = (sum_k_delta2 - 1.0).abs() <= WINDOW_TOL
        && sum_sq == expected_sq
        && sum_abs == expected_abs
        && c == expected_c;
    Ok(WindowReport {
        kind: window.kind(),
        b,
        sum_k_delta2,
        sum_sq_delta2,
        expected_sum_sq_delta2,
        sum_abs_delta2,
        expected_sum_abs_delta2,
        c,
        expected_c,
        passed,
    })
}

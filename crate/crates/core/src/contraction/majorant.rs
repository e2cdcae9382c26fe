//! Diagonal-plus-rank-one majorant `B(r) = D(r) + 1 v(r)^T`, the variational
//! function `V(r)` and its minimization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::LipschitzProfile;

/// The two summand forms of `v(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// `(K + a)/r + a beta/(1 - beta r)`.
    A,
    /// `K/r + a/(1 - beta r)`.
    B,
}

impl std::str::FromStr for Variant {
    type Err = MfgError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            _ => Err(MfgError::Invalid(format!("unknown variant \"{s}\""))),
        }
    }
}

pub const GRID_POINTS: usize = 2048;
pub const INSET: f64 = 1e-9;

pub fn v_entry(p: &LipschitzProfile, i: usize, r: f64, variant: Variant) -> f64 {
    let (k, a, b) = (p.k(i), p.a(i), p.beta(i));
    match variant {
        Variant::A => (k + a) / r + a * b / (1.0 - b * r),
        Variant::B => k / r + a / (1.0 - b * r),
    }
}

pub fn v_vector(p: &LipschitzProfile, r: f64, variant: Variant) -> Vec<f64> {
    (0..p.n()).map(|i| v_entry(p, i, r, variant)).collect()
}

/// Dense `D(r) + 1 v(r)^T`.
pub fn majorant_matrix(p: &LipschitzProfile, r: f64, variant: Variant) -> DMatrix<f64> {
    let v = v_vector(p, r, variant);
    let n = p.n();
    DMatrix::from_fn(n, n, |i, j| v[j] + if i == j { p.d(i) / r } else { 0.0 })
}

/// `rho(B(r))` from the secular equation `sum_i v_i / (e - d_i/r) = 1`.
pub fn rho_b(p: &LipschitzProfile, r: f64, variant: Variant) -> f64 {
    let v = v_vector(p, r, variant);
    let dr: Vec<f64> = (0..p.n()).map(|i| p.d(i) / r).collect();
    let dmax = dr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let active: Vec<usize> = (0..p.n()).filter(|&i| v[i] > 0.0).collect();
    if active.is_empty() {
        return dmax;
    }
    let lower = active.iter().map(|&i| dr[i]).fold(f64::NEG_INFINITY, f64::max);
    // work in the offset delta = e - lower so the closest pole stays exact
    let gaps: Vec<f64> = active.iter().map(|&i| lower - dr[i]).collect();
    let f = |delta: f64| -> f64 { active.iter().zip(&gaps).map(|(&i, g)| v[i] / (delta + g)).sum::<f64>() };
    let mut lo = 0.0;
    let mut hi: f64 = active.iter().map(|&i| v[i]).sum::<f64>().max(f64::MIN_POSITIVE);
    while f(hi) > 1.0 {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = lower + 0.5 * (lo + hi);
    root.max(dmax)
}

/// `|sum_i v_i / (rho - d_i/r) - 1|`.
pub fn secular_residual(p: &LipschitzProfile, r: f64, variant: Variant, rho: f64) -> f64 {
    let s: f64 = (0..p.n()).map(|i| v_entry(p, i, r, variant) / (rho - p.d(i) / r)).sum();
    (s - 1.0).abs()
}

/// Open interval `(Kbar_inf, 1/beta_max)`, or `None` when empty.
pub fn r_interval(p: &LipschitzProfile) -> Option<(f64, f64)> {
    let (lo, hi) = (p.kbar_inf, 1.0 / p.beta_max);
    (lo < hi).then_some((lo, hi))
}

pub fn variational_v(p: &LipschitzProfile, r: f64, variant: Variant) -> Result<f64> {
    let (lo, hi) = (p.kbar_inf, 1.0 / p.beta_max);
    if !(r > lo && r < hi) {
        return Err(MfgError::DomainError { r, lo, hi });
    }
    Ok(v_unchecked(p, r, variant))
}

fn v_unchecked(p: &LipschitzProfile, r: f64, variant: Variant) -> f64 {
    (0..p.n()).map(|i| v_entry(p, i, r, variant) / (1.0 - p.d(i) / r)).sum()
}

/// Inset endpoints and the log-spaced grid used for every 1-D scan in `r`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let w = hi - lo;
    let (a, b) = (lo + INSET * w, hi - INSET * w);
    let (la, lb) = (a.ln(), b.ln());
    (0..points).map(|k| (la + (lb - la) * k as f64 / (points - 1) as f64).exp()).collect()
}

/// Golden-section minimization of `f` on `[a, b]` down to width `tol`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Grid minimum followed by golden refinement on the neighbouring bracket.
pub fn grid_then_refine(grid: &[f64], values: &[f64], f: impl Fn(f64) -> f64, tol: f64) -> (f64, f64) {
    let (mut best, mut best_v) = (0, f64::INFINITY);
    for (k, &v) in values.iter().enumerate() {
        if v < best_v {
            best = k;
            best_v = v;
        }
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(grid.len() - 1)];
    let (x, fx) = golden_min(&f, a, b, tol);
    if fx <= best_v {
        (x, fx)
    } else {
        (grid[best], best_v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    AsymptoticallyStationary,
    Stable,
    Unstable,
    NotCertified,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::AsymptoticallyStationary => "asymptotically_stationary",
            Regime::Stable => "stable",
            Regime::Unstable => "unstable",
            Regime::NotCertified => "not_certified",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VMinimum {
    pub variant: Variant,
    pub r_star: Option<f64>,
    pub v_star: Option<f64>,
    pub certified: bool,
    pub regime: Regime,
    /// `V(1) < 1` with 1 inside the interval.
    pub asymptotically_stationary: bool,
    /// Some grid `r > 1` has `V(r) < 1`.
    pub stable: bool,
    /// Largest grid `r` with `V(r) < 1`.
    pub r_max_certified: Option<f64>,
    pub v_at_one: Option<f64>,
    pub reason: Option<String>,
}

pub fn minimize_v(p: &LipschitzProfile, variant: Variant) -> VMinimum {
    let Some((lo, hi)) = r_interval(p) else {
        return VMinimum {
            variant,
            r_star: None,
            v_star: None,
            certified: false,
            regime: Regime::NotCertified,
            asymptotically_stationary: false,
            stable: false,
            r_max_certified: None,
            v_at_one: None,
            reason: Some("empty r-interval".into()),
        };
    };
    let grid = log_grid(lo, hi, GRID_POINTS);
    let values: Vec<f64> = grid.iter().map(|&r| v_unchecked(p, r, variant)).collect();
    let (r_star, v_star) = grid_then_refine(&grid, &values, |r| v_unchecked(p, r, variant), 1e-10);
    let certified = v_star < 1.0;
    let v_at_one = (lo < 1.0 && 1.0 < hi).then(|| v_unchecked(p, 1.0, variant));
    let asymptotically_stationary = v_at_one.is_some_and(|v| v < 1.0);
    let stable = grid.iter().zip(&values).any(|(&r, &v)| r > 1.0 && v < 1.0);
    let r_max_certified = grid.iter().zip(&values).filter(|(_, &v)| v < 1.0).map(|(&r, _)| r).next_back();
    let regime = if !certified {
        Regime::NotCertified
    } else if asymptotically_stationary {
        Regime::AsymptoticallyStationary
    } else if stable {
        Regime::Stable
    } else {
        Regime::Unstable
    };
    VMinimum {
        variant,
        r_star: Some(r_star),
        v_star: Some(v_star),
        certified,
        regime,
        asymptotically_stationary,
        stable,
        r_max_certified,
        v_at_one,
        reason: None,
    }
}

/// `inf_{0 < r < 1/beta_max} rho(B(r))` and its minimizer.
pub fn inf_rho_b(p: &LipschitzProfile, variant: Variant) -> (f64, f64) {
    let hi = 1.0 / p.beta_max;
    let grid = log_grid(1e-9 * hi, hi, GRID_POINTS);
    let values: Vec<f64> = grid.iter().map(|&r| rho_b(p, r, variant)).collect();
    grid_then_refine(&grid, &values, |r| rho_b(p, r, variant), 1e-10)
}

//! Horizon scans, the constraint equation in `z`, and Perron-vector ratios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::finite::FiniteHorizonMatrix;
use super::majorant::{golden_min, inf_rho_b, Variant};
use crate::error::{MfgError, Result};
use crate::model::LipschitzProfile;
use crate::spectral::PerronOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub horizon: usize,
    pub rho_st: f64,
    pub cw_upper: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitScan {
    pub variant: Variant,
    pub rows: Vec<ScanRow>,
    pub inf_rho_b: f64,
    pub r_star: f64,
    /// `rho(S_T)` nondecreasing along the sorted horizons (1e-10 slack).
    pub monotone: bool,
    /// Every gap at least `-1e-10`.
    pub majorized: bool,
}

pub fn limit_consistency_scan(p: &LipschitzProfile, horizons: &[usize], variant: Variant) -> Result<LimitScan> {
    limit_consistency_scan_with(p, horizons, variant, &PerronOptions::default())
}

pub fn limit_consistency_scan_with(
    p: &LipschitzProfile,
    horizons: &[usize],
    variant: Variant,
    opts: &PerronOptions,
) -> Result<LimitScan> {
    let mut hs = horizons.to_vec();
    hs.sort_unstable();
    hs.dedup();
    let (r_star, inf) = inf_rho_b(p, variant);
    let rows: Vec<ScanRow> = hs
        .par_iter()
        .map(|&h| {
            let r = FiniteHorizonMatrix::new(p, h)?.radius(opts)?;
            Ok(ScanRow { horizon: h, rho_st: r.rho, cw_upper: r.cw_upper, gap: inf - r.rho })
        })
        .collect::<Result<_>>()?;
    let monotone = rows.windows(2).all(|w| w[1].rho_st >= w[0].rho_st - 1e-10);
    let majorized = rows.iter().all(|row| row.gap >= -1e-10);
    Ok(LimitScan { variant, rows, inf_rho_b: inf, r_star, monotone, majorized })
}

pub const ROOT_GRID: usize = 4096;

/// `sum_i n_i(z) / (lambda - d_i z) - 1` with the variant's numerator.
pub fn constraint_g(p: &LipschitzProfile, z: f64, lambda: f64, variant: Variant) -> f64 {
    (0..p.n())
        .map(|i| {
            let (k, a, b, d) = (p.k(i), p.a(i), p.beta(i), p.d(i));
            let num = match variant {
                Variant::A => (k + a) * z + a * b * z / (z - b),
                Variant::B => k * z + a * z / (z - b),
            };
            num / (lambda - d * z)
        })
        .sum::<f64>()
        - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRoots {
    pub variant: Variant,
    pub lambda: f64,
    pub interval: (f64, f64),
    /// Sign changes of `G`, bisected to 1e-12.
    pub roots: Vec<f64>,
    /// Minimizer of `|G|` on the interval and the value of `G` there; a
    /// tangential root shows up here when no sign change exists.
    pub closest: Option<(f64, f64)>,
}

impl ConstraintRoots {
    /// Smallest sign-change root, else the closest approach.
    pub fn z0(&self) -> Option<f64> {
        self.roots.first().copied().or(self.closest.map(|c| c.0))
    }
}

pub fn constraint_roots(p: &LipschitzProfile, lambda: f64, variant: Variant) -> Result<ConstraintRoots> {
    let dmax = (0..p.n()).map(|i| p.d(i)).fold(0.0, f64::max);
    let lo = p.beta_max;
    if !(lambda > dmax) {
        return Err(MfgError::Invalid(format!("lambda = {lambda} must exceed max(Kbar - K) = {dmax}")));
    }
    if dmax == 0.0 {
        // every K_i vanishes, so G is identically -1
        return Ok(ConstraintRoots { variant, lambda, interval: (lo, f64::INFINITY), roots: vec![], closest: None });
    }
    let hi = lambda / dmax;
    if !(lo < hi) {
        return Err(MfgError::EmptyInterval(format!("beta_max = {lo} >= lambda / max(Kbar - K) = {hi}")));
    }
    let g = |z: f64| constraint_g(p, z, lambda, variant);
    let grid: Vec<f64> = (1..=ROOT_GRID).map(|k| lo + (hi - lo) * k as f64 / (ROOT_GRID + 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&z| g(z)).collect();
    let mut roots = Vec::new();
    for k in 0..grid.len() {
        if vals[k] == 0.0 {
            roots.push(grid[k]);
            continue;
        }
        if k + 1 < grid.len() && vals[k + 1] != 0.0 && vals[k].is_finite() && vals[k + 1].is_finite() && (vals[k] < 0.0) != (vals[k + 1] < 0.0) {
            let (mut a, mut b) = (grid[k], grid[k + 1]);
            let neg_left = vals[k] < 0.0;
            while b - a > 1e-12 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if (g(m) < 0.0) == neg_left {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    // individual poles sit at beta_i <= beta_max, below the scanned interval
    let min_pole = (0..p.n()).map(|i| p.beta(i)).fold(f64::INFINITY, f64::min);
    roots.retain(|&z| z > min_pole);
    let best = (0..grid.len()).filter(|&k| vals[k].is_finite()).min_by(|&x, &y| vals[x].abs().total_cmp(&vals[y].abs()));
    let closest = best.map(|k| {
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(grid.len() - 1)];
        let (z, _) = golden_min(|z| g(z).abs(), a, b, 1e-12);
        let (z, gz) = if g(z).abs() <= vals[k].abs() { (z, g(z)) } else { (grid[k], vals[k]) };
        (z, gz)
    });
    Ok(ConstraintRoots { variant, lambda, interval: (lo, hi), roots, closest })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronRatioDiagnostic {
    pub horizon: usize,
    pub rho_st: f64,
    /// `ratios[i][k] = u_i(k+1) / u_i(k)`.
    pub ratios: Vec<Vec<f64>>,
    /// `cross[i-1][k] = u_i(k) / u_0(k)` for `i >= 1`.
    pub cross_ratios: Vec<Vec<f64>>,
    /// Middle-third mean ratio per population.
    pub tail_per_population: Vec<f64>,
    pub tail_estimate: f64,
    /// Middle-third `(max - min) / mean` of the consecutive ratios, per population.
    pub ratio_spread: Vec<f64>,
    /// Middle-third `(max - min) / mean` of each cross-ratio sequence.
    pub cross_spread: Vec<f64>,
    pub roots: Option<ConstraintRoots>,
    /// `1 / z0` from the constraint equation at `lambda = rho(S_T)`.
    pub predicted_ratio: Option<f64>,
    pub relative_error: Option<f64>,
}

fn middle_third(len: usize) -> std::ops::Range<usize> {
    len / 3..(2 * len).div_ceil(3)
}

fn spread(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let (mn, mx) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    (mx - mn) / mean.abs()
}

pub fn perron_ratio_diagnostic(p: &LipschitzProfile, horizon: usize, variant: Variant) -> Result<PerronRatioDiagnostic> {
    if horizon < 50 {
        return Err(MfgError::Invalid(format!("ratio diagnostic needs T >= 50, got {horizon}")));
    }
    let s = FiniteHorizonMatrix::new(p, horizon)?;
    let res = s.radius(&PerronOptions::default())?;
    let n = s.block();
    let u = &res.vector;
    let ratios: Vec<Vec<f64>> = (0..p.n()).map(|i| (0..n - 1).map(|k| u[i * n + k + 1] / u[i * n + k]).collect()).collect();
    let cross_ratios: Vec<Vec<f64>> = (1..p.n()).map(|i| (0..n).map(|k| u[i * n + k] / u[k]).collect()).collect();
    let mid = middle_third(n - 1);
    let tail_per_population: Vec<f64> = ratios.iter().map(|r| r[mid.clone()].iter().sum::<f64>() / mid.len() as f64).collect();
    let tail_estimate = tail_per_population.iter().sum::<f64>() / p.n() as f64;
    let ratio_spread = ratios.iter().map(|r| spread(&r[mid.clone()])).collect();
    let cmid = middle_third(n);
    let cross_spread = cross_ratios.iter().map(|c| spread(&c[cmid.clone()])).collect();
    let roots = constraint_roots(p, res.rho, variant).ok();
    let predicted_ratio = roots.as_ref().and_then(|r| r.z0()).map(|z| 1.0 / z);
    let relative_error = predicted_ratio.map(|q| (tail_estimate - q).abs() / q);
    Ok(PerronRatioDiagnostic {
        horizon,
        rho_st: res.rho,
        ratios,
        cross_ratios,
        tail_per_population,
        tail_estimate,
        ratio_spread,
        cross_spread,
        roots,
        predicted_ratio,
        relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::majorant::rho_b;
    use crate::model::PopulationConstants;

    fn prof(v: &[(f64, f64, f64, f64)]) -> LipschitzProfile {
        LipschitzProfile::new(v.iter().map(|&(l, k, beta, rho)| PopulationConstants { l, k, beta, rho, m: 1.0 }).collect()).unwrap()
    }

    #[test]
    fn horizon_two_single_population() {
        let p = prof(&[(0.6, 0.2, 0.5, 1.0)]);
        let scan = limit_consistency_scan(&p, &[2], Variant::A).unwrap();
        assert_eq!(scan.rows[0].rho_st, p.a(0) * 0.5);
    }

    #[test]
    fn zero_k_has_no_roots() {
        let p = prof(&[(1.0, 0.0, 0.5, 1.0), (1.0, 0.0, 0.3, 1.0)]);
        let r = constraint_roots(&p, 0.5, Variant::B).unwrap();
        assert!(r.roots.is_empty());
        assert_eq!(constraint_g(&p, 0.9, 0.5, Variant::B), -1.0);
    }

    fn quadratic_roots(qa: f64, qb: f64, qc: f64) -> Vec<f64> {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return vec![];
        }
        let s = disc.sqrt();
        // stable form
        let q = -0.5 * (qb + qb.signum() * s);
        let mut v = vec![q / qa, qc / q];
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn single_population_quadratics() {
        let p = prof(&[(0.5, 0.2, 0.6, 1.0)]);
        let (k, a, b, d) = (p.k(0), p.a(0), 0.6, p.d(0));
        for &lam in &[0.6, 0.8, 1.0, 1.3] {
            // (K + d) z^2 - (K beta - a + lambda + d beta) z + lambda beta = 0
            let want_b = quadratic_roots(k + d, -(k * b - a + lam + d * b), lam * b);
            // (K + a + d) z^2 - (K beta + lambda + d beta) z + lambda beta = 0
            let want_a = quadratic_roots(k + a + d, -(k * b + lam + d * b), lam * b);
            for (var, want) in [(Variant::B, want_b), (Variant::A, want_a)] {
                let Ok(got) = constraint_roots(&p, lam, var) else { continue };
                let (lo, hi) = got.interval;
                let inside: Vec<f64> = want.into_iter().filter(|&z| z > lo && z < hi).collect();
                assert_eq!(got.roots.len(), inside.len(), "{var:?} lambda={lam}");
                for (g, w) in got.roots.iter().zip(&inside) {
                    assert!((g - w).abs() < 1e-9, "{g} vs {w}");
                }
            }
        }
    }

    #[test]
    fn roots_consistent_with_secular_radius() {
        let p = prof(&[(0.5, 0.1, 0.5, 1.0), (0.3, 0.2, 0.7, 2.0)]);
        for var in [Variant::A, Variant::B] {
            for &zbar in &[1.2, 1.5, 2.5] {
                let lam = rho_b(&p, 1.0 / zbar, var);
                if let Ok(r) = constraint_roots(&p, lam, var) {
                    if zbar > r.interval.0 && zbar < r.interval.1 {
                        assert!(r.roots.iter().any(|z| (z - zbar).abs() < 1e-8), "{var:?} {zbar} {:?}", r.roots);
                    }
                }
            }
        }
    }

    #[test]
    fn identical_populations_cross_ratio_one() {
        let p = prof(&[(0.5, 0.1, 0.5, 1.0), (0.5, 0.1, 0.5, 1.0)]);
        let d = perron_ratio_diagnostic(&p, 60, Variant::A).unwrap();
        assert!(d.cross_ratios[0].iter().all(|&c| (c - 1.0).abs() < 1e-9));
    }
}

//! Lyapunov weights for the finite-horizon matrix and measured
//! horizon/stationary error rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::{majorant_matrix, minimize_v, rho_b, stationary_certificate, FiniteHorizonMatrix, Variant};
use crate::error::{MfgError, Result};
use crate::model::{estimate_lipschitz, l1, LipschitzProfile, MeasureSlice, MfgModel};
use crate::solvers::{solve_finite_horizon, solve_stationary, SolveOptions};
use crate::spectral::{perron, perron_shifted, PerronOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovWeights {
    pub t_star: f64,
    pub horizon: usize,
    /// Positive vector with `B(t_star) c = rho c`, summing to 1.
    pub c: Vec<f64>,
    /// `c_i (t^{T-2}, ..., t, 1)` per population, scaled to a unit maximum.
    pub weights: Vec<f64>,
    pub rho_b: f64,
    /// `max_j (S_T^T w)_j / w_j - rho`.
    pub max_excess: f64,
}

/// Weights majorizing `S_T^T` by `rho(B(t_star))` (variant A). The check is
/// applied per entry relative to the weight, which makes it independent of
/// the overall scale of the ladder.
pub fn lyapunov_weights(p: &LipschitzProfile, horizon: usize, t_star: f64) -> Result<LyapunovWeights> {
    let (lo, hi) = (p.kbar_inf, 1.0 / p.beta_max);
    if !(t_star > lo && t_star < hi) {
        return Err(MfgError::DomainError { r: t_star, lo, hi });
    }
    let b = majorant_matrix(p, t_star, Variant::A);
    let opts = PerronOptions::default().with_tol(1e-13);
    let pr = match perron(&b, &opts) {
        Ok(r) => r,
        Err(_) => perron_shifted(&b, &opts)?,
    };
    let sum: f64 = pr.vector.iter().sum();
    let c: Vec<f64> = pr.vector.iter().map(|v| v / sum).collect();
    let s = FiniteHorizonMatrix::new(p, horizon)?;
    let n = s.block();
    // log-scale ladder to keep the largest entry at 1
    let top = (0..p.n()).map(|i| c[i].ln() + (n - 1) as f64 * t_star.ln()).fold(f64::NEG_INFINITY, f64::max);
    let top = top.max((0..p.n()).map(|i| c[i].ln()).fold(f64::NEG_INFINITY, f64::max));
    let mut weights = vec![0.0; p.n() * n];
    for i in 0..p.n() {
        for m in 0..n {
            weights[i * n + m] = (c[i].ln() + (n - 1 - m) as f64 * t_star.ln() - top).exp();
        }
    }
    let rho = rho_b(p, t_star, Variant::A);
    let mut out = vec![0.0; weights.len()];
    s.transpose_matvec(&weights, &mut out);
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst = 0;
    for j in 0..weights.len() {
        let e = out[j] / weights[j] - rho;
        if e > max_excess {
            max_excess = e;
            worst = j;
        }
    }
    if max_excess > 1e-10 {
        return Err(MfgError::MajorizationViolation { index: worst, excess: max_excess });
    }
    Ok(LyapunovWeights { t_star, horizon, c, weights, rho_b: rho, max_excess })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t_probe: usize,
    pub horizons: Vec<usize>,
    pub t_ref: usize,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log e(T)` against `T`.
    pub slope: Option<f64>,
    pub t_o: f64,
    pub predicted_slope: f64,
    /// `slope / predicted_slope`.
    pub agreement: Option<f64>,
}

pub const ERROR_FLOOR: f64 = 1e-12;

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Largest certified `t_o > 1`, or `NotStable`.
pub fn stable_rate(p: &LipschitzProfile) -> Result<f64> {
    let v = minimize_v(p, Variant::A);
    match v.r_max_certified {
        Some(t) if v.stable && t > 1.0 => Ok(t),
        _ => Err(MfgError::NotStable(format!("no r > 1 with V_A(r) < 1 (regime {})", v.regime))),
    }
}

pub fn horizon_decay_experiment(
    model: &MfgModel,
    tau0: &MeasureSlice,
    t_probe: usize,
    horizons: &[usize],
    t_ref: usize,
    opts: &SolveOptions,
) -> Result<DecayFit> {
    let profile = estimate_lipschitz(model)?.profile;
    let t_o = stable_rate(&profile)?;
    let tmax = horizons.iter().copied().max().unwrap_or(0);
    if t_ref < tmax + 40 {
        return Err(MfgError::Invalid(format!("T_ref = {t_ref} must be at least max(T_list) + 40 = {}", tmax + 40)));
    }
    if horizons.iter().any(|&t| t_probe >= t) {
        return Err(MfgError::Invalid("t_probe must be below every horizon".into()));
    }
    let mut all: Vec<usize> = horizons.to_vec();
    all.push(t_ref);
    let sols = all
        .par_iter()
        .map(|&t| solve_finite_horizon(model, tau0, t, opts).and_then(|s| s.check()))
        .collect::<Result<Vec<_>>>()?;
    let reference = &sols.last().unwrap().flow.data[t_probe];
    let errors: Vec<f64> = sols[..horizons.len()]
        .iter()
        .map(|s| s.flow.data[t_probe].iter().zip(reference).map(|(a, b)| l1(a, b)).sum())
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        horizons.iter().zip(&errors).filter(|(_, &e)| e > ERROR_FLOOR).map(|(&t, &e)| (t as f64, e.ln())).unzip();
    let slope = least_squares_slope(&xs, &ys);
    let predicted_slope = -t_o.ln();
    Ok(DecayFit {
        t_probe,
        horizons: horizons.to_vec(),
        t_ref,
        errors,
        slope,
        t_o,
        predicted_slope,
        agreement: slope.map(|s| s / predicted_slope),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub t_big: usize,
    pub k: Vec<usize>,
    pub g: Vec<f64>,
    /// Per-step ratio `(g(k') / g(k))^{1/(k'-k)}` between consecutive entries.
    pub envelope_ratio: Vec<f64>,
    /// `max_j (K_j + a_j) / (1 - rho(B(t_*)))` at the V-minimizer.
    pub theorem_base: f64,
    pub t_star: f64,
    pub stationary_residual: f64,
}

pub fn stationary_gap_experiment(
    model: &MfgModel,
    tau0: &MeasureSlice,
    k_list: &[usize],
    t_big: usize,
    opts: &SolveOptions,
) -> Result<GapTable> {
    let p = estimate_lipschitz(model)?.profile;
    if !stationary_certificate(&p).certified {
        return Err(MfgError::NotStable("stationary certificate does not hold".into()));
    }
    stable_rate(&p)?;
    let v = minimize_v(&p, Variant::A);
    let t_star = v.r_star.expect("certified implies a minimizer");
    let rho = rho_b(&p, t_star, Variant::A);
    let theorem_base = (0..p.n()).map(|j| p.k(j) + p.a(j)).fold(0.0, f64::max) / (1.0 - rho);
    let half = t_big / 2;
    if k_list.iter().any(|&k| k > half) {
        return Err(MfgError::Invalid(format!("every k must be at most T_big / 2 = {half}")));
    }
    let (stat, fin) = rayon::join(|| solve_stationary(model, tau0, opts), || solve_finite_horizon(model, tau0, t_big, opts));
    let stat = stat?.check()?;
    let fin = fin?.check()?;
    let dist: Vec<f64> = (0..=half)
        .map(|t| fin.flow.data[t].iter().zip(&stat.measure).map(|(a, b)| l1(a, b)).fold(0.0, f64::max))
        .collect();
    let g: Vec<f64> = k_list.iter().map(|&k| dist[k..=half].iter().copied().fold(0.0, f64::max)).collect();
    let envelope_ratio = k_list
        .windows(2)
        .zip(g.windows(2))
        .map(|(k, gg)| if gg[0] > 0.0 { (gg[1] / gg[0]).powf(1.0 / (k[1] - k[0]) as f64) } else { 0.0 })
        .collect();
    Ok(GapTable {
        t_big,
        k: k_list.to_vec(),
        g,
        envelope_ratio,
        theorem_base,
        t_star,
        stationary_residual: stat.trace.residuals.last().copied().unwrap_or(0.0),
    })
}

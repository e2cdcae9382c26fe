//! Quasi-static stationary iteration and the finite-horizon forward/backward
//! iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::{slice_distance, MeasureSlice, MfgModel, StateMeasureFlow};
use crate::operators::{bellman_on_slice, h1_slice, h2_slice, Entropy, PolicyFlow, QTable};

const INNER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Geometric mean of consecutive residual ratios over the last 20 steps.
    pub rate: Option<f64>,
}

impl SolveTrace {
    fn finish(residuals: Vec<f64>, converged: bool) -> Self {
        let rate = tail_rate(&residuals, 20);
        Self { iterations: residuals.len(), residuals, converged, rate }
    }
}

pub fn tail_rate(residuals: &[f64], window: usize) -> Option<f64> {
    if residuals.len() < 2 {
        return None;
    }
    let start = residuals.len().saturating_sub(window + 1);
    let tail = &residuals[start..];
    if tail.iter().any(|&r| r <= 0.0) {
        return None;
    }
    let logs: f64 = tail.windows(2).map(|w| (w[1] / w[0]).ln()).sum();
    Some((logs / (tail.len() - 1) as f64).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarySolution {
    pub policy: PolicyFlow,
    pub measure: MeasureSlice,
    pub q: Vec<QTable>,
    pub trace: SolveTrace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteHorizonSolution {
    pub policy: PolicyFlow,
    pub flow: StateMeasureFlow,
    /// `q[i][t]`.
    pub q: Vec<Vec<QTable>>,
    pub trace: SolveTrace,
}

macro_rules! impl_check {
    ($t:ty) => {
        impl $t {
            /// Turns a non-converged run into [`MfgError::IterationLimit`].
            pub fn check(self) -> Result<Self> {
                if self.trace.converged {
                    Ok(self)
                } else {
                    Err(MfgError::IterationLimit {
                        iterations: self.trace.iterations,
                        residual: self.trace.residuals.last().copied().unwrap_or(f64::NAN),
                    })
                }
            }
        }
    };
}
impl_check!(StationarySolution);
impl_check!(FiniteHorizonSolution);

/// One quasi-static step: best responses to `tau` and the induced measures.
pub fn stationary_step(model: &MfgModel, tau: &MeasureSlice, inner_eps: f64) -> Result<(MeasureSlice, Vec<QTable>)> {
    let parts: Vec<Result<(Vec<f64>, QTable)>> = (0..model.n_pops())
        .into_par_iter()
        .map(|i| {
            let slice = model.evaluate(i, tau);
            let q = bellman_on_slice(&slice, model, i, inner_eps, &Entropy)?;
            let next = h2_slice(&slice, &q, &tau[i], model.populations[i].rho, &Entropy);
            Ok((next, q))
        })
        .collect();
    let mut next = Vec::with_capacity(parts.len());
    let mut qs = Vec::with_capacity(parts.len());
    for p in parts {
        let (n, q) = p?;
        next.push(n);
        qs.push(q);
    }
    Ok((next, qs))
}

fn stationary_policy(model: &MfgModel, qs: &[QTable]) -> PolicyFlow {
    PolicyFlow { pi: vec![qs.iter().enumerate().map(|(i, q)| q.policy(model.populations[i].rho, &Entropy)).collect()] }
}

/// Runs the quasi-static iteration. A run that hits `max_iter` returns the
/// iterate with the smallest residual and `trace.converged == false`.
pub fn solve_stationary(model: &MfgModel, tau0: &MeasureSlice, opts: &SolveOptions) -> Result<StationarySolution> {
    // Bellman accuracy below ~1e-12 is lost to rounding in the sup norm
    let inner = (opts.tol / 10.0).max(INNER_FLOOR);
    let mut tau = tau0.clone();
    let mut residuals = Vec::new();
    let mut best = (f64::INFINITY, tau.clone());
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let (next, _) = stationary_step(model, &tau, inner)?;
        let r = slice_distance(&next, &tau);
        residuals.push(r);
        tau = next;
        if r < best.0 {
            best = (r, tau.clone());
        }
        if r <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        tau = best.1;
    }
    let qs: Vec<QTable> = (0..model.n_pops())
        .into_par_iter()
        .map(|i| bellman_on_slice(&model.evaluate(i, &tau), model, i, inner, &Entropy))
        .collect::<Result<_>>()?;
    Ok(StationarySolution { policy: stationary_policy(model, &qs), measure: tau, q: qs, trace: SolveTrace::finish(residuals, converged) })
}

/// Backward Q-flows of every population and the forward update of the
/// flow; slice 0 is copied from the input.
pub fn finite_horizon_step(model: &MfgModel, flow: &StateMeasureFlow) -> (StateMeasureFlow, Vec<Vec<QTable>>) {
    let horizon = flow.horizon();
    let per_pop: Vec<(Vec<Vec<f64>>, Vec<QTable>)> = (0..model.n_pops())
        .into_par_iter()
        .map(|i| {
            let p = &model.populations[i];
            let slices: Vec<_> = (0..horizon).map(|t| model.evaluate(i, flow.slice(t))).collect();
            let mut qs: Vec<QTable> = Vec::with_capacity(horizon);
            qs.push(QTable { owner: i, n_states: model.n_states, n_actions: model.n_actions, q: slices[horizon - 1].cost.clone() });
            for t in (0..horizon - 1).rev() {
                let nq = h1_slice(&slices[t], qs.last().unwrap(), p.beta, p.rho, &Entropy, i);
                qs.push(nq);
            }
            qs.reverse();
            let next: Vec<Vec<f64>> =
                (0..horizon - 1).map(|t| h2_slice(&slices[t], &qs[t], &flow.slice(t)[i], p.rho, &Entropy)).collect();
            (next, qs)
        })
        .collect();
    let mut data = vec![flow.slice(0).clone()];
    for t in 0..horizon - 1 {
        data.push(per_pop.iter().map(|(next, _)| next[t].clone()).collect());
    }
    let qs = per_pop.into_iter().map(|(_, q)| q).collect();
    (StateMeasureFlow { data }, qs)
}

fn flow_policy(model: &MfgModel, qs: &[Vec<QTable>], horizon: usize) -> PolicyFlow {
    let pi = (0..horizon)
        .map(|t| qs.iter().enumerate().map(|(i, qi)| qi[t].policy(model.populations[i].rho, &Entropy)).collect())
        .collect();
    PolicyFlow { pi }
}

/// Finite-horizon iteration started from `tau0` repeated at every slice.
pub fn solve_finite_horizon(
    model: &MfgModel,
    tau0: &MeasureSlice,
    horizon: usize,
    opts: &SolveOptions,
) -> Result<FiniteHorizonSolution> {
    if horizon < 2 {
        return Err(MfgError::Invalid(format!("horizon must be at least 2, got {horizon}")));
    }
    let mut flow = StateMeasureFlow::constant(tau0, horizon);
    let mut residuals = Vec::new();
    let mut best = (f64::INFINITY, flow.clone());
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let (next, _) = finite_horizon_step(model, &flow);
        let r = next.distance(&flow);
        residuals.push(r);
        flow = next;
        if r < best.0 {
            best = (r, flow.clone());
        }
        if r <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        flow = best.1;
    }
    let (_, qs) = finite_horizon_step(model, &flow);
    Ok(FiniteHorizonSolution { policy: flow_policy(model, &qs, horizon), flow, q: qs, trace: SolveTrace::finish(residuals, converged) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_affine_model, CostModel, KernelModel, RandomModelSpec};

    fn calm_spec(n: usize) -> RandomModelSpec {
        RandomModelSpec { n_pops: n, weight_scale: 0.2, eps: (0.05, 0.2), kernel_flatness: 0.6, ..Default::default() }
    }

    #[test]
    fn tail_rate_of_geometric_sequence() {
        let r: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        assert!((tail_rate(&r, 20).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(tail_rate(&[1.0], 20), None);
    }

    #[test]
    fn measure_independent_converges_after_first_update() {
        let mut m = random_affine_model(&calm_spec(2), 1);
        let nu = vec![0.5, 0.25, 0.25];
        for p in &mut m.populations {
            if let KernelModel::Mixture { p0, eps, .. } = &mut p.kernel {
                *eps = 0.0;
                p0.iter_mut().flatten().for_each(|r| *r = nu.clone());
            }
            if let CostModel::Affine { w, .. } = &mut p.cost {
                w.iter_mut().flatten().flatten().flatten().for_each(|v| *v = 0.0);
            }
        }
        let sol = solve_stationary(&m, &m.uniform_measure(), &SolveOptions::default()).unwrap();
        assert!(sol.trace.converged);
        assert_eq!(sol.trace.iterations, 2);
        assert_eq!(sol.trace.residuals[1], 0.0);
    }

    #[test]
    fn symmetric_populations_agree() {
        let mut m = random_affine_model(&calm_spec(2), 2);
        let mut p = m.populations[0].clone();
        if let CostModel::Affine { w, .. } = &mut p.cost {
            w[1] = w[0].clone();
        }
        if let KernelModel::Mixture { mats, lambda, .. } = &mut p.kernel {
            mats[1] = mats[0].clone();
            *lambda = vec![0.5, 0.5];
        }
        m.populations = vec![p.clone(), p];
        let sol = solve_stationary(&m, &m.uniform_measure(), &SolveOptions::default()).unwrap();
        assert!(sol.trace.converged);
        assert!(crate::model::l1(&sol.measure[0], &sol.measure[1]) <= 1e-9);
    }

    #[test]
    fn finite_horizon_two_slices() {
        let m = random_affine_model(&calm_spec(2), 3);
        let tau0 = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.1, 0.8]];
        let sol = solve_finite_horizon(&m, &tau0, 2, &SolveOptions::default()).unwrap();
        assert!(sol.trace.converged);
        assert_eq!(sol.flow.slice(0), &tau0);
        let (again, _) = finite_horizon_step(&m, &sol.flow);
        assert!(again.distance(&sol.flow) <= 2e-9);
        assert_eq!(sol.policy.pi.len(), 2);
    }

    #[test]
    fn rejects_short_horizon() {
        let m = random_affine_model(&calm_spec(1), 4);
        assert!(solve_finite_horizon(&m, &m.uniform_measure(), 1, &SolveOptions::default()).is_err());
    }

    #[test]
    fn iteration_limit_keeps_best() {
        let m = random_affine_model(&calm_spec(2), 5);
        let sol = solve_stationary(&m, &m.uniform_measure(), &SolveOptions { tol: 1e-300, max_iter: 3 }).unwrap();
        assert!(!sol.trace.converged);
        assert_eq!(sol.trace.iterations, 3);
        assert!(matches!(sol.check(), Err(MfgError::IterationLimit { iterations: 3, .. })));
    }
}

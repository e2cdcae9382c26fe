//! Regularized Bellman update, measure update and the softmin policy.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::{MfgModel, PopulationSlice, StateMeasureFlow};

/// Strongly convex regularizer on the action simplex, exposed through its
/// minimizer and minimum value of `u -> <q, u> + rho * Omega(u)`.
pub trait Regularizer: Send + Sync {
    fn argmin(&self, q: &[f64], rho: f64, out: &mut [f64]);
    fn min_value(&self, q: &[f64], rho: f64) -> f64;
}

/// `Omega(u) = sum u log u + log|A|`, nonnegative and zero at uniform.
#[derive(Debug, Clone, Copy, Default)]
pub struct Entropy;

/// `Omega(u) = sum u log u` without the shift.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawEntropy;

fn softmin_into(q: &[f64], rho: f64, out: &mut [f64]) {
    let qmin = q.iter().copied().fold(f64::INFINITY, f64::min);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(q) {
        *o = (-(v - qmin) / rho).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

/// `-rho log sum_a exp(-q_a / rho)`, shifted by the minimum.
fn log_sum_exp_min(q: &[f64], rho: f64) -> f64 {
    let qmin = q.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = q.iter().map(|&v| (-(v - qmin) / rho).exp()).sum();
    qmin - rho * s.ln()
}

impl Regularizer for Entropy {
    fn argmin(&self, q: &[f64], rho: f64, out: &mut [f64]) {
        softmin_into(q, rho, out)
    }
    fn min_value(&self, q: &[f64], rho: f64) -> f64 {
        log_sum_exp_min(q, rho) + rho * (q.len() as f64).ln()
    }
}

impl Regularizer for RawEntropy {
    fn argmin(&self, q: &[f64], rho: f64, out: &mut [f64]) {
        softmin_into(q, rho, out)
    }
    fn min_value(&self, q: &[f64], rho: f64) -> f64 {
        log_sum_exp_min(q, rho)
    }
}

/// `u(a) ∝ exp(-q(a) / rho)`.
pub fn softmin_policy(qrow: &[f64], rho: f64) -> Vec<f64> {
    let mut u = vec![0.0; qrow.len()];
    softmin_into(qrow, rho, &mut u);
    u
}

/// Discrete core `q[x][a]` of a candidate Q-function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub owner: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub q: Vec<f64>,
}

impl QTable {
    pub fn zeros(owner: usize, n_states: usize, n_actions: usize) -> Self {
        Self { owner, n_states, n_actions, q: vec![0.0; n_states * n_actions] }
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.q[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.q[x * self.n_actions + a]
    }

    pub fn sup_norm(&self) -> f64 {
        self.q.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.q.iter().zip(&other.q).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Policy rows `pi[x][a]`.
    pub fn policy(&self, rho: f64, reg: &dyn Regularizer) -> Vec<Vec<f64>> {
        (0..self.n_states)
            .map(|x| {
                let mut u = vec![0.0; self.n_actions];
                reg.argmin(self.row(x), rho, &mut u);
                u
            })
            .collect()
    }
}

/// `pi[t][i][x][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFlow {
    pub pi: Vec<Vec<Vec<Vec<f64>>>>,
}

/// H1 on a frozen slice.
pub fn h1_slice(slice: &PopulationSlice, q: &QTable, beta: f64, rho: f64, reg: &dyn Regularizer, owner: usize) -> QTable {
    let (nx, na) = (slice.n_states, slice.n_actions);
    let qmin: Vec<f64> = (0..nx).map(|y| reg.min_value(q.row(y), rho)).collect();
    let mut out = vec![0.0; nx * na];
    for x in 0..nx {
        for a in 0..na {
            let row = slice.row(x, a);
            let cont: f64 = row.iter().zip(&qmin).map(|(p, m)| p * m).sum();
            out[x * na + a] = slice.cost_at(x, a) + beta * cont;
        }
    }
    QTable { owner, n_states: nx, n_actions: na, q: out }
}

/// H2 on a frozen slice, given the population's own measure.
pub fn h2_slice(slice: &PopulationSlice, q: &QTable, own: &[f64], rho: f64, reg: &dyn Regularizer) -> Vec<f64> {
    let (nx, na) = (slice.n_states, slice.n_actions);
    let mut out = vec![0.0; nx];
    let mut u = vec![0.0; na];
    for x in 0..nx {
        if own[x] == 0.0 {
            continue;
        }
        reg.argmin(q.row(x), rho, &mut u);
        for a in 0..na {
            let w = u[a] * own[x];
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(slice.row(x, a)) {
                *o += w * p;
            }
        }
    }
    // The mixture kernel feeds the measure's total mass back into itself,
    // so rounding drift in the mass grows like (1 + eps)^t along a flow.
    let mass: f64 = out.iter().sum();
    if mass > 0.0 {
        out.iter_mut().for_each(|o| *o /= mass);
    }
    out
}

pub fn apply_h1(model: &MfgModel, i: usize, q: &QTable, tau: &[Vec<f64>]) -> QTable {
    apply_h1_with(model, i, q, tau, &Entropy)
}

pub fn apply_h1_with(model: &MfgModel, i: usize, q: &QTable, tau: &[Vec<f64>], reg: &dyn Regularizer) -> QTable {
    let p = &model.populations[i];
    h1_slice(&model.evaluate(i, tau), q, p.beta, p.rho, reg, i)
}

pub fn apply_h2(model: &MfgModel, i: usize, q: &QTable, tau: &[Vec<f64>]) -> Vec<f64> {
    apply_h2_with(model, i, q, tau, &Entropy)
}

pub fn apply_h2_with(model: &MfgModel, i: usize, q: &QTable, tau: &[Vec<f64>], reg: &dyn Regularizer) -> Vec<f64> {
    h2_slice(&model.evaluate(i, tau), q, &tau[i], model.populations[i].rho, reg)
}

/// Iteration budget `ceil(log(eps (1-beta) / (2M/(1-beta))) / log beta) + 64`.
pub fn bellman_budget(beta: f64, m: f64, eps: f64) -> usize {
    let m = m.max(f64::MIN_POSITIVE);
    let steps = ((eps * (1.0 - beta)) / (2.0 * m / (1.0 - beta))).ln() / beta.ln();
    let steps = if steps.is_finite() { steps.ceil().max(0.0) } else { 0.0 };
    steps as usize + 64
}

/// Value iteration from zero until `|H1 Q - Q|_inf <= eps (1 - beta)`;
/// returns the last iterate.
pub fn solve_bellman_fixed_point(model: &MfgModel, i: usize, tau: &[Vec<f64>], eps: f64) -> Result<QTable> {
    solve_bellman_fixed_point_with(model, i, tau, eps, &Entropy)
}

pub fn solve_bellman_fixed_point_with(
    model: &MfgModel,
    i: usize,
    tau: &[Vec<f64>],
    eps: f64,
    reg: &dyn Regularizer,
) -> Result<QTable> {
    let slice = model.evaluate(i, tau);
    bellman_on_slice(&slice, model, i, eps, reg)
}

pub(crate) fn bellman_on_slice(
    slice: &PopulationSlice,
    model: &MfgModel,
    i: usize,
    eps: f64,
    reg: &dyn Regularizer,
) -> Result<QTable> {
    let p = &model.populations[i];
    let target = eps * (1.0 - p.beta);
    let budget = bellman_budget(p.beta, model.cost_bound(i), eps);
    let mut q = QTable::zeros(i, model.n_states, model.n_actions);
    let mut res = f64::INFINITY;
    for _ in 0..budget {
        let next = h1_slice(slice, &q, p.beta, p.rho, reg, i);
        res = next.sup_distance(&q);
        q = next;
        if res <= target {
            return Ok(q);
        }
    }
    Err(MfgError::IterationLimit { iterations: budget, residual: res })
}

/// Backward recursion from the terminal cost slice; returned in forward order.
pub fn backward_q_flow(model: &MfgModel, i: usize, flow: &StateMeasureFlow) -> Vec<QTable> {
    backward_q_flow_with(model, i, flow, &Entropy)
}

pub fn backward_q_flow_with(model: &MfgModel, i: usize, flow: &StateMeasureFlow, reg: &dyn Regularizer) -> Vec<QTable> {
    let horizon = flow.horizon();
    let p = &model.populations[i];
    let mut out: Vec<QTable> = Vec::with_capacity(horizon);
    let last = model.evaluate(i, flow.slice(horizon - 1));
    out.push(QTable { owner: i, n_states: model.n_states, n_actions: model.n_actions, q: last.cost.clone() });
    for t in (0..horizon - 1).rev() {
        let slice = model.evaluate(i, flow.slice(t));
        let next = h1_slice(&slice, out.last().unwrap(), p.beta, p.rho, reg, i);
        out.push(next);
    }
    out.reverse();
    out
}

//! Multi-population model data, evaluation on measure slices, validation,
//! the `mfgc-model/1` file schema and Lipschitz constant extraction.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};

pub const MODEL_SCHEMA: &str = "mfgc-model/1";

/// One state measure per population, `tau[i][x]`.
pub type MeasureSlice = Vec<Vec<f64>>;

/// User-supplied cost `c_i(x, a, tau)`.
pub trait CostFn: Send + Sync {
    fn cost(&self, x: usize, a: usize, tau: &[Vec<f64>]) -> f64;
}

/// User-supplied kernel; writes `p_i(. | x, a, tau)` into `out`.
pub trait KernelFn: Send + Sync {
    fn transition(&self, x: usize, a: usize, tau: &[Vec<f64>], out: &mut [f64]);
}

impl<F: Fn(usize, usize, &[Vec<f64>]) -> f64 + Send + Sync> CostFn for F {
    fn cost(&self, x: usize, a: usize, tau: &[Vec<f64>]) -> f64 {
        self(x, a, tau)
    }
}

impl<F: Fn(usize, usize, &[Vec<f64>], &mut [f64]) + Send + Sync> KernelFn for F {
    fn transition(&self, x: usize, a: usize, tau: &[Vec<f64>], out: &mut [f64]) {
        self(x, a, tau, out)
    }
}

#[derive(Clone)]
pub enum CostModel {
    /// `c0[x][a] + sum_j sum_y w[j][x][a][y] tau_j(y)`.
    Affine { c0: Vec<Vec<f64>>, w: Vec<Vec<Vec<Vec<f64>>>> },
    Custom { f: Arc<dyn CostFn>, lipschitz: f64, bound: f64 },
}

#[derive(Clone)]
pub enum KernelModel {
    /// `(1 - eps) p0[x][a] + eps sum_j lambda[j] (tau_j M_j)`, with each
    /// `M_j` row-stochastic and indexed `[from][to]`.
    Mixture { p0: Vec<Vec<Vec<f64>>>, eps: f64, mats: Vec<Vec<Vec<f64>>>, lambda: Vec<f64> },
    Custom { f: Arc<dyn KernelFn>, lipschitz: f64 },
}

#[derive(Clone)]
pub struct PopulationSpec {
    pub beta: f64,
    pub rho: f64,
    pub cost: CostModel,
    pub kernel: KernelModel,
}

#[derive(Clone)]
pub struct MfgModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub populations: Vec<PopulationSpec>,
    /// Optional initial measure carried by the model file.
    pub tau0: Option<MeasureSlice>,
}

/// Cost table `[x * A + a]` and kernel table `[(x * A + a) * X + y]` of one
/// population, frozen at a measure slice.
#[derive(Debug, Clone)]
pub struct PopulationSlice {
    pub n_states: usize,
    pub n_actions: usize,
    pub cost: Vec<f64>,
    pub kernel: Vec<f64>,
}

impl PopulationSlice {
    #[inline]
    pub fn cost_at(&self, x: usize, a: usize) -> f64 {
        self.cost[x * self.n_actions + a]
    }

    #[inline]
    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        let s = (x * self.n_actions + a) * self.n_states;
        &self.kernel[s..s + self.n_states]
    }
}

impl MfgModel {
    pub fn n_pops(&self) -> usize {
        self.populations.len()
    }

    pub fn uniform_measure(&self) -> MeasureSlice {
        vec![vec![1.0 / self.n_states as f64; self.n_states]; self.n_pops()]
    }

    /// The model's own `tau0` if present, else uniform.
    pub fn initial_measure(&self) -> MeasureSlice {
        self.tau0.clone().unwrap_or_else(|| self.uniform_measure())
    }

    pub fn cost(&self, i: usize, x: usize, a: usize, tau: &[Vec<f64>]) -> f64 {
        match &self.populations[i].cost {
            CostModel::Affine { c0, w } => {
                let mut c = c0[x][a];
                for (j, wj) in w.iter().enumerate() {
                    c += dot(&wj[x][a], &tau[j]);
                }
                c
            }
            CostModel::Custom { f, .. } => f.cost(x, a, tau),
        }
    }

    pub fn transition(&self, i: usize, x: usize, a: usize, tau: &[Vec<f64>], out: &mut [f64]) {
        match &self.populations[i].kernel {
            KernelModel::Mixture { p0, eps, mats, lambda } => {
                let mix = mixture_part(mats, lambda, tau, self.n_states);
                for y in 0..self.n_states {
                    out[y] = (1.0 - eps) * p0[x][a][y] + eps * mix[y];
                }
            }
            KernelModel::Custom { f, .. } => f.transition(x, a, tau, out),
        }
    }

    /// Freezes cost and kernel of population `i` at `tau`.
    pub fn evaluate(&self, i: usize, tau: &[Vec<f64>]) -> PopulationSlice {
        let (nx, na) = (self.n_states, self.n_actions);
        let mut cost = vec![0.0; nx * na];
        let mut kernel = vec![0.0; nx * na * nx];
        for x in 0..nx {
            for a in 0..na {
                cost[x * na + a] = self.cost(i, x, a, tau);
            }
        }
        match &self.populations[i].kernel {
            KernelModel::Mixture { p0, eps, mats, lambda } => {
                let mix = mixture_part(mats, lambda, tau, nx);
                for x in 0..nx {
                    for a in 0..na {
                        let s = (x * na + a) * nx;
                        for y in 0..nx {
                            kernel[s + y] = (1.0 - eps) * p0[x][a][y] + eps * mix[y];
                        }
                    }
                }
            }
            KernelModel::Custom { f, .. } => {
                for x in 0..nx {
                    for a in 0..na {
                        let s = (x * na + a) * nx;
                        f.transition(x, a, tau, &mut kernel[s..s + nx]);
                    }
                }
            }
        }
        PopulationSlice { n_states: nx, n_actions: na, cost, kernel }
    }

    /// Uniform bound `M_i` on the cost.
    pub fn cost_bound(&self, i: usize) -> f64 {
        match &self.populations[i].cost {
            CostModel::Affine { c0, w } => {
                let mut m: f64 = 0.0;
                for x in 0..self.n_states {
                    for a in 0..self.n_actions {
                        let mut hi = c0[x][a];
                        let mut lo = c0[x][a];
                        for wj in w {
                            hi += max_of(&wj[x][a]);
                            lo += min_of(&wj[x][a]);
                        }
                        m = m.max(hi.abs()).max(lo.abs());
                    }
                }
                m
            }
            CostModel::Custom { bound, .. } => *bound,
        }
    }

    /// True when neither cost nor kernel reads the measure.
    pub fn is_measure_independent(&self) -> bool {
        self.populations.iter().all(|p| {
            let cost_free = match &p.cost {
                CostModel::Affine { w, .. } => w.iter().flatten().flatten().all(|row| {
                    let m = max_of(row);
                    row.iter().all(|&v| v == m)
                }),
                CostModel::Custom { .. } => false,
            };
            let kernel_free = match &p.kernel {
                KernelModel::Mixture { eps, .. } => *eps == 0.0,
                KernelModel::Custom { .. } => false,
            };
            cost_free && kernel_free
        })
    }
}

fn mixture_part(mats: &[Vec<Vec<f64>>], lambda: &[f64], tau: &[Vec<f64>], nx: usize) -> Vec<f64> {
    let mut mix = vec![0.0; nx];
    for (j, m) in mats.iter().enumerate() {
        if lambda[j] == 0.0 {
            continue;
        }
        for (yp, row) in m.iter().enumerate() {
            let wgt = lambda[j] * tau[j][yp];
            if wgt != 0.0 {
                for y in 0..nx {
                    mix[y] += wgt * row[y];
                }
            }
        }
    }
    mix
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Summed l1 distance between two measure slices.
pub fn slice_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| l1(x, y)).sum()
}

// ---------------------------------------------------------------------------
// measure flows

/// `data[t][i][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMeasureFlow {
    pub data: Vec<MeasureSlice>,
}

impl StateMeasureFlow {
    pub fn constant(slice: &MeasureSlice, horizon: usize) -> Self {
        Self { data: vec![slice.clone(); horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.data.len()
    }

    pub fn slice(&self, t: usize) -> &MeasureSlice {
        &self.data[t]
    }

    /// Summed l1 distance over slices and populations.
    pub fn distance(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| slice_distance(a, b)).sum()
    }

    /// First violated simplex condition, if any.
    pub fn check(&self, tol: f64) -> Option<String> {
        for (t, s) in self.data.iter().enumerate() {
            if let Some(msg) = check_slice(s, tol) {
                return Some(format!("t={t}: {msg}"));
            }
        }
        None
    }
}

pub fn check_slice(s: &[Vec<f64>], tol: f64) -> Option<String> {
    for (i, v) in s.iter().enumerate() {
        if let Some((x, &m)) = v.iter().enumerate().find(|(_, &m)| !(m >= 0.0) || !m.is_finite()) {
            return Some(format!("population {i} state {x} has mass {m}"));
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Some(format!("population {i} mass sums to {sum}"));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: String,
    pub population: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, kind: &str, pop: Option<usize>, message: String) {
        self.issues.push(Issue { kind: kind.into(), population: pop, message });
    }
}

/// Sample points of the product simplex: every combination of vertices
/// (capped), the global barycenter, and each population at a vertex with
/// the others at their barycenters.
fn probe_measures(n_pops: usize, nx: usize) -> Vec<MeasureSlice> {
    let bary = vec![1.0 / nx as f64; nx];
    let vertex = |y: usize| {
        let mut v = vec![0.0; nx];
        v[y] = 1.0;
        v
    };
    let mut out = vec![vec![bary.clone(); n_pops]];
    let total = (nx as f64).powi(n_pops as i32);
    if total <= 4096.0 {
        let count = total as usize;
        for mut code in 0..count {
            let mut s = Vec::with_capacity(n_pops);
            for _ in 0..n_pops {
                s.push(vertex(code % nx));
                code /= nx;
            }
            out.push(s);
        }
    } else {
        for y in 0..nx {
            out.push(vec![vertex(y); n_pops]);
        }
    }
    for j in 0..n_pops {
        for y in 0..nx {
            let mut s = vec![bary.clone(); n_pops];
            s[j] = vertex(y);
            out.push(s);
        }
    }
    out
}

fn check_shapes(model: &MfgModel, report: &mut ValidationReport) {
    let (n, nx, na) = (model.n_pops(), model.n_states, model.n_actions);
    for (i, p) in model.populations.iter().enumerate() {
        if let CostModel::Affine { c0, w } = &p.cost {
            if c0.len() != nx || c0.iter().any(|r| r.len() != na) {
                report.push("shape", Some(i), format!("c0 must be {nx}x{na}"));
            }
            if w.len() != n
                || w.iter().any(|wj| wj.len() != nx || wj.iter().any(|r| r.len() != na || r.iter().any(|c| c.len() != nx)))
            {
                report.push("shape", Some(i), format!("w must be {n}x{nx}x{na}x{nx}"));
            }
        }
        if let KernelModel::Mixture { p0, eps, mats, lambda } = &p.kernel {
            if p0.len() != nx || p0.iter().any(|r| r.len() != na || r.iter().any(|c| c.len() != nx)) {
                report.push("shape", Some(i), format!("p0 must be {nx}x{na}x{nx}"));
            }
            if mats.len() != n || mats.iter().any(|m| m.len() != nx || m.iter().any(|r| r.len() != nx)) {
                report.push("shape", Some(i), format!("mats must be {n}x{nx}x{nx}"));
            }
            if lambda.len() != n {
                report.push("shape", Some(i), format!("lambda must have {n} entries"));
            }
            if !(0.0..=1.0).contains(eps) {
                report.push("range", Some(i), format!("eps = {eps} outside [0, 1]"));
            }
            if lambda.iter().any(|&l| !(l >= 0.0)) || (lambda.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                report.push("range", Some(i), "lambda must be a probability vector".into());
            }
        }
    }
}

pub fn validate_model(model: &MfgModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (n, nx, na) = (model.n_pops(), model.n_states, model.n_actions);
    if n == 0 || nx == 0 || na == 0 {
        report.push("shape", None, format!("need N, |X|, |A| >= 1, got {n}, {nx}, {na}"));
        return report;
    }
    for (i, p) in model.populations.iter().enumerate() {
        if !(p.beta > 0.0 && p.beta < 1.0) {
            report.push("range", Some(i), format!("beta = {} outside (0, 1)", p.beta));
        }
        if !(p.rho > 0.0) || !p.rho.is_finite() {
            report.push("range", Some(i), format!("rho = {} must be positive", p.rho));
        }
    }
    check_shapes(model, &mut report);
    if !report.issues.iter().all(|is| is.kind == "range") {
        return report;
    }
    if let Some(t) = &model.tau0 {
        if t.len() != n || t.iter().any(|v| v.len() != nx) {
            report.push("shape", None, "tau0 has the wrong shape".into());
        } else if let Some(msg) = check_slice(t, 1e-10) {
            report.push("simplex", None, format!("tau0: {msg}"));
        }
    }

    let probes = probe_measures(n, nx);
    let mut row = vec![0.0; nx];
    for i in 0..n {
        // worst deficit per (x, a) and worst negative cost per (x, a)
        let mut worst: Vec<Option<f64>> = vec![None; nx * na];
        let mut negative: Vec<Option<f64>> = vec![None; nx * na];
        let mut bad_cost = false;
        for tau in &probes {
            for x in 0..nx {
                for a in 0..na {
                    let c = model.cost(i, x, a, tau);
                    if !c.is_finite() {
                        bad_cost = true;
                    } else if c < 0.0 {
                        let e = &mut negative[x * na + a];
                        *e = Some(e.map_or(c, |v: f64| v.min(c)));
                    }
                    model.transition(i, x, a, tau, &mut row);
                    let sum: f64 = row.iter().sum();
                    let neg = row.iter().any(|&v| v < 0.0 || !v.is_finite());
                    let deficit = 1.0 - sum;
                    if neg || deficit.abs() > 1e-12 {
                        let e = &mut worst[x * na + a];
                        let d = if neg { f64::NAN } else { deficit };
                        *e = Some(match *e {
                            Some(prev) if prev.abs() >= d.abs() => prev,
                            _ => d,
                        });
                    }
                }
            }
        }
        if bad_cost {
            report.push("cost", Some(i), "cost evaluates to a non-finite value".into());
        }
        for x in 0..nx {
            for a in 0..na {
                if let Some(c) = negative[x * na + a] {
                    report.push("cost", Some(i), format!("(i={i}, x={x}, a={a}): cost reaches {c} < 0"));
                }
                if let Some(d) = worst[x * na + a] {
                    let msg = if d.is_nan() {
                        format!("(i={i}, x={x}, a={a}): kernel row has a negative entry")
                    } else {
                        format!("(i={i}, x={x}, a={a}): kernel row sum deficit {d:e}")
                    };
                    report.push("kernel", Some(i), msg);
                }
            }
        }
        if let CostModel::Custom { lipschitz, bound, .. } = &model.populations[i].cost {
            if !(*lipschitz >= 0.0) || !(*bound >= 0.0) || !bound.is_finite() {
                report.push("range", Some(i), "declared cost constants must be finite and nonnegative".into());
            }
        }
        if let KernelModel::Custom { lipschitz, .. } = &model.populations[i].kernel {
            if !(*lipschitz >= 0.0) {
                report.push("range", Some(i), "declared kernel constant must be nonnegative".into());
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Lipschitz profile

/// Primitive constants of one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationConstants {
    pub l: f64,
    pub k: f64,
    pub beta: f64,
    pub rho: f64,
    pub m: f64,
}

/// Quantities derived from [`PopulationConstants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub lbar: f64,
    pub kbar: f64,
    pub a: f64,
    /// `kbar - k`.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProfile {
    pub pops: Vec<PopulationConstants>,
    pub derived: Vec<Derived>,
    pub kbar_inf: f64,
    pub beta_max: f64,
}

impl LipschitzProfile {
    pub fn new(pops: Vec<PopulationConstants>) -> Result<Self> {
        if pops.is_empty() {
            return Err(MfgError::Invalid("profile needs at least one population".into()));
        }
        let mut derived = Vec::with_capacity(pops.len());
        for (i, p) in pops.iter().enumerate() {
            let half = p.beta * p.k / 2.0;
            if !(half < 1.0) {
                return Err(MfgError::DegenerateProfile { pop: i, value: half });
            }
            let lbar = p.l / (1.0 - half);
            let a = lbar * p.k / p.rho;
            let kbar = 1.5 * p.k + 0.5 * a / (1.0 - p.beta);
            derived.push(Derived { lbar, kbar, a, d: kbar - p.k });
        }
        let kbar_inf = derived.iter().map(|d| d.d).fold(f64::NEG_INFINITY, f64::max);
        let beta_max = pops.iter().map(|p| p.beta).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { pops, derived, kbar_inf, beta_max })
    }

    pub fn n(&self) -> usize {
        self.pops.len()
    }

    pub fn k(&self, i: usize) -> f64 {
        self.pops[i].k
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.pops[i].beta
    }

    pub fn a(&self, i: usize) -> f64 {
        self.derived[i].a
    }

    pub fn kbar(&self, i: usize) -> f64 {
        self.derived[i].kbar
    }

    pub fn d(&self, i: usize) -> f64 {
        self.derived[i].d
    }
}

/// Sampled lower bounds for a population with user-declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBound {
    pub population: usize,
    pub pairs: usize,
    pub cost_declared: Option<f64>,
    pub cost_lower: Option<f64>,
    pub kernel_declared: Option<f64>,
    pub kernel_lower: Option<f64>,
    /// Set when a sampled ratio exceeds the declared constant.
    pub exceeds_declared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub profile: LipschitzProfile,
    pub empirical: Vec<EmpiricalBound>,
}

/// Exact sensitivities of an affine cost: (state flip, action flip / 2, measure).
pub fn affine_cost_sensitivities(c0: &[Vec<f64>], w: &[Vec<Vec<Vec<f64>>>]) -> (f64, f64, f64) {
    let nx = c0.len();
    let na = c0[0].len();
    let pair = |x: usize, a: usize, xt: usize, at: usize| {
        let dc = c0[x][a] - c0[xt][at];
        let mut hi = dc;
        let mut lo = dc;
        for wj in w {
            let diff: Vec<f64> = wj[x][a].iter().zip(&wj[xt][at]).map(|(p, q)| p - q).collect();
            hi += max_of(&diff);
            lo += min_of(&diff);
        }
        hi.abs().max(lo.abs())
    };
    let mut state: f64 = 0.0;
    let mut action: f64 = 0.0;
    for x in 0..nx {
        for a in 0..na {
            for xt in 0..nx {
                if xt != x {
                    state = state.max(pair(x, a, xt, a));
                }
            }
            for at in 0..na {
                if at != a {
                    action = action.max(pair(x, a, x, at) / 2.0);
                }
            }
        }
    }
    let mut measure: f64 = 0.0;
    for wj in w {
        for row in wj.iter().flatten() {
            measure = measure.max((max_of(row) - min_of(row)) / 2.0);
        }
    }
    (state, action, measure)
}

/// Exact sensitivities of a mixture kernel: (state flip, action flip / 2, measure).
pub fn mixture_kernel_sensitivities(
    p0: &[Vec<Vec<f64>>],
    eps: f64,
    mats: &[Vec<Vec<f64>>],
    lambda: &[f64],
) -> (f64, f64, f64) {
    let nx = p0.len();
    let na = p0[0].len();
    let mut state: f64 = 0.0;
    let mut action: f64 = 0.0;
    for x in 0..nx {
        for a in 0..na {
            for xt in 0..nx {
                if xt != x {
                    state = state.max((1.0 - eps) * l1(&p0[x][a], &p0[xt][a]));
                }
            }
            for at in 0..na {
                if at != a {
                    action = action.max((1.0 - eps) * l1(&p0[x][a], &p0[x][at]) / 2.0);
                }
            }
        }
    }
    let mut measure: f64 = 0.0;
    for (j, m) in mats.iter().enumerate() {
        let mut dob: f64 = 0.0;
        for r in m {
            for s in m {
                dob = dob.max(l1(r, s) / 2.0);
            }
        }
        measure = measure.max(eps * lambda[j] * dob);
    }
    (state, action, measure)
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if rng.gen_bool(0.25) {
        let mut v = vec![0.0; n];
        v[rng.gen_range(0..n)] = 1.0;
        return v;
    }
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Random pair `(x, a, tau)`, `(x~, a~, tau~)` perturbing one, several or
/// all directions.
pub(crate) fn random_pair(
    rng: &mut ChaCha8Rng,
    n: usize,
    nx: usize,
    na: usize,
) -> ((usize, usize, MeasureSlice), (usize, usize, MeasureSlice)) {
    let x = rng.gen_range(0..nx);
    let a = rng.gen_range(0..na);
    let tau: MeasureSlice = (0..n).map(|_| random_simplex(rng, nx)).collect();
    let mode = rng.gen_range(0..4);
    let xt = if mode == 0 || mode == 3 { rng.gen_range(0..nx) } else { x };
    let at = if mode == 1 || mode == 3 { rng.gen_range(0..na) } else { a };
    let taut: MeasureSlice = if mode == 2 || mode == 3 {
        let mut t = tau.clone();
        let j = rng.gen_range(0..n);
        t[j] = random_simplex(rng, nx);
        if mode == 3 {
            for tj in t.iter_mut() {
                if rng.gen_bool(0.3) {
                    *tj = random_simplex(rng, nx);
                }
            }
        }
        t
    } else {
        tau.clone()
    };
    ((x, a, tau), (xt, at, taut))
}

/// Weighted distance of Assumption-1 form: `1{x != x~} + 2 1{a != a~} + sum_j |tau_j - tau~_j|_1`.
pub(crate) fn assumption_distance(x: usize, a: usize, tau: &[Vec<f64>], xt: usize, at: usize, taut: &[Vec<f64>]) -> f64 {
    (x != xt) as u8 as f64 + 2.0 * (a != at) as u8 as f64 + slice_distance(tau, taut)
}

fn empirical_bound(model: &MfgModel, i: usize, pairs: usize, seed: u64) -> EmpiricalBound {
    let p = &model.populations[i];
    let cost_declared = match &p.cost {
        CostModel::Custom { lipschitz, .. } => Some(*lipschitz),
        _ => None,
    };
    let kernel_declared = match &p.kernel {
        KernelModel::Custom { lipschitz, .. } => Some(*lipschitz),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (n, nx, na) = (model.n_pops(), model.n_states, model.n_actions);
    let mut cost_lower: f64 = 0.0;
    let mut kernel_lower: f64 = 0.0;
    let mut r1 = vec![0.0; nx];
    let mut r2 = vec![0.0; nx];
    for _ in 0..pairs {
        let ((x, a, tau), (xt, at, taut)) = random_pair(&mut rng, n, nx, na);
        let den = assumption_distance(x, a, &tau, xt, at, &taut);
        if den <= 0.0 {
            continue;
        }
        if cost_declared.is_some() {
            let dc = (model.cost(i, x, a, &tau) - model.cost(i, xt, at, &taut)).abs();
            cost_lower = cost_lower.max(dc / den);
        }
        if kernel_declared.is_some() {
            model.transition(i, x, a, &tau, &mut r1);
            model.transition(i, xt, at, &taut, &mut r2);
            kernel_lower = kernel_lower.max(l1(&r1, &r2) / den);
        }
    }
    let cost_lower = cost_declared.map(|_| cost_lower);
    let kernel_lower = kernel_declared.map(|_| kernel_lower);
    let exceeds = matches!((cost_declared, cost_lower), (Some(d), Some(e)) if e > d * (1.0 + 1e-12))
        || matches!((kernel_declared, kernel_lower), (Some(d), Some(e)) if e > d * (1.0 + 1e-12));
    EmpiricalBound {
        population: i,
        pairs,
        cost_declared,
        cost_lower,
        kernel_declared,
        kernel_lower,
        exceeds_declared: exceeds,
    }
}

/// Smallest constants satisfying Assumption 1 for the affine/mixture family;
/// declared constants plus sampled lower bounds for custom parts.
pub fn estimate_lipschitz(model: &MfgModel) -> Result<LipschitzEstimate> {
    const PAIRS: usize = 10_000;
    let mut pops = Vec::with_capacity(model.n_pops());
    let mut empirical = Vec::new();
    for (i, p) in model.populations.iter().enumerate() {
        let l = match &p.cost {
            CostModel::Affine { c0, w } => {
                let (s, a, m) = affine_cost_sensitivities(c0, w);
                s.max(a).max(m)
            }
            CostModel::Custom { lipschitz, .. } => *lipschitz,
        };
        let k = match &p.kernel {
            KernelModel::Mixture { p0, eps, mats, lambda } => {
                let (s, a, m) = mixture_kernel_sensitivities(p0, *eps, mats, lambda);
                s.max(a).max(m)
            }
            KernelModel::Custom { lipschitz, .. } => *lipschitz,
        };
        if matches!(p.cost, CostModel::Custom { .. }) || matches!(p.kernel, KernelModel::Custom { .. }) {
            empirical.push(empirical_bound(model, i, PAIRS, 0));
        }
        pops.push(PopulationConstants { l, k, beta: p.beta, rho: p.rho, m: model.cost_bound(i) });
    }
    Ok(LipschitzEstimate { profile: LipschitzProfile::new(pops)?, empirical })
}

// ---------------------------------------------------------------------------
// file schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub populations: Vec<PopulationFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<MeasureSlice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationFile {
    pub beta: f64,
    pub rho: f64,
    pub cost: CostFile,
    pub kernel: KernelFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostFile {
    Affine {
        c0: Vec<Vec<f64>>,
        /// Omitted means zero weights.
        #[serde(default)]
        w: Vec<Vec<Vec<Vec<f64>>>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFile {
    Mixture {
        p0: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        eps: f64,
        #[serde(default)]
        mats: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        lambda: Vec<f64>,
    },
}

impl ModelFile {
    pub fn into_model(self) -> Result<MfgModel> {
        if self.schema != MODEL_SCHEMA {
            return Err(MfgError::Invalid(format!("schema \"{}\", expected \"{MODEL_SCHEMA}\"", self.schema)));
        }
        let (n, nx, na) = (self.populations.len(), self.n_states, self.n_actions);
        if n == 0 || nx == 0 || na == 0 {
            return Err(MfgError::Invalid("need at least one population, state and action".into()));
        }
        let populations = self
            .populations
            .into_iter()
            .map(|p| {
                let cost = match p.cost {
                    CostFile::Affine { c0, w } => {
                        let w = if w.is_empty() { vec![vec![vec![vec![0.0; nx]; na]; nx]; n] } else { w };
                        CostModel::Affine { c0, w }
                    }
                };
                let kernel = match p.kernel {
                    KernelFile::Mixture { p0, eps, mats, lambda } => {
                        let mats = if mats.is_empty() { vec![identity(nx); n] } else { mats };
                        let lambda = if lambda.is_empty() { vec![1.0 / n as f64; n] } else { lambda };
                        KernelModel::Mixture { p0, eps, mats, lambda }
                    }
                };
                PopulationSpec { beta: p.beta, rho: p.rho, cost, kernel }
            })
            .collect();
        Ok(MfgModel { n_states: nx, n_actions: na, populations, tau0: self.tau0 })
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect()
}

impl MfgModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| MfgError::Invalid(format!("model schema: {e}")))?;
        file.into_model()
    }

    /// Serializable form; fails for custom parts.
    pub fn to_file(&self) -> Result<ModelFile> {
        let populations = self
            .populations
            .iter()
            .map(|p| {
                let cost = match &p.cost {
                    CostModel::Affine { c0, w } => CostFile::Affine { c0: c0.clone(), w: w.clone() },
                    CostModel::Custom { .. } => return Err(MfgError::Invalid("custom cost is not serializable".into())),
                };
                let kernel = match &p.kernel {
                    KernelModel::Mixture { p0, eps, mats, lambda } => {
                        KernelFile::Mixture { p0: p0.clone(), eps: *eps, mats: mats.clone(), lambda: lambda.clone() }
                    }
                    KernelModel::Custom { .. } => return Err(MfgError::Invalid("custom kernel is not serializable".into())),
                };
                Ok(PopulationFile { beta: p.beta, rho: p.rho, cost, kernel })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelFile {
            schema: MODEL_SCHEMA.into(),
            n_states: self.n_states,
            n_actions: self.n_actions,
            populations,
            tau0: self.tau0.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_file()?).map_err(|e| MfgError::Invalid(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// random instances

/// Parameters for [`random_affine_model`].
#[derive(Debug, Clone, Copy)]
pub struct RandomModelSpec {
    pub n_pops: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub beta: (f64, f64),
    pub rho: (f64, f64),
    /// Scale of the base cost table.
    pub cost_scale: f64,
    /// Scale of the measure weights.
    pub weight_scale: f64,
    /// Mixing weight range for the kernel.
    pub eps: (f64, f64),
    /// Blend of the base kernel towards a common row, in `[0, 1]`; larger
    /// values shrink the state/action sensitivity of the kernel.
    pub kernel_flatness: f64,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        Self {
            n_pops: 2,
            n_states: 3,
            n_actions: 2,
            beta: (0.3, 0.7),
            rho: (0.5, 2.0),
            cost_scale: 1.0,
            weight_scale: 0.5,
            eps: (0.0, 0.3),
            kernel_flatness: 0.0,
        }
    }
}

/// Seeded random model from the affine/mixture family.
pub fn random_affine_model(spec: &RandomModelSpec, seed: u64) -> MfgModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, nx, na) = (spec.n_pops, spec.n_states, spec.n_actions);
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let mut pops = Vec::with_capacity(n);
    for _ in 0..n {
        let beta = draw(&mut rng, spec.beta.0, spec.beta.1);
        let rho = draw(&mut rng, spec.rho.0, spec.rho.1);
        let c0: Vec<Vec<f64>> =
            (0..nx).map(|_| (0..na).map(|_| spec.cost_scale * rng.gen::<f64>()).collect()).collect();
        let w = (0..n)
            .map(|_| {
                (0..nx)
                    .map(|_| (0..na).map(|_| (0..nx).map(|_| spec.weight_scale * rng.gen::<f64>()).collect()).collect())
                    .collect()
            })
            .collect();
        let common = random_simplex_interior(&mut rng, nx);
        let p0 = (0..nx)
            .map(|_| {
                (0..na)
                    .map(|_| {
                        let r = random_simplex_interior(&mut rng, nx);
                        r.iter().zip(&common).map(|(u, c)| (1.0 - spec.kernel_flatness) * u + spec.kernel_flatness * c).collect()
                    })
                    .collect()
            })
            .collect();
        let eps = draw(&mut rng, spec.eps.0, spec.eps.1);
        let mats = (0..n).map(|_| (0..nx).map(|_| random_simplex_interior(&mut rng, nx)).collect()).collect();
        let lam = random_simplex_interior(&mut rng, n);
        pops.push(PopulationSpec {
            beta,
            rho,
            cost: CostModel::Affine { c0, w },
            kernel: KernelModel::Mixture { p0, eps, mats, lambda: lam },
        });
    }
    MfgModel { n_states: nx, n_actions: na, populations: pops, tau0: None }
}

fn random_simplex_interior(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

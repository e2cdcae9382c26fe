//! Perron root of nonnegative operators by power iteration with
//! Collatz–Wielandt brackets.

use nalgebra::DMatrix;

use crate::error::{MfgError, Result};

/// Matrix-free view of a square linear map.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// Writes `A x` into `y`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n, m) = self.shape();
        for (i, yi) in y.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for j in 0..m {
                acc += self[(i, j)] * x[j];
            }
            *yi = acc;
        }
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PerronOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Diagonal shift sigma; iteration runs on `A + sigma I`.
    pub shift: f64,
    pub record_brackets: bool,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 200_000, shift: 0.0, record_brackets: false }
    }
}

impl PerronOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
    pub fn shifted(mut self) -> Self {
        self.shift = 1.0;
        self
    }
    pub fn recording(mut self) -> Self {
        self.record_brackets = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct PerronResult {
    pub rho: f64,
    /// Positive eigenvector with first entry 1.
    pub vector: Vec<f64>,
    pub cw_lower: f64,
    pub cw_upper: f64,
    pub iterations: usize,
    pub brackets: Vec<(f64, f64)>,
}

pub fn perron<A: LinearOperator + ?Sized>(op: &A, opts: &PerronOptions) -> Result<PerronResult> {
    let n = op.dim();
    if n == 0 {
        return Err(MfgError::Invalid("operator of dimension 0".into()));
    }
    let sigma = opts.shift;
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut brackets = Vec::new();
    let (mut lo, mut hi) = (f64::NAN, f64::NAN);
    for it in 1..=opts.max_iter {
        op.apply(&x, &mut y);
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        let mut norm = 0.0;
        for i in 0..n {
            let yi = y[i] + sigma * x[i];
            if yi <= 0.0 {
                return Err(MfgError::NonPositiveIterate { index: i });
            }
            y[i] = yi;
            let q = yi / x[i];
            ymin = ymin.min(q);
            ymax = ymax.max(q);
            norm += yi;
        }
        lo = ymin - sigma;
        hi = ymax - sigma;
        if opts.record_brackets {
            brackets.push((lo, hi));
        }
        for i in 0..n {
            x[i] = y[i] / norm;
        }
        if hi - lo <= opts.tol {
            let head = x[0];
            let vector = x.iter().map(|v| v / head).collect();
            return Ok(PerronResult {
                rho: 0.5 * (lo + hi),
                vector,
                cw_lower: lo,
                cw_upper: hi,
                iterations: it,
                brackets,
            });
        }
    }
    Err(MfgError::IterationLimit { iterations: opts.max_iter, residual: hi - lo })
}

/// Power iteration on `A + I`; reports the radius of `A`.
pub fn perron_shifted<A: LinearOperator + ?Sized>(op: &A, opts: &PerronOptions) -> Result<PerronResult> {
    perron(op, &PerronOptions { shift: 1.0, ..*opts })
}

/// `max_i (A x)_i / x_i` for positive `x`.
pub fn collatz_upper<A: LinearOperator + ?Sized>(op: &A, x: &[f64]) -> f64 {
    let mut y = vec![0.0; op.dim()];
    op.apply(x, &mut y);
    y.iter().zip(x).map(|(a, b)| a / b).fold(f64::NEG_INFINITY, f64::max)
}

/// `min_i (A x)_i / x_i` for positive `x`.
pub fn collatz_lower<A: LinearOperator + ?Sized>(op: &A, x: &[f64]) -> f64 {
    let mut y = vec![0.0; op.dim()];
    op.apply(x, &mut y);
    y.iter().zip(x).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min)
}

/// Spectral radius of a small dense nonnegative matrix. Shift mode covers
/// periodic patterns; a reducible matrix whose Perron vector has zeros never
/// closes the bracket, and falls back to the Schur eigenvalues.
pub fn dense_radius(a: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let opts = PerronOptions::default().with_tol(tol).with_max_iter(20_000);
    let stalled = |e: &MfgError| matches!(e, MfgError::NonPositiveIterate { .. } | MfgError::IterationLimit { .. });
    match perron(a, &opts) {
        Ok(r) => return Ok(r.rho),
        Err(e) if !stalled(&e) => return Err(e),
        Err(_) => {}
    }
    match perron_shifted(a, &opts) {
        Ok(r) => return Ok(r.rho),
        Err(e) if !stalled(&e) => return Err(e),
        Err(_) => {}
    }
    Ok(a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

//! The finite-horizon block matrix, dense and matrix-free.

use nalgebra::DMatrix;

use crate::error::{MfgError, Result};
use crate::model::LipschitzProfile;
use crate::spectral::{perron, perron_shifted, LinearOperator, PerronOptions, PerronResult};

pub const DENSE_LIMIT: usize = 20_000;

/// Population-major `N(T-1)` square operator; coordinate `(i, m)` sits at
/// `i * (T-1) + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonMatrix {
    pub horizon: usize,
    a: Vec<f64>,
    beta: Vec<f64>,
    k: Vec<f64>,
    d: Vec<f64>,
}

impl FiniteHorizonMatrix {
    pub fn new(p: &LipschitzProfile, horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(MfgError::Invalid(format!("horizon must be at least 2, got {horizon}")));
        }
        let n = p.n();
        Ok(Self {
            horizon,
            a: (0..n).map(|i| p.a(i)).collect(),
            beta: (0..n).map(|i| p.beta(i)).collect(),
            k: (0..n).map(|i| p.k(i)).collect(),
            d: (0..n).map(|i| p.d(i)).collect(),
        })
    }

    pub fn n_pops(&self) -> usize {
        self.a.len()
    }

    /// Block size `T - 1`.
    pub fn block(&self) -> usize {
        self.horizon - 1
    }

    /// `S_T v`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let (np, n) = (self.n_pops(), self.block());
        let mut s = vec![0.0; n];
        for j in 0..np {
            for c in 0..n {
                s[c] += v[j * n + c];
            }
        }
        for i in 0..np {
            let (a, b, ka, d) = (self.a[i], self.beta[i], self.k[i] + self.a[i], self.d[i]);
            let row = &mut out[i * n..(i + 1) * n];
            // suffix accumulator g(m) = beta (s_m + g(m+1))
            let mut g = 0.0;
            for m in (0..n).rev() {
                g = b * (s[m] + g);
                row[m] = a * g;
            }
            for m in 1..n {
                row[m] += d * v[i * n + m - 1] + ka * s[m - 1];
            }
        }
    }

    /// `S_T^T w`.
    pub fn transpose_matvec(&self, w: &[f64], out: &mut [f64]) {
        let (np, n) = (self.n_pops(), self.block());
        // upper part: sum_i a_i h_i(c) with h_i(c) = beta_i (w_i(c) + h_i(c-1))
        let mut upper = vec![0.0; n];
        // subdiagonal part: sum_i (K_i + a_i) w_i(c+1)
        let mut sub = vec![0.0; n];
        for i in 0..np {
            let (a, b, ka) = (self.a[i], self.beta[i], self.k[i] + self.a[i]);
            let wi = &w[i * n..(i + 1) * n];
            let mut h = 0.0;
            for c in 0..n {
                h = b * (wi[c] + h);
                upper[c] += a * h;
            }
            for c in 0..n.saturating_sub(1) {
                sub[c] += ka * wi[c + 1];
            }
        }
        for j in 0..np {
            let wj = &w[j * n..(j + 1) * n];
            for c in 0..n {
                let own = if c + 1 < n { self.d[j] * wj[c + 1] } else { 0.0 };
                out[j * n + c] = upper[c] + sub[c] + own;
            }
        }
    }

    /// Dense form; refuses dimensions above [`DENSE_LIMIT`].
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let (np, n) = (self.n_pops(), self.block());
        let dim = np * n;
        if dim > DENSE_LIMIT {
            return Err(MfgError::SizeLimit { dim, limit: DENSE_LIMIT });
        }
        let mut s = DMatrix::zeros(dim, dim);
        for i in 0..np {
            let (a, b) = (self.a[i], self.beta[i]);
            for j in 0..np {
                let x = if i == j { self.k[i] + self.d[i] } else { self.k[i] };
                for m in 0..n {
                    for c in m..n {
                        s[(i * n + m, j * n + c)] = a * b.powi((c - m + 1) as i32);
                    }
                    if m >= 1 {
                        s[(i * n + m, j * n + m - 1)] = x + a;
                    }
                }
            }
        }
        Ok(s)
    }

    pub fn transposed(&self) -> Transposed<'_> {
        Transposed(self)
    }

    /// Whether plain power iteration applies (every population has `a_i > 0`).
    pub fn primitive(&self) -> bool {
        self.a.iter().zip(&self.beta).all(|(&a, &b)| a > 0.0 && b > 0.0)
    }

    /// Perron root, in shift mode when some `a_i` vanishes.
    pub fn radius(&self, opts: &PerronOptions) -> Result<PerronResult> {
        if self.primitive() {
            perron(self, opts)
        } else {
            perron_shifted(self, opts)
        }
    }
}

impl LinearOperator for FiniteHorizonMatrix {
    fn dim(&self) -> usize {
        self.n_pops() * self.block()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

pub struct Transposed<'a>(&'a FiniteHorizonMatrix);

impl LinearOperator for Transposed<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.transpose_matvec(x, y)
    }
}

pub fn build_st(p: &LipschitzProfile, horizon: usize) -> Result<DMatrix<f64>> {
    FiniteHorizonMatrix::new(p, horizon)?.dense()
}

pub fn st_matvec(p: &LipschitzProfile, horizon: usize, v: &[f64]) -> Result<Vec<f64>> {
    let s = FiniteHorizonMatrix::new(p, horizon)?;
    if v.len() != s.dim() {
        return Err(MfgError::Invalid(format!("vector length {} != {}", v.len(), s.dim())));
    }
    let mut out = vec![0.0; v.len()];
    s.matvec(v, &mut out);
    Ok(out)
}

/// `rho(S_T)` with the default Perron options.
pub fn st_radius(p: &LipschitzProfile, horizon: usize) -> Result<PerronResult> {
    FiniteHorizonMatrix::new(p, horizon)?.radius(&PerronOptions::default())
}

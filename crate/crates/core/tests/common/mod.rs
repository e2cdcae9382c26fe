#![allow(dead_code)]

use mfgc::{LipschitzProfile, PopulationConstants};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `||A^(2^k)||_1^(1/2^k)` by repeated squaring with rescaling, k = 40.
pub fn gelfand_radius(a: &DMatrix<f64>) -> f64 {
    let norm = |m: &DMatrix<f64>| m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut m = a.clone();
    let mut log_scale = 0.0;
    let mut exponent = 1.0;
    for _ in 0..40 {
        let n = norm(&m);
        if n == 0.0 {
            return 0.0;
        }
        m /= n;
        log_scale += n.ln() / exponent;
        m = &m * &m;
        exponent *= 2.0;
    }
    let n = norm(&m);
    if n == 0.0 {
        return 0.0;
    }
    (log_scale + n.ln() / exponent).exp()
}

/// Finite-horizon matrix written out entry by entry from the block pattern.
pub fn dense_st(p: &LipschitzProfile, horizon: usize) -> DMatrix<f64> {
    let n = horizon - 1;
    let np = p.n();
    let mut s = DMatrix::zeros(np * n, np * n);
    for i in 0..np {
        let (a, b, k, kb) = (p.a(i), p.beta(i), p.k(i), p.kbar(i));
        for j in 0..np {
            let x = if i == j { kb } else { k };
            for row in 0..n {
                for col in 0..n {
                    let v = if col >= row {
                        a * b.powi((col - row + 1) as i32)
                    } else if col + 1 == row {
                        x + a
                    } else {
                        0.0
                    };
                    s[(i * n + row, j * n + col)] = v;
                }
            }
        }
    }
    s
}

pub fn profile(v: &[(f64, f64, f64, f64)]) -> LipschitzProfile {
    LipschitzProfile::new(v.iter().map(|&(l, k, beta, rho)| PopulationConstants { l, k, beta, rho, m: 1.0 }).collect())
        .unwrap()
}

/// Log-uniform draw on `[lo, hi]`.
pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Random profile with `beta K / 2 < 1`; `scale` sets the typical size of L and K.
pub fn random_profile(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> LipschitzProfile {
    let pops = (0..n)
        .map(|_| {
            let beta = rng.gen_range(0.05..0.95);
            let k = log_uniform(rng, 1e-3 * scale, scale).min(1.9 / beta);
            PopulationConstants {
                l: log_uniform(rng, 1e-3 * scale, scale),
                k,
                beta,
                rho: log_uniform(rng, 0.2, 5.0),
                m: 1.0,
            }
        })
        .collect();
    LipschitzProfile::new(pops).unwrap()
}

/// Small-constant profile, certified by V_A with a grid `r > 1`.
pub fn random_stable_profile(rng: &mut ChaCha8Rng, n: usize) -> LipschitzProfile {
    loop {
        let p = random_profile(rng, n, 0.3);
        let v = mfgc::contraction::minimize_v(&p, mfgc::contraction::Variant::A);
        if v.certified && v.stable && (0..n).all(|i| p.a(i) > 1e-3) {
            return p;
        }
    }
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

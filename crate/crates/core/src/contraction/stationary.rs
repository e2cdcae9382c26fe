//! Stationary contraction matrix and its closed-form certificate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::LipschitzProfile;
use crate::spectral::{perron, PerronOptions, PerronResult};

/// `M_ii = Kbar_i + a_i/(1-beta_i)`, `M_ij = K_i + a_i/(1-beta_i)`.
pub fn stationary_matrix(p: &LipschitzProfile) -> DMatrix<f64> {
    let n = p.n();
    DMatrix::from_fn(n, n, |i, j| {
        let tail = p.a(i) / (1.0 - p.beta(i));
        if i == j {
            p.kbar(i) + tail
        } else {
            p.k(i) + tail
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryCertificate {
    pub sum: f64,
    pub certified: bool,
    pub margin: f64,
    pub reason: Option<String>,
}

/// `sum_i (K_i + a_i/(1-beta_i)) / (1 - (Kbar_i - K_i))`, certified iff below 1.
pub fn stationary_certificate(p: &LipschitzProfile) -> StationaryCertificate {
    if let Some(i) = (0..p.n()).find(|&i| p.d(i) >= 1.0) {
        return StationaryCertificate {
            sum: f64::INFINITY,
            certified: false,
            margin: f64::NEG_INFINITY,
            reason: Some(format!("denominator nonpositive (population {i})")),
        };
    }
    let sum: f64 = (0..p.n()).map(|i| (p.k(i) + p.a(i) / (1.0 - p.beta(i))) / (1.0 - p.d(i))).sum();
    StationaryCertificate { sum, certified: sum < 1.0, margin: 1.0 - sum, reason: None }
}

/// Perron radius of the stationary matrix.
pub fn stationary_radius(p: &LipschitzProfile) -> Result<PerronResult> {
    let m = stationary_matrix(p);
    let opts = PerronOptions::default();
    if m.iter().all(|&v| v > 0.0) {
        perron(&m, &opts)
    } else {
        crate::spectral::perron_shifted(&m, &opts)
    }
}

//! Contraction matrices, certificates and the horizon-limit diagnostics.

mod diagnostics;
mod finite;
mod majorant;
mod stationary;

pub use diagnostics::{
    constraint_g, constraint_roots, limit_consistency_scan, limit_consistency_scan_with, perron_ratio_diagnostic,
    ConstraintRoots, LimitScan, PerronRatioDiagnostic, ScanRow, ROOT_GRID,
};
pub use finite::{build_st, st_matvec, st_radius, FiniteHorizonMatrix, Transposed, DENSE_LIMIT};
pub use majorant::{
    golden_min, grid_then_refine, inf_rho_b, log_grid, majorant_matrix, minimize_v, r_interval, rho_b, secular_residual,
    v_entry, v_vector, variational_v, Regime, VMinimum, Variant, GRID_POINTS, INSET,
};
pub use stationary::{stationary_certificate, stationary_matrix, stationary_radius, StationaryCertificate};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::LipschitzProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySection {
    pub closed_form_sum: f64,
    pub certified: bool,
    pub margin: f64,
    pub reason: Option<String>,
    pub rho_m: Option<f64>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSection {
    pub variant_used: Variant,
    pub certified: bool,
    pub regime: Regime,
    pub variant_a: VMinimum,
    pub variant_b: VMinimum,
    /// The two variants disagree on the certified flag.
    pub variant_disagreement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSection {
    /// `(T, rho(S_T))` samples.
    pub rho_st: Vec<(usize, f64)>,
    pub lambda_sup: Option<f64>,
    pub inf_rho_b: f64,
    pub r_star_rho_b: f64,
    /// Constraint roots at `lambda = inf rho(B)` slightly lifted, in `z`.
    pub z0_roots: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub profile: LipschitzProfile,
    pub stationary: StationarySection,
    pub finite_horizon: FiniteSection,
    pub diagnostics: DiagnosticsSection,
}

pub fn stationary_section(p: &LipschitzProfile) -> StationarySection {
    let c = stationary_certificate(p);
    let m = stationary_matrix(p);
    StationarySection {
        closed_form_sum: c.sum,
        certified: c.certified,
        margin: c.margin,
        reason: c.reason,
        rho_m: stationary_radius(p).ok().map(|r| r.rho),
        matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
    }
}

pub fn finite_section(p: &LipschitzProfile) -> FiniteSection {
    let a = minimize_v(p, Variant::A);
    let b = minimize_v(p, Variant::B);
    FiniteSection {
        variant_used: Variant::A,
        certified: a.certified,
        regime: a.regime,
        variant_disagreement: a.certified != b.certified,
        variant_a: a,
        variant_b: b,
    }
}

/// Full certificate bundle; `horizons` selects the `rho(S_T)` samples.
pub fn contraction_report(p: &LipschitzProfile, horizons: &[usize]) -> Result<ContractionReport> {
    let scan = limit_consistency_scan(p, horizons, Variant::A)?;
    let rho_st: Vec<(usize, f64)> = scan.rows.iter().map(|r| (r.horizon, r.rho_st)).collect();
    let lambda_sup = rho_st.iter().map(|r| r.1).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let z0_roots = constraint_roots(p, scan.inf_rho_b * (1.0 + 1e-9), Variant::A).map(|r| r.roots).unwrap_or_default();
    Ok(ContractionReport {
        profile: p.clone(),
        stationary: stationary_section(p),
        finite_horizon: finite_section(p),
        diagnostics: DiagnosticsSection { rho_st, lambda_sup, inf_rho_b: scan.inf_rho_b, r_star_rho_b: scan.r_star, z0_roots },
    })
}

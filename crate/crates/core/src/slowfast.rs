//! Schur-complement reduction of block nonnegative matrices and the
//! slow-fast certificates built on it.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contraction::{minimize_v, stationary_certificate, stationary_matrix, FiniteHorizonMatrix};
use crate::error::{MfgError, Result};
use crate::model::LipschitzProfile;
use crate::spectral::dense_radius;

pub const DEAD_BAND: f64 = 1e-8;
const RADIUS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub sizes: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(MfgError::Invalid("block sizes must be positive".into()));
        }
        Ok(Self { sizes })
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionStep {
    pub b: DMatrix<f64>,
    pub rho_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionChain {
    pub steps: Vec<ReductionStep>,
    /// `R_m`, present when the chain ran to the end.
    pub last: Option<DMatrix<f64>>,
    pub rho_last: Option<f64>,
    pub feasible: bool,
    /// Some radius fell within [`DEAD_BAND`] of 1.
    pub marginal: bool,
}

fn col_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `(I - B)^{-1} C`: Neumann series with doubling when comfortably
/// subcritical, otherwise a direct solve.
fn resolvent_times(b: &DMatrix<f64>, c: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    if rho < 1.0 - 1e-6 {
        // S_{2L} = S_L + B^L S_L, covering sum_{l < 2L} B^l
        let mut s = DMatrix::<f64>::identity(n, n);
        let mut p = b.clone();
        for _ in 0..64 {
            if col_norm(&p) <= 1e-14 {
                return Ok(&s * c);
            }
            s = &s + &p * &s;
            p = &p * &p;
        }
    }
    let lhs = DMatrix::<f64>::identity(n, n) - b;
    lhs.lu().solve(c).ok_or_else(|| MfgError::Invalid("I - B is singular".into()))
}

pub fn schur_reduce(a: &DMatrix<f64>, partition: &BlockPartition) -> Result<ReductionChain> {
    if a.nrows() != a.ncols() || a.nrows() != partition.dim() {
        return Err(MfgError::Invalid(format!("partition of {} does not fit a {}x{} matrix", partition.dim(), a.nrows(), a.ncols())));
    }
    let mut r = a.clone();
    let mut steps = Vec::new();
    let mut marginal = false;
    let m = partition.sizes.len();
    for &nk in &partition.sizes[..m - 1] {
        let rest = r.nrows() - nk;
        let b = r.view((0, 0), (nk, nk)).into_owned();
        let rho = dense_radius(&b, RADIUS_TOL)?;
        marginal |= (rho - 1.0).abs() <= DEAD_BAND;
        steps.push(ReductionStep { b: b.clone(), rho_b: rho });
        if rho >= 1.0 {
            return Ok(ReductionChain { steps, last: None, rho_last: None, feasible: false, marginal });
        }
        let c = r.view((0, nk), (nk, rest)).into_owned();
        let d = r.view((nk, 0), (rest, nk)).into_owned();
        let e = r.view((nk, nk), (rest, rest)).into_owned();
        let x = resolvent_times(&b, &c, rho)?;
        r = e + d * x;
    }
    let rho = dense_radius(&r, RADIUS_TOL)?;
    marginal |= (rho - 1.0).abs() <= DEAD_BAND;
    Ok(ReductionChain { steps, last: Some(r), rho_last: Some(rho), feasible: true, marginal })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowFastCertificate {
    pub certified: bool,
    pub marginal: bool,
    pub chain: ReductionChain,
}

pub fn slowfast_certificate(a: &DMatrix<f64>, partition: &BlockPartition) -> Result<SlowFastCertificate> {
    let chain = schur_reduce(a, partition)?;
    let certified = chain.feasible && chain.rho_last.is_some_and(|r| r < 1.0);
    Ok(SlowFastCertificate { certified, marginal: chain.marginal, chain })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowFastMode {
    Stationary,
    Finite(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowFastReport {
    pub mode: SlowFastMode,
    pub split: usize,
    pub certified: bool,
    pub marginal: bool,
    pub rho_b: Vec<f64>,
    pub rho_last: Option<f64>,
    /// Whole-system verdict the split is compared against.
    pub reference_certified: bool,
    pub reference: String,
    pub agrees: bool,
    /// Horizon-limit verdict for the finite mode.
    pub limit_certified: Option<bool>,
}

pub fn mfg_slowfast_check(p: &LipschitzProfile, split: usize, mode: SlowFastMode) -> Result<SlowFastReport> {
    let n = p.n();
    if split < 1 || split >= n {
        return Err(MfgError::Invalid(format!("split must satisfy 1 <= N1 < N = {n}, got {split}")));
    }
    let (a, partition, reference_certified, reference, limit_certified) = match mode {
        SlowFastMode::Stationary => {
            let c = stationary_certificate(p);
            (stationary_matrix(p), BlockPartition::new(vec![split, n - split])?, c.certified, "closed-form stationary sum".to_string(), None)
        }
        SlowFastMode::Finite(t) => {
            let s = FiniteHorizonMatrix::new(p, t)?;
            let rho = s.radius(&Default::default())?.rho;
            let blk = s.block();
            (
                s.dense()?,
                BlockPartition::new(vec![split * blk, (n - split) * blk])?,
                rho < 1.0,
                format!("rho(S_{t}) = {rho}"),
                Some(minimize_v(p, crate::contraction::Variant::A).certified),
            )
        }
    };
    let cert = slowfast_certificate(&a, &partition)?;
    Ok(SlowFastReport {
        mode,
        split,
        certified: cert.certified,
        marginal: cert.marginal,
        rho_b: cert.chain.steps.iter().map(|s| s.rho_b).collect(),
        rho_last: cert.chain.rho_last,
        reference_certified,
        reference,
        agrees: cert.certified == reference_certified,
        limit_certified,
    })
}

/// Random nonnegative block matrix with `m` in `2..=4` blocks of size
/// `1..=3`, rescaled so its radius is uniform in `[0.2, 1.8]`.
pub fn random_block_matrix(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, BlockPartition) {
    loop {
        let m = rng.gen_range(2..=4);
        let sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=3)).collect();
        let n: usize = sizes.iter().sum();
        let a = DMatrix::from_fn(n, n, |_, _| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() });
        let Ok(rho) = dense_radius(&a, 1e-13) else { continue };
        if rho < 1e-3 {
            continue;
        }
        let target = rng.gen_range(0.2..1.8);
        return (a * (target / rho), BlockPartition { sizes });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub count: usize,
    pub seed: u64,
    pub skipped_marginal: usize,
    pub disagreements: usize,
}

/// Compares the chain verdict with a direct Perron radius on random blocks.
pub fn equivalence_campaign(count: usize, seed: u64) -> Result<CampaignResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut skipped = 0;
    let mut disagreements = 0;
    for _ in 0..count {
        let (a, part) = random_block_matrix(&mut rng);
        let rho = dense_radius(&a, 1e-13)?;
        let cert = slowfast_certificate(&a, &part)?;
        if cert.marginal || (rho - 1.0).abs() <= DEAD_BAND {
            skipped += 1;
            continue;
        }
        if cert.certified != (rho < 1.0) {
            disagreements += 1;
        }
    }
    Ok(CampaignResult { count, seed, skipped_marginal: skipped, disagreements })
}

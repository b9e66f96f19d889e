//! Training objectives: InfoNCE, clustering consistency (swapped
//! prediction), cluster-masked contrastive, prototype-reweighted
//! contrastive, and their combination.
//!
//! All contrastive variants score the positive pair `z_i·z'_i` against
//! cross-view negatives `z_i·z'_j`; the query's own index never appears as a
//! negative. Sinkhorn targets and negative-pair weights are plain matrices
//! computed off the tape, so no gradient flows through them.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::Matrix;
use crate::prototypes::{negative_weights, PrototypeBank};
use crate::tensor::Tensor;

/// Which objective the training step optimizes; names follow the ablation
/// rows (contrastive part first, `+consistency` when the regularizer is on).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum LossMode {
    #[value(name = "infonce")]
    #[serde(rename = "infonce")]
    InfoNce,
    #[value(name = "consistency-only")]
    #[serde(rename = "consistency-only")]
    ConsistencyOnly,
    #[value(name = "reweighted-only")]
    #[serde(rename = "reweighted-only")]
    ReweightedOnly,
    #[value(name = "infonce+consistency")]
    #[serde(rename = "infonce+consistency")]
    InfoNceConsistency,
    #[value(name = "reweighted+consistency")]
    #[serde(rename = "reweighted+consistency")]
    ReweightedConsistency,
}

impl LossMode {
    pub fn uses_consistency(self) -> bool {
        matches!(
            self,
            LossMode::ConsistencyOnly | LossMode::InfoNceConsistency | LossMode::ReweightedConsistency
        )
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossMode::InfoNce => "infonce",
            LossMode::ConsistencyOnly => "consistency-only",
            LossMode::ReweightedOnly => "reweighted-only",
            LossMode::InfoNceConsistency => "infonce+consistency",
            LossMode::ReweightedConsistency => "reweighted+consistency",
        };
        f.write_str(s)
    }
}

/// Loss hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Contrastive temperature.
    pub tau: f64,
    /// Weight of the consistency regularizer in the combined objective.
    pub lambda: f64,
    pub mode: LossMode,
    /// Sum the normalization factor M_i over unmasked negatives only,
    /// instead of over the whole batch.
    pub mi_masked_sum: bool,
    /// Also score view-2 queries against view-1 negatives and average.
    pub symmetric_contrast: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 0.5,
            lambda: 6.0,
            mode: LossMode::ReweightedConsistency,
            mi_masked_sum: false,
            symmetric_contrast: false,
        }
    }
}

/// Everything one step's objectives consume.
pub struct BatchViews {
    /// View-1 embeddings, N×D, on the tape.
    pub z: Tensor,
    /// View-2 embeddings, N×D, on the tape.
    pub zp: Tensor,
    /// Softmax predictions for both views, N×K, on the tape.
    pub p: Tensor,
    pub pp: Tensor,
    /// Sinkhorn targets for both views (constants, rows sum to 1).
    pub q: Matrix,
    pub qp: Matrix,
    /// Hard cluster ids from the view-1 targets.
    pub clusters: Vec<usize>,
}

/// Directional contrastive loss with an arbitrary nonnegative negative-pair
/// weight matrix `w` (the positive sits on the diagonal of the score matrix
/// and must have `w[i][i] = 0`), optionally rescaled per query by `m`.
fn contrastive_direction(
    z: &Tensor,
    zp: &Tensor,
    w: &Matrix,
    m: Option<&Matrix>,
    tau: f64,
) -> Result<Tensor> {
    let sim = z.matmul(&zp.transpose())?.scale(1.0 / tau);
    let e = sim.exp();
    let pos = e.diag_col()?;
    let mut neg = e.mul_const(w)?.sum_rows();
    if let Some(m) = m {
        neg = neg.mul_const(m)?;
    }
    let denom = pos.add(&neg)?;
    // -log(pos/denom) = log(denom) - log(pos)
    Ok(denom.log()?.sub(&pos.log()?)?.mean())
}

fn maybe_symmetric(
    z: &Tensor,
    zp: &Tensor,
    w: &Matrix,
    m: Option<&Matrix>,
    tau: f64,
    symmetric: bool,
) -> Result<Tensor> {
    let fwd = contrastive_direction(z, zp, w, m, tau)?;
    if !symmetric {
        return Ok(fwd);
    }
    let bwd = contrastive_direction(zp, z, w, m, tau)?;
    Ok(fwd.add(&bwd)?.scale(0.5))
}

/// Plain InfoNCE with cross-view negatives (all j ≠ i).
pub fn infonce(z: &Tensor, zp: &Tensor, tau: f64) -> Result<Tensor> {
    let n = z.rows();
    let mut w = Matrix::filled(n, n, 1.0);
    for i in 0..n {
        w.set(i, i, 0.0);
    }
    contrastive_direction(z, zp, &w, None, tau)
}

/// Swapped-prediction consistency: mean over the batch of
/// `½[CE(q', p) + CE(q, p')]`, with targets held constant.
pub fn consistency(p: &Tensor, qp: &Matrix, pp: &Tensor, q: &Matrix) -> Result<Tensor> {
    let ce1 = p
        .clamp_min(1e-12)
        .log()?
        .mul_const(qp)?
        .sum_rows()
        .neg();
    let ce2 = pp
        .clamp_min(1e-12)
        .log()?
        .mul_const(q)?
        .sum_rows()
        .neg();
    Ok(ce1.add(&ce2)?.scale(0.5).mean())
}

fn cluster_mask(clusters: &[usize]) -> Matrix {
    let n = clusters.len();
    Matrix::from_fn(n, n, |i, j| if clusters[i] != clusters[j] { 1.0 } else { 0.0 })
}

/// InfoNCE restricted to negatives from clusters other than the query's.
pub fn masked_contrastive(
    z: &Tensor,
    zp: &Tensor,
    clusters: &[usize],
    tau: f64,
) -> Result<Tensor> {
    let w = cluster_mask(clusters);
    contrastive_direction(z, zp, &w, None, tau)
}

/// Masked contrastive with Gaussian prototype-distance weights on the
/// negatives and the per-query normalization factor `M_i = N / Σ_j w_ij`.
pub fn reweighted_contrastive(
    z: &Tensor,
    zp: &Tensor,
    clusters: &[usize],
    bank: &PrototypeBank,
    cfg: &LossConfig,
) -> Result<Tensor> {
    let (w, m) = reweighting_terms(clusters, bank, cfg.mi_masked_sum)?;
    maybe_symmetric(z, zp, &w, Some(&m), cfg.tau, cfg.symmetric_contrast)
}

/// The masked weight matrix and per-query normalization column used by the
/// reweighted objective; both are constants with respect to the tape.
pub fn reweighting_terms(
    clusters: &[usize],
    bank: &PrototypeBank,
    mi_masked_sum: bool,
) -> Result<(Matrix, Matrix)> {
    let n = clusters.len();
    let mask = cluster_mask(clusters);
    let mut w = Matrix::zeros(n, n);
    let mut m = Matrix::zeros(n, 1);
    for i in 0..n {
        let wi = negative_weights(bank, clusters[i], clusters)?;
        let mut masked_sum = 0.0;
        let mut full_sum = 0.0;
        for j in 0..n {
            full_sum += wi[j];
            let masked = mask.get(i, j) * wi[j];
            w.set(i, j, masked);
            masked_sum += masked;
        }
        let denom = if mi_masked_sum { masked_sum } else { full_sum };
        m.set(i, 0, if denom > 0.0 { n as f64 / denom } else { 0.0 });
    }
    Ok((w, m))
}

/// The combined objective value with its component breakdown.
pub struct CombinedLoss {
    pub total: Tensor,
    /// Value of the contrastive component (0 when the mode has none).
    pub contrastive: f64,
    /// Value of the consistency component (0 when the mode has none).
    pub consistency: f64,
}

/// Assemble the mode's objective: single-component modes return that loss;
/// two-component modes add `lambda ×` the consistency regularizer.
pub fn combined(views: &BatchViews, bank: &PrototypeBank, cfg: &LossConfig) -> Result<CombinedLoss> {
    let contrastive = match cfg.mode {
        LossMode::InfoNce | LossMode::InfoNceConsistency => Some(maybe_symmetric(
            &views.z,
            &views.zp,
            &{
                let n = views.z.rows();
                let mut w = Matrix::filled(n, n, 1.0);
                for i in 0..n {
                    w.set(i, i, 0.0);
                }
                w
            },
            None,
            cfg.tau,
            cfg.symmetric_contrast,
        )?),
        LossMode::ReweightedOnly | LossMode::ReweightedConsistency => Some(
            reweighted_contrastive(&views.z, &views.zp, &views.clusters, bank, cfg)?,
        ),
        LossMode::ConsistencyOnly => None,
    };
    let consistency_term = if cfg.mode.uses_consistency() {
        Some(consistency(&views.p, &views.qp, &views.pp, &views.q)?)
    } else {
        None
    };

    let contrastive_value = contrastive.as_ref().map_or(0.0, Tensor::scalar_value);
    let consistency_value = consistency_term.as_ref().map_or(0.0, Tensor::scalar_value);
    let total = match (contrastive, consistency_term) {
        (Some(c), Some(r)) => c.add(&r.scale(cfg.lambda))?,
        (Some(c), None) => c,
        (None, Some(r)) => r,
        (None, None) => unreachable!("every mode has at least one component"),
    };
    Ok(CombinedLoss {
        total,
        contrastive: contrastive_value,
        consistency: consistency_value,
    })
}

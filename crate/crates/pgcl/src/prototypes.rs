//! Prototype bank, Sinkhorn-balanced soft cluster targets, and the
//! prototype-distance machinery behind negative-pair reweighting.
//!
//! The bank holds K trainable prototype vectors (rows of C). Scores Z·Cᵀ feed
//! two consumers: differentiable softmax predictions, and — off the tape —
//! the Sinkhorn-Knopp solver that projects exp(S/eps) onto the transportation
//! polytope with row marginals 1/K and column marginals 1/N, yielding
//! per-sample soft targets that are split uniformly across prototypes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PgclError, Result};
use crate::matrix::Matrix;
use crate::tensor::Tensor;

/// The K×D matrix of trainable prototype vectors, kept row-unit-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub c: Matrix,
}

impl PrototypeBank {
    /// Rows drawn from a unit Gaussian, then normalized.
    pub fn init(num_prototypes: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut c = Matrix::from_fn(num_prototypes, dim, |_, _| standard_normal(rng));
        renormalize_matrix(&mut c, rng);
        PrototypeBank { c }
    }

    pub fn num_prototypes(&self) -> usize {
        self.c.rows()
    }

    pub fn dim(&self) -> usize {
        self.c.cols()
    }

    /// Rescale every prototype to unit L2 norm; a zero prototype is
    /// re-initialized from a unit Gaussian draw before normalizing.
    pub fn renormalize(&mut self, rng: &mut ChaCha8Rng) {
        renormalize_matrix(&mut self.c, rng);
    }

    /// Cosine distance `1 − cos(c_i, c_j)` in [0, 2].
    pub fn prototype_distance(&self, i: usize, j: usize) -> Result<f64> {
        let k = self.num_prototypes();
        if i >= k || j >= k {
            return Err(PgclError::Contract(format!(
                "prototype id out of range: ({i}, {j}) with K = {k}"
            )));
        }
        let (ri, rj) = (self.c.row(i), self.c.row(j));
        let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
        let ni: f64 = ri.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nj: f64 = rj.iter().map(|x| x * x).sum::<f64>().sqrt();
        if ni == 0.0 || nj == 0.0 {
            return Err(PgclError::Contract(format!(
                "zero-norm prototype in distance({i}, {j})"
            )));
        }
        Ok(1.0 - dot / (ni * nj))
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; fine for initialization purposes.
    loop {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let z = (-2.0 * u.ln()).sqrt() * v.cos();
        if z.is_finite() {
            return z;
        }
    }
}

fn renormalize_matrix(c: &mut Matrix, rng: &mut ChaCha8Rng) {
    for i in 0..c.rows() {
        let row = c.row_mut(i);
        let mut norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            for x in row.iter_mut() {
                *x = standard_normal(rng);
            }
            norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        for x in row.iter_mut() {
            *x /= norm;
        }
    }
}

/// Differentiable prototype scores `S = Z · Cᵀ`.
pub fn prototype_scores(z: &Tensor, c: &Tensor) -> Result<Tensor> {
    z.matmul(&c.transpose())
}

/// Sinkhorn-Knopp settings; eps trades convergence speed for closeness to
/// the unregularized transport optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub eps: f64,
    pub niters: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            eps: 0.05,
            niters: 3,
        }
    }
}

/// Output of [`sinkhorn`].
#[derive(Debug, Clone)]
pub struct SinkhornResult {
    /// N×K per-sample soft targets; every row sums to 1.
    pub assignments: Matrix,
    /// K×N transport matrix before the final per-sample normalization;
    /// row sums approach 1/K and column sums 1/N as iterations grow.
    pub transport: Matrix,
}

/// Project scores onto balanced soft assignments:
/// `Q ← exp(Sᵀ/eps)`, normalize to total mass 1, then alternate row
/// rescaling to marginal 1/K and column rescaling to marginal 1/N for
/// `niters` rounds; return the per-sample-normalized transpose.
/// No gradients flow through this routine.
pub fn sinkhorn(scores: &Matrix, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    if cfg.eps <= 0.0 || cfg.niters == 0 {
        return Err(PgclError::Config(format!(
            "sinkhorn requires eps > 0 and niters >= 1, got eps {} niters {}",
            cfg.eps, cfg.niters
        )));
    }
    if !scores.is_finite() {
        return Err(PgclError::NumericDomain {
            op: "sinkhorn",
            detail: "scores contain non-finite entries".into(),
        });
    }
    let n = scores.rows();
    let k = scores.cols();
    // Subtract the global max of S/eps before exponentiation; the shift
    // cancels in the first total-mass normalization.
    let max = scores.max_entry() / cfg.eps;
    let mut q = Matrix::from_fn(k, n, |kk, nn| (scores.get(nn, kk) / cfg.eps - max).exp());
    let total = q.sum();
    if total == 0.0 {
        return Err(PgclError::NumericDomain {
            op: "sinkhorn",
            detail: "exponentiated scores underflowed to zero".into(),
        });
    }
    q = q.scale(1.0 / total);

    let r = 1.0 / k as f64;
    let c = 1.0 / n as f64;
    for _ in 0..cfg.niters {
        let row_sums = q.row_sums();
        for i in 0..k {
            let factor = r / row_sums[i];
            for x in q.row_mut(i) {
                *x *= factor;
            }
        }
        let col_sums = q.col_sums();
        for i in 0..k {
            let row = q.row_mut(i);
            for (j, x) in row.iter_mut().enumerate() {
                *x *= c / col_sums[j];
            }
        }
    }

    let col_sums = q.col_sums();
    let assignments = Matrix::from_fn(n, k, |nn, kk| q.get(kk, nn) / col_sums[nn]);
    Ok(SinkhornResult {
        assignments,
        transport: q,
    })
}

/// Hard cluster of each sample: the argmax of its assignment row, ties
/// resolved toward the lowest prototype index.
pub fn hard_assign(assignments: &Matrix) -> Vec<usize> {
    assignments.argmax_rows()
}

/// Gaussian weights over a batch for one query: for each sample j,
/// `w_j = exp(−(D(c_q, c_j) − μ)² / (2σ²))` with μ, σ the mean and
/// population standard deviation of the batch's prototype distances to the
/// query. Degenerate σ (< 1e-8) falls back to all-ones.
pub fn negative_weights(
    bank: &PrototypeBank,
    query_cluster: usize,
    batch_clusters: &[usize],
) -> Result<Vec<f64>> {
    let n = batch_clusters.len();
    if n < 2 {
        return Err(PgclError::Contract(format!(
            "negative_weights needs a batch of >= 2, got {n}"
        )));
    }
    let dists: Vec<f64> = batch_clusters
        .iter()
        .map(|&cj| bank.prototype_distance(query_cluster, cj))
        .collect::<Result<_>>()?;
    let mu = dists.iter().sum::<f64>() / n as f64;
    let var = dists.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n as f64;
    let sigma = var.sqrt();
    if sigma < 1e-8 {
        return Ok(vec![1.0; n]);
    }
    Ok(dists
        .iter()
        .map(|d| (-(d - mu).powi(2) / (2.0 * var)).exp())
        .collect())
}

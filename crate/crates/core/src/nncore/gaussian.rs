//! Diagonal-Gaussian utilities: closed-form log-density, KL divergence, and
//! the reparameterization trick, both as plain functions and as graph
//! composites for batched training.

use super::graph::{Graph, NodeId};
use super::{NnError, NnResult};
use ndarray::Array1;

pub const LN_2PI: f64 = 1.8378770664093453;

/// Log-variance clamp range; keeps exp() well away from overflow.
pub const LOG_VAR_RANGE: (f64, f64) = (-10.0, 10.0);

/// Diagonal Gaussian given by per-dimension mean and log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Array1<f64>,
    log_var: Array1<f64>,
}

impl DiagGaussian {
    /// Log-variances are clamped to [-10, 10].
    pub fn new(mean: Array1<f64>, log_var: Array1<f64>) -> NnResult<Self> {
        if mean.len() != log_var.len() {
            return Err(NnError::ShapeMismatch {
                op: "DiagGaussian::new",
                detail: format!("mean len {} != log_var len {}", mean.len(), log_var.len()),
            });
        }
        let log_var = log_var.mapv(|v| v.clamp(LOG_VAR_RANGE.0, LOG_VAR_RANGE.1));
        if log_var.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("log_var"));
        }
        Ok(DiagGaussian { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: Array1::zeros(dim),
            log_var: Array1::zeros(dim),
        }
    }

    /// Isotropic Gaussian with the given mean and variance.
    pub fn isotropic(mean: Array1<f64>, variance: f64) -> NnResult<Self> {
        let dim = mean.len();
        DiagGaussian::new(mean, Array1::from_elem(dim, variance.ln()))
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn log_var(&self) -> &Array1<f64> {
        &self.log_var
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sum over dimensions of the diagonal-Gaussian log density at `x`.
pub fn diag_gaussian_log_prob(x: &Array1<f64>, g: &DiagGaussian) -> NnResult<f64> {
    if x.len() != g.dim() {
        return Err(NnError::ShapeMismatch {
            op: "diag_gaussian_log_prob",
            detail: format!("x len {} != gaussian dim {}", x.len(), g.dim()),
        });
    }
    let mut total = 0.0;
    for d in 0..g.dim() {
        let lv = g.log_var[d];
        let resid = x[d] - g.mean[d];
        total += -0.5 * LN_2PI - 0.5 * lv - 0.5 * resid * resid * (-lv).exp();
    }
    Ok(total)
}

/// KL(q || p) between diagonal Gaussians; always >= 0.
pub fn diag_gaussian_kl(q: &DiagGaussian, p: &DiagGaussian) -> NnResult<f64> {
    if q.dim() != p.dim() {
        return Err(NnError::ShapeMismatch {
            op: "diag_gaussian_kl",
            detail: format!("q dim {} != p dim {}", q.dim(), p.dim()),
        });
    }
    let mut total = 0.0;
    for d in 0..q.dim() {
        let (lq, lp) = (q.log_var[d], p.log_var[d]);
        let var_q = lq.exp();
        let var_p = lp.exp();
        let mean_diff = q.mean[d] - p.mean[d];
        total += 0.5 * (lp - lq + (var_q + mean_diff * mean_diff) / var_p - 1.0);
    }
    Ok(total)
}

/// mean + exp(log_var / 2) * noise.
pub fn reparam_sample(g: &DiagGaussian, noise: &Array1<f64>) -> NnResult<Array1<f64>> {
    if noise.len() != g.dim() {
        return Err(NnError::ShapeMismatch {
            op: "reparam_sample",
            detail: format!("noise len {} != dim {}", noise.len(), g.dim()),
        });
    }
    Ok(&g.mean + &(g.log_var.mapv(|v| (0.5 * v).exp()) * noise))
}

// Batched graph composites. Rows are independent samples; outputs are B x 1
// (per-row reductions) or B x K.

/// Per-row log density of x under (mean, log_var); all B x K, output B x 1.
pub fn graph_log_prob(g: &mut Graph, x: NodeId, mean: NodeId, log_var: NodeId) -> NodeId {
    let resid = g.sub(x, mean);
    let sq = g.mul(resid, resid);
    let neg_lv = g.scale(log_var, -1.0);
    let inv_var = g.exp(neg_lv);
    let mahal = g.mul(sq, inv_var);
    let shifted = g.add(log_var, mahal); // lv + (x-m)^2 / var
    let with_const = g.affine(shifted, -0.5, -0.5 * LN_2PI);
    g.sum_rows(with_const)
}

/// Per-row KL(q || p) where p is isotropic with optional non-zero mean;
/// output B x 1.
pub fn graph_kl_to_isotropic(
    g: &mut Graph,
    mean_q: NodeId,
    log_var_q: NodeId,
    mean_p: Option<NodeId>,
    var_p: f64,
) -> NodeId {
    let var_q = g.exp(log_var_q);
    let mean_diff = match mean_p {
        Some(mp) => g.sub(mean_q, mp),
        None => mean_q,
    };
    let diff_sq = g.mul(mean_diff, mean_diff);
    let numer = g.add(var_q, diff_sq);
    let scaled = g.scale(numer, 1.0 / var_p);
    let lv_term = g.scale(log_var_q, -1.0);
    let sum = g.add(scaled, lv_term);
    let per_dim = g.affine(sum, 0.5, 0.5 * (var_p.ln() - 1.0));
    g.sum_rows(per_dim)
}

/// Per-row reparameterized sample: mean + exp(log_var/2) * noise (B x K).
pub fn graph_reparam(g: &mut Graph, mean: NodeId, log_var: NodeId, noise: NodeId) -> NodeId {
    let half_lv = g.scale(log_var, 0.5);
    let std = g.exp(half_lv);
    let scaled = g.mul(std, noise);
    g.add(mean, scaled)
}

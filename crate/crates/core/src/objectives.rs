//! Losses on linear encoders with closed-form gradients.
//!
//! Every function takes a batch of row indices into [`PreparedRows`] and
//! returns the batch-mean loss together with its gradient. Terms computed
//! from target parameters are treated as constants.

use nalgebra::{DMatrix, DVector};

use crate::encoder::{add_outer, LinearEncoder, PreparedRows};
use crate::error::{dim_err, param_err, Result};
use crate::linalg;

/// Scalar value head `q = w^T phi + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FqeHead {
    pub w: DVector<f64>,
    pub b: f64,
    pub use_bias: bool,
}

impl FqeHead {
    pub fn value(&self, phi: &DVector<f64>) -> f64 {
        self.w.dot(phi) + if self.use_bias { self.b } else { 0.0 }
    }

    pub fn norm_squared(&self) -> f64 {
        self.w.norm_squared() + self.b * self.b
    }
}

/// Reward and next-feature predictors of the BCRL baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct BcrlHeads {
    pub m: DMatrix<f64>,
    pub rho: DVector<f64>,
}

fn check_batch(batch_len: usize) -> Result<()> {
    if batch_len == 0 {
        return Err(param_err("batch must not be empty"));
    }
    Ok(())
}

fn reward_range(r_bounds: (f64, f64)) -> Result<f64> {
    let range = r_bounds.1 - r_bounds.0;
    if !(range > 0.0) {
        return Err(param_err(format!("degenerate reward range [{}, {}]", r_bounds.0, r_bounds.1)));
    }
    Ok(range)
}

/// Semi-gradient KROPE loss over pairs `(i, j)` with `i` indexing `first`
/// and `j` indexing `second`:
/// `(1 - |r_i - r_j| / R + gamma * phi_bar(x_i')^T phi_bar(x_j') - phi(x_i)^T phi(x_j))^2`.
pub fn krope_pair_loss(
    encoder: &LinearEncoder,
    target: &LinearEncoder,
    first: &PreparedRows,
    second: &PreparedRows,
    pairs: &[(usize, usize)],
    gamma: f64,
    r_bounds: (f64, f64),
) -> Result<(f64, DMatrix<f64>)> {
    check_batch(pairs.len())?;
    let range = reward_range(r_bounds)?;
    let mut grad = DMatrix::zeros(encoder.dim(), encoder.width());
    let mut loss = 0.0;
    let scale = 1.0 / pairs.len() as f64;
    for &(i, j) in pairs {
        let p1 = encoder.encode(&first.x[i]);
        let p2 = encoder.encode(&second.x[j]);
        let k_next = if gamma != 0.0 && !first.x_next[i].is_zero() && !second.x_next[j].is_zero() {
            target.encode(&first.x_next[i]).dot(&target.encode(&second.x_next[j]))
        } else {
            0.0
        };
        let tgt = 1.0 - (first.r[i] - second.r[j]).abs() / range + gamma * k_next;
        let e = tgt - p1.dot(&p2);
        loss += e * e;
        let c = -2.0 * e * scale;
        add_outer(&mut grad, c, &p2, &first.x[i]);
        add_outer(&mut grad, c, &p1, &second.x[j]);
    }
    Ok((loss * scale, grad))
}

/// Gradients of [`fqe_loss`].
#[derive(Debug, Clone)]
pub struct FqeGrads {
    pub encoder: DMatrix<f64>,
    pub head_w: DVector<f64>,
    pub head_b: f64,
}

/// Squared TD error `(r + gamma * q_bar(x') - q(x))^2` with the target
/// encoder and head frozen.
pub fn fqe_loss(
    encoder: &LinearEncoder,
    head: &FqeHead,
    target_encoder: &LinearEncoder,
    target_head: &FqeHead,
    rows: &PreparedRows,
    batch: &[usize],
    gamma: f64,
) -> Result<(f64, FqeGrads)> {
    check_batch(batch.len())?;
    if head.w.len() != encoder.dim() || target_head.w.len() != target_encoder.dim() {
        return Err(dim_err("head width must equal the encoder dimension"));
    }
    let d = encoder.dim();
    let mut g_enc = DMatrix::zeros(d, encoder.width());
    let mut g_w = DVector::zeros(d);
    let mut g_b = 0.0;
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &k in batch {
        let phi = encoder.encode(&rows.x[k]);
        let q = head.value(&phi);
        let q_next = if gamma != 0.0 && rows.next_live[k] != 0.0 {
            let phin = target_encoder.encode(&rows.x_next[k]);
            target_head.w.dot(&phin) + if target_head.use_bias { target_head.b * rows.next_live[k] } else { 0.0 }
        } else {
            0.0
        };
        let delta = rows.r[k] + gamma * q_next - q;
        loss += delta * delta;
        let c = -2.0 * delta * scale;
        add_outer(&mut g_enc, c, &head.w, &rows.x[k]);
        g_w.axpy(c, &phi, 1.0);
        if head.use_bias {
            g_b += c;
        }
    }
    Ok((loss * scale, FqeGrads { encoder: g_enc, head_w: g_w, head_b: g_b }))
}

/// Co-adaptation `c = phi(x)^T phi(x')` and its gradient direction
/// `phi(x') x^T + phi(x) x'^T`, both through the live encoder.
fn coadaptation_terms(
    encoder: &LinearEncoder,
    rows: &PreparedRows,
    k: usize,
) -> (f64, DVector<f64>, DVector<f64>) {
    let phi = encoder.encode(&rows.x[k]);
    let phin = encoder.encode(&rows.x_next[k]);
    (phi.dot(&phin), phi, phin)
}

/// Absolute DR3 penalty `mean |phi(x)^T phi(x')|`.
pub fn dr3_penalty(encoder: &LinearEncoder, rows: &PreparedRows, batch: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    check_batch(batch.len())?;
    let mut grad = DMatrix::zeros(encoder.dim(), encoder.width());
    let mut pen = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &k in batch {
        let (c, phi, phin) = coadaptation_terms(encoder, rows, k);
        pen += c.abs();
        let s = if c > 0.0 {
            1.0
        } else if c < 0.0 {
            -1.0
        } else {
            0.0
        };
        add_outer(&mut grad, s * scale, &phin, &rows.x[k]);
        add_outer(&mut grad, s * scale, &phi, &rows.x_next[k]);
    }
    Ok((pen * scale, grad))
}

/// Hinge-squared BEER penalty `mean max(0, floor - phi(x)^T phi(x'))^2`.
pub fn beer_penalty(
    encoder: &LinearEncoder,
    rows: &PreparedRows,
    batch: &[usize],
    floor: f64,
) -> Result<(f64, DMatrix<f64>)> {
    check_batch(batch.len())?;
    let mut grad = DMatrix::zeros(encoder.dim(), encoder.width());
    let mut pen = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &k in batch {
        let (c, phi, phin) = coadaptation_terms(encoder, rows, k);
        let h = (floor - c).max(0.0);
        if h == 0.0 {
            continue;
        }
        pen += h * h;
        let g = -2.0 * h * scale;
        add_outer(&mut grad, g, &phin, &rows.x[k]);
        add_outer(&mut grad, g, &phi, &rows.x_next[k]);
    }
    Ok((pen * scale, grad))
}

pub const BCRL_LOGDET_EPS: f64 = 1e-6;

/// BCRL loss components and gradients.
#[derive(Debug, Clone)]
pub struct BcrlLoss {
    pub reward: f64,
    pub self_prediction: f64,
    /// `-coeff * log det(E[phi phi^T] + eps I)`.
    pub exploration: f64,
    pub grad_encoder: DMatrix<f64>,
    pub grad_m: DMatrix<f64>,
    pub grad_rho: DVector<f64>,
}

impl BcrlLoss {
    pub fn total(&self) -> f64 {
        self.reward + self.self_prediction + self.exploration
    }
}

/// Reward prediction, self-prediction against the frozen target encoder and
/// a log-determinant exploration bonus (skipped when `logdet_coeff` is 0).
pub fn bcrl_losses(
    encoder: &LinearEncoder,
    target: &LinearEncoder,
    heads: &BcrlHeads,
    rows: &PreparedRows,
    batch: &[usize],
    gamma: f64,
    logdet_coeff: f64,
) -> Result<BcrlLoss> {
    check_batch(batch.len())?;
    let d = encoder.dim();
    if heads.m.shape() != (d, d) || heads.rho.len() != d {
        return Err(dim_err("BCRL heads must match the encoder dimension"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut g_enc = DMatrix::zeros(d, encoder.width());
    let mut g_m = DMatrix::zeros(d, d);
    let mut g_rho = DVector::zeros(d);
    let mut reward = 0.0;
    let mut self_pred = 0.0;
    let mut phis = Vec::with_capacity(batch.len());
    for &k in batch {
        let phi = encoder.encode(&rows.x[k]);
        let er = heads.rho.dot(&phi) - rows.r[k];
        reward += er * er;
        let mut e = &heads.m * &phi;
        if gamma != 0.0 && !rows.x_next[k].is_zero() {
            e.axpy(-gamma, &target.encode(&rows.x_next[k]), 1.0);
        }
        self_pred += e.norm_squared();
        // d/dphi of both squared terms
        let mut dphi = &heads.rho * (2.0 * er);
        dphi += heads.m.tr_mul(&e) * 2.0;
        add_outer(&mut g_enc, scale, &dphi, &rows.x[k]);
        g_rho.axpy(2.0 * er * scale, &phi, 1.0);
        g_m.ger(2.0 * scale, &e, &phi, 1.0);
        phis.push(phi);
    }
    let mut exploration = 0.0;
    if logdet_coeff != 0.0 {
        let mut cov = DMatrix::identity(d, d) * BCRL_LOGDET_EPS;
        for phi in &phis {
            cov.ger(scale, phi, phi, 1.0);
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| crate::error::Error::Eigen("feature covariance is not positive definite".into()))?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        exploration = -logdet_coeff * logdet;
        let inv = chol.inverse();
        for (phi, &k) in phis.iter().zip(batch) {
            let dphi = &inv * phi * (-logdet_coeff * 2.0 * scale);
            add_outer(&mut g_enc, 1.0, &dphi, &rows.x[k]);
        }
    }
    Ok(BcrlLoss {
        reward: reward * scale,
        self_prediction: self_pred * scale,
        exploration,
        grad_encoder: g_enc,
        grad_m: g_m,
        grad_rho: g_rho,
    })
}

/// Closed-form least-squares BCRL heads for fixed features, used to seed
/// evaluation of the proxy loss.
pub fn fit_bcrl_heads(phi: &DMatrix<f64>, phi_next: &DMatrix<f64>, rewards: &[f64], gamma: f64) -> Result<BcrlHeads> {
    let (pinv, _) = linalg::pinv(phi, linalg::PINV_RCOND)?;
    let r = DVector::from_column_slice(rewards);
    let rho = &pinv * r;
    let m = (&pinv * (phi_next * gamma)).transpose();
    Ok(BcrlHeads { m, rho })
}

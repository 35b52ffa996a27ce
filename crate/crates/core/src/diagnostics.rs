//! Representation metrics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{dim_err, validation_err, Result};
use crate::linalg::{self, PINV_RCOND};
use crate::lspe::{lspe_solve, LspeProblem, LspeStatus};
use crate::objectives::fit_bcrl_heads;

/// Below this ratio of extreme singular values the covariance counts as singular.
pub const CONDITION_CUTOFF: f64 = 1e-14;

fn check_pair(phi: &DMatrix<f64>, phi_next: &DMatrix<f64>) -> Result<()> {
    if phi.shape() != phi_next.shape() {
        return Err(dim_err(format!("phi {:?} and phi_next {:?} differ", phi.shape(), phi_next.shape())));
    }
    Ok(())
}

/// Largest eigenvalue modulus of `pinv(Phi^T Phi) gamma Phi^T Phi_next`.
pub fn stability_spectral_radius(phi: &DMatrix<f64>, phi_next: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    check_pair(phi, phi_next)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let (cov_pinv, _) = linalg::pinv(&phi.tr_mul(phi), PINV_RCOND)?;
    let m = cov_pinv * phi.tr_mul(phi_next) * gamma;
    linalg::spectral_radius(&m)
}

/// `sigma_max / sigma_min` of `E[phi phi^T]`; infinite when singular.
pub fn condition_number(phi: &DMatrix<f64>) -> Result<f64> {
    if phi.nrows() == 0 {
        return Err(dim_err("condition number needs at least one row"));
    }
    let cov = phi.tr_mul(phi) / phi.nrows() as f64;
    let s = linalg::singular_values(&cov)?;
    let (max, min) = (s[0], *s.last().expect("d >= 1"));
    if max == 0.0 || min < CONDITION_CUTOFF * max {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// Mean of `phi(x)^T phi_next(x)` over rows.
pub fn feature_coadaptation(phi: &DMatrix<f64>, phi_next: &DMatrix<f64>) -> Result<f64> {
    check_pair(phi, phi_next)?;
    if phi.nrows() == 0 {
        return Err(dim_err("co-adaptation needs at least one row"));
    }
    Ok(phi.component_mul(phi_next).sum() / phi.nrows() as f64)
}

/// `||Phi w_hat - q||^2` for the least-squares `w_hat`, divided by `mean |q|`.
pub fn realizability_error(phi: &DMatrix<f64>, q: &[f64]) -> Result<f64> {
    if phi.nrows() != q.len() {
        return Err(dim_err("one value per feature row is required"));
    }
    let qv = DVector::from_column_slice(q);
    let (pinv, _) = linalg::pinv(phi, PINV_RCOND)?;
    let resid = phi * (pinv * &qv) - &qv;
    let err = resid.norm_squared();
    let scale = q.iter().map(|v| v.abs()).sum::<f64>() / q.len() as f64;
    Ok(if scale > 0.0 { err / scale } else { err })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthoValueCorrelation {
    /// Pearson coefficient, 0 when degenerate.
    pub r: f64,
    /// One of the two series had zero variance (or fewer than two pairs).
    pub degenerate: bool,
    /// Rows with zero feature norm, left out of every pair.
    pub zero_norm_rows: usize,
    pub n_pairs: usize,
}

/// Pearson correlation between pairwise orthogonality
/// `1 - |<phi_x, phi_y>| / (|phi_x| |phi_y|)` and value gap `|q(x) - q(y)|`
/// over unordered pairs of distinct rows.
pub fn ortho_value_correlation(phi: &DMatrix<f64>, q: &[f64]) -> Result<OrthoValueCorrelation> {
    if phi.nrows() != q.len() {
        return Err(dim_err("one value per feature row is required"));
    }
    let n = phi.nrows();
    let norms: Vec<f64> = (0..n).map(|i| phi.row(i).norm()).collect();
    let live: Vec<usize> = (0..n).filter(|&i| norms[i] > 0.0).collect();
    let mut o = Vec::new();
    let mut v = Vec::new();
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            let cos = phi.row(i).dot(&phi.row(j)).abs() / (norms[i] * norms[j]);
            o.push(1.0 - cos);
            v.push((q[i] - q[j]).abs());
        }
    }
    let (r, degenerate) = pearson(&o, &v);
    Ok(OrthoValueCorrelation { r, degenerate, zero_norm_rows: n - live.len(), n_pairs: o.len() })
}

/// Pearson coefficient with the zero-variance convention `(0, true)`.
pub fn pearson(x: &[f64], y: &[f64]) -> (f64, bool) {
    let n = x.len();
    if n < 2 {
        return (0.0, true);
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let scale_x = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let scale_y = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    // relative variance floor so rounding noise is not read as signal
    if sxx <= 1e-24 * scale_x * scale_x * n as f64 || syy <= 1e-24 * scale_y * scale_y * n as f64 {
        return (0.0, true);
    }
    ((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), false)
}

/// Weighted mean squared value error; `None` weights means uniform.
pub fn msve(q_hat: &[f64], q: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if q_hat.len() != q.len() || weights.is_some_and(|w| w.len() != q.len()) {
        return Err(dim_err("value vectors and weights must have equal length"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..q.len() {
        let w = weights.map_or(1.0, |w| w[k]);
        if w < 0.0 {
            return Err(validation_err("weights must be non-negative"));
        }
        num += w * (q_hat[k] - q[k]).powi(2);
        den += w;
    }
    if den == 0.0 {
        return Err(validation_err("weights sum to zero"));
    }
    Ok(num / den)
}

/// MSVE relative to that of `q_random`, the exact values of the
/// uniform-random policy.
pub fn normalized_msve(q_hat: &[f64], q: &[f64], q_random: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    let base = msve(q_random, q, weights)?;
    let err = msve(q_hat, q, weights)?;
    if base == 0.0 {
        return Ok(if err == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(err / base)
}

/// Least-squares value of `E ||[M; rho^T] phi - [gamma phi_next; r]||^2`
/// with `M` and `rho` fitted in closed form.
pub fn bc_proxy_loss(phi: &DMatrix<f64>, phi_next: &DMatrix<f64>, rewards: &[f64], gamma: f64) -> Result<f64> {
    check_pair(phi, phi_next)?;
    if rewards.len() != phi.nrows() {
        return Err(dim_err("one reward per feature row is required"));
    }
    let heads = fit_bcrl_heads(phi, phi_next, rewards, gamma)?;
    let pred_next = phi * heads.m.transpose();
    let pred_r = phi * &heads.rho;
    let n = phi.nrows() as f64;
    let mut total = 0.0;
    for k in 0..phi.nrows() {
        let mut row = 0.0;
        for j in 0..phi.ncols() {
            row += (pred_next[(k, j)] - gamma * phi_next[(k, j)]).powi(2);
        }
        row += (pred_r[k] - rewards[k]).powi(2);
        total += row;
    }
    Ok(total / n)
}

/// One row of metrics for a representation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub spectral_radius: f64,
    pub is_stable: bool,
    pub condition_number: f64,
    pub coadaptation: f64,
    pub realizability_error: f64,
    pub ortho_value_correlation: f64,
    pub ortho_degenerate: bool,
    pub zero_norm_rows: usize,
    pub msve_normalized: f64,
    pub lspe_status: String,
    pub bc_proxy_loss: f64,
}

pub const REPORT_HEADER: [&str; 11] = [
    "spectral_radius",
    "is_stable",
    "condition_number",
    "coadaptation",
    "realizability_error",
    "ortho_value_correlation",
    "ortho_degenerate",
    "zero_norm_rows",
    "msve_normalized",
    "lspe_status",
    "bc_proxy_loss",
];

impl DiagnosticsReport {
    pub fn csv_fields(&self) -> Vec<String> {
        use crate::io::format_f64 as f;
        vec![
            f(self.spectral_radius),
            self.is_stable.to_string(),
            f(self.condition_number),
            f(self.coadaptation),
            f(self.realizability_error),
            f(self.ortho_value_correlation),
            self.ortho_degenerate.to_string(),
            self.zero_norm_rows.to_string(),
            f(self.msve_normalized),
            self.lspe_status.clone(),
            f(self.bc_proxy_loss),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        w.write_record(self.csv_fields())?;
        w.flush()?;
        Ok(())
    }
}

/// Inputs for a full report.
///
/// `problem` holds the rows the representation is evaluated on (dataset rows
/// or all state-actions with exact expectations); `phi_all` has one row per
/// state-action and is used for the value-based metrics.
pub struct ReportInputs<'a> {
    pub problem: &'a LspeProblem,
    pub phi_all: &'a DMatrix<f64>,
    pub q_exact: &'a [f64],
    pub q_random: &'a [f64],
    /// Weights over state-actions for the MSVE; `None` is uniform.
    pub value_weights: Option<&'a [f64]>,
    pub lspe_max_iters: usize,
    pub lspe_tol: f64,
}

pub fn diagnose(inputs: &ReportInputs<'_>) -> Result<DiagnosticsReport> {
    let p = inputs.problem;
    let radius = stability_spectral_radius(&p.phi, &p.phi_next, p.gamma)?;
    let ortho = ortho_value_correlation(inputs.phi_all, inputs.q_exact)?;
    let lspe = lspe_solve(p, &DVector::zeros(p.dim()), inputs.lspe_max_iters, inputs.lspe_tol)?;
    let msve_normalized = if lspe.status == LspeStatus::Diverged {
        f64::NAN
    } else {
        let q_hat: Vec<f64> = (inputs.phi_all * &lspe.theta).iter().copied().collect();
        normalized_msve(&q_hat, inputs.q_exact, inputs.q_random, inputs.value_weights)?
    };
    Ok(DiagnosticsReport {
        spectral_radius: radius,
        is_stable: radius < 1.0,
        condition_number: condition_number(&p.phi)?,
        coadaptation: feature_coadaptation(&p.phi, &p.phi_next)?,
        realizability_error: realizability_error(inputs.phi_all, inputs.q_exact)?,
        ortho_value_correlation: ortho.r,
        ortho_degenerate: ortho.degenerate,
        zero_norm_rows: ortho.zero_norm_rows,
        msve_normalized,
        lspe_status: lspe.status.as_str().to_string(),
        bc_proxy_loss: bc_proxy_loss(&p.phi, &p.phi_next, p.rewards.as_slice(), p.gamma)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_self_transition_gives_gamma() {
        let phi = DMatrix::identity(3, 3);
        assert!((stability_spectral_radius(&phi, &phi, 0.7).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(stability_spectral_radius(&phi, &phi, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn condition_number_cases() {
        assert!((condition_number(&DMatrix::identity(4, 4)).unwrap() - 1.0).abs() < 1e-12);
        let rank1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(condition_number(&rank1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn coadaptation_cases() {
        let phi = DMatrix::identity(2, 2);
        let swapped = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(feature_coadaptation(&phi, &swapped).unwrap(), 0.0);
        assert_eq!(feature_coadaptation(&phi, &phi).unwrap(), 1.0);
    }

    #[test]
    fn realizable_values_have_zero_error() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        let q = [2.0, -1.0, -3.0];
        assert!(realizability_error(&phi, &q).unwrap() < 1e-10);
        assert!(realizability_error(&DMatrix::identity(3, 3), &q).unwrap() < 1e-10);
    }

    #[test]
    fn pearson_conventions() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), (0.0, true));
        let (r, deg) = pearson(&[0.0, 1.0], &[0.0, 5.0]);
        assert!(!deg && (r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_cluster_correlation_is_one() {
        // rows 0,1 share a direction and a value, rows 2,3 the orthogonal one
        let phi = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 3.0]);
        let c = ortho_value_correlation(&phi, &[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12 && !c.degenerate);
    }

    #[test]
    fn zero_rows_are_excluded() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let c = ortho_value_correlation(&phi, &[0.0, 5.0, 1.0]).unwrap();
        assert_eq!(c.zero_norm_rows, 1);
        assert_eq!(c.n_pairs, 1);
        assert!(c.degenerate);
    }

    #[test]
    fn msve_cases() {
        let q = [1.0, 2.0, 3.0];
        assert_eq!(msve(&q, &q, None).unwrap(), 0.0);
        let rand = [0.0, 0.0, 0.0];
        assert_eq!(normalized_msve(&rand, &q, &rand, None).unwrap(), 1.0);
        // (1 + 0 + 4) weighted by (2, 1, 1) -> (2 + 0 + 4) / 4
        let m = msve(&[0.0, 2.0, 5.0], &q, Some(&[2.0, 1.0, 1.0])).unwrap();
        assert!((m - 1.5).abs() < 1e-15);
    }

    #[test]
    fn one_hot_is_bellman_complete() {
        let phi = DMatrix::identity(3, 3);
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.0, 1.0, 0.2, 0.3, 0.5]);
        let loss = bc_proxy_loss(&phi, &(&p * &phi), &[0.1, -0.2, 0.3], 0.9).unwrap();
        assert!(loss < 1e-10);
    }
}

//! Least-squares policy evaluation on fixed features.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::encoder::{LinearEncoder, PreparedRows};
use crate::error::{dim_err, param_err, validation_err, Error, Result};
use crate::linalg::{self, PINV_RCOND};

pub const DEFAULT_LSPE_TOL: f64 = 1e-10;
pub const LSPE_DIVERGENCE: f64 = 1e12;

/// `phi` and `phi_next` are `n x d`; row `k` of `phi_next` is the expected
/// next feature of row `k` under the target policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LspeProblem {
    pub phi: DMatrix<f64>,
    pub phi_next: DMatrix<f64>,
    pub rewards: DVector<f64>,
    pub gamma: f64,
}

impl LspeProblem {
    pub fn new(phi: DMatrix<f64>, phi_next: DMatrix<f64>, rewards: Vec<f64>, gamma: f64) -> Result<Self> {
        if phi.shape() != phi_next.shape() || phi.nrows() != rewards.len() {
            return Err(dim_err(format!(
                "phi {:?}, phi_next {:?} and {} rewards do not line up",
                phi.shape(),
                phi_next.shape(),
                rewards.len()
            )));
        }
        if phi.ncols() == 0 || phi.nrows() == 0 {
            return Err(dim_err("LSPE needs at least one row and one feature"));
        }
        if phi.iter().chain(phi_next.iter()).chain(rewards.iter()).any(|v| !v.is_finite()) {
            return Err(validation_err("LSPE inputs must be finite"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(param_err(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(Self { phi, phi_next, rewards: DVector::from_vec(rewards), gamma })
    }

    /// Same expectations under non-negative row weights instead of the
    /// uniform empirical mean; rows are scaled by `sqrt(w)`.
    pub fn weighted(
        phi: &DMatrix<f64>,
        phi_next: &DMatrix<f64>,
        rewards: &[f64],
        gamma: f64,
        weights: &[f64],
    ) -> Result<Self> {
        if weights.len() != phi.nrows() {
            return Err(dim_err("one weight per row is required"));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(validation_err("row weights must be finite and non-negative"));
        }
        let mut p = phi.clone();
        let mut pn = phi_next.clone();
        let mut r = rewards.to_vec();
        for (k, w) in weights.iter().enumerate() {
            let s = w.sqrt();
            p.row_mut(k).scale_mut(s);
            pn.row_mut(k).scale_mut(s);
            r[k] *= s;
        }
        Self::new(p, pn, r, gamma)
    }

    /// Features of a frozen encoder on prepared dataset rows.
    pub fn from_encoder(encoder: &LinearEncoder, rows: &PreparedRows, gamma: f64) -> Result<Self> {
        Self::new(encoder.features(&rows.x), encoder.features(&rows.x_next), rows.r.clone(), gamma)
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    /// `E[phi phi^T]`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.phi.tr_mul(&self.phi) / self.n() as f64
    }

    /// `gamma E[phi phi_next^T]`.
    pub fn cross_covariance(&self) -> DMatrix<f64> {
        self.phi.tr_mul(&self.phi_next) * (self.gamma / self.n() as f64)
    }

    /// `E[phi r]`.
    pub fn reward_moment(&self) -> DVector<f64> {
        self.phi.tr_mul(&self.rewards) / self.n() as f64
    }

    /// The affine LSPE map `theta -> A theta + b`.
    pub fn operator(&self) -> Result<LspeOperator> {
        let (cov_pinv, _) = linalg::pinv(&self.covariance(), PINV_RCOND)?;
        Ok(LspeOperator { a: &cov_pinv * self.cross_covariance(), b: &cov_pinv * self.reward_moment() })
    }
}

/// Precomputed `theta' = A theta + b`.
#[derive(Debug, Clone)]
pub struct LspeOperator {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LspeOperator {
    pub fn apply(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.a * theta + &self.b
    }
}

/// One LSPE update.
pub fn lspe_iterate(problem: &LspeProblem, theta: &DVector<f64>) -> Result<DVector<f64>> {
    if theta.len() != problem.dim() {
        return Err(dim_err("theta length must equal the feature dimension"));
    }
    Ok(problem.operator()?.apply(theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LspeStatus {
    Converged,
    Maxed,
    Diverged,
}

impl LspeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            LspeStatus::Converged => "converged",
            LspeStatus::Maxed => "maxed",
            LspeStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LspeTraceRow {
    pub iter: usize,
    pub theta_norm: f64,
    pub delta_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LspeResult {
    pub theta: DVector<f64>,
    pub trace: Vec<LspeTraceRow>,
    pub status: LspeStatus,
}

impl LspeResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// CSV with header `iter,theta_norm,delta_norm`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "theta_norm", "delta_norm"])?;
        for r in &self.trace {
            w.write_record([
                r.iter.to_string(),
                crate::io::format_f64(r.theta_norm),
                crate::io::format_f64(r.delta_norm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Iterates LSPE until `||theta_{t+1} - theta_t||_inf <= tol`, the iterate
/// blows past [`LSPE_DIVERGENCE`], or `max_iters` runs out.
pub fn lspe_solve(problem: &LspeProblem, theta0: &DVector<f64>, max_iters: usize, tol: f64) -> Result<LspeResult> {
    if theta0.len() != problem.dim() {
        return Err(dim_err("theta0 length must equal the feature dimension"));
    }
    let op = problem.operator()?;
    let mut theta = theta0.clone();
    let mut trace = Vec::new();
    for iter in 1..=max_iters {
        let next = op.apply(&theta);
        let delta = sup(&(&next - &theta));
        let norm = sup(&next);
        trace.push(LspeTraceRow { iter, theta_norm: norm, delta_norm: delta });
        theta = next;
        if !norm.is_finite() || norm > LSPE_DIVERGENCE {
            return Ok(LspeResult { theta, trace, status: LspeStatus::Diverged });
        }
        if delta <= tol {
            return Ok(LspeResult { theta, trace, status: LspeStatus::Converged });
        }
    }
    Ok(LspeResult { theta, trace, status: LspeStatus::Maxed })
}

/// Solves `(Phi^T Phi - gamma Phi^T Phi_next) theta = Phi^T r` by
/// pseudo-inverse, failing when the system is numerically singular.
pub fn td_fixed_point(problem: &LspeProblem) -> Result<DVector<f64>> {
    let a = problem.covariance() - problem.cross_covariance();
    let (inv, rank) = linalg::pinv(&a, PINV_RCOND)?;
    if rank < problem.dim() {
        return Err(Error::RankDeficient { rank, dim: problem.dim() });
    }
    Ok(inv * problem.reward_moment())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal_problem(gamma: f64) -> LspeProblem {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let phi_next = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        LspeProblem::new(phi, phi_next, vec![1.0, -0.5, 0.25], gamma).unwrap()
    }

    #[test]
    fn myopic_update_ignores_theta() {
        let p = orthonormal_problem(0.0);
        let a = lspe_iterate(&p, &DVector::from_vec(vec![5.0, -7.0])).unwrap();
        let b = lspe_iterate(&p, &DVector::zeros(2)).unwrap();
        assert_eq!(a, b);
        assert!((a[0] - 1.0).abs() < 1e-12 && (a[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn myopic_solve_converges_immediately() {
        let p = orthonormal_problem(0.0);
        let res = lspe_solve(&p, &DVector::from_vec(vec![3.0, 3.0]), 100, DEFAULT_LSPE_TOL).unwrap();
        assert_eq!(res.status, LspeStatus::Converged);
        assert_eq!(res.iterations(), 2);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let p = orthonormal_problem(0.9);
        let theta = td_fixed_point(&p).unwrap();
        let next = lspe_iterate(&p, &theta).unwrap();
        assert!((next - theta).amax() < 1e-9);
    }

    #[test]
    fn singular_system_reports_rank() {
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = LspeProblem::new(phi.clone(), phi, vec![0.0, 0.0], 0.5).unwrap();
        assert!(matches!(td_fixed_point(&p), Err(Error::RankDeficient { rank: 1, dim: 2 })));
    }

    #[test]
    fn explosive_problem_diverges() {
        // single feature with phi_next = 2 phi: growth factor 2 gamma
        let phi = DMatrix::from_element(1, 1, 1.0);
        let p = LspeProblem::new(phi.clone(), phi * 2.0, vec![1.0], 0.9).unwrap();
        let res = lspe_solve(&p, &DVector::zeros(1), 10_000, DEFAULT_LSPE_TOL).unwrap();
        assert_eq!(res.status, LspeStatus::Diverged);
    }
}

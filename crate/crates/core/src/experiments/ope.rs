//! LSPE accuracy of representations checkpointed during training.

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::normalized_msve;
use crate::encoder::LinearEncoder;
use crate::error::Result;
use crate::kernel::{factorize_kernel_truncated, DEFAULT_RANK_TOL};
use crate::lspe::{lspe_solve, LspeProblem, LspeStatus};
use crate::training::{TrainStatus, TrainingConfig};

use super::garnet::build_trials;
use super::{fmt_opt, on_policy_problem, par_try_map, thread_pool, train_algorithm, Algorithm, CsvTable, ExperimentConfig, GarnetTrial, RunOutput};

pub const TRACE_FILE: &str = "ope_trace.csv";

/// LSPE evaluation of frozen features at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpeCheckpoint {
    pub epoch: usize,
    pub train_status: TrainStatus,
    /// `None` when training diverged before this checkpoint.
    pub lspe_status: Option<LspeStatus>,
    /// Only present when LSPE did not diverge.
    pub msve_normalized: Option<f64>,
}

/// Runs LSPE from zero on `problem` and scores `phi_all * theta` against
/// the trial's exact values.
pub fn evaluate_features(
    problem: &LspeProblem,
    phi_all: &DMatrix<f64>,
    trial: &GarnetTrial,
    cfg: &ExperimentConfig,
) -> Result<(LspeStatus, Option<f64>)> {
    let res = lspe_solve(problem, &DVector::zeros(problem.dim()), cfg.lspe_max_iters, cfg.lspe_tol)?;
    if res.status == LspeStatus::Diverged {
        return Ok((res.status, None));
    }
    let q_hat: Vec<f64> = (phi_all * &res.theta).iter().copied().collect();
    let m = normalized_msve(&q_hat, &trial.q, &trial.q_random, Some(trial.dataset.mu()))?;
    Ok((res.status, Some(m)))
}

/// Evaluates a learned encoder on the trial's dataset rows.
pub fn evaluate_encoder(enc: &LinearEncoder, trial: &GarnetTrial, cfg: &ExperimentConfig) -> Result<(LspeStatus, Option<f64>)> {
    let problem = LspeProblem::from_encoder(enc, &trial.eval_rows, trial.mdp.gamma())?;
    evaluate_features(&problem, &enc.features(&trial.space.all_inputs()), trial, cfg)
}

#[derive(Debug, Clone)]
pub struct OpeTrace {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub dim: usize,
    pub checkpoints: Vec<OpeCheckpoint>,
}

fn trace_cell(trial: &GarnetTrial, alg: Algorithm, dim: usize, cfg: &ExperimentConfig, base: &TrainingConfig) -> Result<OpeTrace> {
    let training = TrainingConfig { latent_dim: dim, seed: trial.seed, ..base.clone() };
    let mut checkpoints = Vec::new();
    if alg == Algorithm::ExactKrope {
        let k = trial.kernel.as_ref().expect("kernel is built when exact_krope is requested");
        let phi = factorize_kernel_truncated(k, DEFAULT_RANK_TOL, dim)?;
        let problem = on_policy_problem(&trial.mdp, &trial.target, &phi)?;
        for epoch in (cfg.eval_every..=training.epochs).step_by(cfg.eval_every) {
            let (status, m) = evaluate_features(&problem, &phi, trial, cfg)?;
            checkpoints.push(OpeCheckpoint {
                epoch,
                train_status: TrainStatus::Ok,
                lspe_status: Some(status),
                msve_normalized: m,
            });
        }
    } else {
        let data = trial.training_data(&training)?;
        let mut failure = None;
        let model = train_algorithm(alg, &data, &training, |c| {
            if failure.is_some() || c.epoch % cfg.eval_every != 0 {
                return;
            }
            match evaluate_encoder(c.encoder, trial, cfg) {
                Ok((status, m)) => checkpoints.push(OpeCheckpoint {
                    epoch: c.epoch,
                    train_status: TrainStatus::Ok,
                    lspe_status: Some(status),
                    msve_normalized: m,
                }),
                Err(e) => failure = Some(e),
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        if model.diverged() {
            let epoch = model.trace.records.len();
            checkpoints.push(OpeCheckpoint { epoch, train_status: TrainStatus::Diverged, lspe_status: None, msve_normalized: None });
        }
    }
    Ok(OpeTrace { trial: trial.trial, seed: trial.seed, algorithm: alg, dim, checkpoints })
}

#[derive(Debug, Clone)]
pub struct OpeResult {
    pub config_hash: String,
    pub traces: Vec<OpeTrace>,
}

impl OpeResult {
    pub fn output(&self) -> RunOutput {
        let mut table = CsvTable::new(&[
            "config_hash",
            "trial",
            "seed",
            "algorithm",
            "dim",
            "epoch",
            "train_status",
            "lspe_status",
            "msve_normalized",
        ]);
        for t in &self.traces {
            for c in &t.checkpoints {
                table.push(vec![
                    self.config_hash.clone(),
                    t.trial.to_string(),
                    t.seed.to_string(),
                    t.algorithm.to_string(),
                    t.dim.to_string(),
                    c.epoch.to_string(),
                    c.train_status.as_str().into(),
                    c.lspe_status.map(|s| s.as_str()).unwrap_or_default().into(),
                    fmt_opt(c.msve_normalized),
                ]);
            }
        }
        RunOutput { tables: vec![(TRACE_FILE.into(), table)] }
    }
}

/// Every `eval_every` epochs, freezes the encoder, runs LSPE and records the
/// normalised MSVE.
pub fn run_ope_trace(cfg: &ExperimentConfig, jobs: usize) -> Result<OpeResult> {
    cfg.validate()?;
    let base = cfg.training_config()?;
    let pool = thread_pool(jobs)?;
    let trials = build_trials(cfg, &base, &pool, cfg.algorithms.contains(&Algorithm::ExactKrope))?;
    let mut cells = Vec::new();
    for t in 0..trials.len() {
        for &dim in &cfg.dims {
            for &alg in &cfg.algorithms {
                cells.push((t, dim, alg));
            }
        }
    }
    let traces = par_try_map(&pool, &cells, |&(t, dim, alg)| trace_cell(&trials[t], alg, dim, cfg, &base))?;
    Ok(OpeResult { config_hash: cfg.hash()?, traces })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_features_recover_values() {
        let cfg = ExperimentConfig { trials: 1, ..Default::default() };
        let trial = GarnetTrial::build(&cfg, &TrainingConfig::default(), 0, false).unwrap();
        let n = trial.mdp.n_state_actions();
        let phi = DMatrix::identity(n, n);
        let p = crate::mdp::pi_transition_matrix(&trial.mdp, &trial.target).unwrap();
        let problem = LspeProblem::new(phi.clone(), &p * &phi, trial.mdp.rewards().to_vec(), trial.mdp.gamma()).unwrap();
        for _ in 0..3 {
            let (status, m) = evaluate_features(&problem, &phi, &trial, &cfg).unwrap();
            assert_eq!(status, LspeStatus::Converged);
            assert!(m.unwrap() <= 1e-8, "normalized msve {m:?}");
        }
    }

    #[test]
    fn exact_kernel_trace_is_flat() {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::ExactKrope],
            dims: vec![40],
            trials: 1,
            training: serde_json::json!({"epochs": 30}),
            ..Default::default()
        };
        let res = run_ope_trace(&cfg, 1).unwrap();
        let cps = &res.traces[0].checkpoints;
        assert_eq!(cps.iter().map(|c| c.epoch).collect::<Vec<_>>(), vec![10, 20, 30]);
        let first = cps[0].msve_normalized.unwrap();
        assert!(cps.iter().all(|c| (c.msve_normalized.unwrap() - first).abs() <= 1e-12 * (1.0 + first)));
    }
}

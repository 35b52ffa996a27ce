//! Single-encoder report from files.

use std::path::Path;

use nalgebra::DMatrix;

use crate::diagnostics::{diagnose, DiagnosticsReport, ReportInputs, REPORT_HEADER};
use crate::encoder::{InputSpace, LinearEncoder};
use crate::error::{dim_err, Result};
use crate::io::read_matrix;
use crate::mdp::{exact_q, optimal_q, Policy, TabularMdp};

use super::{on_policy_problem, on_policy_weights, CsvTable, ExperimentConfig, RunOutput};

pub const REPORT_FILE: &str = "diagnose.csv";

/// Accepts `d x |X|` weights over one-hot inputs, or `d x (|X| + 1)` with a
/// trailing bias column.
pub fn encoder_from_weights(weights: DMatrix<f64>, mdp: &TabularMdp) -> Result<LinearEncoder> {
    let n = mdp.n_state_actions();
    let w = if weights.ncols() == n {
        weights.insert_column(n, 0.0)
    } else if weights.ncols() == n + 1 {
        weights
    } else {
        return Err(dim_err(format!("encoder has {} columns, expected {n} or {}", weights.ncols(), n + 1)));
    };
    LinearEncoder::new(w)
}

/// Softmax of the optimal q at `temperature`; uniform when the MDP is undiscounted.
pub fn default_target(mdp: &TabularMdp, temperature: f64) -> Result<Policy> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if mdp.gamma() >= 1.0 {
        return Ok(Policy::uniform(ns, na));
    }
    let q_star = optimal_q(mdp, 1e-12, 1_000_000)?;
    Policy::softmax(&q_star, ns, na, temperature)
}

/// Report for `encoder` on every state-action with exact on-policy
/// expectations; values are compared against the uniform-random policy.
pub fn diagnose_encoder(encoder: &LinearEncoder, mdp: &TabularMdp, pi: &Policy, cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
    let space = InputSpace::one_hot(mdp, true);
    let phi_all = encoder.features(&space.all_inputs());
    let problem = on_policy_problem(mdp, pi, &phi_all)?;
    let q = exact_q(mdp, pi)?;
    let q_random = exact_q(mdp, &Policy::uniform(mdp.n_states(), mdp.n_actions()))?;
    let weights = on_policy_weights(mdp, pi)?;
    diagnose(&ReportInputs {
        problem: &problem,
        phi_all: &phi_all,
        q_exact: &q,
        q_random: &q_random,
        value_weights: Some(&weights),
        lspe_max_iters: cfg.lspe_max_iters,
        lspe_tol: cfg.lspe_tol,
    })
}

/// Resolves the file paths of the `diagnose` section relative to `base_dir`.
pub fn run_diagnose(cfg: &ExperimentConfig, base_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let inputs = cfg.diagnose.as_ref().expect("validated above");
    let mdp = TabularMdp::from_json(&std::fs::read_to_string(base_dir.join(&inputs.mdp))?)?;
    let encoder = encoder_from_weights(read_matrix(base_dir.join(&inputs.encoder))?, &mdp)?;
    let pi = match &inputs.policy {
        Some(p) => Policy::new(read_matrix(base_dir.join(p))?)?,
        None => default_target(&mdp, cfg.target_temperature)?,
    };
    if pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions() {
        return Err(dim_err("policy shape does not match the MDP"));
    }
    let report = diagnose_encoder(&encoder, &mdp, &pi, cfg)?;
    let mut header = vec!["config_hash"];
    header.extend(REPORT_HEADER);
    let mut table = CsvTable::new(&header);
    let mut row = vec![cfg.hash()?];
    row.extend(report.csv_fields());
    table.push(row);
    Ok(RunOutput { tables: vec![(REPORT_FILE.into(), table)] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{generate_garnet, GarnetParams};

    #[test]
    fn one_hot_encoder_is_exact() {
        let mdp = generate_garnet(GarnetParams::default(), 2).unwrap();
        let n = mdp.n_state_actions();
        let enc = encoder_from_weights(DMatrix::identity(n, n), &mdp).unwrap();
        let pi = default_target(&mdp, 0.25).unwrap();
        let r = diagnose_encoder(&enc, &mdp, &pi, &ExperimentConfig::default()).unwrap();
        assert!(r.realizability_error < 1e-10);
        assert!(r.spectral_radius <= mdp.gamma() + 1e-9);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mdp = generate_garnet(GarnetParams::default(), 2).unwrap();
        assert!(encoder_from_weights(DMatrix::zeros(3, 7), &mdp).is_err());
    }
}

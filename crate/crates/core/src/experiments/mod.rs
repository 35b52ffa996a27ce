//! Batch experiments behind the `krope` binary.
//!
//! Trial `t` of a run uses seed `base_seed + t` for the MDP, the dataset and
//! every training stream, so a single trial can be re-run in isolation with
//! `trials = 1` and `base_seed` set to its seed. Cells run in parallel on a
//! rayon pool, but results are collected in input order, so outputs do not
//! depend on the number of jobs.

pub mod aggregate;
pub mod config;
pub mod counterexample;
pub mod diagnose;
pub mod garnet;
pub mod ope;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{
    Algorithm, CounterexampleSettings, DiagnoseInputs, ExperimentConfig, ExperimentKind, SensitivityGrid,
};

use crate::dataset::{sample_dataset, OfflineDataset, STATIONARY_MAX_ITERS, STATIONARY_TOL};
use crate::diagnostics::{diagnose, DiagnosticsReport, ReportInputs};
use crate::encoder::{InputSpace, LinearEncoder, NextActionMode, PreparedRows};
use crate::error::{param_err, Result};
use crate::kernel::{exact_krope_kernel, KernelMatrix, DEFAULT_FIXED_POINT_TOL};
use crate::lspe::LspeProblem;
use crate::mdp::{
    exact_q, generate_garnet, occupancy_distribution, optimal_q, pi_transition_matrix, stationary_distribution,
    Policy, TabularMdp,
};
use crate::training::{
    train_auxiliary_with, train_bcrl_with, AuxKind, Checkpoint, TrainedModel, TrainingConfig, TrainingData,
};

/// Header plus rows of string fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Named tables produced by one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub tables: Vec<(String, CsvTable)>,
}

impl RunOutput {
    pub fn table(&self, file_name: &str) -> Option<&CsvTable> {
        self.tables.iter().find(|(n, _)| n == file_name).map(|(_, t)| t)
    }

    /// Writes every table into `dir`, creating it if needed.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for (name, table) in &self.tables {
            let path = dir.join(name);
            fs::write(&path, table.to_csv_string()?)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Rayon pool with `jobs` workers; 0 picks rayon's default.
pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| param_err(format!("cannot build a pool with {jobs} workers: {e}")))
}

/// Ordered parallel map that stops at the first error in input order.
pub(crate) fn par_try_map<T, R, F>(pool: &rayon::ThreadPool, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    pool.install(|| items.par_iter().map(&f).collect::<Vec<_>>()).into_iter().collect()
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(crate::io::format_f64).unwrap_or_default()
}

/// Optimal-q tolerance and iteration cap for the softmax target policy.
const OPTIMAL_Q_TOL: f64 = 1e-12;
const OPTIMAL_Q_MAX_ITERS: usize = 1_000_000;

/// Everything one Garnet trial shares across algorithms and dimensions.
#[derive(Debug, Clone)]
pub struct GarnetTrial {
    pub trial: usize,
    pub seed: u64,
    pub mdp: TabularMdp,
    /// Softmax of the optimal q.
    pub target: Policy,
    pub behavior: Policy,
    pub dataset: OfflineDataset,
    pub q: Vec<f64>,
    pub q_random: Vec<f64>,
    /// Dataset rows with exact expected next inputs, used for evaluation.
    pub eval_rows: PreparedRows,
    pub space: InputSpace,
    pub kernel: Option<KernelMatrix>,
}

impl GarnetTrial {
    pub fn build(cfg: &ExperimentConfig, training: &TrainingConfig, trial: usize, with_kernel: bool) -> Result<Self> {
        let seed = cfg.trial_seed(trial);
        let mdp = generate_garnet(cfg.garnet, seed)?;
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let q_star = optimal_q(&mdp, OPTIMAL_Q_TOL, OPTIMAL_Q_MAX_ITERS)?;
        let target = Policy::softmax(&q_star, ns, na, cfg.target_temperature)?;
        let behavior = Policy::uniform(ns, na);
        let dataset = sample_dataset(&mdp, &behavior, cfg.dataset_size, seed)?;
        let q = exact_q(&mdp, &target)?;
        let q_random = exact_q(&mdp, &behavior)?;
        let space = InputSpace::one_hot(&mdp, training.encoder_bias);
        // expected-mode preparation draws nothing from the rng
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eval_rows = PreparedRows::new(&space, &dataset, &target, NextActionMode::Expected, &mut rng)?;
        let kernel = if with_kernel { Some(exact_krope_kernel(&mdp, &target, DEFAULT_FIXED_POINT_TOL)?) } else { None };
        Ok(Self { trial, seed, mdp, target, behavior, dataset, q, q_random, eval_rows, space, kernel })
    }

    /// Training inputs for a learned encoder with seed and dimension set.
    pub fn training_data(&self, training: &TrainingConfig) -> Result<TrainingData> {
        TrainingData::new(&self.mdp, &self.dataset, &self.target, self.space.clone(), training.next_action, training.seed)
    }

    /// Full report for a learned encoder, evaluated on the dataset rows.
    pub fn encoder_report(&self, enc: &LinearEncoder, cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
        let problem = LspeProblem::from_encoder(enc, &self.eval_rows, self.mdp.gamma())?;
        let phi_all = enc.features(&self.space.all_inputs());
        self.report(&problem, &phi_all, cfg)
    }

    /// Full report for fixed features over all state-actions, evaluated with
    /// exact on-policy expectations.
    pub fn exact_report(&self, phi_all: &DMatrix<f64>, cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
        let problem = on_policy_problem(&self.mdp, &self.target, phi_all)?;
        self.report(&problem, phi_all, cfg)
    }

    fn report(&self, problem: &LspeProblem, phi_all: &DMatrix<f64>, cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
        diagnose(&ReportInputs {
            problem,
            phi_all,
            q_exact: &self.q,
            q_random: &self.q_random,
            value_weights: Some(self.dataset.mu()),
            lspe_max_iters: cfg.lspe_max_iters,
            lspe_tol: cfg.lspe_tol,
        })
    }
}

/// On-policy state-action weights: normalised occupancy for absorbing
/// chains, otherwise the stationary distribution (uniform if it does not settle).
pub fn on_policy_weights(mdp: &TabularMdp, pi: &Policy) -> Result<Vec<f64>> {
    if mdp.terminal().iter().any(|t| *t) {
        return occupancy_distribution(mdp, pi);
    }
    let p = pi_transition_matrix(mdp, pi)?;
    let n = p.nrows();
    Ok(stationary_distribution(&p, STATIONARY_TOL, STATIONARY_MAX_ITERS).unwrap_or_else(|| vec![1.0 / n as f64; n]))
}

/// LSPE problem over every state-action with `phi_next = P^pi phi`, rows
/// weighted by the on-policy distribution.
pub fn on_policy_problem(mdp: &TabularMdp, pi: &Policy, phi_all: &DMatrix<f64>) -> Result<LspeProblem> {
    let p = pi_transition_matrix(mdp, pi)?;
    let phi_next = &p * phi_all;
    let w = on_policy_weights(mdp, pi)?;
    LspeProblem::weighted(phi_all, &phi_next, mdp.rewards(), mdp.gamma(), &w)
}

/// Trains a learned algorithm, reporting every epoch to `on_epoch`.
pub fn train_algorithm<F>(
    alg: Algorithm,
    data: &TrainingData,
    training: &TrainingConfig,
    on_epoch: F,
) -> Result<TrainedModel>
where
    F: FnMut(&Checkpoint<'_>),
{
    let mut cfg = training.clone();
    let aux = match alg {
        Algorithm::Krope => {
            cfg.aux_weight = 1.0;
            AuxKind::Krope
        }
        Algorithm::Fqe => AuxKind::None,
        Algorithm::FqeKrope => AuxKind::Krope,
        Algorithm::FqeDr3 => AuxKind::Dr3,
        Algorithm::FqeBeer => AuxKind::Beer,
        Algorithm::Bcrl => return train_bcrl_with(data, &cfg, false, on_epoch),
        Algorithm::BcrlExp => return train_bcrl_with(data, &cfg, true, on_epoch),
        Algorithm::ExactKrope => return Err(param_err("exact_krope is not trained")),
    };
    train_auxiliary_with(data, &cfg, aux, on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_serialises_with_header() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.to_csv_string().unwrap(), "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn parallel_map_preserves_order() {
        let pool = thread_pool(4).unwrap();
        let items: Vec<usize> = (0..100).collect();
        let out = par_try_map(&pool, &items, |i| Ok(i * 2)).unwrap();
        assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());
    }
}

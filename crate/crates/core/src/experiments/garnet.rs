//! Garnet sweeps over algorithms and latent dimensions, plus the
//! learning-rate x dimension x alpha sensitivity grid.

use crate::diagnostics::{DiagnosticsReport, REPORT_HEADER};
use crate::error::Result;
use crate::io::format_f64;
use crate::kernel::{factorize_kernel_truncated, DEFAULT_RANK_TOL};
use crate::training::{TrainStatus, TrainingConfig};

use super::aggregate::{aggregate, TrialMetrics, AGGREGATE_HEADER};
use super::{fmt_opt, par_try_map, thread_pool, train_algorithm, Algorithm, CsvTable, ExperimentConfig, GarnetTrial, RunOutput};

pub const SWEEP_FILE: &str = "garnet_sweep.csv";
pub const SUMMARY_FILE: &str = "garnet_summary.csv";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";

/// One (trial, dimension, algorithm) cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub dim: usize,
    pub status: TrainStatus,
    /// Epochs completed; 0 for the exact kernel.
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    /// Absent when training diverged.
    pub report: Option<DiagnosticsReport>,
}

impl SweepRow {
    pub fn diverged(&self) -> bool {
        self.status == TrainStatus::Diverged
    }

    fn metrics(&self) -> TrialMetrics {
        let mut metrics = Vec::new();
        if let Some(r) = &self.report {
            metrics.extend([
                ("spectral_radius".to_string(), r.spectral_radius),
                ("stable_fraction".to_string(), if r.is_stable { 1.0 } else { 0.0 }),
                ("condition_number".to_string(), r.condition_number),
                ("coadaptation".to_string(), r.coadaptation),
                ("realizability_error".to_string(), r.realizability_error),
                ("ortho_value_correlation".to_string(), r.ortho_value_correlation),
                ("msve_normalized".to_string(), r.msve_normalized),
                ("bc_proxy_loss".to_string(), r.bc_proxy_loss),
            ]);
        }
        if let Some(l) = self.final_loss {
            metrics.push(("final_loss".to_string(), l));
        }
        TrialMetrics { diverged: self.diverged(), metrics }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn rows_for(&self, alg: Algorithm, dim: usize) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.algorithm == alg && r.dim == dim)
    }

    pub fn output(&self, cfg: &ExperimentConfig) -> RunOutput {
        let mut header = vec!["config_hash", "trial", "seed", "algorithm", "dim", "status", "epochs_run", "final_loss"];
        header.extend(REPORT_HEADER);
        let mut table = CsvTable::new(&header);
        for r in &self.rows {
            let mut row = vec![
                self.config_hash.clone(),
                r.trial.to_string(),
                r.seed.to_string(),
                r.algorithm.to_string(),
                r.dim.to_string(),
                r.status.as_str().to_string(),
                r.epochs_run.to_string(),
                fmt_opt(r.final_loss),
            ];
            match &r.report {
                Some(rep) => row.extend(rep.csv_fields()),
                None => row.extend(std::iter::repeat_n(String::new(), REPORT_HEADER.len())),
            }
            table.push(row);
        }
        let mut header = vec!["config_hash", "algorithm", "dim"];
        header.extend(AGGREGATE_HEADER);
        let mut summary = CsvTable::new(&header);
        for &alg in &cfg.algorithms {
            for &dim in &cfg.dims {
                let trials: Vec<TrialMetrics> = self.rows_for(alg, dim).map(SweepRow::metrics).collect();
                for agg in aggregate(&trials) {
                    let mut row = vec![self.config_hash.clone(), alg.to_string(), dim.to_string()];
                    row.extend(agg.csv_fields());
                    summary.push(row);
                }
            }
        }
        RunOutput { tables: vec![(SWEEP_FILE.into(), table), (SUMMARY_FILE.into(), summary)] }
    }
}

fn cell_training(base: &TrainingConfig, seed: u64, dim: usize) -> TrainingConfig {
    TrainingConfig { latent_dim: dim, seed, ..base.clone() }
}

fn run_cell(trial: &GarnetTrial, alg: Algorithm, dim: usize, cfg: &ExperimentConfig, base: &TrainingConfig) -> Result<SweepRow> {
    let mut row = SweepRow {
        trial: trial.trial,
        seed: trial.seed,
        algorithm: alg,
        dim,
        status: TrainStatus::Ok,
        epochs_run: 0,
        final_loss: None,
        report: None,
    };
    if alg == Algorithm::ExactKrope {
        let k = trial.kernel.as_ref().expect("kernel is built when exact_krope is requested");
        let phi = factorize_kernel_truncated(k, DEFAULT_RANK_TOL, dim)?;
        row.report = Some(trial.exact_report(&phi, cfg)?);
        return Ok(row);
    }
    let training = cell_training(base, trial.seed, dim);
    let data = trial.training_data(&training)?;
    let model = train_algorithm(alg, &data, &training, |_| {})?;
    row.status = model.trace.status();
    row.epochs_run = model.trace.records.len();
    row.final_loss = model.trace.final_loss();
    if !model.diverged() {
        row.report = Some(trial.encoder_report(&model.encoder, cfg)?);
    }
    Ok(row)
}

pub(crate) fn build_trials(cfg: &ExperimentConfig, base: &TrainingConfig, pool: &rayon::ThreadPool, with_kernel: bool) -> Result<Vec<GarnetTrial>> {
    let idx: Vec<usize> = (0..cfg.trials).collect();
    par_try_map(pool, &idx, |&t| GarnetTrial::build(cfg, base, t, with_kernel))
}

/// Trains every (trial, dim, algorithm) cell and evaluates the final
/// encoder. Divergence is recorded in the row, never raised.
pub fn run_garnet_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<SweepResult> {
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
    let rows = par_try_map(&pool, &cells, |&(t, dim, alg)| run_cell(&trials[t], alg, dim, cfg, &base))?;
    Ok(SweepResult { config_hash: cfg.hash()?, rows })
}

/// One FQE+KROPE run of the sensitivity grid.
#[derive(Debug, Clone)]
pub struct SensitivityRow {
    pub learning_rate: f64,
    pub dim: usize,
    pub alpha: f64,
    pub trial: usize,
    pub seed: u64,
    pub status: TrainStatus,
    pub msve_normalized: Option<f64>,
}

/// Grid rows with `cdf` = fraction of all finite-error rows whose error is
/// at most this row's error.
pub fn sensitivity_table(config_hash: &str, rows: &[SensitivityRow]) -> CsvTable {
    let finite: Vec<f64> = rows.iter().filter_map(|r| r.msve_normalized).filter(|v| v.is_finite()).collect();
    let mut table = CsvTable::new(&[
        "config_hash",
        "learning_rate",
        "dim",
        "alpha",
        "trial",
        "seed",
        "status",
        "msve_normalized",
        "cdf",
    ]);
    for r in rows {
        let cdf = r
            .msve_normalized
            .filter(|v| v.is_finite())
            .map(|v| finite.iter().filter(|x| **x <= v).count() as f64 / finite.len() as f64);
        table.push(vec![
            config_hash.to_string(),
            format_f64(r.learning_rate),
            r.dim.to_string(),
            format_f64(r.alpha),
            r.trial.to_string(),
            r.seed.to_string(),
            r.status.as_str().to_string(),
            fmt_opt(r.msve_normalized),
            fmt_opt(cdf),
        ]);
    }
    table
}

/// FQE+KROPE over the configured grid; empty when no grid is configured.
pub fn run_sensitivity(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<SensitivityRow>> {
    cfg.validate()?;
    let Some(grid) = &cfg.sensitivity else { return Ok(Vec::new()) };
    let base = cfg.training_config()?;
    let pool = thread_pool(jobs)?;
    let trials = build_trials(cfg, &base, &pool, false)?;
    let mut cells = Vec::new();
    for &lr in &grid.learning_rates {
        for &dim in &grid.dims {
            for &alpha in &grid.alphas {
                for t in 0..trials.len() {
                    cells.push((lr, dim, alpha, t));
                }
            }
        }
    }
    par_try_map(&pool, &cells, |&(lr, dim, alpha, t)| {
        let trial = &trials[t];
        let training = TrainingConfig { learning_rate: lr, aux_weight: alpha, ..cell_training(&base, trial.seed, dim) };
        let data = trial.training_data(&training)?;
        let model = train_algorithm(Algorithm::FqeKrope, &data, &training, |_| {})?;
        let msve = if model.diverged() {
            None
        } else {
            Some(trial.encoder_report(&model.encoder, cfg)?.msve_normalized)
        };
        Ok(SensitivityRow {
            learning_rate: lr,
            dim,
            alpha,
            trial: t,
            seed: trial.seed,
            status: model.trace.status(),
            msve_normalized: msve,
        })
    })
}

/// Sweep tables, with the sensitivity table appended when a grid is configured.
pub fn garnet_sweep_output(cfg: &ExperimentConfig, jobs: usize) -> Result<RunOutput> {
    let sweep = run_garnet_sweep(cfg, jobs)?;
    let mut out = sweep.output(cfg);
    if cfg.sensitivity.is_some() {
        let rows = run_sensitivity(cfg, jobs)?;
        out.tables.push((SENSITIVITY_FILE.into(), sensitivity_table(&sweep.config_hash, &rows)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            algorithms: vec![Algorithm::Krope, Algorithm::Fqe, Algorithm::ExactKrope],
            dims: vec![4],
            trials: 2,
            dataset_size: 200,
            training: serde_json::json!({"epochs": 3, "batch_size": 32}),
            ..Default::default()
        }
    }

    #[test]
    fn sweep_has_one_row_per_cell_and_is_job_independent() {
        let cfg = tiny();
        let a = run_garnet_sweep(&cfg, 1).unwrap();
        assert_eq!(a.rows.len(), 2 * 3);
        let b = run_garnet_sweep(&cfg, 3).unwrap();
        let (oa, ob) = (a.output(&cfg), b.output(&cfg));
        assert_eq!(oa, ob);
        let t = oa.table(SWEEP_FILE).unwrap();
        let h = t.column("config_hash").unwrap();
        assert!(t.rows.iter().all(|r| r[h] == a.config_hash));
    }

    #[test]
    fn cdf_is_monotone_in_error() {
        let row = |v: Option<f64>| SensitivityRow {
            learning_rate: 1e-3,
            dim: 2,
            alpha: 0.1,
            trial: 0,
            seed: 0,
            status: if v.is_some() { TrainStatus::Ok } else { TrainStatus::Diverged },
            msve_normalized: v,
        };
        let t = sensitivity_table("h", &[row(Some(0.5)), row(None), row(Some(0.1)), row(Some(2.0))]);
        let c = t.column("cdf").unwrap();
        let cdf: Vec<&str> = t.rows.iter().map(|r| r[c].as_str()).collect();
        assert_eq!(cdf[1], "");
        let p: Vec<f64> = [0, 2, 3].iter().map(|&k| cdf[k].parse().unwrap()).collect();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15 && p[2] == 1.0);
    }
}

//! Normalized MSVE of LSPE on frozen encoders checkpointed during training.

use krope::experiments::ope::run_ope_trace;
use krope::experiments::{Algorithm, ExperimentConfig, ExperimentKind};

fn main() -> krope::Result<()> {
    let cfg = ExperimentConfig {
        algorithms: vec![Algorithm::Krope, Algorithm::Fqe, Algorithm::ExactKrope],
        dims: vec![20],
        trials: 1,
        training: serde_json::json!({"epochs": 100}),
        eval_every: 20,
        ..ExperimentConfig::for_kind(ExperimentKind::OpeTrace)
    };
    for trace in run_ope_trace(&cfg, 0)?.traces {
        let points: Vec<String> = trace
            .checkpoints
            .iter()
            .map(|c| match c.msve_normalized {
                Some(m) => format!("{}:{m:.3}", c.epoch),
                None => format!("{}:{}", c.epoch, c.lspe_status.map_or("train-diverged", |s| s.as_str())),
            })
            .collect();
        println!("{:<12} {}", trace.algorithm.as_str(), points.join("  "));
    }
    Ok(())
}

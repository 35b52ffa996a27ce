//! Divergence study on the four-state counterexample over a few seeds.

use krope::experiments::counterexample::run_counterexample;
use krope::experiments::{ExperimentConfig, ExperimentKind};

fn main() -> krope::Result<()> {
    let cfg = ExperimentConfig { trials: 3, ..ExperimentConfig::for_kind(ExperimentKind::Counterexample) };
    let result = run_counterexample(&cfg, 0)?;
    for t in &result.trials {
        let status: Vec<String> = t
            .runs
            .iter()
            .map(|r| format!("{}[{}]={}", r.method.as_str(), r.pairing.unwrap_or("D1"), r.trace.status().as_str()))
            .collect();
        println!("seed {}: {}", t.seed, status.join(" "));
    }
    for o in result.outcomes() {
        println!("{:<20} expected {:<34} votes {}/{}", o.name, o.expected, o.votes, o.trials);
    }
    Ok(())
}

//! Small Garnet sweep comparing learned encoders with the exact kernel.

use krope::experiments::garnet::run_garnet_sweep;
use krope::experiments::{Algorithm, ExperimentConfig};

fn main() -> krope::Result<()> {
    let cfg = ExperimentConfig {
        algorithms: vec![Algorithm::Krope, Algorithm::Fqe, Algorithm::FqeDr3, Algorithm::ExactKrope],
        dims: vec![10, 30],
        trials: 3,
        training: serde_json::json!({"epochs": 200}),
        ..Default::default()
    };
    let result = run_garnet_sweep(&cfg, 0)?;
    println!("algorithm    d  stable  mean radius  mean msve");
    for &alg in &cfg.algorithms {
        for &d in &cfg.dims {
            let reports: Vec<_> = result.rows_for(alg, d).filter_map(|r| r.report.as_ref()).collect();
            let n = reports.len().max(1) as f64;
            let stable = reports.iter().filter(|r| r.is_stable).count();
            let radius = reports.iter().map(|r| r.spectral_radius).sum::<f64>() / n;
            let msve = reports.iter().map(|r| r.msve_normalized).sum::<f64>() / n;
            println!("{:<11} {d:>2}  {stable}/{}     {radius:>9.4}  {msve:>9.4}", alg.as_str(), cfg.trials);
        }
    }
    Ok(())
}

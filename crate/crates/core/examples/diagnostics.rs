//! Diagnostics report for three encoders on the same MDP: one-hot, a
//! random projection and the exact KROPE factorization.

use krope::diagnostics::REPORT_HEADER;
use krope::experiments::diagnose::{default_target, diagnose_encoder, encoder_from_weights};
use krope::experiments::ExperimentConfig;
use krope::kernel::{exact_krope_kernel, factorize_kernel_truncated, DEFAULT_FIXED_POINT_TOL, DEFAULT_RANK_TOL};
use krope::mdp::{generate_garnet, GarnetParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> krope::Result<()> {
    let mdp = generate_garnet(GarnetParams::default(), 11)?;
    let pi = default_target(&mdp, 0.25)?;
    let n = mdp.n_state_actions();
    let cfg = ExperimentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let k = exact_krope_kernel(&mdp, &pi, DEFAULT_FIXED_POINT_TOL)?;
    let encoders = [
        ("one-hot", DMatrix::identity(n, n)),
        ("random d=10", DMatrix::from_fn(10, n, |_, _| rng.random_range(-1.0..1.0))),
        ("exact krope d=10", factorize_kernel_truncated(&k, DEFAULT_RANK_TOL, 10)?.transpose()),
    ];
    println!("encoder,{}", REPORT_HEADER.join(","));
    for (name, w) in encoders {
        let report = diagnose_encoder(&encoder_from_weights(w, &mdp)?, &mdp, &pi, &cfg)?;
        println!("{name},{}", report.csv_fields().join(","));
    }
    Ok(())
}

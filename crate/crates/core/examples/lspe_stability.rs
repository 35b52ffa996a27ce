//! LSPE converges from every start exactly when the iteration matrix has
//! spectral radius below one.

use krope::diagnostics::stability_spectral_radius;
use krope::lspe::{lspe_solve, td_fixed_point, LspeProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> krope::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phi = DMatrix::from_fn(20, 3, |_, _| rng.random_range(-1.0..1.0));
    let noise = DMatrix::from_fn(20, 3, |_, _| rng.random_range(-0.3..0.3));
    let rewards: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
    for mix in [0.5, 1.0, 1.5, 2.0] {
        let phi_next = &phi * mix + &noise;
        let rho = stability_spectral_radius(&phi, &phi_next, 0.9)?;
        let problem = LspeProblem::new(phi.clone(), phi_next, rewards.clone(), 0.9)?;
        let res = lspe_solve(&problem, &DVector::from_element(3, 5.0), 100_000, 1e-10)?;
        let fixed = td_fixed_point(&problem).map(|t| format!("{:.4}", t.norm())).unwrap_or_else(|e| e.to_string());
        println!(
            "mix {mix:.1}: radius {rho:.4}, status {} after {} iterations, |theta*| {fixed}",
            res.status.as_str(),
            res.iterations()
        );
    }
    Ok(())
}

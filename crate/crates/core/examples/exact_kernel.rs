//! Exact KROPE kernel of a Garnet MDP: fixed point, factorization, LSPE
//! stability of the resulting features and the value-difference bound.

use krope::experiments::diagnose::default_target;
use krope::experiments::on_policy_problem;
use krope::kernel::{exact_krope_kernel, factorize_kernel, value_difference_bound, DEFAULT_FIXED_POINT_TOL, DEFAULT_RANK_TOL};
use krope::linalg::spectral_radius;
use krope::mdp::{exact_q, generate_garnet, GarnetParams};

fn main() -> krope::Result<()> {
    let mdp = generate_garnet(GarnetParams::default(), 7)?;
    let pi = default_target(&mdp, 0.25)?;
    let k = exact_krope_kernel(&mdp, &pi, DEFAULT_FIXED_POINT_TOL)?;
    println!("kernel {}x{}, min eigenvalue {:.3e}", k.dim(), k.dim(), k.min_eigenvalue()?);

    let phi = factorize_kernel(&k, DEFAULT_RANK_TOL)?;
    let op = on_policy_problem(&mdp, &pi, &phi)?.operator()?;
    let rho = spectral_radius(&op.a)?;
    println!("rank {}, LSPE radius {rho:.6} (sqrt(gamma) = {:.6})", phi.ncols(), mdp.gamma().sqrt());

    let q = exact_q(&mdp, &pi)?;
    let b = value_difference_bound(&mdp, &pi, &k, 2000)?;
    let mut tightest = f64::INFINITY;
    for i in 0..q.len() {
        for j in 0..q.len() {
            tightest = tightest.min(b.bound[(i, j)] - (q[i] - q[j]).abs());
        }
    }
    println!("value bound: smallest slack over all pairs {tightest:.4}, tail {:.2e}", b.tail);
    Ok(())
}

mod common;

use common::{random_psd, random_stochastic, rng, sup};
use krope::experiments::aggregate::summarize;
use krope::kernel::{
    apply_krope_operator, d_krope, factorize_kernel, k1_matrix, krope_fixed_point, mmd_squared, sufficient_iterations,
    KernelMatrix, DEFAULT_RANK_TOL,
};
use krope::linalg::min_eigenvalue;
use krope::lspe::{td_fixed_point, LspeProblem};
use krope::mdp::{generate_garnet, pi_transition_matrix, GarnetParams, Policy};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn rewards(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..=1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_is_a_gamma_contraction(seed in any::<u64>(), n in 2usize..9, gamma in 0.0f64..0.999) {
        let mut r = rng(seed);
        let p = random_stochastic(n, &mut r);
        let k1 = k1_matrix(&rewards(n, seed ^ 1), -1.0, 1.0).unwrap();
        let a = KernelMatrix::new(random_psd(n, 3, &mut r)).unwrap();
        let b = KernelMatrix::new(random_psd(n, 2, &mut r)).unwrap();
        let ta = apply_krope_operator(&a, &k1, &p, gamma).unwrap();
        let tb = apply_krope_operator(&b, &k1, &p, gamma).unwrap();
        let lhs = sup(&(ta.entries() - tb.entries()));
        let rhs = gamma * sup(&(a.entries() - b.entries()));
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn fixed_point_is_symmetric_psd_and_bounded(seed in any::<u64>(), n in 2usize..9, gamma in 0.0f64..0.95) {
        let mut r = rng(seed);
        let p = random_stochastic(n, &mut r);
        let k1 = k1_matrix(&rewards(n, seed ^ 2), -1.0, 1.0).unwrap();
        let k = krope_fixed_point(&k1, &p, gamma, 1e-12, sufficient_iterations(gamma, 1e-12)).unwrap();
        let e = k.entries();
        prop_assert!(sup(&(e - e.transpose())) <= 1e-12);
        prop_assert!(min_eigenvalue(e).unwrap() >= -1e-9);
        // every entry is a discounted sum of terms in [0, 1]
        prop_assert!(e.iter().all(|v| *v >= -1e-12 && *v <= 1.0 / (1.0 - gamma) + 1e-9));
    }

    #[test]
    fn policy_chain_rows_are_distributions(seed in any::<u64>(), ns in 2usize..8, na in 1usize..5, b in 1usize..3) {
        let mdp = generate_garnet(GarnetParams { n_states: ns, n_actions: na, branching: b.min(ns), gamma: 0.9 }, seed).unwrap();
        let mut r = rng(seed);
        let probs = random_stochastic(ns.max(na), &mut r).view((0, 0), (ns, na)).into_owned();
        let probs = DMatrix::from_fn(ns, na, |s, a| probs[(s, a)] / probs.row(s).sum());
        let pi = Policy::new(probs).unwrap();
        let p = pi_transition_matrix(&mdp, &pi).unwrap();
        prop_assert_eq!(p.nrows(), ns * na);
        for row in p.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn kernel_distance_is_a_squared_pseudometric(seed in any::<u64>(), n in 2usize..10) {
        let mut r = rng(seed);
        let k = KernelMatrix::new(random_psd(n, 1 + n / 2, &mut r)).unwrap();
        let d = d_krope(&k).unwrap();
        for i in 0..n {
            prop_assert_eq!(d[(i, i)], 0.0);
            for j in 0..n {
                prop_assert!(d[(i, j)] >= 0.0);
                prop_assert!((d[(i, j)] - d[(j, i)]).abs() <= 1e-12);
                for l in 0..n {
                    // the square root is the RKHS distance
                    prop_assert!(d[(i, j)].sqrt() <= d[(i, l)].sqrt() + d[(l, j)].sqrt() + 1e-7);
                }
            }
        }
    }

    #[test]
    fn mmd_is_nonnegative_and_vanishes_on_equal_inputs(seed in any::<u64>(), n in 2usize..10) {
        let mut r = rng(seed);
        let k = KernelMatrix::new(random_psd(n, 2, &mut r)).unwrap();
        let dist = |r: &mut rand_chacha::ChaCha8Rng| {
            let v: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 1e-3).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (p, q) = (dist(&mut r), dist(&mut r));
        prop_assert!(mmd_squared(&k, &p, &q).unwrap() >= 0.0);
        prop_assert!(mmd_squared(&k, &p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn factorization_reproduces_psd_kernels(seed in any::<u64>(), n in 2usize..12, rank in 1usize..6) {
        let mut r = rng(seed);
        let k = KernelMatrix::new(random_psd(n, rank, &mut r)).unwrap();
        let phi = factorize_kernel(&k, DEFAULT_RANK_TOL).unwrap();
        prop_assert!(phi.ncols() <= rank.min(n));
        let err = sup(&(&phi * phi.transpose() - k.entries()));
        prop_assert!(err <= 1e-8 * (1.0 + sup(k.entries())), "reconstruction error {err}");
    }

    #[test]
    fn td_fixed_point_is_an_lspe_fixed_point(seed in any::<u64>(), n in 6usize..20, d in 1usize..5, gamma in 0.0f64..0.99) {
        let mut r = rng(seed);
        let phi = DMatrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0));
        let phi_next = DMatrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0));
        let rw: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let problem = LspeProblem::new(phi, phi_next, rw, gamma).unwrap();
        // near-singular systems are rejected, which is fine here
        if let Ok(theta) = td_fixed_point(&problem) {
            let op = problem.operator().unwrap();
            let gap = (op.apply(&theta) - &theta).amax();
            prop_assert!(gap <= 1e-6 * (1.0 + theta.amax()), "gap {gap}");
        }
    }

    #[test]
    fn summary_mean_lies_within_range(xs in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let s = summarize(&xs).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean >= lo - 1e-6 && s.mean <= hi + 1e-6);
        prop_assert!(s.half_width >= 0.0);
        prop_assert_eq!(s.single_sample, xs.len() == 1);
    }
}

#[test]
fn summary_ignores_non_finite_values() {
    let s = summarize(&[1.0, f64::NAN, 3.0, f64::INFINITY]).unwrap();
    assert_eq!(s.n, 2);
    assert_eq!(s.mean, 2.0);
    assert!(summarize(&[f64::NAN]).is_none());
}

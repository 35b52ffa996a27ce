//! Oracles shared by the integration tests. Nothing here calls the code
//! under test to produce expected values.

#![allow(dead_code)]

use krope::encoder::{InputSpace, LinearEncoder, NextActionMode, PreparedRows};
use krope::mdp::{generate_garnet, GarnetParams, Policy, TabularMdp};
use krope::objectives::{bcrl_losses, beer_penalty, dr3_penalty, fqe_loss, krope_pair_loss, BcrlHeads, FqeHead};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_stochastic(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut p = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

/// `A A^T` with entries of `A` uniform in [-1, 1].
pub fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

pub fn sup(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Dense `P^pi` built entry by entry from the definition.
pub fn policy_chain(mdp: &TabularMdp, pi: &Policy) -> DMatrix<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let n = ns * na;
    DMatrix::from_fn(n, n, |i, j| mdp.transitions()[(i, j / na)] * pi.prob(j / na, j % na))
}

/// Solves `vec(K) = vec(K1) + gamma (P kron P) vec(K)` as one dense system.
pub fn kronecker_fixed_point(k1: &DMatrix<f64>, p: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n = p.nrows();
    let big = n * n;
    // column-major vec: vec(P K P^T) = (P kron P) vec(K)
    let kron = p.kronecker(p);
    let a = DMatrix::identity(big, big) - kron * gamma;
    let b = DVector::from_column_slice(k1.as_slice());
    let x = a.lu().solve(&b).expect("I - gamma P kron P is invertible for gamma < 1");
    DMatrix::from_column_slice(n, n, x.as_slice())
}

/// Exact q by a dense linear solve of `(I - gamma P^pi) q = r`.
pub fn dense_q(mdp: &TabularMdp, pi: &Policy) -> DVector<f64> {
    let p = policy_chain(mdp, pi);
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - p * mdp.gamma();
    a.lu().solve(&DVector::from_column_slice(mdp.rewards())).unwrap()
}

/// Relative error `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|k| {
            buf[k] = x[k] + h;
            let up = f(&buf);
            buf[k] = x[k] - h;
            let down = f(&buf);
            buf[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub struct GradFixture {
    pub rows: PreparedRows,
    pub other: PreparedRows,
    pub enc: LinearEncoder,
    pub target: LinearEncoder,
    pub gamma: f64,
}

pub fn grad_fixture(seed: u64) -> GradFixture {
    let mdp = generate_garnet(GarnetParams { gamma: 0.9, ..Default::default() }, seed).unwrap();
    let pi = Policy::uniform(8, 5);
    let ds = krope::dataset::sample_dataset(&mdp, &pi, 300, seed).unwrap();
    let ds2 = krope::dataset::sample_dataset(&mdp, &pi, 200, seed + 1000).unwrap();
    let space = InputSpace::one_hot(&mdp, true);
    let mut r = rng(seed);
    let rows = PreparedRows::new(&space, &ds, &pi, NextActionMode::Sampled, &mut r).unwrap();
    let other = PreparedRows::new(&space, &ds2, &pi, NextActionMode::Expected, &mut r).unwrap();
    let mut init = |scale: f64| LinearEncoder::new(DMatrix::from_fn(4, 41, |_, _| scale * r.random_range(-1.0..1.0))).unwrap();
    let enc = init(0.8);
    let target = init(0.8);
    GradFixture { rows, other, enc, target, gamma: 0.9 }
}

fn with_weights(enc: &LinearEncoder, w: &[f64]) -> LinearEncoder {
    LinearEncoder::new(DMatrix::from_column_slice(enc.dim(), enc.width(), w)).unwrap()
}

const H: f64 = 1e-5;

/// Worst relative gradient error per objective over `n_batches` random batches.
pub fn gradient_check_errors(n_batches: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let fx = grad_fixture(seed);
    let mut r = rng(seed ^ 0xabcdef);
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some((_, w)) => *w = w.max(e),
        None => worst.push((name, e)),
    };
    let (n1, n2) = (fx.rows.len(), fx.other.len());
    let w0: Vec<f64> = fx.enc.weights.as_slice().to_vec();
    for _ in 0..n_batches {
        let batch: Vec<usize> = (0..16).map(|_| r.random_range(0..n1)).collect();
        let pairs: Vec<(usize, usize)> = (0..16).map(|_| (r.random_range(0..n1), r.random_range(0..n2))).collect();

        let (_, g) = krope_pair_loss(&fx.enc, &fx.target, &fx.rows, &fx.other, &pairs, fx.gamma, (-1.0, 1.0)).unwrap();
        let fd = central_diff(&w0, H, |w| {
            krope_pair_loss(&with_weights(&fx.enc, w), &fx.target, &fx.rows, &fx.other, &pairs, fx.gamma, (-1.0, 1.0))
                .unwrap()
                .0
        });
        record("krope_pair_loss", rel_err(g.as_slice(), &fd));

        let head = FqeHead {
            w: DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0)),
            b: r.random_range(-1.0..1.0),
            use_bias: true,
        };
        let t_head = FqeHead { w: DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0)), b: 0.3, use_bias: true };
        let (_, g) = fqe_loss(&fx.enc, &head, &fx.target, &t_head, &fx.rows, &batch, fx.gamma).unwrap();
        let fd = central_diff(&w0, H, |w| {
            fqe_loss(&with_weights(&fx.enc, w), &head, &fx.target, &t_head, &fx.rows, &batch, fx.gamma).unwrap().0
        });
        record("fqe_loss encoder", rel_err(g.encoder.as_slice(), &fd));
        let mut hb: Vec<f64> = head.w.iter().copied().collect();
        hb.push(head.b);
        let fd = central_diff(&hb, H, |v| {
            let h = FqeHead { w: DVector::from_column_slice(&v[..4]), b: v[4], use_bias: true };
            fqe_loss(&fx.enc, &h, &fx.target, &t_head, &fx.rows, &batch, fx.gamma).unwrap().0
        });
        let mut ga: Vec<f64> = g.head_w.iter().copied().collect();
        ga.push(g.head_b);
        record("fqe_loss head", rel_err(&ga, &fd));

        let (_, g) = dr3_penalty(&fx.enc, &fx.rows, &batch).unwrap();
        let fd = central_diff(&w0, H, |w| dr3_penalty(&with_weights(&fx.enc, w), &fx.rows, &batch).unwrap().0);
        record("dr3_penalty", rel_err(g.as_slice(), &fd));

        let (_, g) = beer_penalty(&fx.enc, &fx.rows, &batch, 0.3).unwrap();
        let fd = central_diff(&w0, H, |w| beer_penalty(&with_weights(&fx.enc, w), &fx.rows, &batch, 0.3).unwrap().0);
        record("beer_penalty", rel_err(g.as_slice(), &fd));

        let heads = BcrlHeads {
            m: DMatrix::from_fn(4, 4, |_, _| r.random_range(-1.0..1.0)),
            rho: DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0)),
        };
        for (name, coeff) in [("bcrl reward+self_prediction", 0.0), ("bcrl with exploration", 0.05)] {
            let l = bcrl_losses(&fx.enc, &fx.target, &heads, &fx.rows, &batch, fx.gamma, coeff).unwrap();
            let fd = central_diff(&w0, H, |w| {
                bcrl_losses(&with_weights(&fx.enc, w), &fx.target, &heads, &fx.rows, &batch, fx.gamma, coeff)
                    .unwrap()
                    .total()
            });
            record(name, rel_err(l.grad_encoder.as_slice(), &fd));
            let m0: Vec<f64> = heads.m.as_slice().to_vec();
            let fd = central_diff(&m0, H, |v| {
                let h = BcrlHeads { m: DMatrix::from_column_slice(4, 4, v), rho: heads.rho.clone() };
                bcrl_losses(&fx.enc, &fx.target, &h, &fx.rows, &batch, fx.gamma, coeff).unwrap().total()
            });
            record("bcrl heads m", rel_err(l.grad_m.as_slice(), &fd));
            let rho0: Vec<f64> = heads.rho.iter().copied().collect();
            let fd = central_diff(&rho0, H, |v| {
                let h = BcrlHeads { m: heads.m.clone(), rho: DVector::from_column_slice(v) };
                bcrl_losses(&fx.enc, &fx.target, &h, &fx.rows, &batch, fx.gamma, coeff).unwrap().total()
            });
            record("bcrl heads rho", rel_err(l.grad_rho.as_slice(), &fd));
        }
    }
    worst
}

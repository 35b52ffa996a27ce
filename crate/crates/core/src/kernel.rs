//! The KROPE kernel: short-term reward similarity plus discounted expected
//! similarity of independently drawn next state-actions.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, param_err, validation_err, Error, Result};
use crate::linalg;
use crate::mdp::{pi_transition_matrix, Policy, TabularMdp};

pub const DEFAULT_PSD_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-10;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
pub const DEFAULT_PARTITION_TOL: f64 = 1e-8;

/// Symmetric similarity matrix over state-actions (or dataset rows).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    psd_tolerance: f64,
}

impl KernelMatrix {
    /// Wraps `entries`, checking squareness, finiteness and symmetry.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(dim_err(format!("kernel must be square, got {}x{}", entries.nrows(), entries.ncols())));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(validation_err("kernel has non-finite entries"));
        }
        let scale = linalg::sup_norm(&entries).max(1.0);
        let asym = linalg::max_asymmetry(&entries);
        if asym > 1e-12 * scale {
            return Err(validation_err(format!("kernel is not symmetric (max gap {asym:e})")));
        }
        Ok(Self { entries, psd_tolerance: DEFAULT_PSD_TOLERANCE })
    }

    pub(crate) fn from_symmetric(entries: DMatrix<f64>) -> Self {
        Self { entries, psd_tolerance: DEFAULT_PSD_TOLERANCE }
    }

    pub fn with_psd_tolerance(mut self, tol: f64) -> Self {
        self.psd_tolerance = tol;
        self
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn psd_tolerance(&self) -> f64 {
        self.psd_tolerance
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        linalg::min_eigenvalue(&self.entries)
    }

    pub fn validate_psd(&self) -> Result<()> {
        let lam = self.min_eigenvalue()?;
        if lam < -self.psd_tolerance {
            return Err(validation_err(format!(
                "kernel is not positive semidefinite (min eigenvalue {lam:e})"
            )));
        }
        Ok(())
    }

    /// Sub-kernel over the given rows, e.g. the rows of a dataset.
    pub fn restrict(&self, rows: &[usize]) -> Result<KernelMatrix> {
        let n = self.dim();
        if let Some(r) = rows.iter().find(|r| **r >= n) {
            return Err(dim_err(format!("row {r} outside a kernel of size {n}")));
        }
        let m = rows.len();
        Ok(Self::from_symmetric(DMatrix::from_fn(m, m, |i, j| self.entries[(rows[i], rows[j])])))
    }
}

/// Short-term kernel `1 - |r_i - r_j| / (r_max - r_min)`.
pub fn k1_matrix(rewards: &[f64], r_min: f64, r_max: f64) -> Result<KernelMatrix> {
    let range = r_max - r_min;
    if !(range > 0.0) {
        return Err(param_err(format!("degenerate reward range [{r_min}, {r_max}]")));
    }
    if let Some(r) = rewards.iter().find(|r| **r < r_min || **r > r_max) {
        return Err(validation_err(format!("reward {r} outside [{r_min}, {r_max}]")));
    }
    let n = rewards.len();
    Ok(KernelMatrix::from_symmetric(DMatrix::from_fn(n, n, |i, j| {
        1.0 - (rewards[i] - rewards[j]).abs() / range
    })))
}

fn check_operator_shapes(k: &DMatrix<f64>, k1: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<()> {
    let n = k1.nrows();
    if k.shape() != (n, n) || k1.shape() != (n, n) || p.shape() != (n, n) {
        return Err(dim_err(format!(
            "operator needs matching square shapes, got k {:?}, k1 {:?}, P {:?}",
            k.shape(),
            k1.shape(),
            p.shape()
        )));
    }
    Ok(())
}

fn operator_raw(k: &DMatrix<f64>, k1: &DMatrix<f64>, p: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let pk = p * k;
    let mut out = &pk * p.transpose();
    out *= gamma;
    out += k1;
    // exact symmetry so repeated application does not drift
    let n = out.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// One application of `K1 + gamma * P K P^T`.
pub fn apply_krope_operator(
    k: &KernelMatrix,
    k1: &KernelMatrix,
    p_pi: &DMatrix<f64>,
    gamma: f64,
) -> Result<KernelMatrix> {
    check_operator_shapes(&k.entries, &k1.entries, p_pi)?;
    Ok(KernelMatrix::from_symmetric(operator_raw(&k.entries, &k1.entries, p_pi, gamma)))
}

/// Fixed point of the KROPE operator, iterating from the zero kernel.
pub fn krope_fixed_point(
    k1: &KernelMatrix,
    p_pi: &DMatrix<f64>,
    gamma: f64,
    tol: f64,
    max_iters: usize,
) -> Result<KernelMatrix> {
    let n = k1.dim();
    let zero = KernelMatrix::from_symmetric(DMatrix::zeros(n, n));
    krope_fixed_point_from(&zero, k1, p_pi, gamma, tol, max_iters)
}

/// Fixed point iteration from an arbitrary start `k0`.
pub fn krope_fixed_point_from(
    k0: &KernelMatrix,
    k1: &KernelMatrix,
    p_pi: &DMatrix<f64>,
    gamma: f64,
    tol: f64,
    max_iters: usize,
) -> Result<KernelMatrix> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(param_err(format!("fixed point needs gamma in [0, 1), got {gamma}")));
    }
    check_operator_shapes(&k0.entries, &k1.entries, p_pi)?;
    let mut k = k0.entries.clone();
    let mut delta = f64::INFINITY;
    for _ in 0..max_iters {
        let next = operator_raw(&k, &k1.entries, p_pi, gamma);
        delta = linalg::sup_norm(&(&next - &k));
        k = next;
        if delta <= tol {
            return Ok(KernelMatrix::from_symmetric(k));
        }
    }
    Err(Error::NonConvergence { iterations: max_iters, last_delta: delta })
}

/// Iteration budget that guarantees convergence from zero for `gamma < 1`.
pub fn sufficient_iterations(gamma: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 2;
    }
    // ||K_n - K_{n-1}|| <= gamma^{n-1} ||K1||, with ||K1|| <= 1
    let n = (tol * (1.0 - gamma)).ln() / gamma.ln();
    n.ceil().max(1.0) as usize + 10
}

/// Exact KROPE kernel of `(mdp, pi)` with the MDP's declared reward bounds.
pub fn exact_krope_kernel(mdp: &TabularMdp, pi: &Policy, tol: f64) -> Result<KernelMatrix> {
    let (r_min, r_max) = mdp.reward_bounds();
    let k1 = k1_matrix(mdp.rewards(), r_min, r_max)?;
    let p = pi_transition_matrix(mdp, pi)?;
    let gamma = mdp.gamma();
    krope_fixed_point(&k1, &p, gamma, tol, sufficient_iterations(gamma, tol))
}

/// Induced distance `k(x,x) + k(y,y) - 2k(x,y)`, clamped at zero.
pub fn d_krope(k: &KernelMatrix) -> Result<DMatrix<f64>> {
    k.validate_psd()?;
    let e = &k.entries;
    let n = k.dim();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (e[(i, i)] + e[(j, j)] - 2.0 * e[(i, j)]).max(0.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Squared maximum mean discrepancy between two distributions under `k`.
pub fn mmd_squared(k: &KernelMatrix, p: &[f64], q: &[f64]) -> Result<f64> {
    let n = k.dim();
    if p.len() != n || q.len() != n {
        return Err(dim_err("distributions must match the kernel size"));
    }
    for (name, v) in [("p", p), ("q", q)] {
        crate::mdp::validate_distribution(v, 1e-9).map_err(|e| validation_err(format!("{name}: {e}")))?;
    }
    let diff = DVector::from_iterator(n, p.iter().zip(q).map(|(a, b)| a - b));
    let v = diff.dot(&(&k.entries * &diff));
    Ok(if v < 0.0 && v >= -1e-12 { 0.0 } else { v })
}

/// Feature matrix `V sqrt(Lambda)` with `K ~= Phi Phi^T`, keeping eigenvalues
/// at or above `rank_tol * lambda_max`.
pub fn factorize_kernel(k: &KernelMatrix, rank_tol: f64) -> Result<DMatrix<f64>> {
    factorize_kernel_truncated(k, rank_tol, usize::MAX)
}

/// As [`factorize_kernel`], keeping at most `max_rank` leading eigenpairs.
pub fn factorize_kernel_truncated(k: &KernelMatrix, rank_tol: f64, max_rank: usize) -> Result<DMatrix<f64>> {
    if max_rank == 0 {
        return Err(param_err("max_rank must be at least 1"));
    }
    k.validate_psd()?;
    let (vals, vecs) = linalg::sym_eigen_desc(&k.entries)?;
    let n = k.dim();
    let lam_max = vals.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rank_tol * lam_max;
    let keep: Vec<usize> = (0..n)
        .filter(|&c| vals[c] > 0.0 && vals[c] >= cutoff)
        .take(max_rank)
        .collect();
    if keep.is_empty() {
        // zero kernel: a single zero feature keeps d >= 1
        return Ok(DMatrix::zeros(n, 1));
    }
    let mut phi = DMatrix::zeros(n, keep.len());
    for (dst, &c) in keep.iter().enumerate() {
        let mut col = vecs.column(c).into_owned();
        // sign convention: positive sum, or positive leading entry when the sum vanishes
        let s: f64 = col.sum();
        let flip = if s.abs() > 1e-12 {
            s < 0.0
        } else {
            col.iter().find(|v| v.abs() > 1e-12).is_some_and(|v| *v < 0.0)
        };
        if flip {
            col.neg_mut();
        }
        phi.set_column(dst, &(col * vals[c].sqrt()));
    }
    Ok(phi)
}

/// Grouping of state-actions whose kernel distance is within a tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Abstraction {
    pub labels: Vec<usize>,
    pub tolerance: f64,
    pub n_groups: usize,
    /// Largest distance between two members of the same group.
    pub max_within_distance: f64,
    /// Merges along the longest chain; within-group distances are at most
    /// this many tolerances when the distance is a metric.
    pub max_chain_length: usize,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// Transitive closure of the relation `d(x, y) <= tol`; labels are numbered
/// by first appearance.
pub fn bisim_partition(d: &DMatrix<f64>, tol: f64) -> Result<Abstraction> {
    if !d.is_square() {
        return Err(dim_err("distance matrix must be square"));
    }
    let n = d.nrows();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if d[(i, j)] <= tol {
                uf.union(i, j);
            }
        }
    }
    let mut root_label = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut next = 0;
    for i in 0..n {
        let r = uf.find(i);
        if root_label[r] == usize::MAX {
            root_label[r] = next;
            next += 1;
        }
        labels[i] = root_label[r];
    }
    let mut max_within = 0.0_f64;
    let mut max_chain = 0usize;
    for g in 0..next {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == g).collect();
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                max_within = max_within.max(d[(i, j)]);
            }
        }
        max_chain = max_chain.max(group_hop_diameter(d, tol, &members));
    }
    Ok(Abstraction { labels, tolerance: tol, n_groups: next, max_within_distance: max_within, max_chain_length: max_chain })
}

/// Longest shortest path, in hops of length `<= tol`, inside one group.
fn group_hop_diameter(d: &DMatrix<f64>, tol: f64, members: &[usize]) -> usize {
    let m = members.len();
    let mut worst = 0;
    for src in 0..m {
        let mut dist = vec![usize::MAX; m];
        dist[src] = 0;
        let mut frontier = vec![src];
        while let Some(u) = frontier.pop() {
            for v in 0..m {
                if dist[v] > dist[u] + 1 && d[(members[u], members[v])] <= tol {
                    dist[v] = dist[u] + 1;
                    frontier.push(v);
                }
            }
        }
        worst = worst.max(dist.into_iter().filter(|x| *x != usize::MAX).max().unwrap_or(0));
    }
    worst
}

/// Reward-mismatch bound on value differences.
#[derive(Debug, Clone)]
pub struct ValueBound {
    /// `C(x, y)` truncated after `N` discounted steps.
    pub c: DMatrix<f64>,
    /// Analytic bound on the omitted terms.
    pub tail: f64,
    /// `d_KROPE(x, y) + C(x, y) + tail`.
    pub bound: DMatrix<f64>,
}

/// `C(x, y) = 1/2 sum_{n<=N} gamma^n (Delta_n(x) + Delta_n(y))` where
/// `Delta_n = P^n delta` and `delta(x)` is the expected reward gap between
/// two independent next state-actions of `x`.
pub fn value_difference_bound(
    mdp: &TabularMdp,
    pi: &Policy,
    k: &KernelMatrix,
    truncation_n: usize,
) -> Result<ValueBound> {
    let p = pi_transition_matrix(mdp, pi)?;
    let n = p.nrows();
    if k.dim() != n {
        return Err(dim_err("kernel does not match the MDP's state-actions"));
    }
    let r = mdp.rewards();
    let gamma = mdp.gamma();
    let mut delta = DVector::zeros(n);
    for x in 0..n {
        let mut acc = 0.0;
        for u in 0..n {
            let pu = p[(x, u)];
            if pu == 0.0 {
                continue;
            }
            for v in 0..n {
                acc += pu * p[(x, v)] * (r[u] - r[v]).abs();
            }
        }
        delta[x] = acc;
    }
    let mut s = DVector::zeros(n);
    let mut term = delta;
    let mut g = 1.0;
    for step in 0..=truncation_n {
        s += &term * g;
        if step < truncation_n {
            term = &p * &term;
            g *= gamma;
            if g == 0.0 {
                break;
            }
        }
    }
    let tail = if gamma < 1.0 { 2.0 * gamma.powi(truncation_n as i32 + 1) / (1.0 - gamma) } else { f64::INFINITY };
    let c = DMatrix::from_fn(n, n, |i, j| 0.5 * (s[i] + s[j]));
    let d = d_krope(k)?;
    let bound = DMatrix::from_fn(n, n, |i, j| d[(i, j)] + c[(i, j)] + tail);
    Ok(ValueBound { c, tail, bound })
}

//! Exact tabular MDP machinery.
//!
//! State-action pairs are flattened as `i = s * n_actions + a`; every matrix
//! and vector over state-actions in this crate uses that row order.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, validation_err, Error, Result};
use crate::linalg;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Bijection between `(state, action)` and the flat state-action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateActionIndex {
    pub n_states: usize,
    pub n_actions: usize,
}

impl StateActionIndex {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions }
    }

    pub fn len(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_actions);
        s * self.n_actions + a
    }

    #[inline]
    pub fn pair(&self, i: usize) -> (usize, usize) {
        (i / self.n_actions, i % self.n_actions)
    }
}

/// A finite MDP with state-action rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    rewards: Vec<f64>,
    /// Row `i` is `P(. | s_i, a_i)`, shape `|X| x n_states`.
    transitions: DMatrix<f64>,
    gamma: f64,
    d0: Vec<f64>,
    terminal: Vec<bool>,
    reward_bounds: (f64, f64),
    seed: Option<u64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rewards: Vec<f64>,
        transitions: DMatrix<f64>,
        gamma: f64,
        d0: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(param_err("n_states and n_actions must be positive"));
        }
        let n_sa = n_states * n_actions;
        if rewards.len() != n_sa {
            return Err(dim_err(format!("rewards has length {}, expected {n_sa}", rewards.len())));
        }
        if transitions.shape() != (n_sa, n_states) {
            return Err(dim_err(format!(
                "transitions is {}x{}, expected {n_sa}x{n_states}",
                transitions.nrows(),
                transitions.ncols()
            )));
        }
        if d0.len() != n_states || terminal.len() != n_states {
            return Err(dim_err("d0 and terminal mask must have one entry per state"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(param_err(format!("gamma {gamma} outside [0, 1]")));
        }
        if let Some(r) = rewards.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
            return Err(validation_err(format!("reward {r} outside [-1, 1]")));
        }
        for i in 0..n_sa {
            let row = transitions.row(i);
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(validation_err(format!("transition row {i} has a negative entry")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(validation_err(format!("transition row {i} sums to {sum}")));
            }
        }
        validate_distribution(&d0, STOCHASTIC_TOL).map_err(|e| validation_err(format!("d0: {e}")))?;
        for (s, _) in terminal.iter().enumerate().filter(|(_, t)| **t) {
            for a in 0..n_actions {
                let i = s * n_actions + a;
                if rewards[i] != 0.0 || transitions[(i, s)] != 1.0 {
                    return Err(validation_err(format!(
                        "terminal state {s} must self-loop with zero reward"
                    )));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            rewards,
            transitions,
            gamma,
            d0,
            terminal,
            reward_bounds: (-1.0, 1.0),
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Declared reward range used by the short-term kernel normaliser.
    pub fn with_reward_bounds(mut self, r_min: f64, r_max: f64) -> Result<Self> {
        if r_max <= r_min {
            return Err(param_err("reward bounds must satisfy r_min < r_max"));
        }
        if self.rewards.iter().any(|r| *r < r_min || *r > r_max) {
            return Err(validation_err("rewards fall outside the declared bounds"));
        }
        self.reward_bounds = (r_min, r_max);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn n_state_actions(&self) -> usize {
        self.n_states * self.n_actions
    }
    pub fn index(&self) -> StateActionIndex {
        StateActionIndex::new(self.n_states, self.n_actions)
    }
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }
    pub fn transitions(&self) -> &DMatrix<f64> {
        &self.transitions
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn d0(&self) -> &[f64] {
        &self.d0
    }
    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }
    pub fn reward_bounds(&self) -> (f64, f64) {
        self.reward_bounds
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Same MDP with a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(param_err(format!("gamma {gamma} outside [0, 1]")));
        }
        let mut out = self.clone();
        out.gamma = gamma;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MdpDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// On-disk JSON layout for [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub rewards: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub d0: Vec<f64>,
    pub terminal: Vec<bool>,
    pub reward_bounds: [f64; 2],
    pub seed: Option<u64>,
}

impl From<&TabularMdp> for MdpDocument {
    fn from(m: &TabularMdp) -> Self {
        let transitions = (0..m.transitions.nrows())
            .map(|i| m.transitions.row(i).iter().copied().collect())
            .collect();
        Self {
            n_states: m.n_states,
            n_actions: m.n_actions,
            gamma: m.gamma,
            rewards: m.rewards.clone(),
            transitions,
            d0: m.d0.clone(),
            terminal: m.terminal.clone(),
            reward_bounds: [m.reward_bounds.0, m.reward_bounds.1],
            seed: m.seed,
        }
    }
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let rows = doc.transitions.len();
        if doc.transitions.iter().any(|r| r.len() != doc.n_states) {
            return Err(dim_err("transition rows must have n_states entries"));
        }
        let flat: Vec<f64> = doc.transitions.into_iter().flatten().collect();
        let p = DMatrix::from_row_slice(rows, doc.n_states, &flat);
        let mut mdp = TabularMdp::new(
            doc.n_states,
            doc.n_actions,
            doc.rewards,
            p,
            doc.gamma,
            doc.d0,
            doc.terminal,
        )?
        .with_reward_bounds(doc.reward_bounds[0], doc.reward_bounds[1])?;
        mdp.seed = doc.seed;
        Ok(mdp)
    }
}

/// Per-state distribution over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        for s in 0..probs.nrows() {
            let row: Vec<f64> = probs.row(s).iter().copied().collect();
            validate_distribution(&row, STOCHASTIC_TOL)
                .map_err(|e| validation_err(format!("policy row {s}: {e}")))?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(n_states, n_actions, 1.0 / n_actions as f64),
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = DMatrix::zeros(actions.len(), n_actions);
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(param_err(format!("action {a} out of range")));
            }
            probs[(s, a)] = 1.0;
        }
        Ok(Self { probs })
    }

    /// Boltzmann policy `softmax(q(s, .) / tau)`.
    pub fn softmax(q: &[f64], n_states: usize, n_actions: usize, tau: f64) -> Result<Self> {
        if tau <= 0.0 {
            return Err(param_err("softmax temperature must be positive"));
        }
        if q.len() != n_states * n_actions {
            return Err(dim_err("q must have one entry per state-action"));
        }
        let mut probs = DMatrix::zeros(n_states, n_actions);
        for s in 0..n_states {
            let row = &q[s * n_actions..(s + 1) * n_actions];
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            let mut z = 0.0;
            for a in 0..n_actions {
                let e = ((row[a] - max) / tau).exp();
                probs[(s, a)] = e;
                z += e;
            }
            for a in 0..n_actions {
                probs[(s, a)] /= z;
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }
}

pub(crate) fn validate_distribution(p: &[f64], tol: f64) -> std::result::Result<(), String> {
    if p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err("entries must be finite and non-negative".into());
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

fn check_policy_shape(mdp: &TabularMdp, pi: &Policy) -> Result<()> {
    if pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions {
        return Err(dim_err(format!(
            "policy is {}x{}, MDP has {} states and {} actions",
            pi.n_states(),
            pi.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    Ok(())
}

/// State-action transition matrix of the chain induced by `pi`:
/// `P_pi[(i, j)] = P(s_j | s_i, a_i) * pi(a_j | s_j)`.
pub fn pi_transition_matrix(mdp: &TabularMdp, pi: &Policy) -> Result<DMatrix<f64>> {
    check_policy_shape(mdp, pi)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let n = ns * na;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for sp in 0..ns {
            let p = mdp.transitions[(i, sp)];
            if p == 0.0 {
                continue;
            }
            for ap in 0..na {
                out[(i, sp * na + ap)] = p * pi.prob(sp, ap);
            }
        }
    }
    Ok(out)
}

/// Expected reward of each state under `pi`, used for random-policy baselines.
pub fn state_action_mask_nonterminal(mdp: &TabularMdp) -> Vec<bool> {
    let idx = mdp.index();
    (0..idx.len()).map(|i| !mdp.terminal[idx.pair(i).0]).collect()
}

/// Exact action values of `pi`, solving `(I - gamma P_pi) q = r` directly.
///
/// Terminal state-actions are pinned to zero, so `gamma = 1` is accepted
/// whenever every other state-action is absorbed into a terminal state.
pub fn exact_q(mdp: &TabularMdp, pi: &Policy) -> Result<Vec<f64>> {
    let p = pi_transition_matrix(mdp, pi)?;
    let live: Vec<usize> = state_action_mask_nonterminal(mdp)
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.then_some(i))
        .collect();
    let n = mdp.n_state_actions();
    let mut q = vec![0.0; n];
    if live.is_empty() {
        return Ok(q);
    }
    let gamma = mdp.gamma;
    if gamma >= 1.0 && !absorbs(&p, &live, mdp) {
        return Err(Error::Unsolvable(
            "gamma = 1 and some state-actions never reach a terminal state".into(),
        ));
    }
    let m = live.len();
    let mut a = DMatrix::identity(m, m);
    let mut b = DVector::zeros(m);
    for (ri, &i) in live.iter().enumerate() {
        b[ri] = mdp.rewards[i];
        for (cj, &j) in live.iter().enumerate() {
            a[(ri, cj)] -= gamma * p[(i, j)];
        }
    }
    let sol = linalg::lu_solve(&a, &b)
        .ok_or_else(|| Error::Unsolvable("(I - gamma P_pi) is singular".into()))?;
    for (ri, &i) in live.iter().enumerate() {
        q[i] = sol[ri];
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unsolvable("solution is not finite".into()));
    }
    Ok(q)
}

/// True when every live state-action reaches a terminal state with positive probability.
fn absorbs(p: &DMatrix<f64>, live: &[usize], mdp: &TabularMdp) -> bool {
    let n = p.nrows();
    let live_mask = state_action_mask_nonterminal(mdp);
    // backwards reachability from terminal state-actions
    let mut reaches: Vec<bool> = live_mask.iter().map(|l| !l).collect();
    if !reaches.iter().any(|r| *r) {
        return false;
    }
    loop {
        let mut changed = false;
        for &i in live {
            if reaches[i] {
                continue;
            }
            if (0..n).any(|j| reaches[j] && p[(i, j)] > 0.0) {
                reaches[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    live.iter().all(|&i| reaches[i])
}

/// Residual `||q - r - gamma P_pi q||_inf` over non-terminal state-actions.
pub fn bellman_residual(mdp: &TabularMdp, pi: &Policy, q: &[f64]) -> Result<f64> {
    let p = pi_transition_matrix(mdp, pi)?;
    let qv = DVector::from_column_slice(q);
    let pq = &p * &qv;
    let live = state_action_mask_nonterminal(mdp);
    Ok((0..q.len())
        .filter(|&i| live[i])
        .map(|i| (q[i] - mdp.rewards[i] - mdp.gamma * pq[i]).abs())
        .fold(0.0, f64::max))
}

/// Optimal action values by value iteration; used to build target policies.
pub fn optimal_q(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    if mdp.gamma >= 1.0 {
        return Err(param_err("optimal_q requires gamma < 1"));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![0.0; ns * na];
    for _ in 0..max_iters {
        let v: Vec<f64> = (0..ns)
            .map(|s| q[s * na..(s + 1) * na].iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)))
            .collect();
        let mut delta = 0.0_f64;
        let mut next = vec![0.0; ns * na];
        for i in 0..ns * na {
            let ev: f64 = (0..ns).map(|sp| mdp.transitions[(i, sp)] * v[sp]).sum();
            next[i] = mdp.rewards[i] + mdp.gamma * ev;
            delta = delta.max((next[i] - q[i]).abs());
        }
        q = next;
        if delta <= tol {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence { iterations: max_iters, last_delta: f64::NAN })
}

/// Stationary distribution of a row-stochastic matrix by power iteration
/// from the uniform vector; `None` when it fails to settle.
pub fn stationary_distribution(p: &DMatrix<f64>, tol: f64, max_iters: usize) -> Option<Vec<f64>> {
    let n = p.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let pt = p.transpose();
    for _ in 0..max_iters {
        let mut next = &pt * &v;
        let s = next.sum();
        if s <= 0.0 || !s.is_finite() {
            return None;
        }
        next /= s;
        let delta = (&next - &v).abs().max();
        v = next;
        if delta <= tol {
            return Some(v.iter().copied().collect());
        }
    }
    None
}

/// Normalised expected visit counts over state-actions from `d0` under `pi`,
/// for chains that are absorbed by terminal states.
pub fn occupancy_distribution(mdp: &TabularMdp, pi: &Policy) -> Result<Vec<f64>> {
    let p = pi_transition_matrix(mdp, pi)?;
    let idx = mdp.index();
    let live: Vec<usize> = state_action_mask_nonterminal(mdp)
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.then_some(i))
        .collect();
    if live.is_empty() || !absorbs(&p, &live, mdp) {
        return Err(Error::Unsolvable("occupancy needs an absorbing chain".into()));
    }
    let m = live.len();
    // visits^T = start^T (I - P_live)^{-1}  <=>  (I - P_live)^T visits = start
    let mut a = DMatrix::identity(m, m);
    let mut start = DVector::zeros(m);
    for (ri, &i) in live.iter().enumerate() {
        let (s, aa) = idx.pair(i);
        start[ri] = mdp.d0[s] * pi.prob(s, aa);
        for (cj, &j) in live.iter().enumerate() {
            a[(cj, ri)] -= p[(i, j)];
        }
    }
    let visits = linalg::lu_solve(&a, &start)
        .ok_or_else(|| Error::Unsolvable("occupancy system is singular".into()))?;
    let total: f64 = visits.sum();
    let mut out = vec![0.0; idx.len()];
    for (ri, &i) in live.iter().enumerate() {
        out[i] = visits[ri].max(0.0) / total;
    }
    Ok(out)
}

/// Knobs for random Garnet MDPs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GarnetParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub branching: usize,
    pub gamma: f64,
}

impl Default for GarnetParams {
    fn default() -> Self {
        Self { n_states: 8, n_actions: 5, branching: 3, gamma: 0.99 }
    }
}

/// Random Garnet MDP: each state-action reaches `branching` distinct next
/// states with uniform-simplex probabilities; rewards are uniform on [-1, 1].
pub fn generate_garnet(params: GarnetParams, seed: u64) -> Result<TabularMdp> {
    let GarnetParams { n_states, n_actions, branching, gamma } = params;
    if n_states == 0 || n_actions == 0 {
        return Err(param_err("Garnet needs at least one state and one action"));
    }
    if branching < 1 || branching > n_states {
        return Err(param_err(format!("branching {branching} must lie in [1, {n_states}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sa = n_states * n_actions;
    let mut p = DMatrix::zeros(n_sa, n_states);
    let mut rewards = Vec::with_capacity(n_sa);
    for i in 0..n_sa {
        let targets = sample_indices(&mut rng, n_states, branching).into_vec();
        let mut cuts: Vec<f64> = (0..branching - 1).map(|_| rng.random::<f64>()).collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("uniform draws are finite"));
        let mut prev = 0.0;
        for (k, &sp) in targets.iter().enumerate() {
            let upper = if k + 1 < branching { cuts[k] } else { 1.0 };
            p[(i, sp)] = upper - prev;
            prev = upper;
        }
        // renormalise away the last-ulp drift of the telescoping sum
        let sum: f64 = p.row(i).sum();
        for &sp in &targets {
            p[(i, sp)] /= sum;
        }
        rewards.push(rng.random_range(-1.0..=1.0));
    }
    let d0 = vec![1.0 / n_states as f64; n_states];
    Ok(TabularMdp::new(n_states, n_actions, rewards, p, gamma, d0, vec![false; n_states])?
        .with_seed(seed))
}

/// Parameters of the four-state divergence counterexample.
///
/// States 0..4 carry native features `[1,0,0]`, `[0,1,0]`, `[0,0,2]`,
/// `[0,0,1]`; state 4 is terminal. Topology: `0 -> 1 -> terminal`,
/// `3 -> 2`, and state 2 loops on itself with probability `p_loop`
/// before terminating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleParams {
    pub p_loop: f64,
    pub rewards: [f64; 4],
    pub d0: [f64; 4],
}

impl Default for CounterexampleParams {
    fn default() -> Self {
        Self { p_loop: 0.9, rewards: [-0.2, 1.0, 0.0, 0.0], d0: [1.0, 0.0, 0.0, 0.0] }
    }
}

/// Linear value weights realised by the counterexample defaults.
pub const COUNTEREXAMPLE_WEIGHTS: [f64; 3] = [0.8, 1.0, 0.0];

/// Native features of the non-terminal counterexample states.
pub fn counterexample_features() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        3,
        &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.0],
    )
}

/// Builds the counterexample MRP (one action, `gamma = 1`) together with its
/// 4x3 native feature matrix, checking that the features realise the exact
/// values with weights [`COUNTEREXAMPLE_WEIGHTS`].
pub fn counterexample_mrp(params: CounterexampleParams) -> Result<(TabularMdp, DMatrix<f64>)> {
    let CounterexampleParams { p_loop, rewards, d0 } = params;
    if !(0.0..1.0).contains(&p_loop) {
        return Err(param_err("p_loop must lie in [0, 1)"));
    }
    let terminal_state = 4;
    let mut p = DMatrix::zeros(5, 5);
    p[(0, 1)] = 1.0;
    p[(1, terminal_state)] = 1.0;
    p[(2, 2)] = p_loop;
    p[(2, terminal_state)] = 1.0 - p_loop;
    p[(3, 2)] = 1.0;
    p[(terminal_state, terminal_state)] = 1.0;
    let mut r = rewards.to_vec();
    r.push(0.0);
    let mut start = d0.to_vec();
    start.push(0.0);
    let mdp = TabularMdp::new(5, 1, r, p, 1.0, start, vec![false, false, false, false, true])?;

    let features = counterexample_features();
    let w = DVector::from_column_slice(&COUNTEREXAMPLE_WEIGHTS);
    let v = &features * &w;
    let mut q = v.iter().copied().collect::<Vec<_>>();
    q.push(0.0);
    let residual = bellman_residual(&mdp, &Policy::uniform(5, 1), &q)?;
    if residual > 1e-10 {
        return Err(validation_err(format!(
            "counterexample parameters are not Bellman-consistent with the fixed weights (residual {residual:e})"
        )));
    }
    Ok((mdp, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn self_loop(r: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![r], DMatrix::from_element(1, 1, 1.0), gamma, vec![1.0], vec![false])
            .unwrap()
    }

    fn two_cycle() -> TabularMdp {
        // two states, one action each, deterministic swap
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        TabularMdp::new(2, 1, vec![0.5, -0.5], p, 0.9, vec![0.5, 0.5], vec![false, false]).unwrap()
    }

    #[test]
    fn index_round_trip() {
        let idx = StateActionIndex::new(8, 5);
        for s in 0..8 {
            for a in 0..5 {
                assert_eq!(idx.pair(idx.index(s, a)), (s, a));
            }
        }
    }

    #[test]
    fn self_loop_chain_is_identity() {
        let mdp = self_loop(1.0, 0.5);
        let p = pi_transition_matrix(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert_eq!(p[(0, 0)], 1.0);
    }

    #[test]
    fn deterministic_cycle_is_permutation() {
        let mdp = two_cycle();
        let p = pi_transition_matrix(&mdp, &Policy::uniform(2, 1)).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mdp = two_cycle();
        let err = pi_transition_matrix(&mdp, &Policy::uniform(3, 1)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn geometric_series_value() {
        let q = exact_q(&self_loop(1.0, 0.5), &Policy::uniform(1, 1)).unwrap();
        assert!((q[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn myopic_values_equal_rewards() {
        let mdp = generate_garnet(GarnetParams { gamma: 0.0, ..Default::default() }, 3).unwrap();
        let q = exact_q(&mdp, &Policy::uniform(8, 5)).unwrap();
        for (a, b) in q.iter().zip(mdp.rewards()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn undiscounted_loop_is_unsolvable() {
        let err = exact_q(&self_loop(1.0, 1.0), &Policy::uniform(1, 1)).unwrap_err();
        assert!(matches!(err, Error::Unsolvable(_)));
    }

    #[test]
    fn garnet_rejects_bad_branching() {
        let p = GarnetParams { branching: 9, ..Default::default() };
        assert!(matches!(generate_garnet(p, 0), Err(Error::Parameter(_))));
        let p = GarnetParams { branching: 0, ..Default::default() };
        assert!(matches!(generate_garnet(p, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn branching_one_gives_one_hot_rows() {
        let mdp = generate_garnet(GarnetParams { branching: 1, ..Default::default() }, 11).unwrap();
        for i in 0..40 {
            let row = mdp.transitions().row(i);
            assert_eq!(row.iter().filter(|p| **p != 0.0).count(), 1);
            assert_eq!(row.iter().copied().fold(0.0, f64::max), 1.0);
        }
    }

    #[test]
    fn garnet_is_deterministic() {
        let a = generate_garnet(GarnetParams::default(), 0).unwrap();
        let b = generate_garnet(GarnetParams::default(), 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_garnet(GarnetParams::default(), 1).unwrap());
    }

    #[test]
    fn counterexample_defaults_realise_fixed_weights() {
        let (mdp, phi) = counterexample_mrp(CounterexampleParams::default()).unwrap();
        let q = exact_q(&mdp, &Policy::uniform(5, 1)).unwrap();
        let expected = [0.8, 1.0, 0.0, 0.0, 0.0];
        for (a, b) in q.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{q:?}");
        }
        assert_eq!(phi.shape(), (4, 3));
    }

    #[test]
    fn counterexample_rejects_inconsistent_rewards() {
        let params = CounterexampleParams { rewards: [0.0, 1.0, 0.0, 0.0], ..Default::default() };
        assert!(matches!(counterexample_mrp(params), Err(Error::Validation(_))));
    }

    #[test]
    fn counterexample_zero_rewards_give_zero_values() {
        for p_loop in [0.0, 0.3, 0.95] {
            let p = DMatrix::from_row_slice(
                5,
                5,
                &[
                    0.0, 1.0, 0.0, 0.0, 0.0, //
                    0.0, 0.0, 0.0, 0.0, 1.0, //
                    0.0, 0.0, p_loop, 0.0, 1.0 - p_loop, //
                    0.0, 0.0, 1.0, 0.0, 0.0, //
                    0.0, 0.0, 0.0, 0.0, 1.0,
                ],
            );
            let mdp = TabularMdp::new(
                5,
                1,
                vec![0.0; 5],
                p,
                1.0,
                vec![1.0, 0.0, 0.0, 0.0, 0.0],
                vec![false, false, false, false, true],
            )
            .unwrap();
            let q = exact_q(&mdp, &Policy::uniform(5, 1)).unwrap();
            assert!(q.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn json_round_trip() {
        let mdp = generate_garnet(GarnetParams::default(), 5).unwrap();
        let back = TabularMdp::from_json(&mdp.to_json().unwrap()).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let p = DMatrix::from_row_slice(1, 1, &[0.9]);
        let err = TabularMdp::new(1, 1, vec![0.0], p, 0.5, vec![1.0], vec![false]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let p = DMatrix::from_row_slice(1, 1, &[1.0]);
        let err = TabularMdp::new(1, 1, vec![1.5], p, 0.5, vec![1.0], vec![false]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}

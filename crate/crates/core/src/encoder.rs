//! Linear encoders over sparse state-action inputs.
//!
//! An input is the native feature vector of a state-action with a trailing
//! bias coordinate, so a `d x (n_in + 1)` weight matrix is an affine map.

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::OfflineDataset;
use crate::error::{dim_err, param_err, Result};
use crate::mdp::{Policy, TabularMdp};

/// Sparse vector over the augmented input coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseInput {
    pub entries: Vec<(usize, f64)>,
}

impl SparseInput {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self, width: usize) -> DVector<f64> {
        let mut v = DVector::zeros(width);
        for &(j, x) in &self.entries {
            v[j] += x;
        }
        v
    }

    fn add_scaled(&mut self, other: &SparseInput, c: f64) {
        for &(j, x) in &other.entries {
            match self.entries.iter_mut().find(|(k, _)| *k == j) {
                Some((_, y)) => *y += c * x,
                None => self.entries.push((j, c * x)),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum InputKind {
    OneHot,
    /// `|X| x n_in` native features, one row per state-action.
    Native(DMatrix<f64>),
}

/// Maps state-actions to encoder inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpace {
    n_states: usize,
    n_actions: usize,
    kind: InputKind,
    bias: bool,
    terminal: Vec<bool>,
}

impl InputSpace {
    pub fn one_hot(mdp: &TabularMdp, bias: bool) -> Self {
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            kind: InputKind::OneHot,
            bias,
            terminal: mdp.terminal().to_vec(),
        }
    }

    /// Native features with one row per state-action; terminal rows may be zero.
    pub fn native(mdp: &TabularMdp, features: DMatrix<f64>, bias: bool) -> Result<Self> {
        if features.nrows() != mdp.n_state_actions() || features.ncols() == 0 {
            return Err(dim_err(format!(
                "native features must be {} x n_in, got {}x{}",
                mdp.n_state_actions(),
                features.nrows(),
                features.ncols()
            )));
        }
        Ok(Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            kind: InputKind::Native(features),
            bias,
            terminal: mdp.terminal().to_vec(),
        })
    }

    /// Number of native input coordinates, excluding the bias slot.
    pub fn n_in(&self) -> usize {
        match &self.kind {
            InputKind::OneHot => self.n_states * self.n_actions,
            InputKind::Native(f) => f.ncols(),
        }
    }

    pub fn width(&self) -> usize {
        self.n_in() + 1
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn n_state_actions(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn input(&self, s: usize, a: usize) -> SparseInput {
        let i = s * self.n_actions + a;
        let mut entries = match &self.kind {
            InputKind::OneHot => vec![(i, 1.0)],
            InputKind::Native(f) => {
                f.row(i).iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect()
            }
        };
        if self.bias {
            entries.push((self.n_in(), 1.0));
        }
        SparseInput { entries }
    }

    /// `sum_a pi(a | s') input(s', a)`; zero when `s'` is terminal.
    pub fn expected_next(&self, s_next: usize, pi: &Policy) -> SparseInput {
        let mut out = SparseInput::default();
        if self.terminal[s_next] {
            return out;
        }
        for a in 0..self.n_actions {
            let p = pi.prob(s_next, a);
            if p > 0.0 {
                out.add_scaled(&self.input(s_next, a), p);
            }
        }
        out
    }

    /// Input for a single sampled next action; zero when `s'` is terminal.
    pub fn sampled_next(&self, s_next: usize, a_next: usize) -> SparseInput {
        if self.terminal[s_next] {
            return SparseInput::default();
        }
        self.input(s_next, a_next)
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Inputs for every state-action in flat order.
    pub fn all_inputs(&self) -> Vec<SparseInput> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.input(s, a))
            .collect()
    }

    /// Expected next input of every state-action under the MDP's dynamics and `pi`.
    pub fn all_expected_next(&self, mdp: &TabularMdp, pi: &Policy) -> Vec<SparseInput> {
        let n_sa = self.n_state_actions();
        let per_state: Vec<SparseInput> = (0..self.n_states).map(|s| self.expected_next(s, pi)).collect();
        (0..n_sa)
            .map(|i| {
                let mut out = SparseInput::default();
                for (sp, next) in per_state.iter().enumerate() {
                    let p = mdp.transitions()[(i, sp)];
                    if p > 0.0 {
                        out.add_scaled(next, p);
                    }
                }
                out
            })
            .collect()
    }
}

/// How the next action of each transition enters bootstrapped targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NextActionMode {
    /// Exact expectation over the target policy.
    #[default]
    Expected,
    /// One next action per row drawn from the target policy.
    Sampled,
}

/// Dataset rows turned into encoder inputs.
#[derive(Debug, Clone)]
pub struct PreparedRows {
    pub x: Vec<SparseInput>,
    pub x_next: Vec<SparseInput>,
    /// 1 when the next state is live, 0 when terminal.
    pub next_live: Vec<f64>,
    pub r: Vec<f64>,
}

impl PreparedRows {
    pub fn new<R: Rng>(
        space: &InputSpace,
        dataset: &OfflineDataset,
        pi: &Policy,
        mode: NextActionMode,
        rng: &mut R,
    ) -> Result<Self> {
        if dataset.n_states() * dataset.n_actions() != space.n_state_actions() {
            return Err(dim_err("dataset and input space disagree on the state-action count"));
        }
        let n = dataset.len();
        let mut rows = Self {
            x: Vec::with_capacity(n),
            x_next: Vec::with_capacity(n),
            next_live: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
        };
        let cached: Vec<SparseInput> = (0..dataset.n_states()).map(|s| space.expected_next(s, pi)).collect();
        for t in dataset.transitions() {
            rows.x.push(space.input(t.s, t.a));
            let next = match mode {
                NextActionMode::Expected => cached[t.s_next].clone(),
                NextActionMode::Sampled => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut a_next = pi.n_actions() - 1;
                    for a in 0..pi.n_actions() {
                        acc += pi.prob(t.s_next, a);
                        if u < acc {
                            a_next = a;
                            break;
                        }
                    }
                    space.sampled_next(t.s_next, a_next)
                }
            };
            rows.x_next.push(next);
            rows.next_live.push(if space.is_terminal(t.s_next) { 0.0 } else { 1.0 });
            rows.r.push(t.r);
        }
        Ok(rows)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Affine map `phi(u) = W u` with `W` of shape `d x (n_in + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    pub weights: DMatrix<f64>,
}

impl LinearEncoder {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() < 2 {
            return Err(dim_err("encoder needs d >= 1 and at least one input coordinate"));
        }
        Ok(Self { weights })
    }

    /// Uniform `(-1/sqrt(n_in), 1/sqrt(n_in))` initialisation; the bias
    /// column is zeroed when `bias` is false.
    pub fn init<R: Rng>(d: usize, n_in: usize, bias: bool, rng: &mut R) -> Result<Self> {
        if d == 0 || n_in == 0 {
            return Err(param_err("encoder dimensions must be positive"));
        }
        let bound = 1.0 / (n_in as f64).sqrt();
        let dist = Uniform::new(-bound, bound).expect("bound is positive");
        let mut w = DMatrix::zeros(d, n_in + 1);
        for j in 0..=n_in {
            for i in 0..d {
                w[(i, j)] = dist.sample(rng);
            }
        }
        if !bias {
            w.column_mut(n_in).fill(0.0);
        }
        Ok(Self { weights: w })
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn encode(&self, x: &SparseInput) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for &(j, v) in &x.entries {
            out.axpy(v, &self.weights.column(j), 1.0);
        }
        out
    }

    /// One feature row per input.
    pub fn features(&self, inputs: &[SparseInput]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(inputs.len(), self.dim());
        for (k, x) in inputs.iter().enumerate() {
            out.set_row(k, &self.encode(x).transpose());
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.weights.norm()
    }
}

/// Adds `c * v x^T` into `grad`, touching only the nonzero columns of `x`.
pub(crate) fn add_outer(grad: &mut DMatrix<f64>, c: f64, v: &DVector<f64>, x: &SparseInput) {
    for &(j, xj) in &x.entries {
        grad.column_mut(j).axpy(c * xj, v, 1.0);
    }
}

//! Offline transition datasets.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, validation_err, Result};
use crate::mdp::{pi_transition_matrix, stationary_distribution, Policy, TabularMdp};

pub const STATIONARY_TOL: f64 = 1e-10;
pub const STATIONARY_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// A multiset of transitions with its empirical state-action distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Transition>,
    mu: Vec<f64>,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetDocument {
    n_states: usize,
    n_actions: usize,
    seed: Option<u64>,
    transitions: Vec<Transition>,
}

impl OfflineDataset {
    /// Stores `tuples` verbatim. Rewards are checked against `mdp` when given.
    pub fn from_transitions(
        tuples: Vec<Transition>,
        n_states: usize,
        n_actions: usize,
        mdp: Option<&TabularMdp>,
    ) -> Result<Self> {
        if tuples.is_empty() {
            return Err(param_err("dataset must contain at least one transition"));
        }
        if let Some(m) = mdp {
            if m.n_states() != n_states || m.n_actions() != n_actions {
                return Err(dim_err("dataset and MDP disagree on state or action counts"));
            }
        }
        let mut counts = vec![0usize; n_states * n_actions];
        for (k, t) in tuples.iter().enumerate() {
            if t.s >= n_states || t.s_next >= n_states || t.a >= n_actions {
                return Err(dim_err(format!("transition {k} references an out-of-range id")));
            }
            if !t.r.is_finite() {
                return Err(validation_err(format!("transition {k} has a non-finite reward")));
            }
            if let Some(m) = mdp {
                let expected = m.reward(t.s, t.a);
                if t.r != expected {
                    return Err(validation_err(format!(
                        "transition {k} has reward {} but the MDP assigns {expected}",
                        t.r
                    )));
                }
                if m.transitions()[(t.s * n_actions + t.a, t.s_next)] == 0.0 {
                    return Err(validation_err(format!(
                        "transition {k} moves to a next state with zero probability"
                    )));
                }
            }
            counts[t.s * n_actions + t.a] += 1;
        }
        let m = tuples.len() as f64;
        let mu = counts.iter().map(|c| *c as f64 / m).collect();
        Ok(Self { n_states, n_actions, transitions: tuples, mu, seed: None })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Records the seed the tuples were drawn with.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Visit count of every state-action.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n_states * self.n_actions];
        for t in &self.transitions {
            c[t.s * self.n_actions + t.a] += 1;
        }
        c
    }

    /// Errors unless every state-action that `pi` can choose appears in the data.
    pub fn check_coverage(&self, pi: &Policy) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                if pi.prob(s, a) > 0.0 && self.mu[s * self.n_actions + a] == 0.0 {
                    return Err(validation_err(format!(
                        "state-action ({s}, {a}) has positive target probability but no data"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Concatenation of two datasets over the same spaces.
    pub fn concat(&self, other: &OfflineDataset) -> Result<Self> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(dim_err("datasets disagree on state or action counts"));
        }
        let mut t = self.transitions.clone();
        t.extend_from_slice(&other.transitions);
        Self::from_transitions(t, self.n_states, self.n_actions, None)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DatasetDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            seed: self.seed,
            transitions: self.transitions.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetDocument = serde_json::from_str(text)?;
        let mut out = Self::from_transitions(doc.transitions, doc.n_states, doc.n_actions, None)?;
        out.seed = doc.seed;
        Ok(out)
    }

    /// CSV with header `s,a,r,s_next`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for t in &self.transitions {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, n_states: usize, n_actions: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["s", "a", "r", "s_next"] {
            return Err(validation_err("dataset CSV header must be s,a,r,s_next"));
        }
        let tuples = r.deserialize().collect::<std::result::Result<Vec<Transition>, _>>()?;
        Self::from_transitions(tuples, n_states, n_actions, None)
    }
}

/// Builds a dataset from hand-specified tuples.
pub fn synthetic_dataset(tuples: Vec<Transition>, mdp: &TabularMdp) -> Result<OfflineDataset> {
    OfflineDataset::from_transitions(tuples, mdp.n_states(), mdp.n_actions(), Some(mdp))
}

/// Draws `size` i.i.d. transitions whose state-action follows `dist` over X.
pub fn sample_from_distribution(
    mdp: &TabularMdp,
    dist: &[f64],
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>> {
    let n_sa = mdp.n_state_actions();
    if dist.len() != n_sa {
        return Err(dim_err("sampling distribution must cover every state-action"));
    }
    let pick = WeightedIndex::new(dist).map_err(|e| validation_err(format!("sampling distribution: {e}")))?;
    let next = (0..n_sa)
        .map(|i| {
            let row: Vec<f64> = mdp.transitions().row(i).iter().copied().collect();
            WeightedIndex::new(&row).map_err(|e| validation_err(format!("transition row {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let na = mdp.n_actions();
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let i = pick.sample(rng);
        let s_next = next[i].sample(rng);
        out.push(Transition { s: i / na, a: i % na, r: mdp.rewards()[i], s_next });
    }
    Ok(out)
}

/// State-action distribution that [`sample_dataset`] draws from: the
/// stationary distribution of the behaviour chain, or uniform over X when
/// power iteration does not settle.
pub fn sampling_distribution(mdp: &TabularMdp, behavior: &Policy) -> Result<Vec<f64>> {
    let p = pi_transition_matrix(mdp, behavior)?;
    let n = p.nrows();
    Ok(stationary_distribution(&p, STATIONARY_TOL, STATIONARY_MAX_ITERS)
        .unwrap_or_else(|| vec![1.0 / n as f64; n]))
}

/// i.i.d. transitions from the behaviour chain's stationary distribution.
pub fn sample_dataset(
    mdp: &TabularMdp,
    behavior: &Policy,
    size: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    if size == 0 {
        return Err(param_err("dataset size must be at least 1"));
    }
    let dist = sampling_distribution(mdp, behavior)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples = sample_from_distribution(mdp, &dist, size, &mut rng)?;
    let mut ds = OfflineDataset::from_transitions(tuples, mdp.n_states(), mdp.n_actions(), Some(mdp))?;
    ds.seed = Some(seed);
    Ok(ds)
}

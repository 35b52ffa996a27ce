//! Divergence study on the four-state counterexample MRP.
//!
//! D1 holds on-policy transitions plus a block of transitions from the
//! state with feature `w3`, whose successor has feature `2 w3`. Each D2
//! variant replaces that block with transitions from one named state.
//! KROPE pairs one sample from D1 with one from D2.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{sample_from_distribution, synthetic_dataset, OfflineDataset, Transition};
use crate::encoder::{InputSpace, NextActionMode};
use crate::error::Result;
use crate::io::format_f64;
use crate::mdp::{counterexample_mrp, occupancy_distribution, Policy, TabularMdp};
use crate::training::{train_auxiliary, train_krope, AuxKind, TrainingConfig, TrainingData, TrainingTrace};

use super::{par_try_map, thread_pool, CounterexampleSettings, CsvTable, ExperimentConfig, RunOutput};

pub const TRACES_FILE: &str = "counterexample_traces.csv";
pub const STATUS_FILE: &str = "counterexample_status.csv";
pub const OUTCOMES_FILE: &str = "counterexample_outcomes.csv";

/// Stream id of the dataset sampler.
const STREAM_DATA: u64 = 7;

/// Named D2 variants and the state their concentrated block starts from.
pub const PAIRINGS: [(&str, usize); 4] = [("w1", 0), ("w2", 1), ("w3", 3), ("2w3", 2)];

/// State whose transitions make FQE diverge.
pub const BAD_STATE: usize = 3;

#[derive(Debug, Clone)]
pub struct CounterexampleData {
    pub mdp: TabularMdp,
    /// Native features with a zero row for the terminal state.
    pub features: DMatrix<f64>,
    pub policy: Policy,
    pub d1: OfflineDataset,
    /// In [`PAIRINGS`] order.
    pub d2: Vec<(&'static str, OfflineDataset)>,
}

/// Builds D1 and every D2 variant from one seed.
pub fn counterexample_datasets(settings: &CounterexampleSettings, seed: u64) -> Result<CounterexampleData> {
    let (mdp, phi) = counterexample_mrp(settings.mrp)?;
    let policy = Policy::uniform(mdp.n_states(), 1);
    let mut features = DMatrix::zeros(mdp.n_state_actions(), phi.ncols());
    features.rows_mut(0, phi.nrows()).copy_from(&phi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_DATA);
    let occupancy = occupancy_distribution(&mdp, &policy)?;
    let on_policy = sample_from_distribution(&mdp, &occupancy, settings.on_policy_size, &mut rng)?;
    let with_block = |state: usize, rng: &mut ChaCha8Rng| -> Result<OfflineDataset> {
        let mut point = vec![0.0; mdp.n_state_actions()];
        point[state] = 1.0;
        let mut tuples: Vec<Transition> = on_policy.clone();
        tuples.extend(sample_from_distribution(&mdp, &point, settings.concentrated_size, rng)?);
        Ok(synthetic_dataset(tuples, &mdp)?.with_seed(seed))
    };
    let d1 = with_block(BAD_STATE, &mut rng)?;
    let d2 = PAIRINGS
        .iter()
        .map(|&(name, s)| Ok((name, with_block(s, &mut rng)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CounterexampleData { mdp, features, policy, d1, d2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fqe,
    Krope,
    FqeKrope,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fqe => "fqe",
            Method::Krope => "krope",
            Method::FqeKrope => "fqe+krope",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CounterexampleRun {
    pub method: Method,
    /// D2 variant name; `None` for FQE on D1 alone.
    pub pairing: Option<&'static str>,
    pub trace: TrainingTrace,
}

impl CounterexampleRun {
    pub fn diverged(&self) -> bool {
        self.trace.diverged()
    }
}

#[derive(Debug, Clone)]
pub struct CounterexampleTrial {
    pub trial: usize,
    pub seed: u64,
    pub runs: Vec<CounterexampleRun>,
}

impl CounterexampleTrial {
    pub fn run(&self, method: Method, pairing: Option<&str>) -> Option<&CounterexampleRun> {
        self.runs.iter().find(|r| r.method == method && r.pairing == pairing)
    }

    fn diverged(&self, method: Method, pairing: Option<&str>) -> bool {
        self.run(method, pairing).is_some_and(CounterexampleRun::diverged)
    }
}

/// FQE on D1, then KROPE and FQE+KROPE for every pairing.
pub fn run_counterexample_trial(cfg: &ExperimentConfig, trial: usize) -> Result<CounterexampleTrial> {
    let seed = cfg.trial_seed(trial);
    let training = TrainingConfig { seed, ..cfg.training_config()? };
    let data = counterexample_datasets(&cfg.counterexample, seed)?;
    let space = InputSpace::native(&data.mdp, data.features.clone(), training.encoder_bias)?;
    let base = TrainingData::new(&data.mdp, &data.d1, &data.policy, space, NextActionMode::Expected, seed)?;
    let mut runs = vec![CounterexampleRun {
        method: Method::Fqe,
        pairing: None,
        trace: train_auxiliary(&base, &training, AuxKind::None)?.trace,
    }];
    for (name, d2) in &data.d2 {
        let paired = base.clone().with_pair_dataset(d2, &data.policy, NextActionMode::Expected, seed)?;
        let k = train_krope(&paired, &training)?;
        runs.push(CounterexampleRun { method: Method::Krope, pairing: Some(name), trace: k.trace });
        let fk = train_auxiliary(&paired, &training, AuxKind::Krope)?;
        runs.push(CounterexampleRun { method: Method::FqeKrope, pairing: Some(name), trace: fk.trace });
    }
    Ok(CounterexampleTrial { trial, seed, runs })
}

/// A qualitative outcome decided by majority vote over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub expected: &'static str,
    pub votes: usize,
    pub trials: usize,
}

impl Outcome {
    /// Strict majority.
    pub fn matched(&self) -> bool {
        2 * self.votes > self.trials
    }
}

fn converges(name: &str) -> bool {
    matches!(name, "w1" | "w2")
}

/// The six outcomes: FQE diverges on D1; KROPE converges for w1 and w2 and
/// diverges for w3 and 2w3; FQE+KROPE reproduces that four-way pattern.
pub fn counterexample_outcomes(trials: &[CounterexampleTrial]) -> Vec<Outcome> {
    let n = trials.len();
    let count = |f: &dyn Fn(&CounterexampleTrial) -> bool| trials.iter().filter(|t| f(t)).count();
    let mut out = vec![Outcome {
        name: "fqe D1".into(),
        expected: "diverged",
        votes: count(&|t| t.diverged(Method::Fqe, None)),
        trials: n,
    }];
    for (name, _) in PAIRINGS {
        let want_div = !converges(name);
        out.push(Outcome {
            name: format!("krope D1+D2^{name}"),
            expected: if want_div { "diverged" } else { "converged" },
            votes: count(&|t| t.diverged(Method::Krope, Some(name)) == want_div),
            trials: n,
        });
    }
    out.push(Outcome {
        name: "fqe+krope pattern".into(),
        expected: "w1,w2 converged; w3,2w3 diverged",
        votes: count(&|t| PAIRINGS.iter().all(|(p, _)| t.diverged(Method::FqeKrope, Some(p)) != converges(p))),
        trials: n,
    });
    out
}

#[derive(Debug, Clone)]
pub struct CounterexampleResult {
    pub config_hash: String,
    pub trials: Vec<CounterexampleTrial>,
}

impl CounterexampleResult {
    pub fn outcomes(&self) -> Vec<Outcome> {
        counterexample_outcomes(&self.trials)
    }

    pub fn output(&self) -> RunOutput {
        let h = &self.config_hash;
        let mut traces = CsvTable::new(&[
            "config_hash",
            "trial",
            "seed",
            "method",
            "pairing",
            "epoch",
            "loss",
            "aux_loss",
            "param_norm",
            "status",
        ]);
        let mut status = CsvTable::new(&["config_hash", "trial", "seed", "method", "pairing", "status", "epochs_run", "final_loss"]);
        for t in &self.trials {
            for r in &t.runs {
                let pairing = r.pairing.unwrap_or("none").to_string();
                for e in &r.trace.records {
                    traces.push(vec![
                        h.clone(),
                        t.trial.to_string(),
                        t.seed.to_string(),
                        r.method.as_str().into(),
                        pairing.clone(),
                        e.epoch.to_string(),
                        format_f64(e.loss),
                        format_f64(e.aux_loss),
                        format_f64(e.param_norm),
                        e.status.as_str().into(),
                    ]);
                }
                status.push(vec![
                    h.clone(),
                    t.trial.to_string(),
                    t.seed.to_string(),
                    r.method.as_str().into(),
                    pairing,
                    r.trace.status().as_str().into(),
                    r.trace.records.len().to_string(),
                    super::fmt_opt(r.trace.final_loss()),
                ]);
            }
        }
        let mut outcomes = CsvTable::new(&["config_hash", "outcome", "expected", "votes", "trials", "matched"]);
        for o in self.outcomes() {
            outcomes.push(vec![
                h.clone(),
                o.name.clone(),
                o.expected.into(),
                o.votes.to_string(),
                o.trials.to_string(),
                o.matched().to_string(),
            ]);
        }
        RunOutput {
            tables: vec![(TRACES_FILE.into(), traces), (STATUS_FILE.into(), status), (OUTCOMES_FILE.into(), outcomes)],
        }
    }
}

pub fn run_counterexample(cfg: &ExperimentConfig, jobs: usize) -> Result<CounterexampleResult> {
    cfg.validate()?;
    let pool = thread_pool(jobs)?;
    let idx: Vec<usize> = (0..cfg.trials).collect();
    let trials = par_try_map(&pool, &idx, |&t| run_counterexample_trial(cfg, t))?;
    Ok(CounterexampleResult { config_hash: cfg.hash()?, trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datasets_have_requested_composition() {
        let s = CounterexampleSettings::default();
        let data = counterexample_datasets(&s, 3).unwrap();
        assert_eq!(data.d1.len(), 7000);
        let from_bad = data.d1.transitions().iter().filter(|t| t.s == BAD_STATE).count();
        assert_eq!(from_bad, 5000);
        for ((name, d2), (pname, state)) in data.d2.iter().zip(PAIRINGS) {
            assert_eq!(*name, pname);
            assert_eq!(d2.len(), 7000);
            let on = d2.transitions()[..2000].to_vec();
            assert_eq!(on, data.d1.transitions()[..2000].to_vec());
            assert!(d2.transitions()[2000..].iter().all(|t| t.s == state));
        }
        // the absorbing chain from s0 only visits s0 and s1 on-policy
        assert!(data.d1.transitions()[..2000].iter().all(|t| t.s <= 1));
    }

    #[test]
    fn outcome_votes_use_strict_majority() {
        let o = Outcome { name: "x".into(), expected: "diverged", votes: 10, trials: 20 };
        assert!(!o.matched());
        assert!(Outcome { votes: 11, ..o }.matched());
    }
}

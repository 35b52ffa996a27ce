//! Minibatch training loops for linear encoders.
//!
//! Randomness is split into independent ChaCha streams (initialisation,
//! KROPE pairs, per-row batches) so that dropping one objective leaves the
//! others' draws untouched.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::OfflineDataset;
use crate::encoder::{InputSpace, LinearEncoder, NextActionMode, PreparedRows};
use crate::error::{param_err, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::objectives::{
    bcrl_losses, beer_penalty, dr3_penalty, fqe_loss, krope_pair_loss, BcrlHeads, FqeHead,
};

const STREAM_INIT: u64 = 0;
const STREAM_PAIRS: u64 = 1;
const STREAM_ROWS: u64 = 2;
const STREAM_SAMPLED_NEXT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Adam with decoupled weight decay.
    #[default]
    Adam,
    /// Plain gradient descent with decoupled weight decay.
    Sgd,
}

/// How KROPE forms pairs from two minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Two independent uniform minibatches zipped elementwise.
    #[default]
    Zipped,
    /// Every element of one minibatch against every element of the other.
    AllPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Minibatch steps per epoch; `None` means one pass, `ceil(|D| / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    pub aux_weight: f64,
    pub target_update_period: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub pairing: Pairing,
    pub next_action: NextActionMode,
    pub encoder_bias: bool,
    pub head_bias: bool,
    pub beer_floor: f64,
    pub bcrl_head_lr: f64,
    pub bcrl_logdet_coeff: f64,
    pub divergence_threshold: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            latent_dim: 20,
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 256,
            steps_per_epoch: None,
            aux_weight: 0.1,
            target_update_period: 1,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-2,
            pairing: Pairing::Zipped,
            next_action: NextActionMode::Expected,
            encoder_bias: true,
            head_bias: true,
            beer_floor: 0.0,
            bcrl_head_lr: 1e-4,
            bcrl_logdet_coeff: 1e-2,
            divergence_threshold: 1e12,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.bcrl_head_lr > 0.0) {
            return Err(param_err("learning rates must be positive"));
        }
        if !(0.0..=1.0).contains(&self.aux_weight) {
            return Err(param_err("aux_weight must lie in [0, 1]"));
        }
        if self.latent_dim == 0 || self.batch_size == 0 || self.target_update_period == 0 {
            return Err(param_err("latent_dim, batch_size and target_update_period must be positive"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(param_err("steps_per_epoch must be positive"));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(param_err("divergence_threshold must be positive"));
        }
        Ok(())
    }

    fn steps(&self, n_rows: usize) -> usize {
        self.steps_per_epoch.unwrap_or_else(|| n_rows.div_ceil(self.batch_size).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Ok,
    Diverged,
}

impl TrainStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainStatus::Ok => "ok",
            TrainStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub aux_loss: f64,
    pub param_norm: f64,
    pub status: TrainStatus,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn status(&self) -> TrainStatus {
        match self.records.last() {
            Some(r) => r.status,
            None => TrainStatus::Ok,
        }
    }

    pub fn diverged(&self) -> bool {
        self.status() == TrainStatus::Diverged
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// CSV with header `epoch,loss,aux_loss,param_norm,status`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "loss", "aux_loss", "param_norm", "status"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                crate::io::format_f64(r.loss),
                crate::io::format_f64(r.aux_loss),
                crate::io::format_f64(r.param_norm),
                r.status.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Everything a training loop needs besides its configuration.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub space: InputSpace,
    pub gamma: f64,
    pub r_bounds: (f64, f64),
    /// Rows for per-transition objectives and the first element of KROPE pairs.
    pub main: PreparedRows,
    /// Source of the second pair element; `None` pairs `main` with itself.
    pub pair_second: Option<PreparedRows>,
}

impl TrainingData {
    pub fn new(
        mdp: &TabularMdp,
        dataset: &OfflineDataset,
        pi: &Policy,
        space: InputSpace,
        mode: NextActionMode,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream(seed, STREAM_SAMPLED_NEXT);
        let main = PreparedRows::new(&space, dataset, pi, mode, &mut rng)?;
        Ok(Self { space, gamma: mdp.gamma(), r_bounds: mdp.reward_bounds(), main, pair_second: None })
    }

    /// One-hot inputs with a bias slot, the tabular default.
    pub fn tabular(mdp: &TabularMdp, dataset: &OfflineDataset, pi: &Policy, config: &TrainingConfig) -> Result<Self> {
        let space = InputSpace::one_hot(mdp, config.encoder_bias);
        Self::new(mdp, dataset, pi, space, config.next_action, config.seed)
    }

    /// Draws the second element of every KROPE pair from `dataset`.
    pub fn with_pair_dataset(mut self, dataset: &OfflineDataset, pi: &Policy, mode: NextActionMode, seed: u64) -> Result<Self> {
        let mut rng = stream(seed ^ 0x9e37_79b9_7f4a_7c15, STREAM_SAMPLED_NEXT);
        self.pair_second = Some(PreparedRows::new(&self.space, dataset, pi, mode, &mut rng)?);
        Ok(self)
    }

    fn second(&self) -> &PreparedRows {
        self.pair_second.as_ref().unwrap_or(&self.main)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn uniform_batch(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..n)).collect()
}

/// Per-tensor optimiser state.
#[derive(Debug, Clone)]
struct ParamOpt {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl ParamOpt {
    fn new(len: usize, lr: f64) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0, lr }
    }

    fn step(&mut self, cfg: &TrainingConfig, params: &mut [f64], grad: &[f64]) {
        let lr = self.lr;
        let decay = 1.0 - lr * cfg.weight_decay;
        match cfg.optimizer {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p = *p * decay - lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - cfg.beta1.powi(self.t);
                let bc2 = 1.0 - cfg.beta2.powi(self.t);
                for k in 0..params.len() {
                    let g = grad[k];
                    self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
                    self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
                    let m_hat = self.m[k] / bc1;
                    let v_hat = self.v[k] / bc2;
                    params[k] = params[k] * decay - lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
                }
            }
        }
    }
}

/// Auxiliary objective mixed with FQE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxKind {
    None,
    Krope,
    Dr3,
    Beer,
}

impl std::str::FromStr for AuxKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AuxKind::None),
            "krope" => Ok(AuxKind::Krope),
            "dr3" => Ok(AuxKind::Dr3),
            "beer" => Ok(AuxKind::Beer),
            other => Err(param_err(format!("unknown auxiliary objective '{other}'"))),
        }
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub encoder: LinearEncoder,
    pub head: Option<FqeHead>,
    pub bcrl_heads: Option<BcrlHeads>,
    pub trace: TrainingTrace,
}

impl TrainedModel {
    pub fn diverged(&self) -> bool {
        self.trace.diverged()
    }
}

/// Read-only view handed to per-epoch callbacks.
pub struct Checkpoint<'a> {
    pub epoch: usize,
    pub encoder: &'a LinearEncoder,
    pub head: Option<&'a FqeHead>,
}

fn init_encoder(data: &TrainingData, cfg: &TrainingConfig) -> Result<(LinearEncoder, ChaCha8Rng)> {
    let mut rng = stream(cfg.seed, STREAM_INIT);
    let enc = LinearEncoder::init(cfg.latent_dim, data.space.n_in(), data.space.has_bias(), &mut rng)?;
    Ok((enc, rng))
}

fn init_model(data: &TrainingData, cfg: &TrainingConfig) -> Result<(LinearEncoder, FqeHead)> {
    let (enc, mut rng) = init_encoder(data, cfg)?;
    let bound = 1.0 / (cfg.latent_dim as f64).sqrt();
    let w = DVector::from_fn(cfg.latent_dim, |_, _| rng.random_range(-bound..bound));
    let b = rng.random_range(-bound..bound);
    let head = FqeHead { w, b: if cfg.head_bias { b } else { 0.0 }, use_bias: cfg.head_bias };
    Ok((enc, head))
}

fn krope_batch(
    data: &TrainingData,
    cfg: &TrainingConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let n1 = data.main.len();
    let n2 = data.second().len();
    let b1 = uniform_batch(rng, n1, cfg.batch_size);
    let b2 = uniform_batch(rng, n2, cfg.batch_size);
    match cfg.pairing {
        Pairing::Zipped => b1.into_iter().zip(b2).collect(),
        Pairing::AllPairs => b1.iter().flat_map(|&i| b2.iter().map(move |&j| (i, j))).collect(),
    }
}

fn exceeds(v: f64, threshold: f64) -> bool {
    !v.is_finite() || v > threshold
}

/// KROPE-only training; equivalent to [`train_auxiliary`] with `AuxKind::Krope`
/// and `aux_weight = 1`.
pub fn train_krope(data: &TrainingData, config: &TrainingConfig) -> Result<TrainedModel> {
    let mut cfg = config.clone();
    cfg.aux_weight = 1.0;
    train_auxiliary_with(data, &cfg, AuxKind::Krope, |_| {})
}

/// `aux_weight * aux + (1 - aux_weight) * fqe`. With `AuxKind::None` the
/// weight is ignored and plain FQE runs.
pub fn train_auxiliary(data: &TrainingData, config: &TrainingConfig, aux: AuxKind) -> Result<TrainedModel> {
    train_auxiliary_with(data, config, aux, |_| {})
}

/// As [`train_auxiliary`], calling `on_epoch` after every completed epoch.
pub fn train_auxiliary_with<F>(
    data: &TrainingData,
    config: &TrainingConfig,
    aux: AuxKind,
    mut on_epoch: F,
) -> Result<TrainedModel>
where
    F: FnMut(&Checkpoint<'_>),
{
    config.validate()?;
    if data.main.is_empty() || data.second().is_empty() {
        return Err(param_err("training data must not be empty"));
    }
    let alpha = if aux == AuxKind::None { 0.0 } else { config.aux_weight };
    let use_aux = alpha > 0.0;
    let use_fqe = alpha < 1.0;

    let (mut enc, mut head) = init_model(data, config)?;
    let mut target_enc = enc.clone();
    let mut target_head = head.clone();
    let mut opt_enc = ParamOpt::new(enc.weights.len(), config.learning_rate);
    let mut opt_w = ParamOpt::new(head.w.len(), config.learning_rate);
    let mut opt_b = ParamOpt::new(1, config.learning_rate);
    let mut rng_pairs = stream(config.seed, STREAM_PAIRS);
    let mut rng_rows = stream(config.seed, STREAM_ROWS);
    let steps = config.steps(data.main.len());
    let n = data.main.len();
    let mut trace = TrainingTrace::default();

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut aux_sum = 0.0;
        let mut diverged = false;
        for _ in 0..steps {
            let mut g_enc = DMatrix::zeros(enc.dim(), enc.width());
            let mut aux_loss = 0.0;
            let mut fqe_val = 0.0;
            let mut head_grads = None;
            let rows_batch = if use_fqe || matches!(aux, AuxKind::Dr3 | AuxKind::Beer) {
                Some(uniform_batch(&mut rng_rows, n, config.batch_size))
            } else {
                None
            };
            if use_aux {
                let (l, g) = match aux {
                    AuxKind::Krope => {
                        let pairs = krope_batch(data, config, &mut rng_pairs);
                        krope_pair_loss(&enc, &target_enc, &data.main, data.second(), &pairs, data.gamma, data.r_bounds)?
                    }
                    AuxKind::Dr3 => dr3_penalty(&enc, &data.main, rows_batch.as_deref().expect("drawn above"))?,
                    AuxKind::Beer => {
                        beer_penalty(&enc, &data.main, rows_batch.as_deref().expect("drawn above"), config.beer_floor)?
                    }
                    AuxKind::None => unreachable!("alpha is zero without an auxiliary objective"),
                };
                aux_loss = l;
                if alpha == 1.0 {
                    g_enc = g;
                } else {
                    g_enc += &g * alpha;
                }
            }
            if use_fqe {
                let batch = rows_batch.as_deref().expect("drawn above");
                let (l, g) = fqe_loss(&enc, &head, &target_enc, &target_head, &data.main, batch, data.gamma)?;
                fqe_val = l;
                if alpha == 0.0 {
                    g_enc = g.encoder;
                } else {
                    g_enc += &g.encoder * (1.0 - alpha);
                }
                head_grads = Some((g.head_w * (1.0 - alpha), g.head_b * (1.0 - alpha)));
            }
            let loss = if !use_fqe {
                aux_loss
            } else if !use_aux {
                fqe_val
            } else {
                alpha * aux_loss + (1.0 - alpha) * fqe_val
            };
            loss_sum += loss;
            aux_sum += aux_loss;
            if exceeds(loss, config.divergence_threshold) || g_enc.iter().any(|v| !v.is_finite()) {
                diverged = true;
                break;
            }
            opt_enc.step(config, enc.weights.as_mut_slice(), g_enc.as_slice());
            if let Some((gw, gb)) = head_grads {
                opt_w.step(config, head.w.as_mut_slice(), gw.as_slice());
                if head.use_bias {
                    let mut b = [head.b];
                    opt_b.step(config, &mut b, &[gb]);
                    head.b = b[0];
                }
            }
            if exceeds(param_norm(&enc, use_fqe.then_some(&head)), config.divergence_threshold) {
                diverged = true;
                break;
            }
        }
        let norm = param_norm(&enc, use_fqe.then_some(&head));
        let status = if diverged { TrainStatus::Diverged } else { TrainStatus::Ok };
        trace.records.push(EpochRecord {
            epoch,
            loss: loss_sum / steps as f64,
            aux_loss: aux_sum / steps as f64,
            param_norm: norm,
            status,
        });
        if diverged {
            break;
        }
        if epoch % config.target_update_period == 0 {
            target_enc = enc.clone();
            target_head = head.clone();
        }
        on_epoch(&Checkpoint { epoch, encoder: &enc, head: use_fqe.then_some(&head) });
    }
    Ok(TrainedModel { encoder: enc, head: use_fqe.then_some(head), bcrl_heads: None, trace })
}

fn param_norm(enc: &LinearEncoder, head: Option<&FqeHead>) -> f64 {
    let mut s = enc.weights.norm_squared();
    if let Some(h) = head {
        s += h.norm_squared();
    }
    s.sqrt()
}

/// BCRL baseline: reward and self-prediction heads trained at
/// `bcrl_head_lr`, plus the log-determinant bonus when `explore` is set.
pub fn train_bcrl(data: &TrainingData, config: &TrainingConfig, explore: bool) -> Result<TrainedModel> {
    train_bcrl_with(data, config, explore, |_| {})
}

/// As [`train_bcrl`], calling `on_epoch` after every completed epoch.
pub fn train_bcrl_with<F>(data: &TrainingData, config: &TrainingConfig, explore: bool, mut on_epoch: F) -> Result<TrainedModel>
where
    F: FnMut(&Checkpoint<'_>),
{
    config.validate()?;
    if data.main.is_empty() {
        return Err(param_err("training data must not be empty"));
    }
    let (mut enc, mut rng_init) = init_encoder(data, config)?;
    let d = enc.dim();
    let bound = 1.0 / (d as f64).sqrt();
    let mut heads = BcrlHeads {
        m: DMatrix::from_fn(d, d, |_, _| rng_init.random_range(-bound..bound)),
        rho: DVector::from_fn(d, |_, _| rng_init.random_range(-bound..bound)),
    };
    let mut target = enc.clone();
    let mut opt_enc = ParamOpt::new(enc.weights.len(), config.learning_rate);
    let mut opt_m = ParamOpt::new(d * d, config.bcrl_head_lr);
    let mut opt_rho = ParamOpt::new(d, config.bcrl_head_lr);
    let mut rng_rows = stream(config.seed, STREAM_ROWS);
    let coeff = if explore { config.bcrl_logdet_coeff } else { 0.0 };
    let n = data.main.len();
    let steps = config.steps(n);
    let mut trace = TrainingTrace::default();
    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut aux_sum = 0.0;
        let mut diverged = false;
        for _ in 0..steps {
            let batch = uniform_batch(&mut rng_rows, n, config.batch_size);
            let l = bcrl_losses(&enc, &target, &heads, &data.main, &batch, data.gamma, coeff);
            let l = match l {
                Ok(l) => l,
                Err(_) => {
                    diverged = true;
                    break;
                }
            };
            let total = l.total();
            loss_sum += total;
            aux_sum += l.exploration;
            if exceeds(total.abs(), config.divergence_threshold) {
                diverged = true;
                break;
            }
            opt_enc.step(config, enc.weights.as_mut_slice(), l.grad_encoder.as_slice());
            opt_m.step(config, heads.m.as_mut_slice(), l.grad_m.as_slice());
            opt_rho.step(config, heads.rho.as_mut_slice(), l.grad_rho.as_slice());
            if exceeds(enc.norm(), config.divergence_threshold) {
                diverged = true;
                break;
            }
        }
        trace.records.push(EpochRecord {
            epoch,
            loss: loss_sum / steps as f64,
            aux_loss: aux_sum / steps as f64,
            param_norm: enc.norm(),
            status: if diverged { TrainStatus::Diverged } else { TrainStatus::Ok },
        });
        if diverged {
            break;
        }
        if epoch % config.target_update_period == 0 {
            target = enc.clone();
        }
        on_epoch(&Checkpoint { epoch, encoder: &enc, head: None });
    }
    Ok(TrainedModel { encoder: enc, head: None, bcrl_heads: Some(heads), trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_dataset;
    use crate::mdp::{generate_garnet, GarnetParams};

    fn small_setup(gamma: f64) -> (TabularMdp, OfflineDataset, Policy) {
        let mdp = generate_garnet(GarnetParams { gamma, ..Default::default() }, 4).unwrap();
        let pi = Policy::uniform(8, 5);
        let ds = sample_dataset(&mdp, &pi, 400, 4).unwrap();
        (mdp, ds, pi)
    }

    fn quick_cfg() -> TrainingConfig {
        TrainingConfig { latent_dim: 6, epochs: 5, batch_size: 32, ..Default::default() }
    }

    #[test]
    fn alpha_endpoints_reproduce_single_objectives() {
        let (mdp, ds, pi) = small_setup(0.9);
        let cfg = quick_cfg();
        let data = TrainingData::tabular(&mdp, &ds, &pi, &cfg).unwrap();
        let plain = train_auxiliary(&data, &cfg, AuxKind::None).unwrap();
        let zero = train_auxiliary(&data, &TrainingConfig { aux_weight: 0.0, ..cfg.clone() }, AuxKind::Krope).unwrap();
        assert_eq!(plain.encoder, zero.encoder);
        assert_eq!(plain.trace, zero.trace);
        let krope = train_krope(&data, &cfg).unwrap();
        let one = train_auxiliary(&data, &TrainingConfig { aux_weight: 1.0, ..cfg }, AuxKind::Krope).unwrap();
        assert_eq!(krope.encoder, one.encoder);
        assert_eq!(krope.trace, one.trace);
    }

    #[test]
    fn training_is_deterministic() {
        let (mdp, ds, pi) = small_setup(0.9);
        let cfg = quick_cfg();
        let data = TrainingData::tabular(&mdp, &ds, &pi, &cfg).unwrap();
        for aux in [AuxKind::Krope, AuxKind::Dr3, AuxKind::Beer] {
            let a = train_auxiliary(&data, &cfg, aux).unwrap();
            let b = train_auxiliary(&data, &cfg, aux).unwrap();
            assert_eq!(a.encoder, b.encoder);
        }
        let a = train_bcrl(&data, &cfg, true).unwrap();
        let b = train_bcrl(&data, &cfg, true).unwrap();
        assert_eq!(a.encoder, b.encoder);
    }

    #[test]
    fn unknown_aux_kind_is_rejected() {
        assert!("bogus".parse::<AuxKind>().is_err());
        assert_eq!("beer".parse::<AuxKind>().unwrap(), AuxKind::Beer);
    }

    #[test]
    fn trace_csv_header() {
        let (mdp, ds, pi) = small_setup(0.5);
        let cfg = TrainingConfig { epochs: 2, ..quick_cfg() };
        let data = TrainingData::tabular(&mdp, &ds, &pi, &cfg).unwrap();
        let m = train_krope(&data, &cfg).unwrap();
        let mut buf = Vec::new();
        m.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,loss,aux_loss,param_norm,status\n1,"));
        assert_eq!(text.lines().count(), 3);
    }
}

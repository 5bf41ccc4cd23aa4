//! Unsupervised training of a network through the channel model and the
//! sum-rate or energy-efficiency loss.

mod adam;

pub use adam::{Adam, BETA1, BETA2, EPS};

use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::channel::batch::BatchGeometry;
use crate::error::{Error, Result};
use crate::gnn::{Init, Mode, Network, ParamStore};
use crate::objective::{self, Objective};
use crate::scenario::{Scenario, SystemParams};

/// Fills every parameter according to its [`Init`] from one seeded stream.
pub fn init_params(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut store.params {
        match p.init {
            Init::Zeros => p.value.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0)),
            Init::Ones => p.value.iter_mut().for_each(|z| *z = C64::new(1.0, 0.0)),
            Init::Kaiming { fan_in } => {
                let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive std");
                for z in &mut p.value {
                    let re = dist.sample(&mut rng);
                    *z = C64::new(re, dist.sample(&mut rng));
                }
            }
            Init::KaimingReal { fan_in } => {
                let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                for z in &mut p.value {
                    *z = C64::new(dist.sample(&mut rng), 0.0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Epoch indices (0-based) at which the learning rate is multiplied by
    /// `decay`.
    pub milestones: Vec<usize>,
    pub decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Global gradient-norm cap.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::SumRate,
            batch_size: 64,
            epochs: 100,
            lr: 1e-3,
            milestones: vec![50, 80],
            decay: 0.1,
            patience: 10,
            seed: 0,
            split: [0.8, 0.1, 0.1],
            clip_norm: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.decay > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::InvalidParams("learning rate, decay and clip norm must be positive".into()));
        }
        if self.split.iter().any(|&s| !(s >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("split {:?} must be non-negative and sum to 1", self.split)));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * self.decay.powi(drops as i32)
    }
}

/// Consecutive train, validation and test slices.
pub fn split_dataset<'a>(data: &'a [Scenario], split: [f64; 3]) -> (&'a [Scenario], &'a [Scenario], &'a [Scenario]) {
    let n = data.len();
    let n_train = ((n as f64) * split[0]).floor() as usize;
    let n_val = (((n as f64) * split[1]).floor() as usize).min(n - n_train);
    (&data[..n_train], &data[n_train..n_train + n_val], &data[n_train + n_val..])
}

/// Per-sample results of a forward pass over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub sum_rates: Vec<f64>,
    pub powers: Vec<f64>,
    pub loss: f64,
}

impl Evaluation {
    pub fn mean_sr(&self) -> f64 {
        mean(&self.sum_rates)
    }

    pub fn mean_ee(&self, circuit_power: f64) -> f64 {
        mean(&self.sum_rates.iter().zip(&self.powers).map(|(&r, &p)| objective::ee_from_parts(r, p, circuit_power)).collect::<Vec<_>>())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Forward pass over `data` in consecutive chunks of `batch_size`, without
/// touching the model. In `Train` mode each chunk normalizes with its own
/// statistics. The network's system configuration is applied to `params`.
pub fn evaluate(
    net: &Network,
    data: &[Scenario],
    params: &SystemParams,
    objective: Objective,
    mode: Mode,
    batch_size: usize,
) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::InvalidParams("evaluation over an empty dataset".into()));
    }
    let params = &net.system().apply(params);
    let mut sum_rates = Vec::with_capacity(data.len());
    let mut powers = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch_size.max(1)) {
        let tape = Tape::new();
        let bound = net.store().bind(&tape, false);
        let refs: Vec<&Scenario> = chunk.iter().collect();
        let geo = BatchGeometry::new(&refs, params)?;
        let out = net.forward(&tape, &bound, &geo, params, mode)?;
        sum_rates.extend(objective::batch::sum_rate(out.channels, out.beams, params.noise_power).real_values());
        powers.extend(objective::batch::power(out.beams).real_values());
    }
    let pairs: Vec<(f64, f64)> = sum_rates.iter().copied().zip(powers.iter().copied()).collect();
    let loss = objective::loss(objective, &pairs, params.circuit_power);
    Ok(Evaluation { sum_rates, powers, loss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    #[serde(rename = "val_SR")]
    pub val_sr: f64,
    #[serde(rename = "val_EE")]
    pub val_ee: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    /// Training-set loss before the first update.
    pub initial_train_loss: f64,
    /// Training-set loss of the returned parameters, evaluated the same way.
    pub final_train_loss: f64,
    pub stopped_early: bool,
}

pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in history {
        w.serialize(r)?;
    }
    if history.is_empty() {
        w.write_record(["epoch", "train_loss", "val_loss", "val_SR", "val_EE", "lr"])?;
    }
    w.flush()?;
    Ok(())
}

fn snapshot(net: &Network) -> (Vec<Vec<C64>>, Vec<crate::gnn::BnState>) {
    (net.store().params.iter().map(|p| p.value.clone()).collect(), net.bn_states())
}

fn restore(net: &mut Network, snap: &(Vec<Vec<C64>>, Vec<crate::gnn::BnState>)) {
    for (p, v) in net.store_mut().params.iter_mut().zip(&snap.0) {
        p.value.clone_from(v);
    }
    net.set_bn_states(&snap.1).expect("snapshot of the same model");
}

/// One optimizer step on a minibatch. Returns the minibatch loss.
fn train_step(
    net: &mut Network,
    batch: &[&Scenario],
    params: &SystemParams,
    cfg: &TrainConfig,
    adam: &mut Adam,
    lr: f64,
) -> std::result::Result<f64, String> {
    let tape = Tape::new();
    let bound = net.store().bind(&tape, true);
    let geo = BatchGeometry::new(batch, params).map_err(|e| e.to_string())?;
    let out = net.forward(&tape, &bound, &geo, params, Mode::Train).map_err(|e| e.to_string())?;
    let sr = objective::batch::sum_rate(out.channels, out.beams, params.noise_power);
    let pw = objective::batch::power(out.beams);
    let loss = objective::batch::loss(cfg.objective, sr, pw, params.circuit_power);
    let value = loss.scalar();
    if !value.is_finite() {
        return Err(format!("loss is {value}"));
    }
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;
    let mut g: Vec<Vec<C64>> = bound.vars.iter().map(|&v| grads.wrt_or_zero(v)).collect();
    for (gi, p) in g.iter_mut().zip(&net.store().params) {
        if p.real {
            gi.iter_mut().for_each(|z| z.im = 0.0);
        }
    }
    let norm = g.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(format!("gradient norm is {norm}"));
    }
    if norm > cfg.clip_norm {
        let s = cfg.clip_norm / norm;
        g.iter_mut().flatten().for_each(|z| *z *= s);
    }
    adam.step(net.store_mut(), &g, lr);
    net.apply_bn(&out.bn);
    Ok(value)
}

/// Trains `net` in place on the training split of `data` and keeps the
/// parameters with the lowest validation loss.
///
/// On a non-finite loss or gradient the best parameters seen so far are put
/// back and [`Error::Diverged`] is returned. As in [`evaluate`], `params` are
/// the full system parameters.
pub fn train(net: &mut Network, data: &[Scenario], params: &SystemParams, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let params = &net.system().apply(params);
    if data.is_empty() {
        return Err(Error::InvalidParams("empty dataset".into()));
    }
    let (train_set, val_set, _) = split_dataset(data, cfg.split);
    if train_set.is_empty() {
        return Err(Error::InvalidParams("training split is empty".into()));
    }
    let val_set = if val_set.is_empty() { train_set } else { val_set };
    let bs = cfg.batch_size;
    let train_loss = |net: &Network| evaluate(net, train_set, params, cfg.objective, Mode::Train, bs).map(|e| e.loss);
    let initial_train_loss = train_loss(net)?;

    let mut adam = Adam::new(net.store());
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, _)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        for (step, idx) in order.chunks(bs).enumerate() {
            let batch: Vec<&Scenario> = idx.iter().map(|&i| &train_set[i]).collect();
            if let Err(reason) = train_step(net, &batch, params, cfg, &mut adam, lr) {
                if let Some((_, _, snap)) = &best {
                    restore(net, snap);
                }
                return Err(Error::Diverged { epoch: epoch + 1, step, reason });
            }
        }
        let tl = train_loss(net)?;
        let val = evaluate(net, val_set, params, cfg.objective, Mode::Eval, bs)?;
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: tl,
            val_loss: val.loss,
            val_sr: val.mean_sr(),
            val_ee: val.mean_ee(params.circuit_power),
            lr,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val.loss < *b) {
            best = Some((val.loss, epoch + 1, snapshot(net)));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let best_epoch = best.as_ref().map(|b| b.1);
    if let Some((_, _, snap)) = &best {
        restore(net, snap);
    }
    let final_train_loss = if best.is_some() { train_loss(net)? } else { initial_train_loss };
    Ok(TrainReport { history, best_epoch, initial_train_loss, final_train_loss, stopped_early })
}

/// Writes a training summary line per epoch to `out`.
pub fn print_history(history: &[EpochRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in history {
        writeln!(
            out,
            "epoch {:>3}  train {:.6}  val {:.6}  SR {:.4}  EE {:.4}  lr {:.1e}",
            r.epoch, r.train_loss, r.val_loss, r.val_sr, r.val_ee, r.lr
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;

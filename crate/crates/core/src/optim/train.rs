use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use super::{smoothed_ce, AdamW, AdamWConfig, LossConfig, ScheduleConfig};
use crate::data::{batch_plan, Batch, Dataset};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Forward, Model};
use crate::tensor::{seeded_rng, Element, Mode, Rng, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub max_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Emit a log line every this many steps (0 disables logging).
    pub log_every: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 108,
            max_steps: 100_000,
            batch_size: 32,
            seed: 1,
            log_every: 100,
            clip_norm: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::config("clip_norm", "must be non-negative"));
        }
        Ok(())
    }
}

/// Position in the training run; everything needed to resume exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainState {
    /// Completed optimizer updates.
    pub step: u64,
    pub epoch: u64,
    /// Batches of `epoch` already consumed.
    pub batch_in_epoch: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: u64,
    pub steps: u64,
    pub mean_loss: f64,
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    pub tokens: usize,
    /// False when the call stopped before the end of the epoch.
    pub completed: bool,
}

/// Label-smoothed loss of `batch` under teacher forcing.
pub fn batch_loss<T: Element>(
    fwd: &Forward<'_, T>,
    batch: &Batch,
    loss: &LossConfig,
    rng: &mut Rng,
) -> Result<(Var, usize)> {
    let feats: Tensor<T> = batch.features.cast();
    let memory = fwd.encode(&feats, &batch.src_lengths, rng)?;
    let logp = fwd.decode(&batch.decoder_input(), batch.size(), Some(&memory), rng)?;
    smoothed_ce(fwd.tape, logp, &batch.decoder_target(), loss)
}

/// Model, optimizer and schedule, advanced one batch at a time.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model<f32>,
    pub optim: AdamW<f32>,
    pub schedule: ScheduleConfig,
    pub loss: LossConfig,
    pub config: TrainConfig,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(
        model: Model<f32>,
        optim: AdamWConfig,
        schedule: ScheduleConfig,
        loss: LossConfig,
        config: TrainConfig,
    ) -> Result<Self> {
        schedule.validate()?;
        loss.validate()?;
        config.validate()?;
        Ok(Trainer {
            model,
            optim: AdamW::new(optim),
            schedule,
            loss,
            config,
            state: TrainState::default(),
        })
    }

    pub fn done(&self) -> bool {
        self.state.step >= self.config.max_steps || self.state.epoch >= self.config.epochs
    }

    /// One forward/backward/update on `batch`; returns the loss before the
    /// update. `batch_index` only labels errors.
    pub fn step(&mut self, batch: &Batch, batch_index: usize) -> Result<f64> {
        let lr = self.schedule.lr_at(self.state.step);
        let mut rng = seeded_rng(self.config.seed, self.state.step);
        let (loss, grads) = {
            let tape = Tape::new();
            let fwd = self.model.bind(&tape, true, Mode::Train);
            let (loss_var, _) = batch_loss(&fwd, batch, &self.loss, &mut rng)?;
            let loss = tape.value(loss_var).item() as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    batch: batch_index,
                    step: self.state.step,
                });
            }
            let mut g = tape.backward(loss_var)?;
            let mut grads = Vec::new();
            fwd.vars.for_each(|_, &v| grads.push(g.take(v)));
            (loss, grads)
        };

        let mut names = Vec::new();
        let mut shapes = Vec::new();
        self.model.params.for_each(|n, t| {
            names.push(n.to_string());
            shapes.push(t.shape().to_vec());
        });
        let mut grads: Vec<Tensor<f32>> = grads
            .into_iter()
            .zip(&shapes)
            .map(|(g, s)| g.unwrap_or_else(|| Tensor::zeros(s.clone())))
            .collect();
        if self.config.clip_norm > 0.0 {
            clip_global_norm(&mut grads, self.config.clip_norm);
        }
        let view: Vec<(&str, &[usize], &Tensor<f32>)> = names
            .iter()
            .zip(&shapes)
            .zip(&grads)
            .map(|((n, s), g)| (n.as_str(), s.as_slice(), g))
            .collect();
        self.optim.begin_step(&view)?;
        let mut i = 0;
        let optim = &mut self.optim;
        self.model.params.for_each_mut(|_, p| {
            optim.update(i, Arc::make_mut(p), &grads[i], lr);
            i += 1;
        });
        self.state.step += 1;
        Ok(loss)
    }

    /// Trains on the rest of the current epoch, stopping early once the
    /// global step reaches `until_step` or the step cap. `log` receives
    /// tab-separated `step epoch loss lr tokens_per_sec` lines.
    pub fn train_epoch(&mut self, data: &Dataset, until_step: u64, log: &mut dyn FnMut(&str)) -> Result<EpochStats> {
        let plan = batch_plan(&data.source_lengths(), self.config.batch_size, self.config.seed, self.state.epoch);
        let stop = until_step.min(self.config.max_steps);
        let mut stats = EpochStats {
            epoch: self.state.epoch,
            ..EpochStats::default()
        };
        let mut window_tokens = 0usize;
        let mut window_start = Instant::now();
        while self.state.batch_in_epoch < plan.len() {
            if self.state.step >= stop {
                break;
            }
            let bi = self.state.batch_in_epoch;
            let batch = data.batch(&plan[bi])?;
            let lr = self.schedule.lr_at(self.state.step);
            let loss = self.step(&batch, bi)?;
            self.state.batch_in_epoch += 1;
            stats.losses.push(loss);
            stats.lrs.push(lr);
            stats.tokens += batch.target_tokens();
            window_tokens += batch.target_tokens();
            if self.config.log_every > 0 && self.state.step.is_multiple_of(self.config.log_every) {
                let secs = window_start.elapsed().as_secs_f64().max(1e-9);
                log(&format!(
                    "{}\t{}\t{:.6}\t{:.6e}\t{:.1}",
                    self.state.step,
                    self.state.epoch,
                    loss,
                    lr,
                    window_tokens as f64 / secs
                ));
                window_tokens = 0;
                window_start = Instant::now();
            }
        }
        stats.steps = stats.losses.len() as u64;
        stats.mean_loss = if stats.losses.is_empty() {
            0.0
        } else {
            stats.losses.iter().sum::<f64>() / stats.losses.len() as f64
        };
        if self.state.batch_in_epoch >= plan.len() {
            stats.completed = true;
            self.state.epoch += 1;
            self.state.batch_in_epoch = 0;
        }
        Ok(stats)
    }

    /// Model weights, optimizer moments and run position.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        let s = &self.state;
        ck.meta.push(("train.step".into(), s.step.to_string()));
        ck.meta.push(("train.epoch".into(), s.epoch.to_string()));
        ck.meta.push(("train.batch_in_epoch".into(), s.batch_in_epoch.to_string()));
        ck.meta.push(("train.seed".into(), self.config.seed.to_string()));
        ck.meta.push(("optim.step".into(), self.optim.state.step.to_string()));
        let names = self.model.params.names();
        for (name, (m, v)) in names.iter().zip(self.optim.state.m.iter().zip(&self.optim.state.v)) {
            ck.tensors.push((format!("optim.m.{name}"), m.clone()));
            ck.tensors.push((format!("optim.v.{name}"), v.clone()));
        }
        ck
    }

    /// Restores a run saved by [`Trainer::to_checkpoint`]. Keys that are not
    /// model configuration are read here and skipped by the model loader.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        optim: AdamWConfig,
        schedule: ScheduleConfig,
        loss: LossConfig,
        config: TrainConfig,
    ) -> Result<Self> {
        let model_meta: Vec<(String, String)> = ckpt
            .meta
            .iter()
            .filter(|(k, _)| !k.starts_with("train.") && !k.starts_with("optim."))
            .cloned()
            .collect();
        let model = Model::from_checkpoint(&Checkpoint {
            meta: model_meta,
            tensors: ckpt.tensors.clone(),
        })?;
        let mut t = Trainer::new(model, optim, schedule, loss, config)?;
        let num = |key: &str| -> Result<u64> {
            match ckpt.meta(key) {
                None => Ok(0),
                Some(v) => v.parse().map_err(|_| Error::config(key, format!("`{v}` is not a count"))),
            }
        };
        t.state = TrainState {
            step: num("train.step")?,
            epoch: num("train.epoch")?,
            batch_in_epoch: num("train.batch_in_epoch")? as usize,
        };
        if let Some(seed) = ckpt.meta("train.seed") {
            if seed != t.config.seed.to_string() {
                return Err(Error::config(
                    "seed",
                    format!("checkpoint was trained with seed {seed}, run uses {}", t.config.seed),
                ));
            }
        }
        let by_name: HashMap<&str, &Tensor<f32>> = ckpt.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let optim_step = num("optim.step")?;
        if optim_step > 0 {
            let mut m = Vec::new();
            let mut v = Vec::new();
            for name in t.model.params.names() {
                let (Some(mi), Some(vi)) = (
                    by_name.get(format!("optim.m.{name}").as_str()),
                    by_name.get(format!("optim.v.{name}").as_str()),
                ) else {
                    return Err(Error::InvalidArgument(format!("checkpoint lacks optimizer state for `{name}`")));
                };
                m.push((*mi).clone());
                v.push((*vi).clone());
            }
            t.optim.state.m = m;
            t.optim.state.v = v;
        }
        t.optim.state.step = optim_step;
        Ok(t)
    }
}

fn clip_global_norm(grads: &mut [Tensor<f32>], max_norm: f64) {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&x| (x as f64) * (x as f64))
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        for g in grads {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
}

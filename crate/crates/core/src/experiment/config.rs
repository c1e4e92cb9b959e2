use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decode::DecodeConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::optim::{AdamWConfig, LossConfig, ScheduleConfig, TrainConfig};

/// Everything a training or evaluation run needs. Defaults are the
/// baseline recipe; config files and overrides replace individual fields.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub optim: AdamWConfig,
    pub schedule: ScheduleConfig,
    pub loss: LossConfig,
    pub decode: DecodeConfig,
    /// Checkpoint and validation interval in steps.
    pub checkpoint_every: u64,
    pub train_manifest: Option<PathBuf>,
    pub valid_manifest: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            optim: AdamWConfig::default(),
            schedule: ScheduleConfig::default(),
            loss: LossConfig::default(),
            decode: DecodeConfig::default(),
            checkpoint_every: 2000,
            train_manifest: None,
            valid_manifest: None,
            vocab: None,
            exclusions: None,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn path_or_none(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl RunConfig {
    /// Applies one `key = value` setting; unknown keys are an error naming
    /// the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if self.model.set(key, value)? {
            return Ok(());
        }
        let v = value.trim();
        match key {
            "epochs" => self.train.epochs = parse(key, v)?,
            "max_steps" => self.train.max_steps = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "log_every" => self.train.log_every = parse(key, v)?,
            "clip_norm" => self.train.clip_norm = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "scheduler" => self.schedule.kind = v.parse()?,
            "lr" => self.schedule.lr_max = parse(key, v)?,
            "lr_min" => self.schedule.lr_min = parse(key, v)?,
            "warmup_steps" => self.schedule.warmup_steps = parse(key, v)?,
            "restart_period" => self.schedule.period = parse(key, v)?,
            "warmup_init_lr" => self.schedule.warmup_init_lr = parse(key, v)?,
            "adam_beta1" => self.optim.beta1 = parse(key, v)?,
            "adam_beta2" => self.optim.beta2 = parse(key, v)?,
            "adam_eps" => self.optim.eps = parse(key, v)?,
            "weight_decay" => self.optim.weight_decay = parse(key, v)?,
            "label_smoothing" => self.loss.epsilon = parse(key, v)?,
            "beam" => self.decode.beam_size = parse(key, v)?,
            "max_len" => {
                self.decode.max_len = match v {
                    "auto" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "length_penalty" => self.decode.length_penalty = parse(key, v)?,
            "feature_stride" => self.decode.feature_stride = parse(key, v)?,
            "train_manifest" => self.train_manifest = path_or_none(v),
            "valid_manifest" => self.valid_manifest = path_or_none(v),
            "vocab" => self.vocab = path_or_none(v),
            "exclusions" => self.exclusions = path_or_none(v),
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Every field as `(key, value)`, in a stable order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = self.model.to_pairs();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("epochs", self.train.epochs.to_string());
        push("max_steps", self.train.max_steps.to_string());
        push("batch_size", self.train.batch_size.to_string());
        push("seed", self.train.seed.to_string());
        push("log_every", self.train.log_every.to_string());
        push("clip_norm", self.train.clip_norm.to_string());
        push("checkpoint_every", self.checkpoint_every.to_string());
        push("scheduler", self.schedule.kind.to_string());
        push("lr", self.schedule.lr_max.to_string());
        push("lr_min", self.schedule.lr_min.to_string());
        push("warmup_steps", self.schedule.warmup_steps.to_string());
        push("restart_period", self.schedule.period.to_string());
        push("warmup_init_lr", self.schedule.warmup_init_lr.to_string());
        push("adam_beta1", self.optim.beta1.to_string());
        push("adam_beta2", self.optim.beta2.to_string());
        push("adam_eps", self.optim.eps.to_string());
        push("weight_decay", self.optim.weight_decay.to_string());
        push("label_smoothing", self.loss.epsilon.to_string());
        push("beam", self.decode.beam_size.to_string());
        push(
            "max_len",
            self.decode.max_len.map_or_else(|| "auto".to_string(), |n| n.to_string()),
        );
        push("length_penalty", self.decode.length_penalty.to_string());
        push("feature_stride", self.decode.feature_stride.to_string());
        push("train_manifest", show_path(&self.train_manifest));
        push("valid_manifest", show_path(&self.valid_manifest));
        push("vocab", show_path(&self.vocab));
        push("exclusions", show_path(&self.exclusions));
        push("output_dir", self.output_dir.display().to_string());
        out
    }

    /// The config as a file that [`RunConfig::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("expected `key = value`, got `{line}`"),
                });
            };
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        self.apply_text(&text, path)
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, setting: &str) -> Result<()> {
        let (k, v) = setting
            .split_once('=')
            .ok_or_else(|| Error::config(setting, "override must look like key=value"))?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.schedule.validate()?;
        self.loss.validate()?;
        self.decode.validate()?;
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every", "must be positive"));
        }
        let o = &self.optim;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::config("adam_beta1", "betas must lie in [0, 1)"));
        }
        if !(o.eps > 0.0) {
            return Err(Error::config("adam_eps", "must be positive"));
        }
        if !(o.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::default();
        c.set("activation", "gelu").unwrap();
        c.set("max_len", "40").unwrap();
        c.set("vocab", "v.txt").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_names_the_field() {
        let err = RunConfig::default().apply_text("bogus = 1\n", Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = RunConfig::default().apply_text("lr 1\n", Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("key = value"));
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut c = RunConfig::default();
        c.apply_text("# run\n\nbeam = 3  # narrower\n", Path::new("x")).unwrap();
        assert_eq!(c.decode.beam_size, 3);
    }
}

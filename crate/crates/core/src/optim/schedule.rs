use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Cosine decay from `lr_max` to `lr_min`, restarting every `period` steps.
    Cosine,
    /// `lr_max · sqrt(warmup / step)` after warmup.
    InverseSqrt,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::InverseSqrt => "inverse_sqrt",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ScheduleKind::Cosine),
            "inverse_sqrt" | "inv_sqrt" => Ok(ScheduleKind::InverseSqrt),
            other => Err(Error::config("scheduler", format!("unknown scheduler `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: u64,
    /// Restart period in steps (cosine only).
    pub period: u64,
    pub warmup_init_lr: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            kind: ScheduleKind::Cosine,
            lr_max: 1e-3,
            lr_min: 1e-7,
            warmup_steps: 2000,
            period: 17_000,
            warmup_init_lr: 1e-7,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min < self.lr_max) {
            return Err(Error::config("lr_min", format!("{} must be below lr_max {}", self.lr_min, self.lr_max)));
        }
        if self.lr_min < 0.0 || self.warmup_init_lr < 0.0 {
            return Err(Error::config("lr_min", "learning rates must be non-negative"));
        }
        if self.period == 0 {
            return Err(Error::config("restart_period", "must be positive"));
        }
        Ok(())
    }

    /// Learning rate for update number `step` (0-based).
    ///
    /// Linear warmup from `warmup_init_lr` to `lr_max` over `warmup_steps`,
    /// then, for the cosine schedule with `u = (step - warmup) mod period`:
    /// `lr_min + ½(lr_max - lr_min)(1 + cos(π·u/period))`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            let frac = step as f64 / self.warmup_steps as f64;
            return self.warmup_init_lr + (self.lr_max - self.warmup_init_lr) * frac;
        }
        match self.kind {
            ScheduleKind::Cosine => {
                let u = (step - self.warmup_steps) % self.period;
                let phase = PI * u as f64 / self.period as f64;
                // written as a decrement from lr_max so the period start is exact
                self.lr_max - (self.lr_max - self.lr_min) * 0.5 * (1.0 - phase.cos())
            }
            ScheduleKind::InverseSqrt => {
                let w = self.warmup_steps.max(1) as f64;
                self.lr_max * (w / (step.max(1) as f64)).sqrt().min(1.0)
            }
        }
    }
}

/// Convenience for [`ScheduleConfig::lr_at`].
pub fn lr_at(step: u64, cfg: &ScheduleConfig) -> f64 {
    cfg.lr_at(step)
}

use crate::error::{Error, Result};
use crate::tensor::{Element, Tape, Var};
use crate::tokenizer::PAD;

/// Label-smoothing settings. The number of classes is the last axis of the
/// log-probabilities the loss is applied to.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub epsilon: f64,
    pub pad: u32,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            epsilon: 0.1,
            pad: PAD,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::config(
                "label_smoothing",
                format!("{} not in [0, 1)", self.epsilon),
            ));
        }
        Ok(())
    }
}

/// Label-smoothed cross-entropy, averaged over non-pad targets.
///
/// For each target `t != pad` with log-probabilities `logp[0..N]`:
/// `(1 - ε)·(-logp[t]) + (ε/N)·Σ_j -logp[j]`, i.e. cross-entropy against the
/// mixture of the one-hot target and a uniform distribution over all `N`
/// classes. Returns the loss and the number of counted tokens.
pub fn smoothed_ce<T: Element>(
    tape: &Tape<T>,
    logp: Var,
    targets: &[u32],
    cfg: &LossConfig,
) -> Result<(Var, usize)> {
    cfg.validate()?;
    let n = tape.value(logp).last_dim();
    if n < 2 {
        return Err(Error::InvalidArgument("label smoothing needs at least 2 classes".into()));
    }
    let targets: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
    tape.smoothed_ce(logp, &targets, cfg.epsilon, cfg.pad as usize)
}

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::RunConfig;
use crate::data::{Dataset, Manifest};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dataset, ExclusionList, ScoreRow};
use crate::model::{Checkpoint, Model};
use crate::optim::Trainer;
use crate::tokenizer::{CasingModel, Vocabulary};

pub const LAST_CHECKPOINT: &str = "checkpoint_last.bin";
pub const BEST_RBLEU_CHECKPOINT: &str = "checkpoint_best_rbleu.bin";
pub const BEST_BLEU_CHECKPOINT: &str = "checkpoint_best_bleu.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CASING_FILE: &str = "casing.tsv";

/// What a finished (or capped) training run reports.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub steps: u64,
    /// Loss of every step executed by this call, in order.
    pub losses: Vec<f64>,
    pub last_validation: Option<ScoreRow>,
    pub best_rbleu: Option<(u64, f64)>,
    pub best_bleu: Option<(u64, f64)>,
    pub wall_clock_secs: f64,
    pub checkpoints: Vec<PathBuf>,
}

fn io(context: String) -> impl FnOnce(std::io::Error) -> Error {
    move |e| Error::io(context, e)
}

pub fn load_exclusions(path: Option<&Path>) -> Result<ExclusionList> {
    match path {
        Some(p) => ExclusionList::load(p),
        None => Ok(ExclusionList::english()),
    }
}

fn append_line(path: &Path, header: &str, line: &str) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io(format!("opening {}", path.display())))?;
    let mut s = String::new();
    if fresh {
        writeln!(s, "{header}").unwrap();
    }
    writeln!(s, "{line}").unwrap();
    f.write_all(s.as_bytes()).map_err(io(format!("writing {}", path.display())))
}

fn best_from(ckpt: &Checkpoint, key: &str) -> Result<Option<(u64, f64)>> {
    let Some(v) = ckpt.meta(key) else { return Ok(None) };
    let (s, x) = v
        .split_once(':')
        .ok_or_else(|| Error::config(key, format!("malformed `{v}`")))?;
    let step = s.parse().map_err(|_| Error::config(key, format!("malformed `{v}`")))?;
    let score = x.parse().map_err(|_| Error::config(key, format!("malformed `{v}`")))?;
    Ok(Some((step, score)))
}

/// Trains according to `cfg`, optionally continuing from a checkpoint.
///
/// The vocabulary and training manifest must be set. The model's vocabulary
/// size and feature dimension are taken from the data. Writes into
/// `cfg.output_dir`: the resolved config, vocabulary, casing model, the last
/// checkpoint (every `checkpoint_every` steps and at the end), the best
/// checkpoints by validation rBLEU and BLEU, `train.log` and `valid.tsv`.
pub fn run_training(cfg: &RunConfig, resume: Option<&Path>, log: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    let start = Instant::now();
    let vocab_path = cfg.vocab.as_deref().ok_or_else(|| Error::config("vocab", "no vocabulary given"))?;
    let train_path = cfg
        .train_manifest
        .as_deref()
        .ok_or_else(|| Error::config("train_manifest", "no training manifest given"))?;
    let vocab = Vocabulary::load(vocab_path)?;
    let train_manifest = Manifest::load(train_path)?;
    if train_manifest.is_empty() {
        return Err(Error::config("train_manifest", "manifest has no records"));
    }
    let train = Dataset::load(&train_manifest, &vocab)?;
    let valid = match &cfg.valid_manifest {
        Some(p) => Some(Dataset::load(&Manifest::load(p)?, &vocab)?),
        None => None,
    };
    let excl = load_exclusions(cfg.exclusions.as_deref())?;

    let mut cfg = cfg.clone();
    cfg.model.vocab_size = vocab.len();
    cfg.model.feature_dim = train.feature_dim().expect("non-empty");
    cfg.validate()?;

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(io(format!("creating {}", out.display())))?;
    std::fs::write(out.join("config.txt"), cfg.to_text()).map_err(io(format!("writing {}", out.display())))?;
    vocab.save(&out.join(VOCAB_FILE))?;
    let casing = CasingModel::learn(&train_manifest.transcripts());
    casing.save(&out.join(CASING_FILE))?;

    let mut best_rbleu = None;
    let mut best_bleu = None;
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let t = Trainer::from_checkpoint(
                &ck,
                cfg.optim.clone(),
                cfg.schedule.clone(),
                cfg.loss.clone(),
                cfg.train.clone(),
            )?;
            if t.model.config != cfg.model {
                return Err(Error::config(
                    "resume",
                    format!(
                        "checkpoint model config does not match the run config ({:?} vs {:?})",
                        t.model.config, cfg.model
                    ),
                ));
            }
            best_rbleu = best_from(&ck, "run.best_rbleu")?;
            best_bleu = best_from(&ck, "run.best_bleu")?;
            log(&format!("resuming from {} at step {}", path.display(), t.state.step));
            t
        }
        None => Trainer::new(
            Model::new(cfg.model.clone(), cfg.train.seed)?,
            cfg.optim.clone(),
            cfg.schedule.clone(),
            cfg.loss.clone(),
            cfg.train.clone(),
        )?,
    };

    let log_path = out.join("train.log");
    let mut outcome = RunOutcome {
        steps: trainer.state.step,
        losses: Vec::new(),
        last_validation: None,
        best_rbleu,
        best_bleu,
        wall_clock_secs: 0.0,
        checkpoints: Vec::new(),
    };
    let save = |trainer: &Trainer, outcome: &RunOutcome, name: &str| -> Result<PathBuf> {
        let mut ck = trainer.to_checkpoint();
        for (key, best) in [("run.best_rbleu", outcome.best_rbleu), ("run.best_bleu", outcome.best_bleu)] {
            if let Some((s, x)) = best {
                ck.meta.push((key.into(), format!("{s}:{x}")));
            }
        }
        let path = out.join(name);
        ck.save(&path)?;
        Ok(path)
    };

    while !trainer.done() {
        let every = cfg.checkpoint_every;
        let boundary = (trainer.state.step / every + 1) * every;
        let mut lines = Vec::new();
        let stats = trainer.train_epoch(&train, boundary, &mut |l| lines.push(l.to_string()))?;
        for l in &lines {
            log(l);
            append_line(&log_path, "step\tepoch\tloss\tlr\ttokens_per_sec", l)?;
        }
        outcome.losses.extend(&stats.losses);
        if stats.completed {
            log(&format!("epoch {} done, mean loss {:.4}", stats.epoch, stats.mean_loss));
        }
        let at_boundary = trainer.state.step % every == 0 && stats.steps > 0;
        if !(at_boundary || trainer.done()) {
            continue;
        }
        if let Some(valid) = &valid {
            let ev = evaluate_dataset(&trainer.model, valid, &vocab, &casing, &cfg.decode, &excl)?;
            let row = ev.row();
            log(&format!("validation at step {}: {}\t{}", trainer.state.step, ScoreRow::HEADER, row));
            append_line(
                &out.join("valid.tsv"),
                &format!("step\t{}", ScoreRow::HEADER),
                &format!("{}\t{}", trainer.state.step, row),
            )?;
            outcome.last_validation = Some(row);
            let step = trainer.state.step;
            if outcome.best_rbleu.is_none_or(|(_, b)| row.rbleu > b) {
                outcome.best_rbleu = Some((step, row.rbleu));
                outcome.checkpoints.push(save(&trainer, &outcome, BEST_RBLEU_CHECKPOINT)?);
            }
            if outcome.best_bleu.is_none_or(|(_, b)| row.bleu > b) {
                outcome.best_bleu = Some((step, row.bleu));
                outcome.checkpoints.push(save(&trainer, &outcome, BEST_BLEU_CHECKPOINT)?);
            }
        }
        outcome.checkpoints.push(save(&trainer, &outcome, LAST_CHECKPOINT)?);
    }
    outcome.steps = trainer.state.step;
    outcome.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(outcome)
}

/// Model plus the text tools saved next to it by [`run_training`].
pub struct LoadedModel {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub casing: CasingModel,
}

/// Loads a checkpoint; vocabulary and casing default to the files in the
/// checkpoint's directory.
pub fn load_model(checkpoint: &Path, vocab: Option<&Path>, casing: Option<&Path>) -> Result<LoadedModel> {
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let model = Model::from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let vocab = Vocabulary::load(&vocab.map_or_else(|| dir.join(VOCAB_FILE), Path::to_path_buf))?;
    let casing_path = casing.map_or_else(|| dir.join(CASING_FILE), Path::to_path_buf);
    let casing = if casing.is_none() && !casing_path.exists() {
        CasingModel::default()
    } else {
        CasingModel::load(&casing_path)?
    };
    if vocab.len() != model.config.vocab_size {
        return Err(Error::config(
            "vocab",
            format!(
                "vocabulary has {} entries, checkpoint expects {}",
                vocab.len(),
                model.config.vocab_size
            ),
        ));
    }
    Ok(LoadedModel { model, vocab, casing })
}

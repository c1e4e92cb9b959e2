//! Run configuration, the training driver, the preset grid and the
//! ablation runner behind the `slt` binary.

mod config;
mod presets;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::RunConfig;
pub use presets::{parse_selection, Preset, LAST_PRESET};
pub use run::{
    load_exclusions, load_model, run_training, LoadedModel, RunOutcome, BEST_BLEU_CHECKPOINT,
    BEST_RBLEU_CHECKPOINT, CASING_FILE, LAST_CHECKPOINT, VOCAB_FILE,
};

use crate::error::{Error, Result};
use crate::metrics::ScoreRow;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SLT_SEED";

/// Header of the ablation results file.
pub const RESULTS_HEADER: &str = "preset\tsplit\trBLEU\tBLEU-1\tBLEU-2\tBLEU-3\tBLEU\twall_clock_s\tsteps\tstatus";

/// Applies `SLT_SEED` when set to `value`.
pub fn apply_seed_env(cfg: &mut RunConfig, value: Option<&str>) -> Result<()> {
    match value {
        Some(v) => cfg.set("seed", v).map_err(|_| Error::config(SEED_ENV, format!("cannot parse `{v}`"))),
        None => Ok(()),
    }
}

/// Label for a preset selection entry.
pub fn preset_label(id: Option<u32>) -> String {
    id.map_or_else(|| "baseline".to_string(), |i| i.to_string())
}

/// `base` with the given preset applied (`None` is the baseline itself).
pub fn resolve_preset(base: &RunConfig, id: Option<u32>) -> Result<RunConfig> {
    match id {
        None => {
            base.validate()?;
            Ok(base.clone())
        }
        Some(i) => Preset::get(i)
            .ok_or_else(|| Error::config("preset", format!("no preset {i}")))?
            .resolve(base),
    }
}

/// One line of the ablation results store.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub preset: String,
    pub split: String,
    pub scores: Option<ScoreRow>,
    pub wall_clock_secs: f64,
    pub steps: u64,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    /// Parses a line written by the `Display` impl.
    pub fn parse(line: &str) -> Option<ResultRow> {
        let f: Vec<&str> = line.splitn(10, '\t').collect();
        if f.len() != 10 {
            return None;
        }
        let scores = if f[2] == "-" {
            None
        } else {
            let n: Vec<f64> = f[2..7].iter().map(|s| s.parse().ok()).collect::<Option<_>>()?;
            Some(ScoreRow {
                rbleu: n[0],
                bleu1: n[1],
                bleu2: n[2],
                bleu3: n[3],
                bleu: n[4],
            })
        };
        Some(ResultRow {
            preset: f[0].into(),
            split: f[1].into(),
            scores,
            wall_clock_secs: f[7].parse().ok()?,
            steps: f[8].parse().ok()?,
            status: f[9].into(),
        })
    }
}

impl fmt::Display for ResultRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t", self.preset, self.split)?;
        match &self.scores {
            Some(s) => write!(f, "{s}")?,
            None => write!(f, "-\t-\t-\t-\t-")?,
        }
        // Newlines in an error message would break the one-row-per-line store.
        let status = self.status.replace(['\n', '\t'], " ");
        write!(f, "\t{:.1}\t{}\t{}", self.wall_clock_secs, self.steps, status)
    }
}

/// Appends rows to a results file, writing the header first if the file is new.
pub fn append_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(RESULTS_HEADER);
        text.push('\n');
    }
    for r in rows {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    f.write_all(text.as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Successful rows first, best rBLEU then best BLEU on top; failures last in
/// their original order.
pub fn sort_results(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| match (&a.scores, &b.scores) {
        (Some(x), Some(y)) => y
            .rbleu
            .total_cmp(&x.rbleu)
            .then(y.bleu.total_cmp(&x.bleu))
            .then_with(|| a.preset.cmp(&b.preset)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
}

/// Options of an ablation sweep.
#[derive(Clone, Debug)]
pub struct AblateOptions {
    /// Config every preset is applied to.
    pub base: RunConfig,
    /// `key=value` overrides applied after the preset, e.g. to shrink it.
    pub overrides: Vec<String>,
    /// Training steps per preset.
    pub steps: u64,
    /// Each preset trains into `<out_dir>/preset-<id>`.
    pub out_dir: PathBuf,
    /// Append-only results store.
    pub results: PathBuf,
}

/// Resolved config of one sweep entry: preset, then overrides, then the step
/// cap and output directory.
pub fn ablation_config(opts: &AblateOptions, id: Option<u32>) -> Result<RunConfig> {
    let mut cfg = resolve_preset(&opts.base, id)?;
    for o in &opts.overrides {
        cfg.apply_override(o)?;
    }
    cfg.train.max_steps = opts.steps;
    cfg.checkpoint_every = cfg.checkpoint_every.min(opts.steps.max(1));
    cfg.output_dir = opts.out_dir.join(format!("preset-{}", preset_label(id)));
    cfg.validate()?;
    Ok(cfg)
}

/// Trains and validates each selected preset in turn, appending one row per
/// preset to the results store as soon as it finishes. A failing preset is
/// recorded and the sweep moves on. Returns the rows in run order.
pub fn run_ablation(opts: &AblateOptions, selection: &[Option<u32>], log: &mut dyn FnMut(&str)) -> Result<Vec<ResultRow>> {
    let split = opts
        .base
        .valid_manifest
        .as_deref()
        .and_then(Path::file_stem)
        .map_or_else(|| "valid".to_string(), |s| s.to_string_lossy().into_owned());
    let mut rows = Vec::new();
    for &id in selection {
        let label = preset_label(id);
        log(&format!("preset {label}: starting"));
        let start = Instant::now();
        let result = ablation_config(opts, id).and_then(|cfg| run_training(&cfg, None, &mut *log));
        let row = match result {
            Ok(out) => match out.last_validation {
                Some(scores) => ResultRow {
                    preset: label.clone(),
                    split: split.clone(),
                    scores: Some(scores),
                    wall_clock_secs: out.wall_clock_secs,
                    steps: out.steps,
                    status: "ok".into(),
                },
                None => ResultRow {
                    preset: label.clone(),
                    split: split.clone(),
                    scores: None,
                    wall_clock_secs: out.wall_clock_secs,
                    steps: out.steps,
                    status: "failed: no validation manifest".into(),
                },
            },
            Err(e) => ResultRow {
                preset: label.clone(),
                split: split.clone(),
                scores: None,
                wall_clock_secs: start.elapsed().as_secs_f64(),
                steps: 0,
                status: format!("failed: {e}"),
            },
        };
        log(&format!("preset {label}: {}", row.status));
        append_results(&opts.results, std::slice::from_ref(&row))?;
        rows.push(row);
    }
    Ok(rows)
}

//! `slt`: train, translate, evaluate, sweep presets and generate data.
//!
//! Data goes to stdout and progress to stderr. Exit status is 0 on success,
//! 1 for bad input (flags, files, config) and 2 for internal failures.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slt_core::data::{generate_synthetic, load_features, Manifest, SynthConfig};
use slt_core::decode::translate_all;
use slt_core::experiment::{
    ablation_config, apply_seed_env, load_exclusions, load_model, parse_selection, preset_label, resolve_preset,
    run_ablation, run_training, sort_results, AblateOptions, RunConfig, RESULTS_HEADER, SEED_ENV, VOCAB_FILE,
};
use slt_core::metrics::{evaluate_references, evaluate_split, postprocess, ScoreRow};
use slt_core::tokenizer::{CasingModel, Vocabulary};
use slt_core::{Error, Result};

#[derive(Parser)]
#[command(name = "slt", version, about = "Feature-sequence to text translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; checkpoints and logs go to the output directory.
    Train(TrainArgs),
    /// Translate feature files or the items of a manifest.
    Translate(TranslateArgs),
    /// Score a checkpoint on a manifest and print the results row.
    Evaluate(EvaluateArgs),
    /// Train and validate a list of presets, or print their configs.
    Ablate(AblateArgs),
    /// Write a synthetic corpus with manifests and a vocabulary.
    GenSynth(GenSynthArgs),
    /// Learn a subword vocabulary from the transcripts of a manifest.
    TrainVocab(TrainVocabArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// `key = value` config file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding `train.tsv`, `val.tsv` and `vocab.txt`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override one setting, e.g. `--set lr=0.0005`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Learn a vocabulary of this size from the training transcripts first.
    #[arg(long, value_name = "SIZE")]
    train_vocab: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to `vocab.txt` next to the checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Defaults to `casing.tsv` next to the checkpoint.
    #[arg(long)]
    casing: Option<PathBuf>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    length_penalty: Option<f64>,
}

#[derive(Args)]
struct TranslateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Feature files to translate.
    #[arg(long, num_args = 1.., conflicts_with = "manifest")]
    features: Vec<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    greedy: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Required unless `--references-as-hypotheses` is given with `--vocab`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    casing: Option<PathBuf>,
    /// Word list removed before rBLEU; the built-in English list otherwise.
    #[arg(long)]
    exclusions: Option<PathBuf>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Write `id<TAB>hypothesis` lines here.
    #[arg(long)]
    hypotheses: Option<PathBuf>,
    /// Score the references against themselves (pipeline sanity check).
    #[arg(long)]
    references_as_hypotheses: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Presets to run: ids, ranges and `baseline`, comma separated.
    #[arg(default_value = "19-36")]
    presets: String,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Print each resolved config and exit.
    #[arg(long)]
    dry_run: bool,
    /// Training steps per preset.
    #[arg(long, default_value_t = 3000)]
    steps: u64,
    #[arg(long, default_value = "runs/ablate")]
    out: PathBuf,
    /// Results store; defaults to `<out>/results.tsv`.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    train: usize,
    #[arg(long, default_value_t = 50)]
    val: usize,
    #[arg(long, default_value_t = 0)]
    test: usize,
    #[arg(long, default_value_t = 30)]
    vocab_words: usize,
    #[arg(long, default_value_t = 4)]
    frames_per_word: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Target size of the subword vocabulary learned from the train split.
    #[arg(long, default_value_t = 1000)]
    vocab_size: usize,
}

#[derive(Args)]
struct TrainVocabArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 1000)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

fn info(msg: &str) {
    eprintln!("{msg}");
}

/// Defaults, then the config file, then `SLT_SEED`, then `--data`, then `--set`.
fn build_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    apply_seed_env(&mut cfg, std::env::var(SEED_ENV).ok().as_deref())?;
    if let Some(dir) = &args.data {
        cfg.train_manifest = Some(dir.join("train.tsv"));
        cfg.valid_manifest = Some(dir.join("val.tsv"));
        cfg.vocab = Some(dir.join(VOCAB_FILE));
    }
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn write_out(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("writing stdout", e))
        }
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = build_config(&args.cfg)?;
    if let Some(n) = args.max_steps {
        cfg.train.max_steps = n;
    }
    if let Some(dir) = args.output {
        cfg.output_dir = dir;
    }
    cfg.validate()?;
    if let Some(size) = args.train_vocab {
        let manifest_path = cfg
            .train_manifest
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--train-vocab needs a training manifest".into()))?;
        let manifest = Manifest::load(manifest_path)?;
        let vocab = Vocabulary::train(&manifest.transcripts(), size)?;
        std::fs::create_dir_all(&cfg.output_dir)
            .map_err(|e| Error::io(format!("creating {}", cfg.output_dir.display()), e))?;
        let path = cfg.output_dir.join(VOCAB_FILE);
        vocab.save(&path)?;
        info(&format!("learned {} vocabulary entries into {}", vocab.len(), path.display()));
        cfg.vocab = Some(path);
    }
    let outcome = run_training(&cfg, args.resume.as_deref(), &mut |l| info(l))?;
    if let Some((step, score)) = outcome.best_rbleu {
        info(&format!("best validation rBLEU {score:.2} at step {step}"));
    }
    if let Some((step, score)) = outcome.best_bleu {
        info(&format!("best validation BLEU {score:.2} at step {step}"));
    }
    info(&format!("{} steps in {:.1}s", outcome.steps, outcome.wall_clock_secs));
    let mut text = String::new();
    let mut seen = Vec::new();
    for p in &outcome.checkpoints {
        if !seen.contains(p) {
            text.push_str(&format!("{}\n", p.display()));
            seen.push(p.clone());
        }
    }
    write_out(None, &text)
}

fn translate(args: TranslateArgs) -> Result<()> {
    let m = &args.model;
    let loaded = load_model(&m.checkpoint, m.vocab.as_deref(), m.casing.as_deref())?;
    let mut decode = slt_core::decode::DecodeConfig::default();
    if let Some(b) = m.beam {
        decode.beam_size = b;
    }
    decode.max_len = m.max_len;
    if let Some(a) = m.length_penalty {
        decode.length_penalty = a;
    }
    decode.validate()?;
    let paths: Vec<PathBuf> = match &args.manifest {
        Some(p) => Manifest::load(p)?.records.into_iter().map(|r| r.features).collect(),
        None => args.features.clone(),
    };
    if paths.is_empty() {
        return Err(Error::InvalidArgument("nothing to translate: give --features or --manifest".into()));
    }
    let feats = paths.iter().map(|p| load_features(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = feats.iter().collect();
    let hyps = translate_all(&loaded.model, &refs, &decode, args.greedy)?;
    // Everything is decoded before anything is printed, so a failure leaves
    // no partial output behind.
    let mut text = String::new();
    for h in &hyps {
        text.push_str(&postprocess(&loaded.vocab, &loaded.casing, h.output())?);
        text.push('\n');
    }
    write_out(args.output.as_deref(), &text)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let excl = load_exclusions(args.exclusions.as_deref())?;
    let ev = if args.references_as_hypotheses {
        let vocab_path = match (&args.vocab, &args.checkpoint) {
            (Some(v), _) => v.clone(),
            (None, Some(c)) => c.parent().unwrap_or(Path::new(".")).join(VOCAB_FILE),
            (None, None) => return Err(Error::InvalidArgument("give --vocab or --checkpoint".into())),
        };
        let vocab = Vocabulary::load(&vocab_path)?;
        let casing = match &args.casing {
            Some(p) => CasingModel::load(p)?,
            None => CasingModel::learn(&manifest.transcripts()),
        };
        evaluate_references(&manifest, &vocab, &casing, &excl)?
    } else {
        let ckpt = args
            .checkpoint
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--checkpoint is required".into()))?;
        let loaded = load_model(ckpt, args.vocab.as_deref(), args.casing.as_deref())?;
        let mut decode = slt_core::decode::DecodeConfig::default();
        if let Some(b) = args.beam {
            decode.beam_size = b;
        }
        decode.max_len = args.max_len;
        evaluate_split(&loaded.model, &manifest, &loaded.vocab, &loaded.casing, &decode, &excl)?
    };
    if let Some(p) = &args.hypotheses {
        ev.write_hypotheses(p)?;
    }
    if let Some(w) = &ev.bleu.warning {
        info(&format!("warning: {w}"));
    }
    info(&format!("exact match {:.2}%", 100.0 * ev.exact_match()));
    write_out(None, &format!("{}\n{}\n", ScoreRow::HEADER, ev.row()))
}

fn ablate(args: AblateArgs) -> Result<()> {
    let selection = parse_selection(&args.presets)?;
    let base = build_config(&args.cfg)?;
    if args.dry_run {
        let mut text = String::new();
        for &id in &selection {
            let cfg = resolve_preset(&base, id)?;
            text.push_str(&format!("# preset {}\n{}", preset_label(id), cfg.to_text()));
        }
        return write_out(None, &text);
    }
    let opts = AblateOptions {
        base,
        overrides: Vec::new(),
        steps: args.steps,
        results: args.results.clone().unwrap_or_else(|| args.out.join("results.tsv")),
        out_dir: args.out.clone(),
    };
    // Reject a bad selection or config before spending any time training.
    for &id in &selection {
        ablation_config(&opts, id)?;
    }
    let mut rows = run_ablation(&opts, &selection, &mut |l| info(l))?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    sort_results(&mut rows);
    let mut text = format!("{RESULTS_HEADER}\n");
    for r in &rows {
        text.push_str(&format!("{r}\n"));
    }
    write_out(None, &text)?;
    info(&format!(
        "{} presets, {} failed; results appended to {}",
        rows.len(),
        failed,
        opts.results.display()
    ));
    Ok(())
}

fn gen_synth(args: GenSynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        vocab_words: args.vocab_words,
        frames_per_word: args.frames_per_word,
        dim: args.dim,
        noise: args.noise,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let mut splits = vec![("train", args.train), ("val", args.val)];
    if args.test > 0 {
        splits.push(("test", args.test));
    }
    let manifests = generate_synthetic(&cfg, &splits, &args.out)?;
    let vocab = Vocabulary::train(&manifests[0].transcripts(), args.vocab_size)?;
    vocab.save(&args.out.join(VOCAB_FILE))?;
    for m in &manifests {
        info(&format!("{}: {} items", m.split, m.len()));
    }
    info(&format!("vocabulary: {} entries", vocab.len()));
    write_out(None, &format!("{}\n", args.out.display()))
}

fn train_vocab(args: TrainVocabArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let vocab = Vocabulary::train(&manifest.transcripts(), args.size)?;
    vocab.save(&args.out)?;
    info(&format!("{} entries written to {}", vocab.len(), args.out.display()));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
        Command::GenSynth(a) => gen_synth(a),
        Command::TrainVocab(a) => train_vocab(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
        Err(_) => ExitCode::from(2),
    }
}

//! Acceptance criteria 1–10. Each test prints one `PASS`/`FAIL` line on
//! stderr (bypassing the harness capture) and then asserts.

mod common;

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::{
    brute_bleu, check_model_gradients, exhaustive_best, op_checks, random_corpus, randn, synth_language, tiny_config,
    to_dataset, HashModel, GRAD_TOL,
};
use slt_core::data::Dataset;
use slt_core::decode::{beam_search, greedy, DecodeConfig};
use slt_core::metrics::{corpus_bleu, evaluate_dataset, rbleu, tokenize_for_scoring, ExclusionList};
use slt_core::model::{Activation, Checkpoint, Model, ModelConfig};
use slt_core::optim::{
    lr_at, smoothed_ce, AdamW, AdamWConfig, LossConfig, ScheduleConfig, ScheduleKind, TrainConfig, Trainer,
};
use slt_core::tensor::{seeded_rng, Tape, Tensor};
use slt_core::tokenizer::{CasingModel, Vocabulary};

/// Collects failed checks of one criterion, then reports and asserts.
struct Criterion {
    id: u32,
    name: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(id: u32, name: &'static str) -> Self {
        Criterion {
            id,
            name,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn finish(self) {
        let verdict = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let mut detail = self.notes.join("; ");
        if !self.failures.is_empty() {
            detail = format!("{}; failed: {}", detail, self.failures.join(" | "));
        }
        let line = format!("criterion {:>2} {verdict}: {} ({detail})\n", self.id, self.name);
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        assert!(self.failures.is_empty(), "{line}");
    }
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_gradient_integrity() {
    let mut c = Criterion::new(1, "gradient integrity");
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (name, check) in op_checks() {
        for seed in 0..20 {
            let err = check(seed);
            worst = worst.max(err);
            c.check(err < GRAD_TOL, format!("{name} seed {seed}: {err:e}"));
        }
    }
    for seed in 0..20 {
        let (err, at) = check_model_gradients(seed);
        worst = worst.max(err);
        c.check(err < GRAD_TOL, format!("model seed {seed}: {err:e} at {at}"));
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 120.0, format!("took {secs:.1}s"));
    c.note(format!("{} ops and the model over 20 seeds, worst relative error {worst:.2e}, {secs:.1}s", op_checks().len()));
    c.finish();
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_bleu_oracle_equivalence() {
    let mut c = Criterion::new(2, "BLEU oracle equivalence");
    let tok = |v: &[String]| v.iter().map(|s| tokenize_for_scoring(s)).collect::<Vec<_>>();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let mut rng = seeded_rng(seed, 0);
        let refs = random_corpus(&mut rng, 10, 20, 30);
        let hyps = random_corpus(&mut rng, 10, 20, 30);
        let got = corpus_bleu(&hyps, &refs).unwrap();
        let want = brute_bleu(&tok(&hyps), &tok(&refs));
        for n in 0..4 {
            worst = worst.max((got.bleu[n] - want.bleu[n]).abs());
            worst = worst.max((got.precisions[n] - want.precisions[n]).abs());
        }
        worst = worst.max((got.brevity_penalty - want.bp).abs());
    }
    c.check(worst <= 1e-9, format!("oracle gap {worst:e}"));

    let same = ["a quick test sentence here", "and another one for luck"];
    c.check(corpus_bleu(&same, &same).unwrap().bleu == [100.0; 4], "identity is not 100");

    let short = corpus_bleu(&["the cat"], &["the cat sat"]).unwrap();
    c.check((short.brevity_penalty - (1.0f64 - 1.5).exp()).abs() < 1e-15, "BP for c=2, r=3");
    let shorter = corpus_bleu(&["a b c", "d"], &["a b c e", "d f g h"]).unwrap();
    c.check((shorter.brevity_penalty - (1.0f64 - 8.0 / 4.0).exp()).abs() < 1e-15, "BP for c=4, r=8");
    c.check(corpus_bleu(&["a b c d"], &["a b"]).unwrap().brevity_penalty == 1.0, "no BP when c > r");
    c.note(format!("50 corpora, max gap {worst:.1e}"));
    c.finish();
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_rbleu_contract() {
    let mut c = Criterion::new(3, "rBLEU contract");
    for seed in 0..20 {
        let mut rng = seeded_rng(seed, 3);
        let refs = random_corpus(&mut rng, 10, 20, 30);
        let hyps = random_corpus(&mut rng, 10, 20, 30);
        let r = rbleu(&hyps, &refs, &ExclusionList::empty()).unwrap();
        c.check(r == corpus_bleu(&hyps, &refs).unwrap(), format!("corpus {seed} differs with no exclusions"));
    }
    let excl = ExclusionList::from_words(["the", "is", "a", "so"]);
    let hyps = ["The sky is so blue today", "a dog is here"];
    let refs = ["the sky is blue", "A cat is there"];
    let got = rbleu(&hyps, &refs, &excl).unwrap();
    // filter by hand, then count with the oracle
    let keep = |s: &str| -> Vec<String> {
        tokenize_for_scoring(s).into_iter().filter(|w| !["the", "is", "a", "so"].contains(&w.as_str())).collect()
    };
    let want = brute_bleu(&hyps.map(keep), &refs.map(keep));
    c.check((got.hyp_len, got.ref_len) == (want.c, want.r), "filtered lengths");
    for n in 0..4 {
        c.check((got.bleu[n] - want.bleu[n]).abs() < 1e-12, format!("BLEU-{}", n + 1));
    }
    c.note(format!("20 corpora with empty list; stopword fixture {:.2}", got.score()));
    c.finish();
}

// ---------------------------------------------------------------- 4

fn log_softmax_rows(x: &Tensor<f64>) -> Tensor<f64> {
    let n = x.last_dim();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(n) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
        row.iter_mut().for_each(|v| *v -= z);
    }
    out
}

fn smoothed(logp: &Tensor<f64>, targets: &[u32], eps: f64) -> f64 {
    let tape = Tape::new();
    let lp = tape.constant(logp.clone());
    let (l, _) = smoothed_ce(&tape, lp, targets, &LossConfig { epsilon: eps, pad: 1 }).unwrap();
    let v = tape.value(l).item();
    v
}

#[test]
fn criterion_04_loss_contract() {
    let mut c = Criterion::new(4, "loss contract");
    let logp = log_softmax_rows(&randn(&[5, 8], &mut seeded_rng(4, 0)));
    let targets = [0u32, 3, 7, 2, 5];
    let nll = targets.iter().enumerate().map(|(i, &t)| -logp.data()[i * 8 + t as usize]).sum::<f64>() / 5.0;
    c.check((smoothed(&logp, &targets, 0.0) - nll).abs() < 1e-12, "eps 0 is not NLL");

    let n = 11;
    let uniform = Tensor::new([2, n], vec![-(n as f64).ln(); 2 * n]).unwrap();
    for eps in [0.0, 0.1, 0.2] {
        let l = smoothed(&uniform, &[4, 9], eps);
        c.check((l - (n as f64).ln()).abs() < 1e-12, format!("uniform at eps {eps}: {l}"));
    }

    let l0 = smoothed(&logp, &targets, 0.0);
    let mean_neg = logp.data().iter().map(|x| -x).sum::<f64>() / 40.0;
    for eps in [0.0, 0.05, 0.1, 0.3] {
        let want = (1.0 - eps) * l0 + eps * mean_neg;
        c.check((smoothed(&logp, &targets, eps) - want).abs() < 1e-12, format!("affine at eps {eps}"));
    }
    c.note("NLL, ln N at three smoothings, affinity at four points");
    c.finish();
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_scheduler_trace() {
    let mut c = Criterion::new(5, "scheduler trace");
    let s = ScheduleConfig::default();
    c.check(s.kind == ScheduleKind::Cosine, "default is not cosine");
    c.check((s.lr_max, s.lr_min, s.warmup_steps, s.period) == (1e-3, 1e-7, 2000, 17_000), "default values");
    c.check(lr_at(2000, &s) == 1e-3, "lr(2000)");
    for k in 1..=3 {
        c.check(lr_at(2000 + 17_000 * k, &s) == 1e-3, format!("restart {k}"));
    }
    let low = (2000..19_000).map(|t| lr_at(t, &s)).fold(f64::INFINITY, f64::min);
    c.check(low >= 1e-7, format!("minimum {low:e}"));
    let half = lr_at(2000 + 8500, &s);
    c.check((half - 0.5 * (1e-3 + 1e-7)).abs() < 1e-12, format!("half period {half:e}"));
    // the same trace written independently
    for t in (2000..60_000).step_by(7) {
        let u = ((t - 2000) % 17_000) as f64 / 17_000.0;
        let want = 1e-7 + 0.5 * (1e-3 - 1e-7) * (1.0 + (PI * u).cos());
        c.check((lr_at(t, &s) - want).abs() < 1e-15, format!("step {t}"));
    }
    c.note(format!("minimum over one period {low:.3e}"));
    c.finish();
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_optimizer() {
    let mut c = Criterion::new(6, "optimizer");
    let one = |opt: &mut AdamW<f64>, theta: f64, g: f64, lr: f64| {
        let mut p = Tensor::new([1], vec![theta]).unwrap();
        opt.step(&mut [("p", &mut p, &Tensor::new([1], vec![g]).unwrap())], lr).unwrap();
        p.item()
    };
    let cfg = AdamWConfig {
        beta1: 0.9,
        beta2: 0.98,
        eps: 1e-8,
        weight_decay: 0.1,
    };
    // bias-corrected moments are both 1 after one step with g = 1
    let got = one(&mut AdamW::new(cfg.clone()), 1.0, 1.0, 0.1);
    c.check((got - (1.0 * (1.0 - 0.1 * 0.1) - 0.1 / (1.0 + 1e-8))).abs() < 1e-9, format!("single step {got}"));

    let plain = AdamWConfig {
        weight_decay: 0.0,
        ..cfg.clone()
    };
    let mut opt = AdamW::<f64>::new(plain);
    let mut rng = seeded_rng(6, 0);
    let mut p = randn(&[3], &mut rng);
    let mut q = p.data().to_vec();
    let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
    for t in 1..=100 {
        let g = randn(&[3], &mut rng);
        opt.step(&mut [("p", &mut p, &g)], 1e-2).unwrap();
        for i in 0..3 {
            let gi = g.data()[i];
            m[i] = 0.9 * m[i] + 0.1 * gi;
            v[i] = 0.98 * v[i] + 0.02 * gi * gi;
            let mh = m[i] / (1.0 - 0.9f64.powi(t));
            let vh = v[i] / (1.0 - 0.98f64.powi(t));
            q[i] -= 1e-2 * mh / (vh.sqrt() + 1e-8);
        }
    }
    let gap = p.data().iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    c.check(gap < 1e-12, format!("plain Adam gap {gap:e}"));

    let mut opt = AdamW::<f64>::new(cfg);
    let mut p = Tensor::new([2], vec![3.0, -0.25]).unwrap();
    opt.step(&mut [("p", &mut p, &Tensor::zeros([2]))], 0.05).unwrap();
    c.check(p.data() == [3.0 * (1.0 - 0.05 * 0.1), -0.25 * (1.0 - 0.05 * 0.1)], "zero-gradient decay");
    c.note(format!("plain Adam over 100 steps within {gap:.1e}"));
    c.finish();
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_decoder() {
    let mut c = Criterion::new(7, "decoder");
    for seed in 0..100 {
        let m = HashModel {
            seed,
            real: 3 + (seed % 5) as usize,
            temperature: 1.0 + (seed % 4) as f64,
        };
        let b = beam_search(&m, 1, 12, 1.0).unwrap();
        let g = greedy(&m, 12, 1.0).unwrap();
        c.check(b.tokens == g.tokens && b.score == g.score, format!("beam 1 vs greedy on model {seed}"));
    }
    let mut cases = 0;
    for seed in 0..30 {
        for real in 1..=3 {
            let m = HashModel {
                seed,
                real,
                temperature: 2.5,
            };
            for max_len in 1..=6 {
                let (best, tokens) = exhaustive_best(&m, max_len, 1.0);
                let got = beam_search(&m, 4usize.pow(max_len as u32), max_len, 1.0).unwrap();
                c.check(
                    got.tokens == tokens && (got.score - best).abs() < 1e-12,
                    format!("optimum seed {seed} real {real} max_len {max_len}"),
                );
                cases += 1;
            }
        }
    }
    c.note(format!("100 toy models; {cases} exhaustive cases"));
    c.finish();
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_end_to_end_learning() {
    let mut c = Criterion::new(8, "end-to-end learning");
    let steps = 3000;
    let start = Instant::now();
    let lang = synth_language(0.01);
    let train = lang.sample(500, 0, "train");
    let val = lang.sample(50, 1, "val");
    let texts: Vec<&str> = train.iter().map(|i| i.transcript.as_str()).collect();
    let vocab = Vocabulary::train(&texts, 1000).unwrap();
    let casing = CasingModel::learn(&texts);
    // sentence-initial capitals are the same word
    let words: std::collections::BTreeSet<String> =
        texts.iter().flat_map(|t| t.split_whitespace()).map(str::to_lowercase).collect();
    c.check(words.len() <= 30, format!("{} distinct words", words.len()));
    let config = ModelConfig {
        encoder_layers: 2,
        decoder_layers: 2,
        embed_dim: 64,
        ffn_dim: 256,
        attention_heads: 4,
        activation: Activation::Relu,
        dropout: 0.1,
        feature_dim: 64,
        vocab_size: vocab.len(),
        ..ModelConfig::default()
    };
    let train = to_dataset(train, &vocab);
    let val = to_dataset(val, &vocab);
    let schedule = ScheduleConfig {
        kind: ScheduleKind::Cosine,
        lr_max: 2e-3,
        lr_min: 1e-5,
        warmup_steps: 300,
        period: steps - 300,
        warmup_init_lr: 1e-7,
    };
    let mut t = Trainer::new(
        Model::new(config, 1).unwrap(),
        AdamWConfig {
            weight_decay: 0.01,
            ..AdamWConfig::default()
        },
        schedule,
        LossConfig::default(),
        TrainConfig {
            batch_size: 16,
            max_steps: steps,
            epochs: 10_000,
            log_every: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    while !t.done() {
        t.train_epoch(&train, u64::MAX, &mut |_| {}).unwrap();
    }
    let ev = evaluate_dataset(&t.model, &val, &vocab, &casing, &DecodeConfig::default(), &ExclusionList::english()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let bleu = ev.bleu.score();
    let exact = ev.exact_match();
    c.check(bleu >= 90.0, format!("BLEU {bleu:.2} < 90"));
    c.check(exact >= 0.7, format!("exact match {exact:.2} < 0.70"));
    c.check(secs < 1800.0, format!("took {secs:.0}s"));
    c.note(format!("{steps} steps, held-out BLEU {bleu:.2}, exact match {:.0}%, {secs:.0}s", 100.0 * exact));
    c.finish();
}

// ---------------------------------------------------------------- 9

fn small_trainer(ds: &Dataset, vocab: &Vocabulary, max_steps: u64) -> Trainer {
    Trainer::new(
        Model::new(tiny_config(ds.feature_dim().unwrap(), vocab.len()), 21).unwrap(),
        AdamWConfig::default(),
        ScheduleConfig {
            warmup_steps: 4,
            period: 9,
            lr_max: 3e-3,
            ..ScheduleConfig::default()
        },
        LossConfig::default(),
        TrainConfig {
            max_steps,
            batch_size: 4,
            seed: 21,
            log_every: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap()
}

fn finish_run(t: &mut Trainer, ds: &Dataset) -> Vec<f64> {
    let mut losses = Vec::new();
    while !t.done() {
        losses.extend(t.train_epoch(ds, u64::MAX, &mut |_| {}).unwrap().losses);
    }
    losses
}

#[test]
fn criterion_09_reproducibility_and_persistence() {
    let mut c = Criterion::new(9, "reproducibility and persistence");
    let lang = synth_language(0.01);
    let items = lang.sample(18, 0, "t");
    let texts: Vec<&str> = items.iter().map(|i| i.transcript.as_str()).collect();
    let vocab = Vocabulary::train(&texts, 80).unwrap();
    let ds = to_dataset(items, &vocab);

    let mut a = small_trainer(&ds, &vocab, 25);
    let mut b = small_trainer(&ds, &vocab, 25);
    let la = finish_run(&mut a, &ds);
    let lb = finish_run(&mut b, &ds);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    c.check(la.len() == 25 && bits(&la) == bits(&lb), "loss traces differ");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    a.to_checkpoint().save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let reloaded = Model::from_checkpoint(&back).unwrap();
    let mut same = true;
    a.model.params.for_each(|name, t| {
        reloaded.params.for_each(|other, u| {
            if other == name {
                same &= bits_eq(t.data(), u.data());
            }
        })
    });
    c.check(same && reloaded.params == a.model.params, "checkpoint roundtrip not bit-exact");
    let again = dir.path().join("again.bin");
    back.save(&again).unwrap();
    c.check(std::fs::read(&path).unwrap() == std::fs::read(&again).unwrap(), "re-saved bytes differ");

    // interrupt mid-epoch, persist, resume
    let mut first = small_trainer(&ds, &vocab, 25);
    first.train_epoch(&ds, 7, &mut |_| {}).unwrap();
    let ck_path = dir.path().join("mid.bin");
    first.to_checkpoint().save(&ck_path).unwrap();
    let mut resumed = Trainer::from_checkpoint(
        &Checkpoint::load(&ck_path).unwrap(),
        first.optim.config.clone(),
        first.schedule.clone(),
        first.loss.clone(),
        first.config.clone(),
    )
    .unwrap();
    let rest = finish_run(&mut resumed, &ds);
    let gap = (rest.last().unwrap() - la.last().unwrap()).abs();
    c.check(gap <= 1e-6, format!("final loss gap {gap:e}"));
    c.note(format!("25-step traces identical; resumed at step 7, final loss gap {gap:.1e}"));
    c.finish();
}

fn bits_eq(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

// ---------------------------------------------------------------- 10

/// The extended grid, transcribed independently of the preset table:
/// `(id, enc-dec, embed, ffn, heads, activation, dropout, weight decay,
/// label smoothing)`.
type GridRow = (u32, &'static str, u32, u32, u32, &'static str, &'static str, &'static str, &'static str);

const GRID: [GridRow; 18] = [
    (19, "6-3", 512, 2048, 8, "relu", "0.3", "0.1", "0.1"),
    (20, "6-3", 512, 2048, 8, "gelu", "0.3", "0.1", "0.1"),
    (21, "6-3", 512, 2048, 8, "relu", "0.3", "0.1", "0.2"),
    (22, "6-3", 512, 2048, 8, "gelu", "0.4", "0.1", "0.1"),
    (23, "6-3", 512, 2048, 8, "relu", "0.3", "0.2", "0.1"),
    (24, "6-3", 512, 2048, 8, "gelu", "0.3", "0.2", "0.1"),
    (25, "6-3", 512, 2048, 8, "gelu", "0.4", "0.2", "0.2"),
    (26, "6-6", 256, 512, 4, "relu", "0.3", "0.1", "0.1"),
    (27, "6-6", 256, 512, 4, "gelu", "0.3", "0.1", "0.1"),
    (28, "6-6", 256, 512, 4, "relu", "0.4", "0.1", "0.1"),
    (29, "6-6", 256, 512, 4, "relu", "0.3", "0.1", "0.2"),
    (30, "6-6", 256, 512, 4, "relu", "0.3", "0.2", "0.1"),
    (31, "6-6", 256, 1024, 4, "relu", "0.3", "0.1", "0.1"),
    (32, "6-6", 256, 1024, 4, "gelu", "0.3", "0.1", "0.1"),
    (33, "6-6", 256, 1024, 4, "gelu", "0.4", "0.1", "0.1"),
    (34, "6-6", 256, 1024, 4, "gelu", "0.3", "0.1", "0.2"),
    (35, "6-6", 256, 1024, 4, "gelu", "0.3", "0.2", "0.1"),
    (36, "6-6", 256, 1024, 4, "gelu", "0.3", "0.2", "0.2"),
];

fn slt(args: &[&str]) -> std::process::Output {
    Command::new(common::slt_bin()).args(args).env_remove("SLT_SEED").output().unwrap()
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn dry_run_blocks(text: &str) -> Vec<(u32, Vec<(String, String)>)> {
    let mut out: Vec<(u32, Vec<(String, String)>)> = Vec::new();
    for line in text.lines() {
        if let Some(id) = line.strip_prefix("# preset ") {
            out.push((id.trim().parse().unwrap(), Vec::new()));
        } else if let Some((k, v)) = line.split_once(" = ") {
            out.last_mut().unwrap().1.push((k.to_string(), v.to_string()));
        }
    }
    out
}

fn grid_runs(data: &Path, out: &Path) -> std::process::Output {
    slt(&[
        "ablate",
        "19-36",
        "--data",
        data.to_str().unwrap(),
        "--steps",
        "2",
        "--out",
        out.to_str().unwrap(),
        // full widths; only batch, beam and output length are reduced
        "--set",
        "batch_size=4",
        "--set",
        "beam=2",
        "--set",
        "max_len=10",
    ])
}

#[test]
fn criterion_10_ablation_fidelity() {
    let mut c = Criterion::new(10, "ablation fidelity");
    let o = slt(&["ablate", "--dry-run", "19-36"]);
    c.check(o.status.success(), "dry run failed");
    let text = String::from_utf8(o.stdout).unwrap();

    let blocks = dry_run_blocks(&text);
    c.check(blocks.len() == 18, format!("{} presets listed", blocks.len()));
    for ((id, cfg), row) in blocks.iter().zip(GRID) {
        let get = |k: &str| cfg.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str()).unwrap_or("?");
        let seen = format!(
            "{}-{} {} {} {} {} {} {} {}",
            get("encoder_layers"),
            get("decoder_layers"),
            get("embed_dim"),
            get("ffn_dim"),
            get("attention_heads"),
            get("activation"),
            get("dropout"),
            get("weight_decay"),
            get("label_smoothing"),
        );
        let (_, layers, embed, ffn, heads, act, dropout, wd, ls) = row;
        let want = format!("{layers} {embed} {ffn} {heads} {act} {dropout} {wd} {ls}");
        c.check(*id == row.0, format!("preset order at {id}"));
        c.check(seen == want, format!("preset {id}: `{seen}` vs `{want}`"));
    }

    let path = golden("presets_19_36.txt");
    if std::env::var_os("SLT_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    match std::fs::read_to_string(&path) {
        Ok(want) => c.check(text == want, "dry run differs from the golden file"),
        Err(_) => c.check(false, "golden file missing; run once with SLT_BLESS=1"),
    }

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = slt(&["gen-synth", "--out", data.to_str().unwrap(), "--train", "16", "--val", "4"]);
    c.check(gen.status.success(), "gen-synth failed");
    let start = Instant::now();
    let o = grid_runs(&data, &dir.path().join("grid"));
    let secs = start.elapsed().as_secs_f64();
    c.check(o.status.success(), format!("ablate exited {:?}", o.status.code()));
    let table = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<_> = table.lines().skip(1).filter_map(slt_core::experiment::ResultRow::parse).collect();
    c.check(rows.len() == 18, format!("{} result rows", rows.len()));
    for r in &rows {
        c.check(r.ok() && r.steps == 2, format!("preset {}: {}", r.preset, r.status));
    }
    c.note(format!("18 presets match the table and the golden dry run; grid ran in {secs:.0}s"));
    c.finish();
}

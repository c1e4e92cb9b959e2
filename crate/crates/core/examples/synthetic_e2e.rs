//! Trains a small model on the synthetic corpus and reports held-out BLEU.
//!
//! `cargo run --release --example synthetic_e2e -- [steps]`

use std::time::Instant;

use slt_core::data::{Dataset, SynthConfig, SynthLanguage};
use slt_core::decode::DecodeConfig;
use slt_core::metrics::{evaluate_dataset, ExclusionList};
use slt_core::model::{Activation, Model, ModelConfig};
use slt_core::optim::{AdamWConfig, LossConfig, ScheduleConfig, ScheduleKind, TrainConfig, Trainer};
use slt_core::tokenizer::{CasingModel, Vocabulary};

fn to_dataset(items: Vec<slt_core::data::SynthItem>, vocab: &Vocabulary) -> Dataset {
    let examples = items
        .into_iter()
        .map(|it| slt_core::data::Example {
            tokens: slt_core::data::encode_target(vocab, &it.transcript),
            id: it.id,
            features: std::sync::Arc::new(it.features),
            transcript: it.transcript,
        })
        .collect();
    Dataset { examples }
}

fn main() -> slt_core::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(5000, |s| s.parse().unwrap());
    let lang = SynthLanguage::new(SynthConfig::default())?;
    let train = lang.sample(500, 0, "train");
    let val = lang.sample(50, 1, "val");
    let texts: Vec<&str> = train.iter().map(|i| i.transcript.as_str()).collect();
    let vocab = Vocabulary::train(&texts, 1000)?;
    let casing = CasingModel::learn(&texts);
    eprintln!("vocab {}", vocab.len());

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
    let model = Model::new(config, 1)?;
    let schedule = ScheduleConfig {
        kind: ScheduleKind::Cosine,
        lr_max: 2e-3,
        lr_min: 1e-5,
        warmup_steps: 300,
        period: steps.saturating_sub(300).max(1),
        warmup_init_lr: 1e-7,
    };
    let mut t = Trainer::new(
        model,
        AdamWConfig { weight_decay: 0.01, ..AdamWConfig::default() },
        schedule,
        LossConfig::default(),
        TrainConfig { batch_size: 16, max_steps: steps, epochs: 10_000, log_every: 250, ..TrainConfig::default() },
    )?;
    let start = Instant::now();
    while !t.done() {
        let next = t.state.step + 1000;
        while !t.done() && t.state.step < next {
            t.train_epoch(&train, next, &mut |l| eprintln!("{l}"))?;
        }
        let ev = evaluate_dataset(&t.model, &val, &vocab, &casing, &DecodeConfig::default(), &ExclusionList::english())?;
        eprintln!(
            "step {} {:.0}s BLEU {:.2} rBLEU {:.2} exact {:.2}",
            t.state.step,
            start.elapsed().as_secs_f64(),
            ev.bleu.score(),
            ev.rbleu.score(),
            ev.exact_match()
        );
    }
    Ok(())
}

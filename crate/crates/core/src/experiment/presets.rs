//! The ablation grid as named, read-only presets.
//!
//! Presets 1–12 vary architecture, learning rate and scheduler; 13–18 add
//! regularization on top of presets 1, 7 and 12; 19–36 explore deeper,
//! regularized models with ReLU or GeLU.

use super::RunConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Arch {
    enc: usize,
    dec: usize,
    embed: usize,
    ffn: usize,
    heads: usize,
}

const fn arch(enc: usize, dec: usize, embed: usize, ffn: usize, heads: usize) -> Arch {
    Arch {
        enc,
        dec,
        embed,
        ffn,
        heads,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Sched {
    InvSqrt,
    Cosine(u64),
}

/// `(id, architecture, lr, scheduler)`; regularization is the light setting
/// below.
const BASE: [(u32, Arch, f64, Sched); 12] = [
    (1, arch(3, 3, 512, 2048, 8), 0.001, Sched::InvSqrt),
    (2, arch(3, 3, 512, 2048, 8), 0.001, Sched::Cosine(17_000)),
    (3, arch(3, 3, 256, 1024, 4), 0.001, Sched::Cosine(17_000)),
    (4, arch(3, 3, 256, 1024, 4), 0.005, Sched::Cosine(17_000)),
    (5, arch(2, 2, 256, 1024, 4), 0.001, Sched::Cosine(17_000)),
    (6, arch(2, 2, 256, 1024, 4), 0.005, Sched::Cosine(17_000)),
    (7, arch(2, 2, 256, 512, 4), 0.001, Sched::Cosine(17_000)),
    (8, arch(4, 2, 256, 1024, 4), 0.001, Sched::Cosine(17_000)),
    (9, arch(4, 2, 256, 1024, 4), 0.005, Sched::Cosine(17_000)),
    (10, arch(6, 3, 512, 2048, 8), 0.001, Sched::Cosine(17_000)),
    (11, arch(6, 3, 512, 2048, 8), 0.001, Sched::Cosine(22_000)),
    (12, arch(6, 3, 256, 1024, 4), 0.001, Sched::Cosine(17_000)),
];

/// Dropout, weight decay and label smoothing of presets 1–12.
const LIGHT_REGULARIZATION: (f64, f64, f64) = (0.1, 0.001, 0.0);

/// `(id, base preset, dropout, weight decay, label smoothing)`
const REGULARIZED: [(u32, u32, f64, f64, f64); 6] = [
    (13, 1, 0.1, 0.001, 0.0),
    (14, 1, 0.3, 0.1, 0.1),
    (15, 7, 0.2, 0.01, 0.1),
    (16, 7, 0.3, 0.1, 0.1),
    (17, 12, 0.2, 0.01, 0.1),
    (18, 12, 0.3, 0.1, 0.1),
];

/// `(id, architecture, gelu, dropout, weight decay, label smoothing)`
const EXTENDED: [(u32, Arch, bool, f64, f64, f64); 18] = [
    (19, arch(6, 3, 512, 2048, 8), false, 0.3, 0.1, 0.1),
    (20, arch(6, 3, 512, 2048, 8), true, 0.3, 0.1, 0.1),
    (21, arch(6, 3, 512, 2048, 8), false, 0.3, 0.1, 0.2),
    (22, arch(6, 3, 512, 2048, 8), true, 0.4, 0.1, 0.1),
    (23, arch(6, 3, 512, 2048, 8), false, 0.3, 0.2, 0.1),
    (24, arch(6, 3, 512, 2048, 8), true, 0.3, 0.2, 0.1),
    (25, arch(6, 3, 512, 2048, 8), true, 0.4, 0.2, 0.2),
    (26, arch(6, 6, 256, 512, 4), false, 0.3, 0.1, 0.1),
    (27, arch(6, 6, 256, 512, 4), true, 0.3, 0.1, 0.1),
    (28, arch(6, 6, 256, 512, 4), false, 0.4, 0.1, 0.1),
    (29, arch(6, 6, 256, 512, 4), false, 0.3, 0.1, 0.2),
    (30, arch(6, 6, 256, 512, 4), false, 0.3, 0.2, 0.1),
    (31, arch(6, 6, 256, 1024, 4), false, 0.3, 0.1, 0.1),
    (32, arch(6, 6, 256, 1024, 4), true, 0.3, 0.1, 0.1),
    (33, arch(6, 6, 256, 1024, 4), true, 0.4, 0.1, 0.1),
    (34, arch(6, 6, 256, 1024, 4), true, 0.3, 0.1, 0.2),
    (35, arch(6, 6, 256, 1024, 4), true, 0.3, 0.2, 0.1),
    (36, arch(6, 6, 256, 1024, 4), true, 0.3, 0.2, 0.2),
];

/// Highest preset id.
pub const LAST_PRESET: u32 = 36;

/// A named set of overrides on top of the baseline configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub id: u32,
    pub settings: Vec<(&'static str, String)>,
}

fn arch_settings(a: Arch) -> Vec<(&'static str, String)> {
    vec![
        ("encoder_layers", a.enc.to_string()),
        ("decoder_layers", a.dec.to_string()),
        ("embed_dim", a.embed.to_string()),
        ("ffn_dim", a.ffn.to_string()),
        ("attention_heads", a.heads.to_string()),
    ]
}

fn regularization(dropout: f64, wd: f64, ls: f64) -> Vec<(&'static str, String)> {
    vec![
        ("dropout", dropout.to_string()),
        ("weight_decay", wd.to_string()),
        ("label_smoothing", ls.to_string()),
    ]
}

fn base_preset(id: u32) -> Option<Preset> {
    let &(id, a, lr, sched) = BASE.iter().find(|r| r.0 == id)?;
    let mut s = arch_settings(a);
    s.push(("activation", "relu".into()));
    s.push(("lr", lr.to_string()));
    match sched {
        Sched::InvSqrt => s.push(("scheduler", "inverse_sqrt".into())),
        Sched::Cosine(t) => {
            s.push(("scheduler", "cosine".into()));
            s.push(("restart_period", t.to_string()));
        }
    }
    let (d, wd, ls) = LIGHT_REGULARIZATION;
    s.extend(regularization(d, wd, ls));
    Some(Preset { id, settings: s })
}

impl Preset {
    pub fn get(id: u32) -> Option<Preset> {
        if let Some(p) = base_preset(id) {
            return Some(p);
        }
        if let Some(&(id, base, d, wd, ls)) = REGULARIZED.iter().find(|r| r.0 == id) {
            let mut s = base_preset(base)?.settings;
            s.retain(|(k, _)| !matches!(*k, "dropout" | "weight_decay" | "label_smoothing"));
            s.extend(regularization(d, wd, ls));
            return Some(Preset { id, settings: s });
        }
        let &(id, a, gelu, d, wd, ls) = EXTENDED.iter().find(|r| r.0 == id)?;
        let mut s = arch_settings(a);
        s.push(("activation", if gelu { "gelu" } else { "relu" }.into()));
        s.push(("lr", "0.001".into()));
        s.push(("scheduler", "cosine".into()));
        s.push(("restart_period", "17000".into()));
        s.extend(regularization(d, wd, ls));
        Some(Preset { id, settings: s })
    }

    pub fn all() -> Vec<Preset> {
        (1..=LAST_PRESET).filter_map(Preset::get).collect()
    }

    /// `base` with this preset's settings applied, validated.
    pub fn resolve(&self, base: &RunConfig) -> Result<RunConfig> {
        let mut cfg = base.clone();
        for (k, v) in &self.settings {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a preset selection such as `baseline`, `24`, `19-36` or `5,7`.
/// `baseline` is returned as `None`.
pub fn parse_selection(selection: &str) -> Result<Vec<Option<u32>>> {
    let mut out = Vec::new();
    for part in selection.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "baseline" {
            out.push(None);
            continue;
        }
        let bad = || Error::config("preset", format!("`{part}` is not a preset id, range or `baseline`"));
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                let n: u32 = part.parse().map_err(|_| bad())?;
                (n, n)
            }
        };
        if lo == 0 || hi > LAST_PRESET || lo > hi {
            return Err(Error::config("preset", format!("`{part}` is outside 1..={LAST_PRESET}")));
        }
        out.extend((lo..=hi).map(Some));
    }
    if out.is_empty() {
        return Err(Error::config("preset", "no presets selected"));
    }
    Ok(out)
}

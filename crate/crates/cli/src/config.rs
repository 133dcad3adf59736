//! Experiment configuration: one TOML document with flat sections.

use std::path::Path;

use naf_core::{BlobSpec, TrainConfig, TriggerMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every random stream of the run is derived from it.
    #[serde(default)]
    pub seed: u64,
    /// Forge triggers against a layer-normalized reference and normalize
    /// suspects before reading codes (counter to rescaling).
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub watermark: WatermarkConfig,
    #[serde(default)]
    pub coding: CodingConfig,
    #[serde(default)]
    pub forge: ForgeConfig,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub samples: usize,
    /// The first `train_samples` are used for training, the rest held out.
    pub train_samples: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub spread: f32,
    pub noise: f32,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            samples: 2400,
            train_samples: 2000,
            input_dim: 64,
            classes: 4,
            spread: 1.0,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Relu hidden widths; the output layer has `classes` units.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![64, 32, 16],
            epochs: 30,
            lr: 0.05,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WatermarkConfig {
    pub layer: String,
    pub bits: usize,
    pub threshold: f64,
    pub strength: f64,
    pub embed_epochs: usize,
}

impl Default for WatermarkConfig {
    fn default() -> Self {
        WatermarkConfig {
            layer: "fc2".into(),
            bits: 32,
            threshold: 0.15,
            strength: 0.5,
            embed_epochs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodingConfig {
    pub k: usize,
    pub t: usize,
    pub k_corrupted: usize,
}

impl Default for CodingConfig {
    fn default() -> Self {
        CodingConfig {
            k: 2,
            t: 60,
            k_corrupted: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForgeConfig {
    /// Trigger sets to build; `n` is the task-sample baseline.
    pub modes: Vec<TriggerMode>,
    /// Tuned variants for T2 (half fine-tuned, half pruned).
    pub j: usize,
    pub steps: usize,
    pub lr: f64,
    /// Learning rate of the fine-tuned T2 variants.
    pub finetune_lr: f64,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            modes: vec![TriggerMode::N, TriggerMode::T1, TriggerMode::T2],
            j: 6,
            steps: 1000,
            lr: 0.05,
            finetune_lr: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AttackConfig {
    Np {
        trials: usize,
    },
    Ftp {
        trials: usize,
        epochs: usize,
        lr: f64,
    },
    Npp {
        trials: usize,
        fraction: f64,
    },
    Rescale {
        trials: usize,
        lo: f64,
        hi: f64,
    },
}

impl AttackConfig {
    pub fn trials(&self) -> usize {
        match *self {
            AttackConfig::Np { trials }
            | AttackConfig::Ftp { trials, .. }
            | AttackConfig::Npp { trials, .. }
            | AttackConfig::Rescale { trials, .. } => trials,
        }
    }

    pub fn set_trials(&mut self, n: usize) {
        match self {
            AttackConfig::Np { trials }
            | AttackConfig::Ftp { trials, .. }
            | AttackConfig::Npp { trials, .. }
            | AttackConfig::Rescale { trials, .. } => *trials = n,
        }
    }

    /// Unique directory-safe name, e.g. `npp-0.1`.
    pub fn label(&self) -> String {
        match self {
            AttackConfig::Np { .. } => "np".into(),
            AttackConfig::Ftp { epochs, lr, .. } => format!("ftp-{epochs}ep-{lr}"),
            AttackConfig::Npp { fraction, .. } => format!("npp-{fraction}"),
            AttackConfig::Rescale { lo, hi, .. } => format!("rescale-{lo}-{hi}"),
        }
    }

    pub fn kind(&self) -> naf_core::AttackKind {
        match self {
            AttackConfig::Np { .. } => naf_core::AttackKind::Np,
            AttackConfig::Ftp { .. } => naf_core::AttackKind::Ftp,
            AttackConfig::Npp { .. } => naf_core::AttackKind::Npp,
            AttackConfig::Rescale { .. } => naf_core::AttackKind::Rescale,
        }
    }
}

fn default_attacks() -> Vec<AttackConfig> {
    vec![
        AttackConfig::Np { trials: 100 },
        AttackConfig::Ftp {
            trials: 100,
            epochs: 1,
            lr: 0.05,
        },
        AttackConfig::Npp {
            trials: 100,
            fraction: 0.1,
        },
        AttackConfig::Rescale {
            trials: 100,
            lo: 0.2,
            hi: 5.0,
        },
    ]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            normalize: false,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            watermark: WatermarkConfig::default(),
            coding: CodingConfig::default(),
            forge: ForgeConfig::default(),
            attacks: default_attacks(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Every violated invariant, each prefixed with its field path.
    pub fn validate(&self) -> CliResult<()> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, field: &str, msg: &str| {
            if !ok {
                errs.push(format!("{field}: {msg}"));
            }
        };
        let d = &self.data;
        check(d.input_dim >= 1, "data.input_dim", "must be at least 1");
        check(d.classes >= 2, "data.classes", "must be at least 2");
        check(d.train_samples >= 1, "data.train_samples", "must be at least 1");
        check(d.samples > d.train_samples, "data.samples", "must exceed data.train_samples to leave a held-out split");
        check(d.noise >= 0.0 && d.noise.is_finite(), "data.noise", "must be finite and non-negative");
        check(d.spread.is_finite() && d.spread > 0.0, "data.spread", "must be finite and positive");

        let m = &self.model;
        check(!m.hidden.is_empty(), "model.hidden", "needs at least one hidden layer");
        check(!m.hidden.contains(&0), "model.hidden", "widths must be positive");
        check(m.lr > 0.0 && m.lr.is_finite(), "model.lr", "must be positive");
        check(m.batch_size >= 1, "model.batch_size", "must be at least 1");

        let w = &self.watermark;
        // Hidden layers are fc1..fcH; only those are relu with a successor.
        let hidden_index = w
            .layer
            .strip_prefix("fc")
            .and_then(|i| i.parse::<usize>().ok())
            .filter(|&i| i >= 1 && i <= m.hidden.len());
        check(
            hidden_index.is_some(),
            "watermark.layer",
            &format!("`{}` is not a hidden layer of the architecture (fc1..fc{})", w.layer, m.hidden.len()),
        );
        check(w.bits >= 1, "watermark.bits", "must be at least 1");
        check(w.threshold > 0.0 && w.threshold <= 1.0, "watermark.threshold", "must lie in (0, 1]");
        check(w.strength > 0.0 && w.strength.is_finite(), "watermark.strength", "must be positive");

        let c = &self.coding;
        check(c.k >= 2, "coding.k", "must be at least 2");
        check(c.k <= 256, "coding.k", "must fit a byte-sized symbol");
        check(c.t >= 1, "coding.t", "must be at least 1");
        check(c.k_corrupted >= 1, "coding.k_corrupted", "must be at least 1");

        let f = &self.forge;
        check(!f.modes.is_empty(), "forge.modes", "needs at least one trigger mode");
        check(f.j.is_multiple_of(2), "forge.j", "must be even (half fine-tuned, half pruned variants)");
        check(
            !f.modes.contains(&TriggerMode::T2) || f.j >= 2,
            "forge.j",
            "T2 triggers need at least two variants",
        );
        check(f.steps >= 1, "forge.steps", "must be at least 1");
        check(f.lr > 0.0 && f.lr.is_finite(), "forge.lr", "must be positive");
        check(f.finetune_lr > 0.0 && f.finetune_lr.is_finite(), "forge.finetune_lr", "must be positive");
        check(
            !f.modes.contains(&TriggerMode::N) || c.t <= d.train_samples,
            "coding.t",
            "the task-sample baseline needs at least T training samples",
        );

        let mut labels = Vec::new();
        for (i, a) in self.attacks.iter().enumerate() {
            let field = |name: &str| format!("attacks[{i}].{name}");
            check(a.trials() >= 1, &field("trials"), "must be at least 1");
            match *a {
                AttackConfig::Ftp { lr, .. } => check(lr > 0.0 && lr.is_finite(), &field("lr"), "must be positive"),
                AttackConfig::Npp { fraction, .. } => {
                    check((0.0..1.0).contains(&fraction), &field("fraction"), "must lie in [0, 1)")
                }
                AttackConfig::Rescale { lo, hi, .. } => {
                    check(lo > 0.0 && lo <= hi && hi.is_finite(), &field("lo"), "need 0 < lo <= hi")
                }
                AttackConfig::Np { .. } => {}
            }
            check(!labels.contains(&a.label()), &field("kind"), "duplicate attack");
            labels.push(a.label());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs))
        }
    }

    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            samples: self.data.samples,
            input_dim: self.data.input_dim,
            classes: self.data.classes,
            spread: self.data.spread,
            noise: self.data.noise,
            seed: derive_seed(self.seed, "data"),
        }
    }

    pub fn train_config(&self, epochs: usize, stream: &str) -> TrainConfig {
        TrainConfig {
            epochs,
            lr: self.model.lr,
            batch_size: self.model.batch_size,
            seed: derive_seed(self.seed, stream),
            l2: 0.0,
        }
    }

    /// Width of the watermarked layer.
    pub fn layer_width(&self) -> usize {
        let i: usize = self.watermark.layer[2..].parse().expect("validated layer name");
        self.model.hidden[i - 1]
    }
}

/// Independent seed for a named random stream of the run.
pub fn derive_seed(root: u64, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stream.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

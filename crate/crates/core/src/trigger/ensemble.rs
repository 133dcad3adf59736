use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NafError, Result};
use crate::nn::{finetune_variant, prune_variant, Dataset, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VariantProvenance {
    Original,
    Finetune { epochs: usize, lr: f64, seed: u64 },
    Prune { fraction: f64, seed: u64 },
}

impl std::fmt::Display for VariantProvenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VariantProvenance::Original => write!(f, "original"),
            VariantProvenance::Finetune { epochs, lr, seed } => {
                write!(f, "finetune epochs={epochs} lr={lr} seed={seed}")
            }
            VariantProvenance::Prune { fraction, seed } => write!(f, "prune fraction={fraction} seed={seed}"),
        }
    }
}

/// The original network at index 0 followed by `J` tuned copies.
#[derive(Debug, Clone)]
pub struct VariantEnsemble {
    pub networks: Vec<Network>,
    pub provenance: Vec<VariantProvenance>,
}

impl VariantEnsemble {
    pub fn original_only(net: &Network) -> Self {
        VariantEnsemble {
            networks: vec![net.clone()],
            provenance: vec![VariantProvenance::Original],
        }
    }

    pub fn original(&self) -> &Network {
        &self.networks[0]
    }

    /// Number of tuned variants, `J`.
    pub fn variants(&self) -> usize {
        self.networks.len() - 1
    }

    pub fn refs(&self) -> Vec<&Network> {
        self.networks.iter().collect()
    }
}

/// Builds `J/2` fine-tuned variants (1, 2, 3, ... epochs at `finetune_lr`)
/// and `J/2` copies with the watermarked layer pruned (5%, 10%, 15%, ...).
pub fn make_variant_ensemble(
    net: &Network,
    data: &Dataset,
    layer_name: &str,
    j: usize,
    finetune_lr: f64,
    seed: u64,
) -> Result<VariantEnsemble> {
    if !j.is_multiple_of(2) {
        return Err(NafError::Config(format!(
            "variant count J must be even (half fine-tuned, half pruned), got {j}"
        )));
    }
    net.layer_index(layer_name)?;
    let half = j / 2;
    let mut provenance = vec![VariantProvenance::Original];
    for i in 0..half {
        provenance.push(VariantProvenance::Finetune {
            epochs: i + 1,
            lr: finetune_lr,
            seed: seed.wrapping_add(i as u64),
        });
    }
    for i in 0..half {
        provenance.push(VariantProvenance::Prune {
            fraction: 0.05 * (i + 1) as f64,
            seed: seed.wrapping_add((half + i) as u64),
        });
    }
    let networks = provenance
        .par_iter()
        .map(|p| match *p {
            VariantProvenance::Original => Ok(net.clone()),
            VariantProvenance::Finetune { epochs, lr, seed } => finetune_variant(net, data, epochs, lr, seed),
            VariantProvenance::Prune { fraction, seed } => prune_variant(net, layer_name, fraction, seed),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VariantEnsemble { networks, provenance })
}

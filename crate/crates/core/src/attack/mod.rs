//! Functionality-equivalence attacks on a watermarked layer.
//!
//! Every attack returns a new network; the input is never modified.

mod permutation;

pub use permutation::{random_permutation, PermutationSpec};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NafError, Result};
use crate::matrix::Matrix;
use crate::nn::{finetune_variant, prune_variant, Activation, Dataset, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AttackKind {
    /// Neuron permutation.
    Np,
    /// Fine-tuning, then permutation.
    Ftp,
    /// Neuron pruning, then permutation.
    Npp,
    /// Per-neuron positive rescaling, then permutation.
    Rescale,
}

impl AttackKind {
    /// Attacks whose output is the original function up to float rounding.
    pub fn is_exact(self) -> bool {
        matches!(self, AttackKind::Np | AttackKind::Rescale)
    }

    pub fn label(self) -> &'static str {
        match self {
            AttackKind::Np => "NP",
            AttackKind::Ftp => "FTP",
            AttackKind::Npp => "NPP",
            AttackKind::Rescale => "RESCALE",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = NafError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NP" => Ok(AttackKind::Np),
            "FTP" => Ok(AttackKind::Ftp),
            "NPP" => Ok(AttackKind::Npp),
            "RESCALE" => Ok(AttackKind::Rescale),
            other => Err(NafError::Config(format!("unknown attack kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub permutation: PermutationSpec,
    /// Remaining attack parameters (epochs, lr, fraction, ...).
    pub params: BTreeMap<String, f64>,
    /// Max absolute output difference on the probe batch.
    pub functional_drift: f64,
    pub task_accuracy: Option<f64>,
    pub seed: u64,
}

/// Reorders the neurons of `spec.layer_name`: row `i` of its weights and
/// bias move to row `perm[i]`, and the successor layer's input column `i`
/// moves to column `perm[i]`, so the network function is unchanged.
pub fn permute_neurons(net: &Network, spec: &PermutationSpec) -> Result<Network> {
    let idx = net.layer_index(&spec.layer_name)?;
    if idx + 1 >= net.num_layers() {
        return Err(NafError::Config(format!(
            "cannot permute `{}`: the output layer has no successor to cancel the permutation",
            spec.layer_name
        )));
    }
    let n = net.layers()[idx].out_dim();
    if spec.len() != n {
        return Err(NafError::shape(format!("permutation of {}", spec.layer_name), n, spec.len()));
    }
    let mut out = net.clone();
    let layers = out.layers_mut();
    {
        let src = &net.layers()[idx];
        let dst = &mut layers[idx];
        for (i, &to) in spec.perm.iter().enumerate() {
            dst.weights_mut().row_mut(to).copy_from_slice(src.weights().row(i));
            dst.biases_mut()[to] = src.biases()[i];
        }
    }
    {
        let src = &net.layers()[idx + 1];
        let dst = &mut layers[idx + 1];
        for r in 0..src.out_dim() {
            let from = src.weights().row(r);
            let to_row = dst.weights_mut().row_mut(r);
            for (i, &to) in spec.perm.iter().enumerate() {
                to_row[to] = from[i];
            }
        }
    }
    Ok(out)
}

/// Multiplies neuron `i`'s incoming row and bias by `scales[i]` and divides
/// the successor's column `i` by the same factor. Exact for relu layers.
pub fn attack_rescale(net: &Network, layer_name: &str, scales: &[f64], seed: u64) -> Result<Network> {
    let idx = net.layer_index(layer_name)?;
    if idx + 1 >= net.num_layers() {
        return Err(NafError::Config(format!("cannot rescale `{layer_name}`: no successor layer")));
    }
    if net.layers()[idx].activation() != Activation::Relu {
        return Err(NafError::Config(format!(
            "rescaling `{layer_name}` is only function-preserving for relu layers"
        )));
    }
    let n = net.layers()[idx].out_dim();
    if scales.len() != n {
        return Err(NafError::shape(format!("scales for {layer_name}"), n, scales.len()));
    }
    if let Some(bad) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(NafError::Config(format!("rescale factors must be positive and finite, got {bad}")));
    }
    let mut out = net.clone();
    scale_neurons(&mut out, idx, scales);
    out.metadata.insert("attack".into(), format!("rescale seed={seed}"));
    Ok(out)
}

/// In-place rescale of layer `idx` with inverse compensation downstream.
pub(crate) fn scale_neurons(net: &mut Network, idx: usize, scales: &[f64]) {
    let layers = net.layers_mut();
    {
        let layer = &mut layers[idx];
        for (i, &s) in scales.iter().enumerate() {
            for w in layer.weights_mut().row_mut(i) {
                *w = (f64::from(*w) * s) as f32;
            }
            let b = &mut layer.biases_mut()[i];
            *b = (f64::from(*b) * s) as f32;
        }
    }
    let next = &mut layers[idx + 1];
    for r in 0..next.out_dim() {
        for (w, &s) in next.weights_mut().row_mut(r).iter_mut().zip(scales) {
            *w = (f64::from(*w) / s) as f32;
        }
    }
}

/// Log-uniform factors in `[lo, hi]`.
pub fn random_scales(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|_| rng.gen_range(a..=b).exp()).collect()
}

/// Fine-tune the whole network, then permute the watermarked layer.
pub fn attack_ftp(
    net: &Network,
    data: &Dataset,
    epochs: usize,
    lr: f64,
    spec: &PermutationSpec,
    seed: u64,
) -> Result<Network> {
    let tuned = finetune_variant(net, data, epochs, lr, seed)?;
    permute_neurons(&tuned, spec)
}

/// Magnitude-prune the watermarked layer, then permute it.
pub fn attack_npp(net: &Network, fraction: f64, spec: &PermutationSpec, seed: u64) -> Result<Network> {
    let pruned = prune_variant(net, &spec.layer_name, fraction, seed)?;
    permute_neurons(&pruned, spec)
}

/// Max absolute difference between the final outputs of two networks.
pub fn functional_drift(a: &Network, b: &Network, probes: &Matrix) -> Result<f64> {
    let last = a.num_layers() - 1;
    let ya = a.layer_output(probes, last)?;
    let yb = b.layer_output(probes, b.num_layers() - 1)?;
    if ya.cols() != yb.cols() {
        return Err(NafError::shape("output width", ya.cols(), yb.cols()));
    }
    Ok(ya.max_abs_diff(&yb))
}

/// `count` probe inputs drawn uniformly from `[-scale, scale]^input_dim`.
pub fn random_probes(input_dim: usize, count: usize, scale: f32, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..count * input_dim).map(|_| rng.gen_range(-scale..=scale)).collect();
    Matrix::from_vec(count, input_dim, data).unwrap()
}

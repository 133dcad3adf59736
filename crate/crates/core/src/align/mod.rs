//! Recovering the original neuron order of a suspicious network.
//!
//! The triggers are fed through the suspect, each neuron's outputs are
//! transcribed into a code by nearest centroid, and codes are matched to
//! codewords by a minimum-total-distance bijective assignment. Whenever all
//! corruptions stay inside the code's decoding radius this equals decoding
//! every neuron independently; beyond it the assignment still yields a
//! valid permutation.

mod hungarian;

use serde::{Deserialize, Serialize};

use crate::attack::{permute_neurons, scale_neurons, PermutationSpec};
use crate::coding::{decode_codeword, nearest_centroid, symbol_distance, Codebook};
use crate::error::{NafError, Result};
use crate::matrix::Matrix;
use crate::nn::{Activation, Network};
use crate::trigger::TriggerSet;
use crate::watermark::{OVResult, WatermarkBackend};

pub(crate) use hungarian::min_cost_assignment;

/// Transcribed outputs of the watermarked layer on the trigger set.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedCodeMatrix {
    /// `N` rows of `T` symbols, in the suspect's neuron order.
    pub codes: Vec<Vec<u8>>,
    /// `N × T` raw outputs.
    pub raw_outputs: Matrix,
}

impl ObservedCodeMatrix {
    /// Neurons whose output is exactly zero on every trigger.
    pub fn dead_neurons(&self) -> Vec<usize> {
        (0..self.raw_outputs.rows())
            .filter(|&n| self.raw_outputs.row(n).iter().all(|&y| y == 0.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Estimated attack permutation: original neuron `n` sits at position
    /// `perm_estimate[n]` of the suspect.
    pub perm_estimate: Vec<usize>,
    /// Distance between codeword `n` and the code it was matched with.
    pub per_neuron_distance: Vec<usize>,
    pub total_distance: usize,
    /// Neurons whose independent nearest-codeword decision was shared with
    /// another neuron and had to be resolved by the assignment.
    pub collisions_resolved: usize,
    /// Suspect positions with constant zero output.
    pub dead_neurons: Vec<usize>,
    /// Fraction of neurons mapped to their true origin, when known.
    pub accuracy: Option<f64>,
    /// Same, restricted to neurons that are not dead in the suspect.
    pub live_accuracy: Option<f64>,
}

impl AlignmentResult {
    pub fn as_permutation(&self, layer_name: &str) -> PermutationSpec {
        PermutationSpec {
            layer_name: layer_name.to_string(),
            perm: self.perm_estimate.clone(),
            seed: 0,
        }
    }

    /// Fills in the accuracy fields against the permutation that was
    /// actually applied.
    pub fn score(&mut self, truth: &PermutationSpec) {
        let n = self.perm_estimate.len();
        let hits = |live_only: bool| {
            let mut total = 0usize;
            let mut hit = 0usize;
            for (orig, &est) in self.perm_estimate.iter().enumerate() {
                let actual = truth.perm[orig];
                if live_only && self.dead_neurons.contains(&actual) {
                    continue;
                }
                total += 1;
                hit += (est == actual) as usize;
            }
            (total > 0).then(|| hit as f64 / total as f64)
        };
        if truth.len() == n {
            self.accuracy = hits(false);
            self.live_accuracy = hits(true);
        }
    }
}

/// Feeds every trigger through `net` and transcribes the watermarked layer's
/// outputs into symbols by nearest centroid.
pub fn read_codes(net: &Network, triggers: &TriggerSet) -> Result<ObservedCodeMatrix> {
    let idx = net
        .layer_index(&triggers.layer_name)
        .map_err(|_| NafError::Tamper(format!("layer `{}` is missing", triggers.layer_name)))?;
    if net.input_dim() != triggers.input_dim() {
        return Err(NafError::Tamper(format!(
            "suspect takes {} inputs, triggers have {}",
            net.input_dim(),
            triggers.input_dim()
        )));
    }
    let outputs = net.layer_output(&triggers.triggers, idx)?;
    let raw_outputs = outputs.transpose();
    let cs = &triggers.centroid_set;
    let codes = (0..raw_outputs.rows())
        .map(|n| raw_outputs.row(n).iter().map(|&y| nearest_centroid(y, cs) as u8).collect())
        .collect();
    Ok(ObservedCodeMatrix { codes, raw_outputs })
}

/// Matches observed codes to codewords with a minimum-total-distance
/// bijection.
pub fn align(observed: &ObservedCodeMatrix, cb: &Codebook) -> Result<AlignmentResult> {
    let n = cb.n();
    if observed.codes.len() != n {
        return Err(NafError::Tamper(format!(
            "suspect layer has {} neurons, codebook has {n}",
            observed.codes.len()
        )));
    }
    if let Some(bad) = observed.codes.iter().find(|c| c.len() != cb.t()) {
        return Err(NafError::shape("observed code length", cb.t(), bad.len()));
    }
    // cost[i][m]: suspect neuron i against codeword m
    let costs: Vec<Vec<i64>> = observed
        .codes
        .iter()
        .map(|code| cb.words().map(|w| symbol_distance(w, code) as i64).collect())
        .collect();
    let assignment = min_cost_assignment(&costs);

    let mut perm_estimate = vec![0; n];
    for (i, &m) in assignment.iter().enumerate() {
        perm_estimate[m] = i;
    }
    let per_neuron_distance: Vec<usize> = (0..n).map(|m| costs[perm_estimate[m]][m] as usize).collect();

    let mut claims = vec![0usize; n];
    let independent: Vec<usize> = observed.codes.iter().map(|c| decode_codeword(c, cb).0).collect();
    for &m in &independent {
        claims[m] += 1;
    }
    let collisions_resolved = independent.iter().filter(|&&m| claims[m] > 1).count();

    Ok(AlignmentResult {
        total_distance: per_neuron_distance.iter().sum(),
        perm_estimate,
        per_neuron_distance,
        collisions_resolved,
        dead_neurons: observed.dead_neurons(),
        accuracy: None,
        live_accuracy: None,
    })
}

/// Undoes the estimated permutation on the suspect's watermarked layer.
pub fn apply_alignment(net: &Network, layer_name: &str, result: &AlignmentResult) -> Result<Network> {
    let spec = PermutationSpec::new(layer_name, result.perm_estimate.clone(), 0)?;
    permute_neurons(net, &spec.inverse())
}

/// Scales every neuron's incoming row and bias to unit L2 norm and pushes
/// the inverse factor into the successor layer. Neurons with an all-zero row
/// are left as they are.
pub fn normalize_layer(net: &Network, layer_name: &str) -> Result<Network> {
    let idx = net.layer_index(layer_name)?;
    if idx + 1 >= net.num_layers() {
        return Err(NafError::Config(format!("cannot normalize `{layer_name}`: no successor layer")));
    }
    let layer = &net.layers()[idx];
    if layer.activation() != Activation::Relu {
        return Err(NafError::Config(format!("normalizing `{layer_name}` requires a relu layer")));
    }
    let scales: Vec<f64> = (0..layer.out_dim())
        .map(|o| {
            let sq: f64 = layer
                .weights()
                .row(o)
                .iter()
                .chain(std::iter::once(&layer.biases()[o]))
                .map(|&w| f64::from(w) * f64::from(w))
                .sum();
            if sq > 0.0 {
                1.0 / sq.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut out = net.clone();
    scale_neurons(&mut out, idx, &scales);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignOptions {
    /// Normalize the watermarked layer before reading codes (counter to the
    /// rescaling attack). Forced on when the trigger set was forged against a
    /// normalized network.
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedAlignment {
    pub ov: OVResult,
    pub alignment: Option<AlignmentResult>,
    /// Set when the suspect's shape does not fit the artifacts; verification
    /// then counts as failed.
    pub tamper: Option<String>,
}

/// Full pipeline: optional normalization, code reading, assignment, undoing
/// the permutation on the suspect as-is, then watermark verification.
///
/// A codebook that does not match the trigger set is an integrity error.
/// Shape mismatches in the suspect are not errors but a failed verification
/// with the cause attached.
pub fn verify_with_alignment<B: WatermarkBackend>(
    net: &Network,
    triggers: &TriggerSet,
    cb: &Codebook,
    backend: &B,
    record: &B::Record,
    options: AlignOptions,
) -> Result<VerifiedAlignment> {
    if cb.hash() != triggers.codebook_hash {
        return Err(NafError::Integrity("codebook hash does not match the trigger set".into()));
    }
    if cb.t() != triggers.len() {
        return Err(NafError::Integrity(format!(
            "codebook length {} differs from trigger count {}",
            cb.t(),
            triggers.len()
        )));
    }
    let attempt = || -> Result<(OVResult, AlignmentResult)> {
        let reference = if options.normalize || triggers.normalized {
            normalize_layer(net, &triggers.layer_name).map_err(|e| NafError::Tamper(e.to_string()))?
        } else {
            net.clone()
        };
        let observed = read_codes(&reference, triggers)?;
        let alignment = align(&observed, cb)?;
        let restored = apply_alignment(net, &triggers.layer_name, &alignment)?;
        Ok((backend.verify(&restored, record)?, alignment))
    };
    match attempt() {
        Ok((ov, alignment)) => Ok(VerifiedAlignment {
            ov,
            alignment: Some(alignment),
            tamper: None,
        }),
        Err(NafError::Tamper(cause)) => Ok(VerifiedAlignment {
            ov: OVResult {
                accepted: false,
                ber: 1.0,
                bits_extracted: Vec::new(),
            },
            alignment: None,
            tamper: Some(cause),
        }),
        Err(e) => Err(e),
    }
}

//! Mini-batch SGD on softmax cross-entropy with an optional pluggable
//! regularizer (the watermark backends hook in here).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DenseLayer, Dataset, Network};
use crate::error::{NafError, Result};

/// Gradient of a scalar loss w.r.t. one layer's parameters, row-major like
/// the weights themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerGrad {
    pub(crate) fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGrad {
            weights: vec![0.0; layer.out_dim() * layer.in_dim()],
            biases: vec![0.0; layer.out_dim()],
        }
    }
}

/// Extra loss term added to the task loss at every optimizer step.
pub trait Regularizer: Sync {
    /// Adds the penalty's gradient into `grads` (one entry per layer) and
    /// returns the penalty value.
    fn penalty(&self, net: &Network, grads: &mut [LayerGrad]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight-decay coefficient applied to weights (not biases).
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 0.05,
            batch_size: 32,
            seed: 0,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Full-dataset cross-entropy before the first update.
    pub initial_loss: f64,
    /// Mean mini-batch cross-entropy observed during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-dataset cross-entropy after the last update.
    pub final_loss: f64,
}

/// Trains a copy of `net`; the input network is never modified.
///
/// The optimizer is plain SGD with a fixed learning rate. Shuffling is the
/// only source of randomness and is driven by `hp.seed`, so identical inputs
/// give bit-identical weights.
pub fn train(
    net: &Network,
    data: &Dataset,
    hp: &TrainConfig,
    extra: Option<&dyn Regularizer>,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(NafError::Config("training data is empty".into()));
    }
    if !(hp.lr > 0.0 && hp.lr.is_finite()) {
        return Err(NafError::Config(format!("learning rate must be positive, got {}", hp.lr)));
    }
    if hp.batch_size == 0 {
        return Err(NafError::Config("batch_size must be positive".into()));
    }
    if data.input_dim() != net.input_dim() {
        return Err(NafError::shape("training inputs", net.input_dim(), data.input_dim()));
    }
    if data.num_classes > net.output_dim() {
        return Err(NafError::shape("output classes", data.num_classes, net.output_dim()));
    }

    let initial_loss = cross_entropy(net, data)?;
    let mut net = net.clone();
    if hp.epochs == 0 {
        return Ok(TrainOutcome {
            network: net,
            initial_loss,
            epoch_losses: Vec::new(),
            final_loss: initial_loss,
        });
    }

    let last = net.num_layers() - 1;
    let classes = net.output_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hp.batch_size) {
            let batch = data.inputs.select_rows(chunk);
            let tape = net.forward_tape(&batch, last)?;
            let logits = &tape.pre[last];
            let scale = 1.0 / chunk.len() as f64;
            let mut dz = vec![0.0; chunk.len() * classes];
            let mut batch_loss = 0.0;
            for (r, &sample) in chunk.iter().enumerate() {
                let (loss, probs) = log_softmax_loss(logits.row(r), data.labels[sample]);
                batch_loss += loss;
                for (k, p) in probs.into_iter().enumerate() {
                    let target = if k == data.labels[sample] { 1.0 } else { 0.0 };
                    dz[r * classes + k] = (p - target) * scale;
                }
            }
            batch_loss *= scale;
            let (mut grads, _) = net.backprop_pre(&tape, last, dz, true);
            if let Some(reg) = extra {
                batch_loss += reg.penalty(&net, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(NafError::Divergence {
                    epoch,
                    loss: batch_loss,
                });
            }
            sgd_step(&mut net, &grads, hp);
            loss_sum += batch_loss;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
    }

    let final_loss = cross_entropy(&net, data)?;
    if !final_loss.is_finite() {
        return Err(NafError::Divergence {
            epoch: hp.epochs - 1,
            loss: final_loss,
        });
    }
    net.metadata.insert("optimizer".into(), "sgd".into());
    Ok(TrainOutcome {
        network: net,
        initial_loss,
        epoch_losses,
        final_loss,
    })
}

fn sgd_step(net: &mut Network, grads: &[LayerGrad], hp: &TrainConfig) {
    for (layer, g) in net.layers_mut().iter_mut().zip(grads) {
        for (w, gw) in layer.weights_mut().as_mut_slice().iter_mut().zip(&g.weights) {
            let wf = f64::from(*w);
            *w = (wf - hp.lr * (gw + hp.l2 * wf)) as f32;
        }
        for (b, gb) in layer.biases_mut().iter_mut().zip(&g.biases) {
            *b = (f64::from(*b) - hp.lr * gb) as f32;
        }
    }
}

/// Cross-entropy of one sample from its logits; also returns the softmax.
fn log_softmax_loss(logits: &[f32], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().map(|&z| f64::from(z)).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (f64::from(z) - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (f64::from(logits[label]) - max);
    (loss, exps.into_iter().map(|e| e / sum).collect())
}

/// Mean softmax cross-entropy over the whole dataset, computed from logits.
pub(crate) fn cross_entropy(net: &Network, data: &Dataset) -> Result<f64> {
    let last = net.num_layers() - 1;
    let tape = net.forward_tape(&data.inputs, last)?;
    let logits = &tape.pre[last];
    let total: f64 = (0..data.len())
        .map(|r| log_softmax_loss(logits.row(r), data.labels[r]).0)
        .sum();
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::BlobSpec;

    fn blobs() -> Dataset {
        BlobSpec {
            samples: 200,
            input_dim: 4,
            classes: 3,
            spread: 1.5,
            noise: 0.5,
            seed: 3,
        }
        .generate()
        .unwrap()
    }

    #[test]
    fn zero_epochs_returns_identical_network() {
        let net = Network::mlp(4, &[6], 3, 1).unwrap();
        let hp = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&net, &blobs(), &hp, None).unwrap();
        assert_eq!(out.network, net);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let net = Network::mlp(4, &[6], 3, 1).unwrap();
        let hp = TrainConfig {
            epochs: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(&net, &blobs(), &hp, None).unwrap().network;
        let b = train(&net, &blobs(), &hp, None).unwrap().network;
        assert!(a.params_bit_equal(&b));
        let c = train(&net, &blobs(), &TrainConfig { seed: 12, ..hp }, None).unwrap().network;
        assert!(!a.params_bit_equal(&c));
    }

    #[test]
    fn loss_decreases() {
        let net = Network::mlp(4, &[8], 3, 2).unwrap();
        let hp = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let out = train(&net, &blobs(), &hp, None).unwrap();
        assert!(out.final_loss <= out.initial_loss);
        assert!(out.epoch_losses.last().unwrap() <= out.epoch_losses.first().unwrap());
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let net = Network::mlp(4, &[6], 3, 1).unwrap();
        let hp = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&net, &blobs(), &hp, None), Err(NafError::Config(_))));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let net = Network::mlp(4, &[16, 16], 3, 1).unwrap();
        let hp = TrainConfig {
            epochs: 50,
            lr: 1e30,
            ..TrainConfig::default()
        };
        match train(&net, &blobs(), &hp, None) {
            Err(NafError::Divergence { epoch, .. }) => assert!(epoch < 50),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.final_loss)),
        }
    }
}

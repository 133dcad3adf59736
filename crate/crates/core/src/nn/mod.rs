//! Dense feedforward network engine.
//!
//! Layers are addressed by canonical positional names `fc1`, `fc2`, ... so a
//! model loaded from disk resolves the same names it was trained with. Each
//! output unit of a layer is one neuron.

mod data;
mod grad;
mod io;
mod train;
mod variants;

pub use data::{BlobSpec, Dataset};
pub use grad::{input_gradient, input_loss_and_gradient, TriggerObjective};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use train::{train, LayerGrad, Regularizer, TrainConfig, TrainOutcome};
pub use variants::{finetune_variant, prune_variant};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NafError, Result};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    /// Row-wise softmax; only allowed on the final layer.
    Softmax,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Softmax => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Softmax),
            _ => None,
        }
    }

    /// `f(a·x) = a·f(x)` for every `a > 0`.
    pub fn is_positive_homogeneous(self) -> bool {
        matches!(self, Activation::Identity | Activation::Relu)
    }

    fn apply_row(self, pre: &[f32], out: &mut [f32]) {
        match self {
            Activation::Identity => out.copy_from_slice(pre),
            Activation::Relu => {
                for (o, &z) in out.iter_mut().zip(pre) {
                    *o = if z > 0.0 { z } else { 0.0 };
                }
            }
            Activation::Softmax => {
                let max = pre.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let exps: Vec<f64> = pre.iter().map(|&z| f64::from(z - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for (o, e) in out.iter_mut().zip(exps) {
                    *o = (e / sum) as f32;
                }
            }
        }
    }

    /// Maps an upstream gradient on the activation output to the gradient on
    /// the pre-activation, row by row.
    fn backward_row(self, pre: &[f32], out: &[f32], grad_out: &[f64], grad_pre: &mut [f64]) {
        match self {
            Activation::Identity => grad_pre.copy_from_slice(grad_out),
            Activation::Relu => {
                for ((g, &z), &go) in grad_pre.iter_mut().zip(pre).zip(grad_out) {
                    *g = if z > 0.0 { go } else { 0.0 };
                }
            }
            Activation::Softmax => {
                let inner: f64 = out.iter().zip(grad_out).map(|(y, g)| f64::from(*y) * g).sum();
                for ((g, &y), &go) in grad_pre.iter_mut().zip(out).zip(grad_out) {
                    *g = f64::from(y) * (go - inner);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    biases: Vec<f32>,
    activation: Activation,
}

impl DenseLayer {
    /// `weights` is `out_dim × in_dim`.
    pub fn new(weights: Matrix, biases: Vec<f32>, activation: Activation) -> Result<Self> {
        if biases.len() != weights.rows() {
            return Err(NafError::shape("layer biases", weights.rows(), biases.len()));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(NafError::Config("layer dimensions must be positive".into()));
        }
        if !weights.is_finite() || biases.iter().any(|b| !b.is_finite()) {
            return Err(NafError::Config("layer parameters must be finite".into()));
        }
        Ok(DenseLayer {
            weights,
            biases,
            activation,
        })
    }

    /// Uniform(-a, a) weights with `a = sqrt(6 / (in + out))`, zero biases.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt() as f32;
        let data = (0..in_dim * out_dim).map(|_| rng.gen_range(-a..a)).collect();
        DenseLayer {
            weights: Matrix::from_vec(out_dim, in_dim, data).unwrap(),
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &[f32] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [f32] {
        &mut self.biases
    }

    fn pre_activation(&self, input: &Matrix) -> Matrix {
        let mut pre = Matrix::zeros(input.rows(), self.out_dim());
        for r in 0..input.rows() {
            let x = input.row(r);
            let out = pre.row_mut(r);
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = (dot(self.weights.row(o), x) + f64::from(self.biases[o])) as f32;
            }
        }
        pre
    }

    fn activate(&self, pre: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(pre.rows(), pre.cols());
        for r in 0..pre.rows() {
            self.activation.apply_row(pre.row(r), out.row_mut(r));
        }
        out
    }
}

/// Post-activation outputs of every layer for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub outputs: Vec<Matrix>,
}

impl ActivationTrace {
    pub fn last(&self) -> &Matrix {
        self.outputs.last().expect("trace of a network with no layers")
    }

    pub fn layer(&self, index: usize) -> &Matrix {
        &self.outputs[index]
    }
}

/// Inputs and pre-activations retained for backpropagation.
pub(crate) struct Tape {
    /// `acts[0]` is the batch, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Matrix>,
    pub pre: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<DenseLayer>,
    pub metadata: BTreeMap<String, String>,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NafError::Config("network needs at least one layer".into()));
        }
        let mut prev = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() != prev {
                return Err(NafError::shape(format!("layer {}", layer_name(i)), prev, l.in_dim()));
            }
            if l.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(NafError::Config(format!(
                    "softmax is only supported on the output layer, found on {}",
                    layer_name(i)
                )));
            }
            prev = l.out_dim();
        }
        Ok(Network {
            input_dim,
            layers,
            metadata: BTreeMap::new(),
        })
    }

    /// Relu hidden layers of the given widths followed by a softmax output
    /// layer, Glorot-uniform initialized from `seed`.
    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || classes == 0 || hidden.contains(&0) {
            return Err(NafError::Config("all layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for &w in hidden {
            layers.push(DenseLayer::glorot(prev, w, Activation::Relu, &mut rng));
            prev = w;
        }
        layers.push(DenseLayer::glorot(prev, classes, Activation::Softmax, &mut rng));
        let mut net = Network::new(input_dim, layers)?;
        net.metadata.insert("init_seed".into(), seed.to_string());
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn layer_name(&self, index: usize) -> String {
        layer_name(index)
    }

    /// Resolves a canonical layer name (`fc1`, `fc2`, ...) to its index.
    pub fn layer_index(&self, name: &str) -> Result<usize> {
        name.strip_prefix("fc")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1 && n <= self.layers.len())
            .map(|n| n - 1)
            .ok_or_else(|| NafError::UnknownLayer(name.to_string()))
    }

    pub fn layer(&self, name: &str) -> Result<&DenseLayer> {
        Ok(&self.layers[self.layer_index(name)?])
    }

    /// Same layer count and dimensions.
    pub fn same_architecture(&self, other: &Network) -> bool {
        self.input_dim == other.input_dim
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.out_dim() == b.out_dim() && a.activation == b.activation)
    }

    /// Weights and biases equal bit for bit. Metadata is ignored.
    pub fn params_bit_equal(&self, other: &Network) -> bool {
        self.same_architecture(other)
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                bits_equal(a.weights.as_slice(), b.weights.as_slice())
                    && bits_equal(&a.biases, &b.biases)
            })
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ActivationTrace> {
        let tape = self.forward_tape(batch, self.layers.len() - 1)?;
        Ok(ActivationTrace {
            outputs: tape.acts.into_iter().skip(1).collect(),
        })
    }

    /// Output of layer `index` only, skipping everything downstream.
    pub fn layer_output(&self, batch: &Matrix, index: usize) -> Result<Matrix> {
        let mut tape = self.forward_tape(batch, index)?;
        Ok(tape.acts.pop().unwrap())
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        let out = self.layer_output(batch, self.layers.len() - 1)?;
        Ok((0..out.rows()).map(|r| argmax(out.row(r))).collect())
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let pred = self.predict(&data.inputs)?;
        let hits = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / data.len() as f64)
    }

    pub(crate) fn forward_tape(&self, batch: &Matrix, upto: usize) -> Result<Tape> {
        if batch.cols() != self.input_dim {
            return Err(NafError::shape(
                format!("input of layer {}", layer_name(0)),
                self.input_dim,
                batch.cols(),
            ));
        }
        if upto >= self.layers.len() {
            return Err(NafError::UnknownLayer(layer_name(upto)));
        }
        let mut acts = Vec::with_capacity(upto + 2);
        let mut pre = Vec::with_capacity(upto + 1);
        acts.push(batch.clone());
        for layer in &self.layers[..=upto] {
            let z = layer.pre_activation(acts.last().unwrap());
            acts.push(layer.activate(&z));
            pre.push(z);
        }
        Ok(Tape { acts, pre })
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the post-activation output
    /// of layer `upto`, one row per batch item). Returns parameter gradients
    /// for layers `0..=upto` when requested, and the input gradient.
    pub(crate) fn backprop(
        &self,
        tape: &Tape,
        upto: usize,
        grad_out: Vec<f64>,
        param_grads: bool,
    ) -> (Vec<LayerGrad>, Vec<f64>) {
        let batch = tape.acts[0].rows();
        let layer = &self.layers[upto];
        let mut grad_pre = vec![0.0; grad_out.len()];
        for r in 0..batch {
            let w = layer.out_dim();
            layer.activation.backward_row(
                tape.pre[upto].row(r),
                tape.acts[upto + 1].row(r),
                &grad_out[r * w..(r + 1) * w],
                &mut grad_pre[r * w..(r + 1) * w],
            );
        }
        self.backprop_pre(tape, upto, grad_pre, param_grads)
    }

    /// As [`Network::backprop`], starting from the pre-activation gradient.
    pub(crate) fn backprop_pre(
        &self,
        tape: &Tape,
        upto: usize,
        mut dz: Vec<f64>,
        param_grads: bool,
    ) -> (Vec<LayerGrad>, Vec<f64>) {
        let batch = tape.acts[0].rows();
        let mut grads: Vec<LayerGrad> = if param_grads {
            self.layers[..=upto].iter().map(LayerGrad::zeros_like).collect()
        } else {
            Vec::new()
        };
        for l in (0..=upto).rev() {
            let layer = &self.layers[l];
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let input = &tape.acts[l];
            if param_grads {
                let g = &mut grads[l];
                for r in 0..batch {
                    let x = input.row(r);
                    let d = &dz[r * out_dim..(r + 1) * out_dim];
                    for (o, &dv) in d.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        g.biases[o] += dv;
                        let row = &mut g.weights[o * in_dim..(o + 1) * in_dim];
                        for (gw, &xv) in row.iter_mut().zip(x) {
                            *gw += dv * f64::from(xv);
                        }
                    }
                }
            }
            let mut da = vec![0.0; batch * in_dim];
            for r in 0..batch {
                let d = &dz[r * out_dim..(r + 1) * out_dim];
                let out = &mut da[r * in_dim..(r + 1) * in_dim];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (a, &w) in out.iter_mut().zip(layer.weights.row(o)) {
                        *a += dv * f64::from(w);
                    }
                }
            }
            if l == 0 {
                return (grads, da);
            }
            let prev = &self.layers[l - 1];
            let mut next = vec![0.0; batch * in_dim];
            for r in 0..batch {
                prev.activation.backward_row(
                    tape.pre[l - 1].row(r),
                    tape.acts[l].row(r),
                    &da[r * in_dim..(r + 1) * in_dim],
                    &mut next[r * in_dim..(r + 1) * in_dim],
                );
            }
            dz = next;
        }
        unreachable!("loop returns at layer 0")
    }
}

pub fn layer_name(index: usize) -> String {
    format!("fc{}", index + 1)
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn bits_equal(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3], Activation::Identity).unwrap();
        let net = Network::new(3, vec![layer]).unwrap();
        let v = Matrix::from_rows(&[[0.5f32, -1.25, 3.0]]).unwrap();
        assert_eq!(net.forward(&v).unwrap().last(), &v);
    }

    #[test]
    fn relu_clamps_negative() {
        let w = Matrix::from_rows(&[[-1.0f32]]).unwrap();
        let net = Network::new(1, vec![DenseLayer::new(w, vec![0.0], Activation::Relu).unwrap()]).unwrap();
        let out = net.forward(&Matrix::from_rows(&[[2.0f32]]).unwrap()).unwrap();
        assert_eq!(out.last().as_slice(), &[0.0]);
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let net = Network::mlp(4, &[3], 2, 1).unwrap();
        let err = net.forward(&Matrix::zeros(2, 5)).unwrap_err();
        assert!(err.to_string().contains("fc1"), "{err}");
    }

    #[test]
    fn chain_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = DenseLayer::glorot(4, 3, Activation::Relu, &mut rng);
        let b = DenseLayer::glorot(5, 2, Activation::Softmax, &mut rng);
        assert!(matches!(Network::new(4, vec![a, b]), Err(NafError::Shape { .. })));
    }

    #[test]
    fn hidden_softmax_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = DenseLayer::glorot(4, 3, Activation::Softmax, &mut rng);
        let b = DenseLayer::glorot(3, 2, Activation::Identity, &mut rng);
        assert!(Network::new(4, vec![a, b]).is_err());
    }

    #[test]
    fn layer_names_resolve() {
        let net = Network::mlp(4, &[8, 8], 3, 0).unwrap();
        assert_eq!(net.layer_index("fc2").unwrap(), 1);
        assert_eq!(net.layer_index("fc3").unwrap(), 2);
        assert!(net.layer_index("fc4").is_err());
        assert!(net.layer_index("conv1").is_err());
        assert!(net.layer_index("fc0").is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let net = Network::mlp(6, &[10, 7], 3, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = Matrix::from_vec(9, 6, (0..54).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        assert_eq!(net.forward(&batch).unwrap(), net.forward(&batch).unwrap());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let net = Network::mlp(3, &[5], 4, 9).unwrap();
        let out = net.forward(&Matrix::from_rows(&[[1.0f32, -2.0, 0.5], [0.0, 0.0, 0.0]]).unwrap()).unwrap();
        for r in 0..2 {
            let s: f32 = out.last().row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}

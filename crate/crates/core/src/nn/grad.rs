//! Gradients of a layer-output objective w.r.t. the network input, with all
//! parameters frozen.

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{NafError, Result};
use crate::matrix::Matrix;

/// Squared deviation of one layer's outputs from per-neuron targets, summed
/// over an ensemble of networks:
///
/// `L(x) = Σ_j w_j Σ_n (y_n^j(x) − target_n)²`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerObjective {
    pub layer_name: String,
    pub targets: Vec<f32>,
    /// Per-network multipliers; empty means 1 for every network.
    pub ensemble_weights: Vec<f64>,
}

impl TriggerObjective {
    pub fn new(layer_name: impl Into<String>, targets: Vec<f32>) -> Self {
        TriggerObjective {
            layer_name: layer_name.into(),
            targets,
            ensemble_weights: Vec::new(),
        }
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.ensemble_weights.get(j).copied().unwrap_or(1.0)
    }
}

/// Objective value and `dL/dx` at `input`. Parameters are never touched.
pub fn input_loss_and_gradient(
    nets: &[&Network],
    input: &[f32],
    objective: &TriggerObjective,
) -> Result<(f64, Vec<f64>)> {
    let first = nets
        .first()
        .ok_or_else(|| NafError::Config("objective needs at least one network".into()))?;
    if !objective.ensemble_weights.is_empty() && objective.ensemble_weights.len() != nets.len() {
        return Err(NafError::shape(
            "ensemble weights",
            nets.len(),
            objective.ensemble_weights.len(),
        ));
    }
    let batch = Matrix::from_vec(1, input.len(), input.to_vec()).unwrap();
    let mut loss = 0.0;
    let mut grad = vec![0.0; first.input_dim()];
    for (j, net) in nets.iter().enumerate() {
        if net.input_dim() != first.input_dim() {
            return Err(NafError::shape("ensemble input_dim", first.input_dim(), net.input_dim()));
        }
        let layer = net.layer_index(&objective.layer_name)?;
        let width = net.layers()[layer].out_dim();
        if objective.targets.len() != width {
            return Err(NafError::shape(
                format!("objective targets for {}", objective.layer_name),
                width,
                objective.targets.len(),
            ));
        }
        let w = objective.weight(j);
        if w == 0.0 {
            continue;
        }
        let tape = net.forward_tape(&batch, layer)?;
        let out = tape.acts[layer + 1].row(0);
        let mut grad_out = Vec::with_capacity(width);
        for (&y, &t) in out.iter().zip(&objective.targets) {
            let diff = f64::from(y) - f64::from(t);
            loss += w * diff * diff;
            grad_out.push(2.0 * w * diff);
        }
        let (_, g) = net.backprop(&tape, layer, grad_out, false);
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    Ok((loss, grad))
}

/// `dL/dx` of the summed objective over all `nets`.
pub fn input_gradient(
    nets: &[&Network],
    input: &[f32],
    objective: &TriggerObjective,
) -> Result<Vec<f64>> {
    input_loss_and_gradient(nets, input, objective).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_at_current_output_give_zero_gradient() {
        let net = Network::mlp(5, &[7, 6], 3, 4).unwrap();
        let x = [0.3f32, -0.2, 0.9, 0.1, -0.7];
        let out = net.layer_output(&Matrix::from_vec(1, 5, x.to_vec()).unwrap(), 1).unwrap();
        let obj = TriggerObjective::new("fc2", out.row(0).to_vec());
        let (loss, g) = input_loss_and_gradient(&[&net], &x, &obj).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn duplicated_network_doubles_gradient() {
        let net = Network::mlp(5, &[7, 6], 3, 4).unwrap();
        let x = [0.3f32, -0.2, 0.9, 0.1, -0.7];
        let obj = TriggerObjective::new("fc2", vec![1.0; 6]);
        let single = input_gradient(&[&net], &x, &obj).unwrap();
        let double = input_gradient(&[&net, &net], &x, &obj).unwrap();
        for (s, d) in single.iter().zip(&double) {
            assert_eq!(2.0 * s, *d);
        }
    }

    #[test]
    fn bad_layer_is_an_error() {
        let net = Network::mlp(2, &[3], 2, 0).unwrap();
        let obj = TriggerObjective::new("fc9", vec![0.0; 3]);
        assert!(matches!(
            input_gradient(&[&net], &[0.0, 0.0], &obj),
            Err(NafError::UnknownLayer(_))
        ));
    }

    #[test]
    fn parameters_are_untouched() {
        let net = Network::mlp(3, &[4], 2, 8).unwrap();
        let before = net.clone();
        let obj = TriggerObjective::new("fc1", vec![0.5; 4]);
        input_gradient(&[&net], &[1.0, 2.0, 3.0], &obj).unwrap();
        assert!(net.params_bit_equal(&before));
    }
}

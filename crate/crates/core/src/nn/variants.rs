use super::{train, Dataset, Network, TrainConfig};
use crate::error::{NafError, Result};

/// Fine-tunes a deep copy of `net` for `epochs` epochs at learning rate `lr`.
pub fn finetune_variant(
    net: &Network,
    data: &Dataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<Network> {
    let hp = TrainConfig {
        epochs,
        lr,
        seed,
        ..TrainConfig::default()
    };
    let mut tuned = train(net, data, &hp, None)?.network;
    if epochs > 0 {
        tuned
            .metadata
            .insert("variant".into(), format!("finetune epochs={epochs} lr={lr} seed={seed}"));
    }
    Ok(tuned)
}

/// Magnitude pruning of one layer: the `⌊fraction·N⌋` neurons whose incoming
/// weight rows have the smallest L1 norm get their row and bias zeroed, so
/// their relu output is identically 0. Ties go to the lower index.
pub fn prune_variant(net: &Network, layer_name: &str, fraction: f64, seed: u64) -> Result<Network> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(NafError::Config(format!("prune fraction must lie in [0, 1), got {fraction}")));
    }
    let idx = net.layer_index(layer_name)?;
    let mut pruned = net.clone();
    let layer = &mut pruned.layers_mut()[idx];
    let n = layer.out_dim();
    let count = (fraction * n as f64).floor() as usize;
    if count == 0 {
        return Ok(pruned);
    }
    let norms: Vec<f64> = (0..n)
        .map(|o| layer.weights().row(o).iter().map(|w| f64::from(w.abs())).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    for &o in &order[..count] {
        layer.weights_mut().row_mut(o).fill(0.0);
        layer.biases_mut()[o] = 0.0;
    }
    pruned.metadata.insert(
        "variant".into(),
        format!("prune layer={layer_name} fraction={fraction} seed={seed}"),
    );
    Ok(pruned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::{Activation, BlobSpec, DenseLayer};

    fn tiny() -> Network {
        // Row L1 norms: neuron0 = 3, neuron1 = 1, neuron2 = 4, neuron3 = 2.
        let w1 = Matrix::from_rows(&[[1.0f32, -2.0], [0.5, 0.5], [-4.0, 0.0], [1.0, 1.0]]).unwrap();
        let l1 = DenseLayer::new(w1, vec![0.1, 0.2, 0.3, 0.4], Activation::Relu).unwrap();
        let w2 = Matrix::from_rows(&[[1.0f32, 1.0, 1.0, 1.0]]).unwrap();
        let l2 = DenseLayer::new(w2, vec![0.0], Activation::Identity).unwrap();
        Network::new(2, vec![l1, l2]).unwrap()
    }

    #[test]
    fn zero_fraction_is_identity() {
        let net = tiny();
        assert!(prune_variant(&net, "fc1", 0.0, 0).unwrap().params_bit_equal(&net));
    }

    #[test]
    fn half_prunes_two_smallest_rows() {
        let net = tiny();
        let p = prune_variant(&net, "fc1", 0.5, 0).unwrap();
        let l = &p.layers()[0];
        // neurons ranked 1st and 2nd by norm are indices 1 and 3
        assert_eq!(l.weights().row(1), &[0.0, 0.0]);
        assert_eq!(l.weights().row(3), &[0.0, 0.0]);
        assert_eq!(l.biases(), &[0.1, 0.0, 0.3, 0.0]);
        assert_eq!(l.weights().row(0), net.layers()[0].weights().row(0));
        assert_eq!(l.weights().row(2), net.layers()[0].weights().row(2));
    }

    #[test]
    fn pruned_neuron_outputs_zero() {
        let p = prune_variant(&tiny(), "fc1", 0.5, 0).unwrap();
        let batch = Matrix::from_rows(&[[3.0f32, -1.0], [-2.0, 5.0], [0.0, 0.0]]).unwrap();
        let out = p.layer_output(&batch, 0).unwrap();
        for r in 0..3 {
            assert_eq!(out[(r, 1)], 0.0);
            assert_eq!(out[(r, 3)], 0.0);
        }
    }

    #[test]
    fn unknown_layer_and_bad_fraction() {
        assert!(matches!(prune_variant(&tiny(), "fc7", 0.1, 0), Err(NafError::UnknownLayer(_))));
        assert!(prune_variant(&tiny(), "fc1", 1.0, 0).is_err());
    }

    #[test]
    fn finetune_copies() {
        let data = BlobSpec {
            samples: 60,
            input_dim: 2,
            classes: 2,
            ..BlobSpec::default()
        }
        .generate()
        .unwrap();
        let net = Network::mlp(2, &[4], 2, 0).unwrap();
        let before = net.clone();
        assert!(finetune_variant(&net, &data, 0, 0.01, 1).unwrap().params_bit_equal(&net));
        let tuned = finetune_variant(&net, &data, 1, 0.01, 1).unwrap();
        assert!(net.params_bit_equal(&before));
        assert!(!tuned.params_bit_equal(&net));
    }
}

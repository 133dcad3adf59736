use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TriggerLog, TriggerMode, TriggerSet, VariantEnsemble};
use crate::coding::{CentroidSet, Codebook};
use crate::error::{NafError, Result};
use crate::matrix::Matrix;
use crate::nn::{input_loss_and_gradient, Network, TriggerObjective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeOptions {
    pub steps: usize,
    pub lr: f64,
    pub init_seed: u64,
    /// Per-feature `(min, max)`; the trigger is initialized uniformly inside
    /// and projected back after every step.
    pub clamp_box: Vec<(f32, f32)>,
}

impl ForgeOptions {
    pub fn new(clamp_box: Vec<(f32, f32)>, init_seed: u64) -> Self {
        ForgeOptions {
            steps: 500,
            lr: 0.05,
            init_seed,
            clamp_box,
        }
    }
}

/// Projected Adam on the input against the frozen ensemble.
///
/// Returns the best iterate seen and its loss, so the result never scores
/// worse than the initial point.
pub fn synthesize_trigger(
    ensemble: &VariantEnsemble,
    objective: &TriggerObjective,
    opt: &ForgeOptions,
) -> Result<(Vec<f32>, f64)> {
    let nets = ensemble.refs();
    let dim = ensemble.original().input_dim();
    if opt.clamp_box.len() != dim {
        return Err(NafError::shape("trigger clamp box", dim, opt.clamp_box.len()));
    }
    if let Some((lo, hi)) = opt.clamp_box.iter().find(|(lo, hi)| !matches!(lo.partial_cmp(hi), Some(Ordering::Less | Ordering::Equal))) {
        return Err(NafError::Config(format!("empty clamp interval [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opt.init_seed);
    let mut x: Vec<f32> = opt
        .clamp_box
        .iter()
        .map(|&(lo, hi)| if lo < hi { rng.gen_range(lo..hi) } else { lo })
        .collect();

    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let mut m = vec![0.0f64; dim];
    let mut v = vec![0.0f64; dim];
    let mut best = (x.clone(), f64::INFINITY);
    for step in 0..=opt.steps {
        let (loss, grad) = input_loss_and_gradient(&nets, &x, objective)?;
        if !loss.is_finite() {
            return Err(NafError::Optimization { step });
        }
        if loss < best.1 {
            best = (x.clone(), loss);
        }
        if step == opt.steps || grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let t = (step + 1) as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for (i, &(lo, hi)) in opt.clamp_box.iter().enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let update = opt.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            x[i] = ((f64::from(x[i]) - update) as f32).clamp(lo, hi);
        }
    }
    Ok(best)
}

/// One trigger per code position `t`, each pushing neuron `n` towards the
/// centroid of symbol `r[n][t]` on every ensemble member.
///
/// Positions are independent and synthesized in parallel. A trigger whose
/// mean per-network loss stays above `N·(gap/4)²` is flagged in its log
/// entry; decoding tolerates such positions as corrupted symbols.
pub fn synthesize_trigger_set(
    ensemble: &VariantEnsemble,
    layer_name: &str,
    cs: &CentroidSet,
    cb: &Codebook,
    opt: &ForgeOptions,
) -> Result<TriggerSet> {
    let net = ensemble.original();
    let width = net.layer(layer_name)?.out_dim();
    if cb.n() != width {
        return Err(NafError::shape(format!("codebook size for {layer_name}"), width, cb.n()));
    }
    if cb.k() != cs.k() {
        return Err(NafError::shape("alphabet size vs centroid count", cs.k(), cb.k()));
    }
    let members = ensemble.networks.len() as f64;
    let ceiling = width as f64 * (cs.gap() / 4.0).powi(2);

    let results = (0..cb.t())
        .into_par_iter()
        .map(|pos| {
            let targets = (0..width).map(|n| cs.centroids[cb.symbol(n, pos) as usize]).collect();
            let objective = TriggerObjective::new(layer_name, targets);
            let position_opt = ForgeOptions {
                init_seed: position_seed(opt.init_seed, pos),
                ..opt.clone()
            };
            synthesize_trigger(ensemble, &objective, &position_opt)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = Vec::with_capacity(cb.t() * net.input_dim());
    let mut log = Vec::with_capacity(cb.t());
    for (x, loss) in results {
        data.extend_from_slice(&x);
        log.push(TriggerLog {
            loss,
            converged: loss / members <= ceiling,
        });
    }
    let mode = if ensemble.variants() == 0 { TriggerMode::T1 } else { TriggerMode::T2 };
    TriggerSet::new(
        mode,
        layer_name.to_string(),
        Matrix::from_vec(cb.t(), net.input_dim(), data).unwrap(),
        cs.clone(),
        cb.hash(),
        ensemble.provenance[1..].iter().map(ToString::to_string).collect(),
        log,
    )
}

/// Baseline set made of `T` given inputs (typically task samples) instead of
/// optimized triggers. Losses are logged against the same per-position
/// targets; no position counts as converged.
pub fn sample_trigger_set(
    net: &Network,
    layer_name: &str,
    samples: &Matrix,
    cs: &CentroidSet,
    cb: &Codebook,
) -> Result<TriggerSet> {
    let width = net.layer(layer_name)?.out_dim();
    if cb.n() != width {
        return Err(NafError::shape(format!("codebook size for {layer_name}"), width, cb.n()));
    }
    if samples.rows() != cb.t() {
        return Err(NafError::shape("baseline sample count", cb.t(), samples.rows()));
    }
    let log = (0..cb.t())
        .map(|pos| {
            let targets = (0..width).map(|n| cs.centroids[cb.symbol(n, pos) as usize]).collect();
            let objective = TriggerObjective::new(layer_name, targets);
            input_loss_and_gradient(&[net], samples.row(pos), &objective).map(|(loss, _)| TriggerLog {
                loss,
                converged: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TriggerSet::new(
        TriggerMode::N,
        layer_name.to_string(),
        samples.clone(),
        cs.clone(),
        cb.hash(),
        Vec::new(),
        log,
    )
}

fn position_seed(seed: u64, pos: usize) -> u64 {
    seed ^ (pos as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::{Activation, DenseLayer, Network};

    fn linear_neuron() -> Network {
        let w1 = Matrix::from_rows(&[[0.5f32, -1.0, 2.0]]).unwrap();
        let l1 = DenseLayer::new(w1, vec![0.0], Activation::Identity).unwrap();
        let l2 = DenseLayer::new(Matrix::from_rows(&[[1.0f32]]).unwrap(), vec![0.0], Activation::Identity).unwrap();
        Network::new(3, vec![l1, l2]).unwrap()
    }

    #[test]
    fn linear_neuron_reaches_target() {
        let net = linear_neuron();
        let ens = VariantEnsemble::original_only(&net);
        let obj = TriggerObjective::new("fc1", vec![1.7]);
        let opt = ForgeOptions::new(vec![(-5.0, 5.0); 3], 3);
        let (x, loss) = synthesize_trigger(&ens, &obj, &opt).unwrap();
        let y = 0.5 * x[0] - x[1] + 2.0 * x[2];
        assert!((y - 1.7).abs() < 1e-3, "y = {y}");
        assert!(loss < 1e-6);
    }

    #[test]
    fn already_optimal_input_is_returned_unchanged() {
        let net = linear_neuron();
        let ens = VariantEnsemble::original_only(&net);
        let opt = ForgeOptions::new(vec![(-1.0, 1.0); 3], 11);
        // Recreate the init point to set the target to its output.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0: Vec<f32> = (0..3).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let y0 = net.layer_output(&Matrix::from_vec(1, 3, x0.clone()).unwrap(), 0).unwrap()[(0, 0)];
        let obj = TriggerObjective::new("fc1", vec![y0]);
        let (x, loss) = synthesize_trigger(&ens, &obj, &opt).unwrap();
        assert_eq!(x, x0);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn stays_inside_box() {
        let net = linear_neuron();
        let ens = VariantEnsemble::original_only(&net);
        let obj = TriggerObjective::new("fc1", vec![100.0]);
        let opt = ForgeOptions::new(vec![(-1.0, 1.0); 3], 0);
        let (x, _) = synthesize_trigger(&ens, &obj, &opt).unwrap();
        assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
        // maximum of 0.5a - b + 2c on the box is at (1, -1, 1)
        assert_eq!(x, vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn clamp_box_shape_checked() {
        let net = linear_neuron();
        let ens = VariantEnsemble::original_only(&net);
        let obj = TriggerObjective::new("fc1", vec![0.0]);
        assert!(synthesize_trigger(&ens, &obj, &ForgeOptions::new(vec![(0.0, 1.0); 2], 0)).is_err());
    }

    #[test]
    fn single_neuron_single_position() {
        let net = linear_neuron();
        let ens = VariantEnsemble::original_only(&net);
        let cs = CentroidSet::new(vec![0.0, 2.5], vec![1.25]).unwrap();
        let cb = Codebook::from_words(&[vec![1]], 2, 0).unwrap();
        let ts = synthesize_trigger_set(&ens, "fc1", &cs, &cb, &ForgeOptions::new(vec![(-3.0, 3.0); 3], 2)).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts.mode, TriggerMode::T1);
        let y = net.layer_output(&ts.triggers, 0).unwrap()[(0, 0)];
        assert!((y - 2.5).abs() < 1e-3);
        assert!(ts.log[0].converged);
    }
}

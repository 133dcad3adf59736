use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NafError, Result};

/// A bijection on the neurons of one layer as a destination array:
/// `perm[i]` is where neuron `i` ends up.
///
/// Cycle notation from figures is 1-indexed; `(2,3,4)` on five neurons is
/// `[0, 2, 3, 1, 4]` here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSpec {
    pub layer_name: String,
    pub perm: Vec<usize>,
    pub seed: u64,
}

impl PermutationSpec {
    pub fn new(layer_name: impl Into<String>, perm: Vec<usize>, seed: u64) -> Result<Self> {
        if !is_bijection(&perm) {
            return Err(NafError::Config(format!("{perm:?} is not a permutation of 0..{}", perm.len())));
        }
        Ok(PermutationSpec {
            layer_name: layer_name.into(),
            perm,
            seed,
        })
    }

    pub fn identity(layer_name: impl Into<String>, n: usize) -> Self {
        PermutationSpec {
            layer_name: layer_name.into(),
            perm: (0..n).collect(),
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        PermutationSpec {
            layer_name: self.layer_name.clone(),
            perm: inv,
            seed: self.seed,
        }
    }

    /// Applying `self` and then `next` equals applying the result once.
    pub fn then(&self, next: &PermutationSpec) -> Result<Self> {
        if next.len() != self.len() {
            return Err(NafError::shape("composed permutation", self.len(), next.len()));
        }
        Ok(PermutationSpec {
            layer_name: self.layer_name.clone(),
            perm: self.perm.iter().map(|&p| next.perm[p]).collect(),
            seed: self.seed,
        })
    }
}

pub(crate) fn is_bijection(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

/// Uniform random permutation of `n` neurons, excluding the identity when
/// `n ≥ 2`. Deterministic per seed.
pub fn random_permutation(layer_name: &str, n: usize, seed: u64) -> PermutationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if n < 2 || perm.iter().enumerate().any(|(i, &p)| i != p) {
            break;
        }
    }
    PermutationSpec {
        layer_name: layer_name.to_string(),
        perm,
        seed,
    }
}

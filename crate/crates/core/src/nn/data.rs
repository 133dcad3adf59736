use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NafError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(NafError::Config("dataset must contain at least one sample".into()));
        }
        if labels.len() != inputs.rows() {
            return Err(NafError::shape("dataset labels", inputs.rows(), labels.len()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(NafError::Config(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// First `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Per-feature `(min, max)` over all samples.
    pub fn bounding_box(&self) -> Vec<(f32, f32)> {
        (0..self.input_dim())
            .map(|c| {
                let col = self.inputs.column(c);
                let lo = col.iter().copied().fold(f32::INFINITY, f32::min);
                let hi = col.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                (lo, hi)
            })
            .collect()
    }
}

/// Seeded Gaussian blobs centred on the vertices of a class grid.
///
/// Class `c` sits at a corner of the hypercube `{-spread, +spread}^input_dim`
/// drawn from the seeded generator, so centres are well separated but not
/// axis aligned. Samples are drawn i.i.d. with isotropic noise and labels are
/// interleaved so any prefix is class balanced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub samples: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub spread: f32,
    pub noise: f32,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            samples: 2400,
            input_dim: 16,
            classes: 4,
            spread: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn generate(&self) -> Result<Dataset> {
        if self.samples == 0 || self.input_dim == 0 || self.classes == 0 {
            return Err(NafError::Config("blob spec needs samples, input_dim and classes > 0".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.spread.is_finite()) {
            return Err(NafError::Config("blob noise and spread must be finite, noise >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let centres: Vec<Vec<f32>> = (0..self.classes)
            .map(|_| {
                (0..self.input_dim)
                    .map(|_| if rng.gen::<bool>() { self.spread } else { -self.spread })
                    .collect()
            })
            .collect();
        let normal = Normal::new(0.0f32, self.noise.max(f32::MIN_POSITIVE)).unwrap();
        let mut data = Vec::with_capacity(self.samples * self.input_dim);
        let mut labels = Vec::with_capacity(self.samples);
        for i in 0..self.samples {
            let c = i % self.classes;
            for &m in &centres[c] {
                let eps = if self.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                data.push(m + eps);
            }
            labels.push(c);
        }
        Dataset::new(
            Matrix::from_vec(self.samples, self.input_dim, data).unwrap(),
            labels,
            self.classes,
        )
    }
}

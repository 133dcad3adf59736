//! Fixtures shared by the benchmarks: networks of the default experiment
//! shape and noisy, shuffled code observations.

use naf_core::{Codebook, Matrix, Network, ObservedCodeMatrix};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INPUT_DIM: usize = 64;
pub const HIDDEN: [usize; 3] = [64, 32, 16];
pub const CLASSES: usize = 4;

pub fn default_network(seed: u64) -> Network {
    Network::mlp(INPUT_DIM, &HIDDEN, CLASSES, seed).expect("valid architecture")
}

/// The codebook's words in shuffled row order, each with `flips` symbol
/// errors, as the trigger read-out of a permuted copy would produce.
pub fn shuffled_observation(cb: &Codebook, flips: usize, seed: u64) -> ObservedCodeMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..cb.n()).collect();
    perm.shuffle(&mut rng);
    let mut codes = vec![Vec::new(); cb.n()];
    for (n, &row) in perm.iter().enumerate() {
        let mut w = cb.word(n).to_vec();
        for pos in sample(&mut rng, cb.t(), flips.min(cb.t())) {
            w[pos] = (w[pos] + 1) % cb.k() as u8;
        }
        codes[row] = w;
    }
    let raw = codes.iter().flatten().map(|&s| f32::from(s)).collect();
    ObservedCodeMatrix {
        raw_outputs: Matrix::from_vec(cb.n(), cb.t(), raw).expect("rectangular codes"),
        codes,
    }
}

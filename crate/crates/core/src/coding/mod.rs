//! Neuron coding: output quantization into `K` folds, the capacity bound for
//! correctable corruptions, and minimum-distance codebooks.

mod capacity;
mod centroids;
mod codebook;

pub use capacity::{capacity_table, max_correctable, CapacityParams};
pub use centroids::{compute_centroids, nearest_centroid, CentroidSet};
pub use codebook::{
    decode_codeword, generate_best_codebook, generate_codebook, hamming, plotkin_limit,
    symbol_distance, Codebook,
};

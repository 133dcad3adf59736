//! Neuron alignment for white-box DNN watermarks.
//!
//! The owner of a watermarked network quantizes one layer's outputs into `K`
//! centroids, assigns every neuron of that layer an error-correcting
//! codeword, and synthesizes trigger inputs that make each neuron emit its
//! codeword symbol by symbol. When a suspicious copy shows up with its
//! neurons shuffled (or shuffled and tuned, pruned, rescaled), reading the
//! triggers back recovers each neuron's identity, the original order is
//! restored and the weight watermark verifies again.

pub mod align;
pub mod attack;
pub mod coding;
pub mod container;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod trigger;
pub mod watermark;

pub use align::{
    align, apply_alignment, normalize_layer, read_codes, verify_with_alignment, AlignOptions,
    AlignmentResult, ObservedCodeMatrix, VerifiedAlignment,
};
pub use attack::{
    attack_ftp, attack_npp, attack_rescale, functional_drift, permute_neurons, random_permutation,
    AttackKind, AttackReport, PermutationSpec,
};
pub use coding::{
    compute_centroids, decode_codeword, generate_codebook, max_correctable, nearest_centroid,
    CapacityParams, CentroidSet, Codebook,
};
pub use error::{NafError, Result};
pub use matrix::Matrix;
pub use nn::{
    input_gradient, load_model, save_model, train, ActivationTrace, Activation, BlobSpec, Dataset,
    DenseLayer, Network, TrainConfig, TriggerObjective,
};
pub use trigger::{
    cluster_quality, make_variant_ensemble, sample_trigger_set, synthesize_trigger, synthesize_trigger_set,
    ClusterQuality, ForgeOptions, TriggerMode, TriggerSet, VariantEnsemble,
};
pub use watermark::{OVResult, UchidaBackend, WatermarkBackend, WatermarkRecord};

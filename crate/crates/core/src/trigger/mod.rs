//! Trigger synthesis: one input per code position, optimized against the
//! frozen watermarked network (and optionally tuned variants of it) so every
//! neuron of the watermarked layer emits the centroid its codeword asks for.

mod ensemble;
mod forge;
mod quality;
mod set;

pub use ensemble::{make_variant_ensemble, VariantEnsemble, VariantProvenance};
pub use forge::{sample_trigger_set, synthesize_trigger, synthesize_trigger_set, ForgeOptions};
pub use quality::{cluster_quality, mean_cluster_quality, ClusterQuality};
pub use set::{TriggerLog, TriggerMode, TriggerSet};

pub use crate::nn::TriggerObjective;

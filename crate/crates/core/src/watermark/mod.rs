//! White-box watermark backends.
//!
//! A backend is two functions over a network and an opaque record: `embed`
//! returns a watermarked copy, `verify` decides ownership. The aligner only
//! needs `verify`, so new schemes plug in without touching it.

mod uchida;

pub use uchida::{UchidaBackend, UchidaRegularizer, WatermarkRecord};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Dataset, Network, TrainConfig};

/// Outcome of one ownership verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OVResult {
    pub accepted: bool,
    /// Bit-error rate between extracted and embedded payload.
    pub ber: f64,
    pub bits_extracted: Vec<bool>,
}

pub trait WatermarkBackend {
    type Record;

    fn embed(&self, net: &Network, record: &Self::Record, data: &Dataset, hp: &TrainConfig) -> Result<Network>;

    /// Errors only when the record cannot be applied to the network at all
    /// (missing layer, different shape); that is reported as tampering and
    /// is distinct from a rejection.
    fn verify(&self, net: &Network, record: &Self::Record) -> Result<OVResult>;
}

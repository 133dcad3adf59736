//! Weight-projection watermark: `B` payload bits are the signs of `B` secret
//! random projections of a layer's flattened weight matrix.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{OVResult, WatermarkBackend};
use crate::container::{ArtifactTag, Reader, Writer};
use crate::error::{NafError, Result};
use crate::matrix::{dot, Matrix};
use crate::nn::{train, Dataset, LayerGrad, Network, Regularizer, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkRecord {
    pub layer_name: String,
    /// `B × W`, `W` = out_dim · in_dim of the watermarked layer.
    pub key_matrix: Matrix,
    pub payload: Vec<bool>,
    /// Largest bit-error rate still accepted.
    pub threshold: f64,
    pub seed: u64,
}

impl WatermarkRecord {
    pub const DEFAULT_BITS: usize = 32;
    pub const DEFAULT_THRESHOLD: f64 = 0.15;

    /// Standard-normal key and uniformly random payload for `layer_name`.
    pub fn generate(net: &Network, layer_name: &str, bits: usize, threshold: f64, seed: u64) -> Result<Self> {
        if bits == 0 {
            return Err(NafError::Config("watermark payload needs at least one bit".into()));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(NafError::Config(format!("BER threshold must lie in (0, 1], got {threshold}")));
        }
        let layer = net.layer(layer_name)?;
        let width = layer.out_dim() * layer.in_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let key: Vec<f32> = (0..bits * width).map(|_| rng.sample(StandardNormal)).collect();
        let payload = (0..bits).map(|_| rng.gen::<bool>()).collect();
        Ok(WatermarkRecord {
            layer_name: layer_name.to_string(),
            key_matrix: Matrix::from_vec(bits, width, key).unwrap(),
            payload,
            threshold,
            seed,
        })
    }

    pub fn bits(&self) -> usize {
        self.payload.len()
    }

    fn check_shape(&self, net: &Network) -> Result<usize> {
        let idx = net
            .layer_index(&self.layer_name)
            .map_err(|_| NafError::Tamper(format!("watermarked layer `{}` is missing", self.layer_name)))?;
        let l = &net.layers()[idx];
        let width = l.out_dim() * l.in_dim();
        if width != self.key_matrix.cols() {
            return Err(NafError::Tamper(format!(
                "layer `{}` has {} weights, key expects {}",
                self.layer_name,
                width,
                self.key_matrix.cols()
            )));
        }
        Ok(idx)
    }

    /// Raw projections `key · flatten(weights)`.
    fn projections(&self, net: &Network, idx: usize) -> Vec<f64> {
        let w = net.layers()[idx].weights().as_slice();
        (0..self.bits()).map(|b| dot(self.key_matrix.row(b), w)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ArtifactTag::WatermarkRecord as u16);
        w.str(&self.layer_name);
        w.u32(self.key_matrix.rows() as u32);
        w.u32(self.key_matrix.cols() as u32);
        w.u64(self.threshold.to_bits());
        w.u64(self.seed);
        w.f32s(self.key_matrix.as_slice());
        let symbols: Vec<u8> = self.payload.iter().map(|&b| b as u8).collect();
        w.bytes(&crate::container::pack_symbols(&symbols, 1));
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open_tagged(bytes, ArtifactTag::WatermarkRecord)?;
        let layer_name = r.str()?;
        let at = r.offset();
        let bits = r.u32()? as usize;
        let width = r.u32()? as usize;
        let threshold = f64::from_bits(r.u64()?);
        let seed = r.u64()?;
        if bits == 0 || width == 0 {
            return Err(NafError::format(at, "empty key matrix"));
        }
        let key = r.f32s(bits.saturating_mul(width))?;
        let packed = r.bytes(bits.div_ceil(8))?;
        r.finish()?;
        let payload = crate::container::unpack_symbols(packed, bits, 1)
            .into_iter()
            .map(|s| s == 1)
            .collect();
        Ok(WatermarkRecord {
            layer_name,
            key_matrix: Matrix::from_vec(bits, width, key).unwrap(),
            payload,
            threshold,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        WatermarkRecord::from_bytes(&std::fs::read(path)?)
    }
}

/// Binary cross-entropy between `sigmoid(key · w)` and the payload, scaled by
/// `strength / B`.
pub struct UchidaRegularizer<'a> {
    pub record: &'a WatermarkRecord,
    pub layer: usize,
    pub strength: f64,
}

impl Regularizer for UchidaRegularizer<'_> {
    fn penalty(&self, net: &Network, grads: &mut [LayerGrad]) -> f64 {
        let scale = self.strength / self.record.bits() as f64;
        let g = &mut grads[self.layer].weights;
        let mut loss = 0.0;
        for (b, s) in self.record.projections(net, self.layer).into_iter().enumerate() {
            let target = if self.record.payload[b] { 1.0 } else { 0.0 };
            // log(1 + e^{-|s|}) keeps the BCE finite for saturated projections
            loss += s.max(0.0) - s * target + (-s.abs()).exp().ln_1p();
            let coeff = scale * (sigmoid(s) - target);
            for (gw, &k) in g.iter_mut().zip(self.record.key_matrix.row(b)) {
                *gw += coeff * f64::from(k);
            }
        }
        scale * loss
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Embeds by fine-tuning with a [`UchidaRegularizer`] on the task loss.
#[derive(Debug, Clone, PartialEq)]
pub struct UchidaBackend {
    pub strength: f64,
    /// Extra single epochs tried when the payload is not fully embedded after
    /// the scheduled ones.
    pub max_extra_epochs: usize,
}

impl Default for UchidaBackend {
    fn default() -> Self {
        UchidaBackend {
            strength: 0.5,
            max_extra_epochs: 20,
        }
    }
}

impl WatermarkBackend for UchidaBackend {
    type Record = WatermarkRecord;

    fn embed(&self, net: &Network, record: &WatermarkRecord, data: &Dataset, hp: &TrainConfig) -> Result<Network> {
        let layer = record
            .check_shape(net)
            .map_err(|e| NafError::Config(format!("record does not fit the network: {e}")))?;
        let reg = UchidaRegularizer {
            record,
            layer,
            strength: self.strength,
        };
        let mut marked = train(net, data, hp, Some(&reg))?.network;
        let mut extra = 0;
        while self.verify(&marked, record)?.ber > 0.0 {
            if extra == self.max_extra_epochs {
                return Err(NafError::Config(format!(
                    "watermark not embedded after {} extra epochs; raise the regularizer strength",
                    self.max_extra_epochs
                )));
            }
            let hp1 = TrainConfig {
                epochs: 1,
                seed: hp.seed.wrapping_add(1 + extra as u64),
                ..hp.clone()
            };
            marked = train(&marked, data, &hp1, Some(&reg))?.network;
            extra += 1;
        }
        marked.metadata.insert("watermark".into(), format!("uchida bits={} seed={}", record.bits(), record.seed));
        Ok(marked)
    }

    /// Bits are the sign steps of the projections, with an exact 0 mapping to
    /// bit 1.
    fn verify(&self, net: &Network, record: &WatermarkRecord) -> Result<OVResult> {
        let idx = record.check_shape(net)?;
        let bits_extracted: Vec<bool> = record.projections(net, idx).into_iter().map(|s| s >= 0.0).collect();
        let errors = bits_extracted.iter().zip(&record.payload).filter(|(a, b)| a != b).count();
        let ber = errors as f64 / record.bits() as f64;
        Ok(OVResult {
            accepted: ber <= record.threshold,
            ber,
            bits_extracted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, BlobSpec, DenseLayer};

    fn data() -> Dataset {
        BlobSpec {
            samples: 400,
            input_dim: 6,
            classes: 3,
            seed: 1,
            ..BlobSpec::default()
        }
        .generate()
        .unwrap()
    }

    #[test]
    fn zero_weights_zero_payload_gives_full_error() {
        let l1 = DenseLayer::new(Matrix::zeros(3, 2), vec![0.0; 3], Activation::Relu).unwrap();
        let l2 = DenseLayer::new(Matrix::zeros(2, 3), vec![0.0; 2], Activation::Softmax).unwrap();
        let net = Network::new(2, vec![l1, l2]).unwrap();
        let mut rec = WatermarkRecord::generate(&net, "fc1", 8, 0.15, 3).unwrap();
        rec.payload = vec![false; 8];
        let ov = UchidaBackend::default().verify(&net, &rec).unwrap();
        assert!(ov.bits_extracted.iter().all(|&b| b));
        assert_eq!(ov.ber, 1.0);
        assert!(!ov.accepted);
    }

    #[test]
    fn embed_then_verify() {
        let data = data();
        let net = Network::mlp(6, &[12, 12], 3, 0).unwrap();
        let hp = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let rec = WatermarkRecord::generate(&net, "fc2", 32, 0.15, 9).unwrap();
        let backend = UchidaBackend::default();
        let marked = backend.embed(&net, &rec, &data, &hp).unwrap();
        let ov = backend.verify(&marked, &rec).unwrap();
        assert_eq!(ov.ber, 0.0);
        assert!(ov.accepted);
    }

    #[test]
    fn shape_change_is_tamper() {
        let net = Network::mlp(6, &[12, 12], 3, 0).unwrap();
        let rec = WatermarkRecord::generate(&net, "fc2", 8, 0.15, 0).unwrap();
        let other = Network::mlp(6, &[12, 11], 3, 0).unwrap();
        let backend = UchidaBackend::default();
        assert!(matches!(backend.verify(&other, &rec), Err(NafError::Tamper(_))));
        let shallow = Network::mlp(6, &[12], 3, 0).unwrap();
        let rec3 = WatermarkRecord { layer_name: "fc3".into(), ..rec };
        assert!(matches!(backend.verify(&shallow, &rec3), Err(NafError::Tamper(_))));
    }

    #[test]
    fn record_file_roundtrip() {
        let net = Network::mlp(4, &[5], 2, 0).unwrap();
        let rec = WatermarkRecord::generate(&net, "fc1", 13, 0.25, 4).unwrap();
        let back = WatermarkRecord::from_bytes(&rec.to_bytes()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn regularizer_gradient_matches_finite_difference() {
        let net = Network::mlp(3, &[4], 2, 5).unwrap();
        let rec = WatermarkRecord::generate(&net, "fc1", 6, 0.15, 1).unwrap();
        let reg = UchidaRegularizer { record: &rec, layer: 0, strength: 0.7 };
        let mut grads: Vec<LayerGrad> = net.layers().iter().map(LayerGrad::zeros_like).collect();
        reg.penalty(&net, &mut grads);
        let h = 1e-3f32;
        for i in [0usize, 5, 11] {
            let bump = |delta: f32| {
                let mut n = net.clone();
                n.layers_mut()[0].weights_mut().as_mut_slice()[i] += delta;
                let mut g: Vec<LayerGrad> = n.layers().iter().map(LayerGrad::zeros_like).collect();
                reg.penalty(&n, &mut g)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * f64::from(h));
            assert!((fd - grads[0].weights[i]).abs() < 1e-3 * fd.abs().max(1e-2), "{fd} vs {}", grads[0].weights[i]);
        }
    }
}

//! Model file: `"NAF1" | version u16 | layer count u16 | layers | crc32`,
//! each layer `in u32 | out u32 | activation u8 | weights f32[out*in] | biases f32[out]`.

use std::path::Path;

use super::{Activation, DenseLayer, Network};
use crate::container::{ArtifactTag, Reader, Writer};
use crate::error::{NafError, Result};
use crate::matrix::Matrix;

pub fn model_to_bytes(net: &Network) -> Result<Vec<u8>> {
    let count = net.num_layers();
    if count >= ArtifactTag::FIRST as usize {
        return Err(NafError::Config(format!("too many layers to serialize: {count}")));
    }
    let mut w = Writer::new(count as u16);
    for layer in net.layers() {
        w.u32(layer.in_dim() as u32);
        w.u32(layer.out_dim() as u32);
        w.u8(layer.activation().tag());
        w.f32s(layer.weights().as_slice());
        w.f32s(layer.biases());
    }
    Ok(w.finish())
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::open(bytes)?;
    let count = r.header as usize;
    if count == 0 || count >= ArtifactTag::FIRST as usize {
        return Err(NafError::format(6, format!("not a model file (header word {:#06x})", r.header)));
    }
    let mut layers = Vec::with_capacity(count);
    let mut input_dim = 0;
    for i in 0..count {
        let at = r.offset();
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let tag_at = r.offset();
        let act = Activation::from_tag(r.u8()?)
            .ok_or_else(|| NafError::format(tag_at, "unknown activation tag"))?;
        let weights = r.f32s(out_dim.saturating_mul(in_dim))?;
        let biases = r.f32s(out_dim)?;
        let weights = Matrix::from_vec(out_dim, in_dim, weights).unwrap();
        let layer = DenseLayer::new(weights, biases, act)
            .map_err(|e| NafError::format(at, format!("layer {i}: {e}")))?;
        if i == 0 {
            input_dim = in_dim;
        }
        layers.push(layer);
    }
    let end = r.offset();
    r.finish()?;
    Network::new(input_dim, layers).map_err(|e| NafError::format(end, e.to_string()))
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_bytes(net)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    model_from_bytes(&std::fs::read(path)?)
}

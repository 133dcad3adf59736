use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coding::CentroidSet;
use crate::container::{pack_symbols, unpack_symbols, ArtifactTag, Reader, Writer};
use crate::error::{NafError, Result};
use crate::matrix::Matrix;

/// T1: optimized against the original network only. T2: against the
/// original plus tuned variants. N: plain task samples used as triggers, the
/// unoptimized baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerMode {
    N,
    T1,
    T2,
}

impl TriggerMode {
    fn tag(self) -> u8 {
        match self {
            TriggerMode::N => 0,
            TriggerMode::T1 => 1,
            TriggerMode::T2 => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TriggerMode::N => "n",
            TriggerMode::T1 => "t1",
            TriggerMode::T2 => "t2",
        }
    }
}

impl std::fmt::Display for TriggerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for TriggerMode {
    type Err = NafError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(TriggerMode::N),
            "t1" => Ok(TriggerMode::T1),
            "t2" => Ok(TriggerMode::T2),
            other => Err(NafError::Config(format!("unknown trigger mode `{other}` (n, t1 or t2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerLog {
    pub loss: f64,
    pub converged: bool,
}

/// The owner's evidence: `T` trigger inputs, one per code position, plus what
/// is needed to read them back.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerSet {
    pub mode: TriggerMode,
    pub layer_name: String,
    /// `T × input_dim`.
    pub triggers: Matrix,
    pub centroid_set: CentroidSet,
    pub codebook_hash: [u8; 32],
    /// One description per tuned variant (`J` entries).
    pub provenance: Vec<String>,
    pub log: Vec<TriggerLog>,
    /// Set when the triggers were forged against a layer-normalized copy; the
    /// suspicious network must then be normalized before reading codes.
    pub normalized: bool,
}

impl TriggerSet {
    pub fn new(
        mode: TriggerMode,
        layer_name: String,
        triggers: Matrix,
        centroid_set: CentroidSet,
        codebook_hash: [u8; 32],
        provenance: Vec<String>,
        log: Vec<TriggerLog>,
    ) -> Result<Self> {
        if triggers.rows() == 0 {
            return Err(NafError::Config("trigger set is empty".into()));
        }
        if !triggers.is_finite() {
            return Err(NafError::Config("trigger inputs must be finite".into()));
        }
        if log.len() != triggers.rows() {
            return Err(NafError::shape("trigger log", triggers.rows(), log.len()));
        }
        if mode == TriggerMode::T2 && provenance.is_empty() {
            return Err(NafError::Config("T2 trigger sets need at least one tuned variant".into()));
        }
        Ok(TriggerSet {
            mode,
            layer_name,
            triggers,
            centroid_set,
            codebook_hash,
            provenance,
            log,
            normalized: false,
        })
    }

    /// Number of triggers, `T`.
    pub fn len(&self) -> usize {
        self.triggers.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.triggers.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.triggers.cols()
    }

    /// Variant count `J`.
    pub fn j(&self) -> usize {
        self.provenance.len()
    }

    pub fn converged_fraction(&self) -> f64 {
        self.log.iter().filter(|l| l.converged).count() as f64 / self.log.len() as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ArtifactTag::TriggerSet as u16);
        w.u8(self.mode.tag());
        w.u8(self.normalized as u8);
        w.u16(self.provenance.len() as u16);
        w.str(&self.layer_name);
        w.u32(self.len() as u32);
        w.u32(self.input_dim() as u32);
        self.centroid_set.write(&mut w);
        w.bytes(&self.codebook_hash);
        for p in &self.provenance {
            w.str(p);
        }
        w.f32s(self.triggers.as_slice());
        for l in &self.log {
            w.u64(l.loss.to_bits());
        }
        let flags: Vec<u8> = self.log.iter().map(|l| l.converged as u8).collect();
        w.bytes(&pack_symbols(&flags, 1));
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open_tagged(bytes, ArtifactTag::TriggerSet)?;
        let at = r.offset();
        let mode = match r.u8()? {
            0 => TriggerMode::N,
            1 => TriggerMode::T1,
            2 => TriggerMode::T2,
            other => return Err(NafError::format(at, format!("unknown trigger mode tag {other}"))),
        };
        let normalized = r.u8()? != 0;
        let j = r.u16()? as usize;
        let layer_name = r.str()?;
        let t = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let centroid_set = CentroidSet::read(&mut r)?;
        let codebook_hash: [u8; 32] = r.bytes(32)?.try_into().unwrap();
        let provenance = (0..j).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let body_at = r.offset();
        let triggers = r.f32s(t.saturating_mul(dim))?;
        let losses = (0..t).map(|_| r.u64().map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
        let flags = unpack_symbols(r.bytes(t.div_ceil(8))?, t, 1);
        r.finish()?;
        let log = losses
            .into_iter()
            .zip(flags)
            .map(|(loss, c)| TriggerLog {
                loss,
                converged: c == 1,
            })
            .collect();
        let mut set = TriggerSet::new(
            mode,
            layer_name,
            Matrix::from_vec(t, dim, triggers).unwrap(),
            centroid_set,
            codebook_hash,
            provenance,
            log,
        )
        .map_err(|e| NafError::format(body_at, e.to_string()))?;
        set.normalized = normalized;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TriggerSet::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TriggerSet {
        let cs = CentroidSet::new(vec![0.0, 2.5], vec![1.25]).unwrap();
        let trig = Matrix::from_vec(3, 2, vec![0.1, -0.2, 1.0, 2.0, -3.5, 0.0]).unwrap();
        let log = vec![
            TriggerLog { loss: 0.5, converged: true },
            TriggerLog { loss: 7.0, converged: false },
            TriggerLog { loss: 0.25, converged: true },
        ];
        let mut ts = TriggerSet::new(
            TriggerMode::T2,
            "fc2".into(),
            trig,
            cs,
            [7u8; 32],
            vec!["finetune epochs=1 lr=0.01 seed=0".into(), "prune fraction=0.05 seed=1".into()],
            log,
        )
        .unwrap();
        ts.normalized = true;
        ts
    }

    #[test]
    fn file_roundtrip() {
        let ts = sample();
        let back = TriggerSet::from_bytes(&ts.to_bytes()).unwrap();
        assert_eq!(back, ts);
        assert_eq!(back.j(), 2);
    }

    #[test]
    fn t2_needs_variants() {
        let ts = sample();
        let r = TriggerSet::new(
            TriggerMode::T2,
            ts.layer_name,
            ts.triggers,
            ts.centroid_set,
            ts.codebook_hash,
            vec![],
            ts.log,
        );
        assert!(r.is_err());
    }

    #[test]
    fn truncated_file_is_format_error() {
        let b = sample().to_bytes();
        assert!(matches!(TriggerSet::from_bytes(&b[..b.len() - 9]), Err(NafError::Format { .. })));
    }
}

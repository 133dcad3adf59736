//! Shared binary container for every on-disk artifact.
//!
//! ```text
//! "NAF1" | version u16 | header u16 | payload ... | crc32 u32
//! ```
//!
//! All integers and floats are little-endian. The CRC covers every byte
//! between the magic and the checksum itself. For model files the header
//! word is the layer count; other artifacts store a tag with the high bit
//! set, so a model can never be mistaken for a record or a codebook.

use crate::error::{NafError, Result};

pub const MAGIC: &[u8; 4] = b"NAF1";
pub const VERSION: u16 = 1;

/// Header word marking a non-model artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ArtifactTag {
    WatermarkRecord = 0x8001,
    Codebook = 0x8002,
    TriggerSet = 0x8003,
    CentroidSet = 0x8004,
}

impl ArtifactTag {
    pub const FIRST: u16 = 0x8000;
}

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(header: u16) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&header.to_le_bytes());
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.f32(*v);
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// Length-prefixed (u16) UTF-8 string.
    pub fn str(&mut self, s: &str) {
        let b = s.as_bytes();
        self.u16(b.len() as u16);
        self.bytes(b);
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf[MAGIC.len()..]);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    end: usize,
    pub header: u16,
}

impl<'a> Reader<'a> {
    /// Validates magic, version and checksum, then positions the cursor on
    /// the first payload byte.
    pub fn open(buf: &'a [u8]) -> Result<Self> {
        const MIN: usize = 4 + 2 + 2 + 4;
        if buf.len() < 4 || &buf[..4] != MAGIC {
            return Err(NafError::format(0, "bad magic, expected \"NAF1\""));
        }
        if buf.len() < MIN {
            return Err(NafError::format(buf.len(), "file truncated inside header"));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != VERSION {
            return Err(NafError::format(4, format!("unsupported version {version}")));
        }
        let end = buf.len() - 4;
        let stored = u32::from_le_bytes(buf[end..].try_into().unwrap());
        let actual = crc32fast::hash(&buf[4..end]);
        if stored != actual {
            return Err(NafError::format(
                end,
                format!("checksum mismatch (stored {stored:#010x}, computed {actual:#010x}); file truncated or corrupted"),
            ));
        }
        let header = u16::from_le_bytes([buf[6], buf[7]]);
        Ok(Reader {
            buf,
            pos: 8,
            end,
            header,
        })
    }

    /// Opens a non-model artifact and checks its tag.
    pub fn open_tagged(buf: &'a [u8], tag: ArtifactTag) -> Result<Self> {
        let r = Reader::open(buf)?;
        if r.header != tag as u16 {
            return Err(NafError::format(
                6,
                format!("expected artifact tag {:#06x}, found {:#06x}", tag as u16, r.header),
            ));
        }
        Ok(r)
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.end - self.pos < n {
            return Err(NafError::format(
                self.pos,
                format!("payload truncated: need {n} bytes, {} left", self.end - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| NafError::format(self.pos, "length overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let at = self.pos;
        let n = self.u16()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| NafError::format(at, "invalid UTF-8 string"))
    }

    /// Fails if payload bytes remain unread.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.end {
            return Err(NafError::format(
                self.pos,
                format!("{} trailing payload bytes", self.end - self.pos),
            ));
        }
        Ok(())
    }
}

/// Packs symbols of `bits` width each, LSB first.
pub(crate) fn pack_symbols(symbols: &[u8], bits: u32) -> Vec<u8> {
    let total = symbols.len() * bits as usize;
    let mut out = vec![0u8; total.div_ceil(8)];
    let mut bit = 0usize;
    for &s in symbols {
        for b in 0..bits {
            if (s >> b) & 1 == 1 {
                out[bit / 8] |= 1 << (bit % 8);
            }
            bit += 1;
        }
    }
    out
}

pub(crate) fn unpack_symbols(packed: &[u8], count: usize, bits: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut s = 0u8;
        for b in 0..bits {
            if (packed[bit / 8] >> (bit % 8)) & 1 == 1 {
                s |= 1 << b;
            }
            bit += 1;
        }
        out.push(s);
    }
    out
}

/// Bits needed to store one symbol of an alphabet of size `k` (at least 1).
pub(crate) fn symbol_bits(k: usize) -> u32 {
    let mut bits = 1;
    while (1usize << bits) < k {
        bits += 1;
    }
    bits
}

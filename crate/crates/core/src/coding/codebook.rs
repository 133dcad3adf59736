use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::container::{pack_symbols, symbol_bits, unpack_symbols, ArtifactTag, Reader, Writer};
use crate::error::{NafError, Result};

/// Candidate draws allowed per codeword before a construction attempt is
/// abandoned.
const CANDIDATES_PER_WORD: usize = 4000;
/// Fresh construction attempts before giving up on a distance target.
const RESTARTS: u64 = 8;

/// `N` codewords of length `T` over the alphabet `{0..K-1}`, one per neuron.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    n: usize,
    t: usize,
    k: usize,
    symbols: Vec<u8>,
    d_min: usize,
    seed: u64,
}

impl Codebook {
    /// Builds a codebook from explicit words; `d_min` is measured.
    pub fn from_words(words: &[Vec<u8>], k: usize, seed: u64) -> Result<Self> {
        let n = words.len();
        if n == 0 {
            return Err(NafError::Config("codebook needs at least one word".into()));
        }
        if !(2..=256).contains(&k) {
            return Err(NafError::Config(format!("alphabet size must lie in [2, 256], got {k}")));
        }
        let t = words[0].len();
        if t == 0 {
            return Err(NafError::Config("codewords must be non-empty".into()));
        }
        let mut symbols = Vec::with_capacity(n * t);
        for w in words {
            if w.len() != t {
                return Err(NafError::shape("codeword length", t, w.len()));
            }
            if let Some(s) = w.iter().find(|&&s| s as usize >= k) {
                return Err(NafError::Config(format!("symbol {s} outside alphabet of size {k}")));
            }
            symbols.extend_from_slice(w);
        }
        let mut cb = Codebook {
            n,
            t,
            k,
            symbols,
            d_min: 0,
            seed,
        };
        cb.d_min = cb.measure_d_min();
        Ok(cb)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Minimum pairwise Hamming distance; `T` for a single word.
    pub fn d_min(&self) -> usize {
        self.d_min
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn word(&self, i: usize) -> &[u8] {
        &self.symbols[i * self.t..(i + 1) * self.t]
    }

    pub fn words(&self) -> impl Iterator<Item = &[u8]> {
        self.symbols.chunks_exact(self.t)
    }

    /// Symbol of neuron `n` at code position `pos`.
    pub fn symbol(&self, n: usize, pos: usize) -> u8 {
        self.symbols[n * self.t + pos]
    }

    /// Errors within this many positions always decode to the right word.
    pub fn radius(&self) -> usize {
        self.d_min.saturating_sub(1) / 2
    }

    fn measure_d_min(&self) -> usize {
        let mut d = self.t;
        for i in 0..self.n {
            for j in i + 1..self.n {
                d = d.min(hamming(self.word(i), self.word(j)));
            }
        }
        d
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ArtifactTag::Codebook as u16);
        w.u32(self.n as u32);
        w.u32(self.t as u32);
        w.u16(self.k as u16);
        w.u32(self.d_min as u32);
        w.u64(self.seed);
        w.bytes(&pack_symbols(&self.symbols, symbol_bits(self.k)));
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open_tagged(bytes, ArtifactTag::Codebook)?;
        let at = r.offset();
        let n = r.u32()? as usize;
        let t = r.u32()? as usize;
        let k = r.u16()? as usize;
        let d_min = r.u32()? as usize;
        let seed = r.u64()?;
        let bits = symbol_bits(k.max(2));
        let packed = r.bytes((n * t * bits as usize).div_ceil(8))?;
        r.finish()?;
        let symbols = unpack_symbols(packed, n * t, bits);
        let words: Vec<Vec<u8>> = symbols.chunks(t.max(1)).map(<[u8]>::to_vec).collect();
        let cb = Codebook::from_words(&words, k, seed).map_err(|e| NafError::format(at, e.to_string()))?;
        if cb.d_min != d_min {
            return Err(NafError::format(
                at + 10,
                format!("stored d_min {d_min} disagrees with measured {}", cb.d_min),
            ));
        }
        Ok(cb)
    }

    /// SHA-256 of the serialized codebook.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Codebook::from_bytes(&std::fs::read(path)?)
    }
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Symbol-wise L1 distance; equals the Hamming distance for binary words.
pub fn symbol_distance(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as usize).sum()
}

/// Upper bound on the number of words of length `t` over `k` symbols at
/// pairwise distance `d` (Plotkin), or `None` when the bound does not apply
/// (`d ≤ (1 − 1/k)·t`).
pub fn plotkin_limit(t: usize, k: usize, d: usize) -> Option<usize> {
    // d > θt with θ = (k-1)/k  ⇔  d·k > (k-1)·t; then M ≤ ⌊d·k / (d·k − (k-1)·t)⌋.
    let (dk, theta_t) = (d * k, (k - 1) * t);
    (dk > theta_t).then(|| dk / (dk - theta_t))
}

/// Seeded random codebook with greedy minimum-distance rejection.
///
/// Words are drawn uniformly and kept only if they sit at Hamming distance
/// `≥ d_min_target` from every word kept so far. A construction that cannot
/// place its next word within a fixed candidate budget restarts from scratch;
/// after a bounded number of restarts a capacity error is returned.
pub fn generate_codebook(n: usize, t: usize, k: usize, d_min_target: usize, seed: u64) -> Result<Codebook> {
    if n == 0 || t == 0 {
        return Err(NafError::Config("codebook needs N ≥ 1 and T ≥ 1".into()));
    }
    if !(2..=256).contains(&k) {
        return Err(NafError::Config(format!("alphabet size must lie in [2, 256], got {k}")));
    }
    let target = d_min_target.max(1);
    let advice = "raise T or lower the minimum distance";
    if target > t && n > 1 {
        return Err(NafError::Capacity(format!(
            "distance {target} exceeds code length {t}; {advice}"
        )));
    }
    if (n as f64) > (k as f64).powi(t.min(64) as i32) {
        return Err(NafError::Capacity(format!(
            "{n} distinct words do not exist at length {t} over {k} symbols; {advice}"
        )));
    }
    if let Some(limit) = plotkin_limit(t, k, target).filter(|&m| n > m) {
        return Err(NafError::Capacity(format!(
            "at most {limit} words of length {t} can be pairwise {target} apart, {n} requested; {advice}"
        )));
    }

    for attempt in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        if let Some(words) = greedy(n, t, k, target, &mut rng) {
            let mut cb = Codebook::from_words(&words, k, seed)?;
            if n == 1 {
                cb.d_min = t;
            }
            return Ok(cb);
        }
    }
    Err(NafError::Capacity(format!(
        "could not place {n} words of length {t} at distance {target} within the retry budget; {advice}"
    )))
}

fn greedy(n: usize, t: usize, k: usize, d: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<u8>>> {
    let mut words: Vec<Vec<u8>> = Vec::with_capacity(n);
    let mut cand = vec![0u8; t];
    while words.len() < n {
        let mut placed = false;
        for _ in 0..CANDIDATES_PER_WORD {
            for s in cand.iter_mut() {
                *s = rng.gen_range(0..k) as u8;
            }
            if words.iter().all(|w| hamming(w, &cand) >= d) {
                words.push(cand.clone());
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(words)
}

/// Tries `d_target` first and walks down until a codebook can be built.
/// The result reports the distance it actually achieved.
pub fn generate_best_codebook(n: usize, t: usize, k: usize, d_target: usize, seed: u64) -> Result<Codebook> {
    let mut d = d_target.clamp(1, t);
    loop {
        match generate_codebook(n, t, k, d, seed) {
            Ok(cb) => return Ok(cb),
            Err(NafError::Capacity(msg)) if d <= 1 => return Err(NafError::Capacity(msg)),
            Err(NafError::Capacity(_)) => d -= 1,
            Err(e) => return Err(e),
        }
    }
}

/// Index of the codeword closest to `observed` in symbol-wise L1 distance,
/// and that distance. Ties go to the lowest index.
pub fn decode_codeword(observed: &[u8], cb: &Codebook) -> (usize, usize) {
    let mut best = (0, usize::MAX);
    for (i, w) in cb.words().enumerate() {
        let d = symbol_distance(w, observed);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

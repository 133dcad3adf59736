use serde::{Deserialize, Serialize};

use crate::container::{ArtifactTag, Reader, Writer};
use crate::error::{NafError, Result};
use crate::matrix::Matrix;

/// `K` ascending centroids of a layer's pooled output distribution, with the
/// `K − 1` fold edges between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    pub centroids: Vec<f32>,
    pub boundaries: Vec<f32>,
}

impl CentroidSet {
    pub fn new(centroids: Vec<f32>, boundaries: Vec<f32>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(NafError::Config("centroid set needs at least one centroid".into()));
        }
        if boundaries.len() + 1 != centroids.len() {
            return Err(NafError::shape("fold boundaries", centroids.len() - 1, boundaries.len()));
        }
        if centroids.iter().chain(&boundaries).any(|v| !v.is_finite()) {
            return Err(NafError::Config("centroids must be finite".into()));
        }
        if let Some(i) = (1..centroids.len()).find(|&i| centroids[i] <= centroids[i - 1]) {
            return Err(NafError::Capacity(format!(
                "degenerate output distribution: centroid {} ({}) does not exceed centroid {} ({})",
                i,
                centroids[i],
                i - 1,
                centroids[i - 1]
            )));
        }
        Ok(CentroidSet {
            centroids,
            boundaries,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Distance between the two outermost centroids divided by `K − 1`; the
    /// average spacing between adjacent symbols.
    pub fn gap(&self) -> f64 {
        if self.k() < 2 {
            return 0.0;
        }
        (f64::from(self.centroids[self.k() - 1]) - f64::from(self.centroids[0])) / (self.k() - 1) as f64
    }

    /// Fold containing `value` according to the stored edges. A value on an
    /// edge belongs to the lower fold.
    pub fn fold_of(&self, value: f32) -> usize {
        self.boundaries.iter().take_while(|&&b| value > b).count()
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u32(self.k() as u32);
        w.f32s(&self.centroids);
        w.f32s(&self.boundaries);
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let at = r.offset();
        let k = r.u32()? as usize;
        if k == 0 {
            return Err(NafError::format(at, "centroid count is zero"));
        }
        let centroids = r.f32s(k)?;
        let boundaries = r.f32s(k - 1)?;
        CentroidSet::new(centroids, boundaries).map_err(|e| NafError::format(at, e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ArtifactTag::CentroidSet as u16);
        self.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open_tagged(bytes, ArtifactTag::CentroidSet)?;
        let cs = CentroidSet::read(&mut r)?;
        r.finish()?;
        Ok(cs)
    }
}

/// Splits the pooled outputs into `K` rank-equal folds and averages each.
///
/// All `M = N·D` values are sorted ascending; fold `k` (0-based) holds sorted
/// ranks `(⌈Mk/K⌉, ⌈M(k+1)/K⌉]`, so fold sizes differ by at most one. Each
/// fold's sum is divided by `⌈M/K⌉`, which is the fold mean whenever `K`
/// divides `M`. Fold edges are the midpoints between the largest value of
/// one fold and the smallest of the next.
pub fn compute_centroids(outputs: &Matrix, k: usize) -> Result<CentroidSet> {
    let values = outputs.as_slice();
    let m = values.len();
    if k < 1 || k > m {
        return Err(NafError::Config(format!(
            "K must lie in [1, {m}] (pooled sample count), got {k}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NafError::Config("layer outputs contain non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let denom = m.div_ceil(k) as f64;
    let edge = |j: usize| (m * j).div_ceil(k);
    let mut centroids = Vec::with_capacity(k);
    let mut boundaries = Vec::with_capacity(k - 1);
    for fold in 0..k {
        let (lo, hi) = (edge(fold), edge(fold + 1));
        let sum: f64 = sorted[lo..hi].iter().map(|&v| f64::from(v)).sum();
        centroids.push((sum / denom) as f32);
        if fold + 1 < k {
            let mid = (f64::from(sorted[hi - 1]) + f64::from(sorted[hi])) / 2.0;
            boundaries.push(mid as f32);
        }
    }
    CentroidSet::new(centroids, boundaries)
}

/// Index of the centroid closest to `value`; ties go to the lower index.
pub fn nearest_centroid(value: f32, cs: &CentroidSet) -> usize {
    let v = f64::from(value);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, &c) in cs.centroids.iter().enumerate() {
        let d = (v - f64::from(c)).abs();
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pooled(v: &[f32]) -> Matrix {
        Matrix::from_vec(1, v.len(), v.to_vec()).unwrap()
    }

    /// Sort, cut into K equal-rank chunks, average each chunk.
    fn oracle(values: &[f32], k: usize) -> Vec<f64> {
        let mut s: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        s.sort_by(f64::total_cmp);
        let per = s.len() / k;
        s.chunks(per).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }

    #[test]
    fn eight_values_two_folds() {
        let v = [5.0f32, 1.0, 7.0, 0.0, 3.0, 2.0, 6.0, 4.0];
        let cs = compute_centroids(&pooled(&v), 2).unwrap();
        assert_eq!(cs.centroids, vec![1.5, 5.5]);
        assert_eq!(cs.boundaries, vec![3.5]);
        let want = oracle(&v, 2);
        assert_eq!(want, vec![1.5, 5.5]);
    }

    #[test]
    fn single_fold_is_global_mean() {
        let v = [1.0f32, 2.0, 3.0, 10.0];
        let cs = compute_centroids(&pooled(&v), 1).unwrap();
        assert_eq!(cs.centroids, vec![4.0]);
        assert!(cs.boundaries.is_empty());
    }

    #[test]
    fn divisible_case_matches_oracle() {
        let v: Vec<f32> = (0..60).map(|i| ((i * 37) % 61) as f32 * 0.25 - 3.0).collect();
        for k in [2, 3, 4, 5, 6] {
            let cs = compute_centroids(&pooled(&v), k).unwrap();
            for (got, want) in cs.centroids.iter().zip(oracle(&v, k)) {
                assert!((f64::from(*got) - want).abs() < 1e-5);
            }
            for (i, c) in cs.centroids.iter().enumerate() {
                let lo = if i == 0 { f32::NEG_INFINITY } else { cs.boundaries[i - 1] };
                let hi = cs.boundaries.get(i).copied().unwrap_or(f32::INFINITY);
                assert!(lo <= *c && *c <= hi);
            }
        }
    }

    #[test]
    fn k_out_of_range() {
        assert!(compute_centroids(&pooled(&[1.0, 2.0]), 0).is_err());
        assert!(compute_centroids(&pooled(&[1.0, 2.0]), 3).is_err());
    }

    #[test]
    fn constant_outputs_are_degenerate() {
        assert!(matches!(
            compute_centroids(&pooled(&[0.0; 10]), 2),
            Err(NafError::Capacity(_))
        ));
    }

    #[test]
    fn nearest_examples() {
        let cs = CentroidSet::new(vec![0.0, 2.5], vec![1.25]).unwrap();
        assert_eq!(nearest_centroid(0.3, &cs), 0);
        assert_eq!(nearest_centroid(1.25, &cs), 0);
        assert_eq!(nearest_centroid(100.0, &cs), 1);
        assert_eq!(nearest_centroid(-100.0, &cs), 0);
    }

    #[test]
    fn fold_membership() {
        let cs = CentroidSet::new(vec![0.0, 1.0, 2.0], vec![0.5, 1.5]).unwrap();
        assert_eq!(cs.fold_of(0.5), 0);
        assert_eq!(cs.fold_of(0.51), 1);
        assert_eq!(cs.fold_of(9.0), 2);
    }

    #[test]
    fn file_roundtrip() {
        let cs = CentroidSet::new(vec![0.0, 2.5], vec![1.25]).unwrap();
        assert_eq!(CentroidSet::from_bytes(&cs.to_bytes()).unwrap(), cs);
    }
}

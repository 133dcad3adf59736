use serde::{Deserialize, Serialize};

use crate::coding::{nearest_centroid, CentroidSet};
use crate::matrix::Matrix;

/// Separation of one trigger's layer outputs into centroid clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    /// Distance between cluster means (mean over adjacent pairs when more
    /// than two clusters are populated).
    pub inter: f64,
    /// Mean absolute deviation of each output from its own cluster mean.
    pub intra: f64,
}

/// Clusters `outputs` by nearest centroid. `None` when fewer than two
/// clusters are populated, since the inter-cluster distance is undefined.
pub fn cluster_quality(outputs: &[f32], cs: &CentroidSet) -> Option<ClusterQuality> {
    let k = cs.k();
    let mut sums = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    let assign: Vec<usize> = outputs.iter().map(|&y| nearest_centroid(y, cs)).collect();
    for (&y, &c) in outputs.iter().zip(&assign) {
        sums[c] += f64::from(y);
        counts[c] += 1;
    }
    let means: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let present: Vec<f64> = means.iter().flatten().copied().collect();
    if present.len() < 2 {
        return None;
    }
    let inter = present.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (present.len() - 1) as f64;
    let intra = outputs
        .iter()
        .zip(&assign)
        .map(|(&y, &c)| (f64::from(y) - means[c].unwrap()).abs())
        .sum::<f64>()
        / outputs.len() as f64;
    Some(ClusterQuality { inter, intra })
}

/// Averages [`cluster_quality`] over the rows of a `T × N` output matrix,
/// skipping the columns in `exclude` (dead neurons). Inter-cluster distance
/// is averaged over rows where it is defined; `None` if it never is.
pub fn mean_cluster_quality(outputs: &Matrix, cs: &CentroidSet, exclude: &[usize]) -> Option<ClusterQuality> {
    let keep: Vec<usize> = (0..outputs.cols()).filter(|c| !exclude.contains(c)).collect();
    let mut inter = 0.0;
    let mut intra = 0.0;
    let mut defined = 0usize;
    for r in 0..outputs.rows() {
        let row: Vec<f32> = keep.iter().map(|&c| outputs[(r, c)]).collect();
        if let Some(q) = cluster_quality(&row, cs) {
            inter += q.inter;
            intra += q.intra;
            defined += 1;
        }
    }
    (defined > 0).then(|| ClusterQuality {
        inter: inter / defined as f64,
        intra: intra / defined as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cs() -> CentroidSet {
        CentroidSet::new(vec![0.0, 2.5], vec![1.25]).unwrap()
    }

    #[test]
    fn ideal_outputs() {
        let q = cluster_quality(&[0.0, 2.5, 2.5, 0.0, 0.0], &cs()).unwrap();
        assert_eq!(q.inter, 2.5);
        assert_eq!(q.intra, 0.0);
    }

    #[test]
    fn single_cluster_is_undefined() {
        assert!(cluster_quality(&[1.0; 8], &cs()).is_none());
    }

    #[test]
    fn uniform_noise_is_poorly_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ratios = Vec::new();
        for _ in 0..200 {
            let v: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..3.0)).collect();
            let q = cluster_quality(&v, &cs()).unwrap();
            ratios.push(q.inter / q.intra);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        // analytic: inter = 1.5, intra ≈ 0.375
        assert!(mean < 10.0 && mean > 2.0, "{mean}");
    }

    #[test]
    fn mean_skips_excluded_columns() {
        let m = Matrix::from_rows(&[[0.0f32, 2.5, 9.0], [2.5, 0.0, 9.0]]).unwrap();
        let q = mean_cluster_quality(&m, &cs(), &[2]).unwrap();
        assert_eq!((q.inter, q.intra), (2.5, 0.0));
    }
}

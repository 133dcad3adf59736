use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

/// Parameters of the packing bound
///
/// `N · Σ_{t=1}^{T_c} C(T, t) · K_c^t ≤ K^T`
///
/// which must hold for `N` codewords of length `T` over `K` symbols to stay
/// uniquely decodable when up to `T_c` positions are each shifted by up to
/// `K_c` folds. The sum starts at `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityParams {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub k_corrupted: usize,
    pub t_corrupted: usize,
}

impl CapacityParams {
    pub fn holds(&self) -> bool {
        let rhs = BigUint::from(self.k).pow(self.t as u32);
        let sum = corrupted_volume(self.t, self.k_corrupted, self.t_corrupted);
        BigUint::from(self.n) * sum <= rhs
    }
}

/// `Σ_{t=1}^{tc} C(T, t) · kc^t`, exactly.
fn corrupted_volume(t: usize, kc: usize, tc: usize) -> BigUint {
    let kc = BigUint::from(kc);
    let mut binom = BigUint::one();
    let mut kpow = BigUint::one();
    let mut sum = BigUint::default();
    for i in 1..=tc.min(t) {
        binom = binom * BigUint::from(t - i + 1) / BigUint::from(i);
        kpow *= &kc;
        sum += &binom * &kpow;
    }
    sum
}

/// Largest `T_c ≤ T` satisfying the packing bound, or 0 when even `T_c = 1`
/// fails. Uses exact big-integer arithmetic (`2^160` does not fit in a u128).
///
/// # Panics
/// If `n`, `t` or `k_corrupted` is zero or `k < 2`.
pub fn max_correctable(n: usize, t: usize, k: usize, k_corrupted: usize) -> usize {
    assert!(n >= 1 && t >= 1 && k >= 2 && k_corrupted >= 1, "max_correctable preconditions violated");
    let rhs = BigUint::from(k).pow(t as u32);
    let n = BigUint::from(n);
    let kc = BigUint::from(k_corrupted);
    let mut binom = BigUint::one();
    let mut kpow = BigUint::one();
    let mut sum = BigUint::default();
    let mut best = 0;
    for tc in 1..=t {
        binom = binom * BigUint::from(t - tc + 1) / BigUint::from(tc);
        kpow *= &kc;
        sum += &binom * &kpow;
        if &n * &sum > rhs {
            break;
        }
        best = tc;
    }
    best
}

/// `max_correctable` over a grid; rows follow `ns`, columns follow `ts`.
pub fn capacity_table(ns: &[usize], ts: &[usize], k: usize, k_corrupted: usize) -> Vec<Vec<usize>> {
    ns.iter()
        .map(|&n| ts.iter().map(|&t| max_correctable(n, t, k, k_corrupted)).collect())
        .collect()
}

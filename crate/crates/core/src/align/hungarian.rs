//! Minimum-cost perfect matching on a square cost matrix (Kuhn–Munkres with
//! potentials, O(n³)).

/// Returns `assignment[row] = column` minimizing the total cost.
///
/// Rows are inserted in index order and every column scan keeps the first
/// minimum it sees, so equal-cost alternatives resolve towards lower indices
/// and the result is deterministic.
pub(crate) fn min_cost_assignment(costs: &[Vec<i64>]) -> Vec<usize> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(costs.iter().all(|r| r.len() == n));

    const INF: i64 = i64::MAX / 4;
    // 1-based internally; column 0 is the virtual source.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut col = 0usize;
        let mut min_slack = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col] = true;
            let r = owner[col];
            let mut delta = INF;
            let mut next = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let slack = costs[r - 1][j - 1] - u[r] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = col;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    next = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            col = next;
            if owner[col] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let prev = way[col];
            owner[col] = owner[prev];
            col = prev;
            if col == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(costs: &[Vec<i64>], a: &[usize]) -> i64 {
        a.iter().enumerate().map(|(r, &c)| costs[r][c]).sum()
    }

    /// Exhaustive minimum over all permutations (Heap's algorithm).
    fn brute_force(costs: &[Vec<i64>]) -> i64 {
        let n = costs.len();
        let mut p: Vec<usize> = (0..n).collect();
        let mut c = vec![0usize; n];
        let mut best = total(costs, &p);
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    p.swap(0, i);
                } else {
                    p.swap(c[i], i);
                }
                best = best.min(total(costs, &p));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best
    }

    #[test]
    fn known_example() {
        let costs = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = min_cost_assignment(&costs);
        assert_eq!(total(&costs, &a), 5);
        assert_eq!(a, vec![1, 0, 2]);
    }

    #[test]
    fn matches_brute_force() {
        let mut state = 0x1234_5678u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 20) as i64
        };
        for n in 1..=7 {
            for _ in 0..30 {
                let costs: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| next()).collect()).collect();
                let a = min_cost_assignment(&costs);
                let mut seen = a.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
                assert_eq!(total(&costs, &a), brute_force(&costs));
            }
        }
    }

    #[test]
    fn all_equal_costs_yield_identity() {
        let costs = vec![vec![3i64; 5]; 5];
        assert_eq!(min_cost_assignment(&costs), vec![0, 1, 2, 3, 4]);
    }
}

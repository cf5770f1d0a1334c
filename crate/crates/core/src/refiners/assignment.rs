//! Gated minimum-cost bipartite assignment (Kuhn-Munkres).

use crate::scalar::Scalar;

/// Matches rows to columns using only pairs with `cost <= gate`.
///
/// Among all such matchings, picks one with the most pairs and, among
/// those, the lowest total cost. Returns `(row, col)` pairs sorted by row.
pub fn gated_min_cost_assignment<T: Scalar>(costs: &[Vec<T>], gate: T) -> Vec<(usize, usize)> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let admissible = |c: T| c.is_finite() && c <= gate;
    // Any forbidden or dummy cell costs more than every admissible cell
    // combined, so cardinality is maximised before cost is minimised.
    let mut total = T::one();
    for row in costs {
        for &c in row {
            if admissible(c) {
                total = total + c.abs();
            }
        }
    }
    let big = total;
    let n = rows.max(cols);
    let cell = |i: usize, j: usize| -> T {
        if i < rows && j < cols && admissible(costs[i][j]) {
            costs[i][j]
        } else {
            big
        }
    };

    // Potentials formulation, 1-based with a virtual column 0.
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cell(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .filter(|&(i, j)| i < rows && j < cols && admissible(costs[i][j]))
        .collect();
    pairs.sort_unstable();
    pairs
}

//! Linear assignment by shortest augmenting paths.
//!
//! Small problems use the Jonker–Volgenant procedure (column reduction,
//! reduction transfer, augmenting row reduction, augmentation with early
//! termination). Larger problems first run an ε-scaling auction whose prices
//! seed the column potentials, then perform the same exact augmentation from
//! an empty matching; the auction only shortens the augmenting paths.

/// Work cap for the augmenting row reduction; past it the remaining free
/// rows go straight to the shortest-path phase (the duals stay feasible).
const ROW_REDUCTION_BUDGET: usize = 8;
/// Sizes from which the auction warm start is used.
const WARM_START_FROM: usize = 64;
/// Ratio between successive auction increments.
const EPS_FACTOR: f64 = 8.0;
/// Final auction increment relative to the cost range.
const EPS_FINAL: f64 = 1e-9;
const NONE: usize = usize::MAX;

/// Minimum-cost perfect matching on a square row-major cost matrix.
/// Returns `row_to_col`.
pub fn solve(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    if n >= WARM_START_FROM {
        let mut v = auction_potentials(n, cost);
        let mut rowsol = vec![NONE; n];
        let mut colsol = vec![NONE; n];
        let free: Vec<usize> = (0..n).collect();
        augment(n, cost, &free, &mut v, &mut rowsol, &mut colsol);
        return rowsol;
    }
    solve_dense(n, cost)
}

/// Dense Jonker–Volgenant solver.
pub fn solve_dense(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0];
    }
    let c = |i: usize, j: usize| cost[i * n + j];
    let mut rowsol = vec![NONE; n];
    let mut colsol = vec![NONE; n];
    let mut v = vec![0.0; n];
    let mut matches = vec![0u32; n];

    // column reduction
    for j in (0..n).rev() {
        let (mut imin, mut min) = (0, c(0, j));
        for i in 1..n {
            if c(i, j) < min {
                min = c(i, j);
                imin = i;
            }
        }
        v[j] = min;
        matches[imin] += 1;
        if matches[imin] == 1 {
            rowsol[imin] = j;
            colsol[j] = imin;
        }
    }

    // reduction transfer
    let mut free = Vec::with_capacity(n);
    for i in 0..n {
        if matches[i] == 0 {
            free.push(i);
        } else if matches[i] == 1 {
            let j1 = rowsol[i];
            let min = (0..n)
                .filter(|&j| j != j1)
                .map(|j| c(i, j) - v[j])
                .fold(f64::INFINITY, f64::min);
            v[j1] -= min;
        }
    }

    // augmenting row reduction, two passes
    let mut budget = ROW_REDUCTION_BUDGET * n;
    for _ in 0..2 {
        let prev = std::mem::take(&mut free);
        let mut queue = prev;
        let mut k = 0;
        while k < queue.len() {
            let i = queue[k];
            k += 1;
            if budget == 0 {
                free.push(i);
                continue;
            }
            budget -= 1;
            let (mut umin, mut j1) = (c(i, 0) - v[0], 0);
            let (mut usubmin, mut j2) = (f64::INFINITY, 0);
            for j in 1..n {
                let h = c(i, j) - v[j];
                if h < usubmin {
                    if h >= umin {
                        usubmin = h;
                        j2 = j;
                    } else {
                        usubmin = umin;
                        umin = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            let mut i0 = colsol[j1];
            let strict = umin < usubmin;
            if strict {
                v[j1] -= usubmin - umin;
            } else if i0 != NONE {
                j1 = j2;
                i0 = colsol[j2];
            }
            if rowsol[i] != NONE {
                colsol[rowsol[i]] = NONE;
            }
            rowsol[i] = j1;
            colsol[j1] = i;
            if i0 != NONE {
                rowsol[i0] = NONE;
                if strict {
                    k -= 1;
                    queue[k] = i0;
                } else {
                    free.push(i0);
                }
            }
        }
    }

    augment(n, cost, &free, &mut v, &mut rowsol, &mut colsol);
    rowsol
}

/// Shortest augmenting paths from each row of `free`, with early
/// termination. Requires `c(i, rowsol[i]) - v[rowsol[i]] <= c(i, j) - v[j]`
/// for every matched row `i`; any `v` qualifies when nothing is matched.
fn augment(n: usize, cost: &[f64], free: &[usize], v: &mut [f64], rowsol: &mut [usize], colsol: &mut [usize]) {
    let c = |i: usize, j: usize| cost[i * n + j];
    let mut d = vec![0.0; n];
    let mut pred = vec![0usize; n];
    let mut collist: Vec<usize> = (0..n).collect();
    for &freerow in free {
        for j in 0..n {
            d[j] = c(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        let (mut low, mut up) = (0usize, 0usize);
        let mut last = 0usize;
        let mut min = 0.0;
        let endofpath;
        'search: loop {
            if up == low {
                last = low;
                min = d[collist[up]];
                up += 1;
                for k in up..n {
                    let j = collist[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                }
                for &j in &collist[low..up] {
                    if colsol[j] == NONE {
                        endofpath = j;
                        break 'search;
                    }
                }
            }
            let j1 = collist[low];
            low += 1;
            let i = colsol[j1];
            let h = c(i, j1) - v[j1] - min;
            let mut k = up;
            while k < n {
                let j = collist[k];
                let v2 = c(i, j) - v[j] - h;
                if v2 < d[j] {
                    pred[j] = i;
                    if v2 == min {
                        if colsol[j] == NONE {
                            endofpath = j;
                            break 'search;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                    d[j] = v2;
                }
                k += 1;
            }
        }
        // columns scanned before the final frontier get their prices raised
        for &j1 in &collist[..last] {
            v[j1] += d[j1] - min;
        }
        let mut j = endofpath;
        loop {
            let i = pred[j];
            colsol[j] = i;
            let next = rowsol[i];
            rowsol[i] = j;
            if i == freerow {
                break;
            }
            j = next;
        }
    }
}

/// Column potentials from an ε-scaling auction (Gauss–Seidel bidding, in
/// minimization form): `v_j = -p_j`.
fn auction_potentials(n: usize, cost: &[f64]) -> Vec<f64> {
    let lo = cost.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cost.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let mut price = vec![0.0; n];
    if !(range > 0.0) {
        return price;
    }
    let mut owner = vec![NONE; n];
    let mut eps = 0.25 * range;
    let eps_final = EPS_FINAL * range;
    let mut queue: Vec<usize> = Vec::with_capacity(n);
    loop {
        owner.fill(NONE);
        queue.clear();
        queue.extend((0..n).rev());
        while let Some(i) = queue.pop() {
            let row = &cost[i * n..(i + 1) * n];
            let (mut j1, mut w1, mut w2) = (0, f64::INFINITY, f64::INFINITY);
            for (j, (&cij, &pj)) in row.iter().zip(&price).enumerate() {
                let w = cij + pj;
                if w < w2 {
                    if w < w1 {
                        w2 = w1;
                        w1 = w;
                        j1 = j;
                    } else {
                        w2 = w;
                    }
                }
            }
            price[j1] += (w2 - w1) + eps;
            let prev = std::mem::replace(&mut owner[j1], i);
            if prev != NONE {
                queue.push(prev);
            }
        }
        if eps <= eps_final {
            break;
        }
        eps = (eps / EPS_FACTOR).max(eps_final);
    }
    price.iter().map(|p| -p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn brute(n: usize, cost: &[f64]) -> f64 {
        fn rec(n: usize, cost: &[f64], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(n, cost, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(n, cost, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    fn total(n: usize, cost: &[f64], p: &[usize]) -> f64 {
        (0..n).map(|i| cost[i * n + p[i]]).sum()
    }

    fn is_perm(p: &[usize]) -> bool {
        let mut seen = vec![false; p.len()];
        p.iter().all(|&j| j < p.len() && !std::mem::replace(&mut seen[j], true))
    }

    #[test]
    fn small_known() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let p = solve(3, &cost);
        assert!(is_perm(&p));
        assert_eq!(total(3, &cost, &p), 5.0);
    }

    #[test]
    fn random_against_brute_force() {
        let mut r = crate::rng::seeded(21);
        for trial in 0..400 {
            let n = 1 + trial % 7;
            let cost: Vec<f64> = (0..n * n).map(|_| r.random::<f64>()).collect();
            let p = solve(n, &cost);
            assert!(is_perm(&p));
            assert!((total(n, &cost, &p) - brute(n, &cost)).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_costs_with_ties() {
        let mut r = crate::rng::seeded(3);
        for trial in 0..400 {
            let n = 1 + trial % 7;
            let cost: Vec<f64> = (0..n * n).map(|_| r.random_range(0..3) as f64).collect();
            let p = solve_dense(n, &cost);
            assert!(is_perm(&p), "{cost:?}");
            assert_eq!(total(n, &cost, &p), brute(n, &cost), "{cost:?}");
        }
    }

    #[test]
    fn warm_started_matches_dense() {
        let mut r = crate::rng::seeded(17);
        for n in [64, 150, 400] {
            let pts: Vec<(f64, f64)> = (0..2 * n).map(|_| (r.random::<f64>(), r.random::<f64>())).collect();
            let geometric: Vec<f64> = (0..n * n)
                .map(|ij| {
                    let (a, b) = (pts[ij / n], pts[n + ij % n] );
                    ((a.0 - b.0 + 0.3).powi(2) + (a.1 - b.1).powi(2)) / 2.0
                })
                .collect();
            let uniform: Vec<f64> = (0..n * n).map(|_| r.random::<f64>()).collect();
            let ties: Vec<f64> = (0..n * n).map(|_| r.random_range(0..4) as f64).collect();
            for cost in [geometric, uniform, ties] {
                let dense = solve_dense(n, &cost);
                let warm = solve(n, &cost);
                assert!(is_perm(&warm));
                let (a, b) = (total(n, &cost, &dense), total(n, &cost, &warm));
                assert!((a - b).abs() <= 1e-12 * a.max(1.0), "n={n}: dense {a} warm {b}");
            }
        }
    }

    #[test]
    fn constant_matrix() {
        let p = solve(50, &vec![1.0; 2500]);
        assert!(is_perm(&p));
    }
}

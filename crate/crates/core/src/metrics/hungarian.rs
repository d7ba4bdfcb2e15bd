//! Minimum-cost rectangular assignment (Kuhn-Munkres with potentials).

/// For an `rows × cols` cost matrix (row-major), returns for each row the
/// column assigned to it, or `None` when there are more rows than columns.
/// The total cost over assigned pairs is minimal among assignments of
/// `min(rows, cols)` pairs.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    assert_eq!(cost.len(), rows * cols, "cost matrix shape");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let transposed = rows > cols;
    let (n, m) = if transposed {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let at = |i: usize, j: usize| {
        if transposed {
            cost[j * cols + i]
        } else {
            cost[i * cols + j]
        }
    };

    // Potentials and matching, 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
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

    let mut out = vec![None; rows];
    for (j, &pj) in p.iter().enumerate().skip(1) {
        if pj != 0 {
            let (r, c) = if transposed {
                (j - 1, pj - 1)
            } else {
                (pj - 1, j - 1)
            };
            out[r] = Some(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(cost: &[f64], cols: usize, a: &[Option<usize>]) -> f64 {
        a.iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| cost[i * cols + j]))
            .sum()
    }

    /// Exhaustive minimum over injective maps of the smaller side.
    fn brute(cost: &[f64], rows: usize, cols: usize) -> f64 {
        fn rec(
            cost: &[f64],
            rows: usize,
            cols: usize,
            i: usize,
            used: &mut Vec<bool>,
            left: usize,
        ) -> f64 {
            if left == 0 || i == rows {
                return if left == 0 { 0.0 } else { f64::INFINITY };
            }
            let mut best = rec(cost, rows, cols, i + 1, used, left);
            for j in 0..cols {
                if !used[j] {
                    used[j] = true;
                    best =
                        best.min(cost[i * cols + j] + rec(cost, rows, cols, i + 1, used, left - 1));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, rows, cols, 0, &mut vec![false; cols], rows.min(cols))
    }

    #[test]
    fn classic_example() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&c, 3, 3);
        assert_eq!(total(&c, 3, &a), 5.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(rows in 1usize..5, cols in 1usize..5, seed in prop::collection::vec(0.0f64..10.0, 16)) {
            let c: Vec<f64> = (0..rows * cols).map(|k| seed[k % 16] + k as f64 * 0.01).collect();
            let a = hungarian(&c, rows, cols);
            prop_assert_eq!(a.iter().flatten().count(), rows.min(cols));
            let mut seen = std::collections::HashSet::new();
            prop_assert!(a.iter().flatten().all(|j| seen.insert(*j)));
            prop_assert!((total(&c, cols, &a) - brute(&c, rows, cols)).abs() < 1e-9);
        }
    }
}

//! Kuhn–Munkres on the node-similarity block, one node kind at a time.

use super::{check_shape, matching_score, GraphMatchResult, MatchIndicator};
use crate::error::Result;
use crate::feature::Matrix;
use crate::graph::{NodeKind, PairSimilarityMatrix, TypedGraph};

/// Maximum-weight assignment on a rectangular matrix. Returns, for each
/// row, its column; rows exceed columns only when the matrix is tall, in
/// which case surplus rows get `None`. O(r²c) with `r = min(rows, cols)`.
pub fn linear_assignment_max(w: &Matrix) -> Vec<Option<usize>> {
    if w.is_empty() {
        return vec![None; w.rows()];
    }
    if w.rows() <= w.cols() {
        min_cost_rows(w.rows(), w.cols(), |i, j| -w.get(i, j))
            .into_iter()
            .map(Some)
            .collect()
    } else {
        let col_to_row = min_cost_rows(w.cols(), w.rows(), |j, i| -w.get(i, j));
        let mut out = vec![None; w.rows()];
        for (j, i) in col_to_row.into_iter().enumerate() {
            out[i] = Some(j);
        }
        out
    }
}

/// Shortest-augmenting-path Hungarian method with potentials, for
/// `n <= m`. Returns the column assigned to each row.
fn min_cost_rows(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    // 1-based; index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Approximate matching from the linear term only. Negative node
/// similarities are clamped to zero before assignment and the
/// corresponding pairs dropped afterwards, so the result is a maximum-weight
/// partial matching of the node term. The returned score includes the
/// quadratic edge term.
pub fn solve_km(
    k: &PairSimilarityMatrix,
    gq: &TypedGraph,
    gp: &TypedGraph,
) -> Result<GraphMatchResult> {
    check_shape(k, gq, gp)?;
    let mut pairs = Vec::new();
    for kind in [NodeKind::Character, NodeKind::Action] {
        let qs: Vec<usize> = (0..gq.len()).filter(|&i| gq.kind(i) == kind).collect();
        let ps: Vec<usize> = (0..gp.len()).filter(|&a| gp.kind(a) == kind).collect();
        if qs.is_empty() || ps.is_empty() {
            continue;
        }
        let mut w = Matrix::zeros(qs.len(), ps.len());
        for (r, &i) in qs.iter().enumerate() {
            for (c, &a) in ps.iter().enumerate() {
                w.set(r, c, k.node(i, a).max(0.0));
            }
        }
        for (r, c) in linear_assignment_max(&w).into_iter().enumerate() {
            if let Some(c) = c {
                let (i, a) = (qs[r], ps[c]);
                if k.node(i, a) >= 0.0 {
                    pairs.push((i, a));
                }
            }
        }
    }
    let indicator = MatchIndicator::new(pairs)?;
    Ok(GraphMatchResult {
        score: matching_score(k, &indicator),
        indicator,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::RngSeed;
    use crate::graph::build_similarity_matrix;
    use crate::qap::test_support::random_graph;
    use rand::Rng;

    fn brute_assignment(w: &Matrix) -> f64 {
        // rows <= cols: best injective row->col map
        fn rec(w: &Matrix, r: usize, used: &mut Vec<bool>) -> f64 {
            if r == w.rows() {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            for c in 0..w.cols() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(w.get(r, c) + rec(w, r + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(w, 0, &mut vec![false; w.cols()])
    }

    #[test]
    fn assignment_matches_permutation_enumeration() {
        let mut rng = RngSeed(4).rng();
        for (r, c) in [(1, 1), (3, 3), (4, 6), (5, 5), (2, 7)] {
            for _ in 0..30 {
                let w = Matrix::from_vec(
                    r,
                    c,
                    (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect(),
                )
                .unwrap();
                let got = linear_assignment_max(&w);
                let mut cols: Vec<usize> = got.iter().map(|c| c.unwrap()).collect();
                let total: f64 = cols.iter().enumerate().map(|(i, &j)| w.get(i, j)).sum();
                assert!((total - brute_assignment(&w)).abs() < 1e-9);
                cols.sort_unstable();
                cols.dedup();
                assert_eq!(cols.len(), r);
            }
        }
    }

    #[test]
    fn tall_matrix_leaves_rows_free() {
        let w = Matrix::from_rows(&[[1.0], [5.0], [2.0]]).unwrap();
        assert_eq!(linear_assignment_max(&w), vec![None, Some(0), None]);
        assert_eq!(
            linear_assignment_max(&Matrix::zeros(2, 0)),
            vec![None, None]
        );
    }

    #[test]
    fn negative_matches_are_dropped() {
        let mut rng = RngSeed(9).rng();
        let gq = random_graph(&mut rng, 3, 2, 3, 0.5);
        let gp = random_graph(&mut rng, 2, 3, 3, 0.5);
        let k = build_similarity_matrix(&gq, &gp).unwrap();
        let r = solve_km(&k, &gq, &gp).unwrap();
        assert!(r.indicator.is_feasible(&k));
        assert!(!r.exact);
        for &(i, a) in r.indicator.pairs() {
            assert!(k.node(i, a) >= 0.0);
        }
    }
}

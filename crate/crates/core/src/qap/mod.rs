//! Typed graph matching: maximize `uᵀKu` over one-to-one, type-respecting
//! partial matchings between a visual graph (rows `i`) and a semantic graph
//! (columns `a`).

mod exact;
mod km;
mod prune;

pub use exact::{solve_exact, EXACT_MAX_PER_KIND};
pub use km::{linear_assignment_max, solve_km};
pub use prune::{
    cim_match, cim_score, propagate, prune_graph, select_seeds, CimOutcome, CimParams, PrunedGraph,
    SeedSelection,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PairSimilarityMatrix;

/// Binary indicator over node pairs, stored as the list of matched
/// `(visual, semantic)` pairs sorted by visual index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchIndicator {
    pairs: Vec<(usize, usize)>,
}

impl MatchIndicator {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds from pairs; rejects any node used twice.
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        let mut seen_p: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        seen_p.sort_unstable();
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) || seen_p.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("matching is not one-to-one"));
        }
        Ok(MatchIndicator { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn partner_of(&self, i: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == i).map(|p| p.1)
    }

    /// The dense `u` vector of length `n·m`, indexed `i * m + a`.
    pub fn to_vector(&self, n: usize, m: usize) -> Vec<bool> {
        let mut u = vec![false; n * m];
        for &(i, a) in &self.pairs {
            u[i * m + a] = true;
        }
        u
    }

    pub fn from_vector(u: &[bool], m: usize) -> Result<Self> {
        if m == 0 {
            return if u.is_empty() {
                Ok(Self::empty())
            } else {
                Err(Error::invalid("indicator length is not a multiple of m"))
            };
        }
        if !u.len().is_multiple_of(m) {
            return Err(Error::invalid("indicator length is not a multiple of m"));
        }
        let pairs = u
            .iter()
            .enumerate()
            .filter(|(_, &x)| x)
            .map(|(ia, _)| (ia / m, ia % m))
            .collect();
        MatchIndicator::new(pairs)
    }

    /// One-to-one and type constraints against `k`'s node kinds.
    pub fn is_feasible(&self, k: &PairSimilarityMatrix) -> bool {
        let mut used_q = vec![false; k.n()];
        let mut used_p = vec![false; k.m()];
        for &(i, a) in &self.pairs {
            if i >= k.n() || a >= k.m() || used_q[i] || used_p[a] || !k.compatible(i, a) {
                return false;
            }
            used_q[i] = true;
            used_p[a] = true;
        }
        true
    }

    /// Re-indexes visual nodes through `old_of_new`.
    pub fn lift(&self, old_of_new: &[usize]) -> MatchIndicator {
        let mut pairs: Vec<_> = self
            .pairs
            .iter()
            .map(|&(i, a)| (old_of_new[i], a))
            .collect();
        pairs.sort_unstable();
        MatchIndicator { pairs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatchResult {
    pub score: f64,
    pub indicator: MatchIndicator,
    /// `true` when the score is a proven global optimum.
    pub exact: bool,
}

/// `Σ u_ia κ_ia;ia + Σ_{(ia) != (jb)} u_ia u_jb κ_ia;jb`.
pub fn matching_score(k: &PairSimilarityMatrix, u: &MatchIndicator) -> f64 {
    let pairs = u.pairs();
    let mut score = 0.0;
    for (x, &(i, a)) in pairs.iter().enumerate() {
        score += k.node(i, a);
        for &(j, b) in &pairs[x + 1..] {
            score += 2.0 * k.edge(i, a, j, b);
        }
    }
    score
}

/// Matched node pair `(i, a)` with its node similarity.
pub type NodeContribution = ((usize, usize), f64);
/// Two matched node pairs joined by edges on both sides, with their bonus.
pub type EdgeContribution = ((usize, usize), (usize, usize), f64);

/// Per-pair breakdown of a matching: node term and the edge bonus each
/// matched edge pair contributes (counted in both orientations).
pub fn score_contributions(
    k: &PairSimilarityMatrix,
    u: &MatchIndicator,
) -> (Vec<NodeContribution>, Vec<EdgeContribution>) {
    let pairs = u.pairs();
    let nodes = pairs.iter().map(|&(i, a)| ((i, a), k.node(i, a))).collect();
    let mut edges = Vec::new();
    for (x, &(i, a)) in pairs.iter().enumerate() {
        for &(j, b) in &pairs[x + 1..] {
            let e = k.edge(i, a, j, b);
            if e != 0.0 {
                edges.push(((i, a), (j, b), 2.0 * e));
            }
        }
    }
    (nodes, edges)
}

fn check_shape(
    k: &PairSimilarityMatrix,
    gq: &crate::graph::TypedGraph,
    gp: &crate::graph::TypedGraph,
) -> Result<()> {
    if k.n() != gq.len() || k.m() != gp.len() {
        return Err(Error::invalid(format!(
            "similarity matrix is for {}x{} nodes, graphs have {}x{}",
            k.n(),
            k.m(),
            gq.len(),
            gp.len()
        )));
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_roundtrip_and_validation() {
        let u = MatchIndicator::new(vec![(2, 0), (0, 1)]).unwrap();
        assert_eq!(u.pairs(), &[(0, 1), (2, 0)]);
        let v = u.to_vector(3, 2);
        assert_eq!(v, vec![false, true, false, false, true, false]);
        assert_eq!(MatchIndicator::from_vector(&v, 2).unwrap(), u);
        assert!(MatchIndicator::new(vec![(0, 1), (0, 2)]).is_err());
        assert!(MatchIndicator::new(vec![(0, 1), (1, 1)]).is_err());
        assert!(MatchIndicator::from_vector(&[true, false, true], 2).is_err());
        assert_eq!(u.lift(&[5, 6, 9]).pairs(), &[(5, 1), (9, 0)]);
    }
}

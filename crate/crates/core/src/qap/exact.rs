//! Branch-and-bound over injective, type-respecting partial matchings.
//!
//! For each node kind the smaller side is branched on: every node of that
//! side is either matched to a still-free compatible partner or left
//! unmatched. A pair's gain is its node similarity plus twice the edge
//! similarity with every already-matched neighbor pair. The bound credits
//! each remaining branch node with its best admissible gain, counting edge
//! pairs whose other end is still open at half weight (the other half is
//! credited to the other end).

use super::{check_shape, matching_score, GraphMatchResult, MatchIndicator};
use crate::error::{Error, Result};
use crate::graph::{NodeKind, PairSimilarityMatrix, TypedGraph};

/// Largest per-kind `min(n_kind, m_kind)` accepted by [`solve_exact`].
pub const EXACT_MAX_PER_KIND: usize = 8;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
enum Slot {
    Visual(usize),
    Semantic(usize),
}

struct Search<'a> {
    k: &'a PairSimilarityMatrix,
    gq: &'a TypedGraph,
    gp: &'a TypedGraph,
    slots: Vec<Slot>,
    q_match: Vec<Option<usize>>,
    p_match: Vec<Option<usize>>,
    q_closed: Vec<bool>,
    p_closed: Vec<bool>,
    best: f64,
    best_pairs: Vec<(usize, usize)>,
}

impl Search<'_> {
    fn q_open(&self, j: usize) -> bool {
        self.q_match[j].is_none() && !self.q_closed[j]
    }

    fn p_open(&self, b: usize) -> bool {
        self.p_match[b].is_none() && !self.p_closed[b]
    }

    /// Exact increment from adding `(i, a)` to the current matching.
    fn gain(&self, i: usize, a: usize) -> f64 {
        let mut g = self.k.node(i, a);
        for &j in self.gq.neighbors(i) {
            if let Some(b) = self.q_match[j] {
                g += 2.0 * self.k.edge(i, a, j, b);
            }
        }
        g
    }

    /// Optimistic gain of `(i, a)`, including half-credited future edges.
    fn optimistic_gain(&self, i: usize, a: usize) -> f64 {
        let mut g = self.gain(i, a);
        for &j in self.gq.neighbors(i) {
            if !self.q_open(j) {
                continue;
            }
            let best = self
                .gp
                .neighbors(a)
                .iter()
                .filter(|&&b| self.p_open(b))
                .map(|&b| self.k.edge(i, a, j, b))
                .fold(0.0f64, f64::max);
            g += best;
        }
        g
    }

    fn partners(&self, slot: Slot) -> Vec<(usize, usize)> {
        match slot {
            Slot::Visual(i) => (0..self.gp.len())
                .filter(|&a| self.p_open(a) && self.k.compatible(i, a))
                .map(|a| (i, a))
                .collect(),
            Slot::Semantic(a) => (0..self.gq.len())
                .filter(|&i| self.q_open(i) && self.k.compatible(i, a))
                .map(|i| (i, a))
                .collect(),
        }
    }

    fn bound(&self, from: usize) -> f64 {
        self.slots[from..]
            .iter()
            .map(|&slot| {
                self.partners(slot)
                    .into_iter()
                    .map(|(i, a)| self.optimistic_gain(i, a))
                    .fold(0.0f64, f64::max)
            })
            .sum()
    }

    fn current_pairs(&self) -> Vec<(usize, usize)> {
        self.q_match
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|a| (i, a)))
            .collect()
    }

    fn dfs(&mut self, depth: usize, score: f64) {
        if depth == self.slots.len() {
            if score > self.best + EPS {
                self.best = score;
                self.best_pairs = self.current_pairs();
            }
            return;
        }
        if score + self.bound(depth) <= self.best + EPS {
            return;
        }
        let slot = self.slots[depth];
        for (i, a) in self.partners(slot) {
            let g = self.gain(i, a);
            self.q_match[i] = Some(a);
            self.p_match[a] = Some(i);
            self.dfs(depth + 1, score + g);
            self.q_match[i] = None;
            self.p_match[a] = None;
        }
        match slot {
            Slot::Visual(i) => self.q_closed[i] = true,
            Slot::Semantic(a) => self.p_closed[a] = true,
        }
        self.dfs(depth + 1, score);
        match slot {
            Slot::Visual(i) => self.q_closed[i] = false,
            Slot::Semantic(a) => self.p_closed[a] = false,
        }
    }
}

/// Global maximizer of the matching objective. The empty matching (score
/// 0) is always feasible, so the result is never negative.
pub fn solve_exact(
    k: &PairSimilarityMatrix,
    gq: &TypedGraph,
    gp: &TypedGraph,
) -> Result<GraphMatchResult> {
    check_shape(k, gq, gp)?;
    let mut slots = Vec::new();
    for kind in [NodeKind::Character, NodeKind::Action] {
        let qs: Vec<usize> = (0..gq.len()).filter(|&i| gq.kind(i) == kind).collect();
        let ps: Vec<usize> = (0..gp.len()).filter(|&a| gp.kind(a) == kind).collect();
        if qs.is_empty() || ps.is_empty() {
            continue;
        }
        let side = qs.len().min(ps.len());
        if side > EXACT_MAX_PER_KIND {
            return Err(Error::SizeLimit(format!(
                "{side} {kind:?} nodes on the smaller side (limit {EXACT_MAX_PER_KIND})"
            )));
        }
        if qs.len() <= ps.len() {
            slots.extend(qs.into_iter().map(Slot::Visual));
        } else {
            slots.extend(ps.into_iter().map(Slot::Semantic));
        }
    }

    let mut search = Search {
        k,
        gq,
        gp,
        slots,
        q_match: vec![None; gq.len()],
        p_match: vec![None; gp.len()],
        q_closed: vec![false; gq.len()],
        p_closed: vec![false; gp.len()],
        best: 0.0,
        best_pairs: Vec::new(),
    };
    search.dfs(0, 0.0);
    let indicator = MatchIndicator::new(search.best_pairs)?;
    Ok(GraphMatchResult {
        score: matching_score(k, &indicator),
        indicator,
        exact: true,
    })
}

//! Visual-graph pruning: seed nodes from a KM matching plus per-node top-k
//! candidates, grown to everything within `J` hops, then cropped.

use serde::{Deserialize, Serialize};

use super::{solve_exact, solve_km, GraphMatchResult, MatchIndicator, EXACT_MAX_PER_KIND};
use crate::error::{Error, Result};
use crate::graph::{
    adjacency, build_similarity_matrix, NodeKind, PairSimilarityMatrix, TypedGraph,
};

/// Node selection over the visual graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSelection {
    v: Vec<bool>,
}

impl SeedSelection {
    pub fn new(v: Vec<bool>) -> Self {
        SeedSelection { v }
    }

    pub fn none(n: usize) -> Self {
        SeedSelection { v: vec![false; n] }
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        self.v
            .iter()
            .enumerate()
            .filter_map(|(i, &x)| x.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.v.iter().filter(|&&x| x).count()
    }
}

/// Seeds are (a) visual nodes matched by [`solve_km`] and (b) for every
/// semantic node, its `k` most similar type-compatible visual nodes (ties to
/// the lower index).
pub fn select_seeds(
    k: &PairSimilarityMatrix,
    gq: &TypedGraph,
    gp: &TypedGraph,
    top_k: usize,
) -> Result<SeedSelection> {
    if top_k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut v = vec![false; gq.len()];
    for &(i, _) in solve_km(k, gq, gp)?.indicator.pairs() {
        v[i] = true;
    }
    for a in 0..gp.len() {
        let mut cands: Vec<usize> = (0..gq.len()).filter(|&i| k.compatible(i, a)).collect();
        cands.sort_by(|&x, &y| k.node(y, a).total_cmp(&k.node(x, a)).then(x.cmp(&y)));
        for &i in cands.iter().take(top_k) {
            v[i] = true;
        }
    }
    Ok(SeedSelection { v })
}

/// Support of `(A + I)^J v` under boolean arithmetic: every node within `J`
/// hops of a seed.
pub fn propagate(v: &SeedSelection, adj: &[Vec<bool>], hops: usize) -> Result<SeedSelection> {
    let n = v.len();
    if adj.len() != n || adj.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!(
            "adjacency must be {n}x{n} to match the selection"
        )));
    }
    let mut cur = v.v.clone();
    for _ in 0..hops {
        let next: Vec<bool> = (0..n)
            .map(|i| cur[i] || (0..n).any(|j| adj[i][j] && cur[j]))
            .collect();
        if next == cur {
            break;
        }
        cur = next;
    }
    Ok(SeedSelection { v: cur })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedGraph {
    pub graph: TypedGraph,
    /// Original index of each kept node.
    pub old_of_new: Vec<usize>,
    /// New index of each original node, if kept.
    pub new_of_old: Vec<Option<usize>>,
}

/// Induced subgraph on the selected nodes.
pub fn prune_graph(gq: &TypedGraph, v: &SeedSelection) -> Result<PrunedGraph> {
    if v.len() != gq.len() {
        return Err(Error::invalid(format!(
            "selection has length {}, graph has {} nodes",
            v.len(),
            gq.len()
        )));
    }
    let keep = v.support();
    let mut new_of_old = vec![None; gq.len()];
    for (new, &old) in keep.iter().enumerate() {
        new_of_old[old] = Some(new);
    }
    Ok(PrunedGraph {
        graph: gq.induced(&keep),
        old_of_new: keep,
        new_of_old,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CimParams {
    /// Top-k seeds per semantic node.
    pub k: usize,
    /// Propagation depth.
    #[serde(rename = "j")]
    pub hops: usize,
    /// Largest branching depth (sum over kinds of the smaller side) solved
    /// exactly after pruning; larger instances use KM.
    pub exact_threshold: usize,
}

impl Default for CimParams {
    fn default() -> Self {
        CimParams {
            k: 2,
            hops: 2,
            exact_threshold: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CimOutcome {
    /// Matching in original visual-graph indices.
    pub result: GraphMatchResult,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub edges_before: usize,
    pub edges_after: usize,
}

fn branching_depth(gq: &TypedGraph, gp: &TypedGraph) -> (usize, usize) {
    let mut total = 0;
    let mut widest = 0;
    for kind in [NodeKind::Character, NodeKind::Action] {
        let side = gq.count(kind).min(gp.count(kind));
        total += side;
        widest = widest.max(side);
    }
    (total, widest)
}

/// Prune, then solve. With `force_exact`, the pruned instance is solved
/// exactly whenever the exact solver accepts it.
pub fn cim_match(
    gq: &TypedGraph,
    gp: &TypedGraph,
    params: &CimParams,
    force_exact: bool,
) -> Result<CimOutcome> {
    if params.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let k_full = build_similarity_matrix(gq, gp)?;
    let seeds = select_seeds(&k_full, gq, gp, params.k)?;
    let selected = propagate(&seeds, &adjacency(gq), params.hops)?;
    let pruned = prune_graph(gq, &selected)?;
    let k = build_similarity_matrix(&pruned.graph, gp)?;
    let (depth, widest) = branching_depth(&pruned.graph, gp);
    let exact_ok = widest <= EXACT_MAX_PER_KIND && (force_exact || depth <= params.exact_threshold);
    let local = if exact_ok {
        solve_exact(&k, &pruned.graph, gp)?
    } else {
        solve_km(&k, &pruned.graph, gp)?
    };
    Ok(CimOutcome {
        result: GraphMatchResult {
            score: local.score,
            indicator: local.indicator.lift(&pruned.old_of_new),
            exact: local.exact,
        },
        nodes_before: gq.len(),
        nodes_after: pruned.graph.len(),
        edges_before: gq.edges().len(),
        edges_after: pruned.graph.edges().len(),
    })
}

/// Graph-matching score of a visual graph against a semantic graph.
pub fn cim_score(gq: &TypedGraph, gp: &TypedGraph, params: &CimParams) -> Result<f64> {
    if gq.is_empty() || gp.is_empty() {
        return Ok(0.0);
    }
    Ok(cim_match(gq, gp, params, false)?.result.score)
}

impl MatchIndicator {
    /// Whether every matched visual node survived pruning.
    pub fn survives(&self, sel: &SeedSelection) -> bool {
        self.pairs().iter().all(|&(i, _)| sel.as_slice()[i])
    }
}

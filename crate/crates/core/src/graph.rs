//! Character/action interaction graphs and the pairwise similarity matrix
//! used by the graph matcher.
//!
//! Visual graphs come from per-shot person detections; semantic graphs are
//! a disjoint union of per-sentence sub-graphs built from parsed character
//! and verb records.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{dot, FeatureVector, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Character,
    Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub feature: FeatureVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Source shot for visual nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_index: Option<usize>,
}

/// Undirected simple graph over typed nodes with uniform feature dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypedGraph {
    nodes: Vec<Node>,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl TypedGraph {
    pub fn empty() -> Self {
        TypedGraph::default()
    }

    /// Validates dims and edges. Edges are stored as `(min, max)`.
    pub fn new(nodes: Vec<Node>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if let Some(first) = nodes.first() {
            let d = first.feature.dim();
            if let Some((i, n)) = nodes.iter().enumerate().find(|(_, n)| n.feature.dim() != d) {
                return Err(Error::invalid(format!(
                    "node {i} has feature dim {}, expected {d}",
                    n.feature.dim()
                )));
            }
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::invalid(format!(
                    "edge ({a},{b}) references a missing node"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut neighbors = vec![Vec::new(); nodes.len()];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        neighbors.iter_mut().for_each(|v| v.sort_unstable());
        Ok(TypedGraph {
            nodes,
            edges: set,
            neighbors,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn kind(&self, i: usize) -> NodeKind {
        self.nodes[i].kind
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.feature.dim())
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Same structure with every feature replaced by `f(kind, feature)`.
    pub fn map_features<F>(&self, mut f: F) -> Result<TypedGraph>
    where
        F: FnMut(NodeKind, &FeatureVector) -> Result<FeatureVector>,
    {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Ok(Node {
                    feature: f(n.kind, &n.feature)?,
                    ..n.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TypedGraph {
            nodes,
            edges: self.edges.clone(),
            neighbors: self.neighbors.clone(),
        })
    }

    /// Induced subgraph on `keep` (ascending, deduplicated old indices).
    pub(crate) fn induced(&self, keep: &[usize]) -> TypedGraph {
        let mut new_of = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in keep.iter().enumerate() {
            new_of[old] = new;
        }
        let nodes = keep.iter().map(|&i| self.nodes[i].clone()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|(a, b)| new_of[*a] != usize::MAX && new_of[*b] != usize::MAX)
            .map(|&(a, b)| (new_of[a], new_of[b]));
        TypedGraph::new(nodes, edges).expect("induced subgraph of a valid graph is valid")
    }
}

/// One detected person instance with its action feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub shot_index: usize,
    pub person: FeatureVector,
    pub action: FeatureVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledFeature {
    pub label: String,
    pub feature: FeatureVector,
}

/// A verb→character link inside one sentence, by position in the
/// sentence's `verbs` and `characters` lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attachment {
    pub verb: usize,
    pub character: usize,
}

/// Parsed character names and action verbs of one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceGraphRecord {
    pub sentence_index: usize,
    #[serde(default)]
    pub characters: Vec<LabeledFeature>,
    #[serde(default)]
    pub verbs: Vec<LabeledFeature>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

/// Node index of detection `d`'s character node in a visual graph.
pub fn visual_character_node(d: usize) -> usize {
    2 * d
}

/// Node index of detection `d`'s action node in a visual graph.
pub fn visual_action_node(d: usize) -> usize {
    2 * d + 1
}

/// Visual graph: per detection a character node (even index) and its action
/// node (odd index), edged together; character pairs within one shot of each
/// other are edged.
pub fn build_visual_graph(detections: &[DetectionRecord]) -> Result<TypedGraph> {
    if let Some(w) = detections
        .windows(2)
        .position(|w| w[0].shot_index > w[1].shot_index)
    {
        return Err(Error::invalid(format!(
            "detections not sorted by shot_index at position {}",
            w + 1
        )));
    }
    let mut nodes = Vec::with_capacity(2 * detections.len());
    let mut edges = Vec::new();
    for (d, det) in detections.iter().enumerate() {
        nodes.push(Node {
            kind: NodeKind::Character,
            feature: det.person.clone(),
            label: det.label.clone(),
            shot_index: Some(det.shot_index),
        });
        nodes.push(Node {
            kind: NodeKind::Action,
            feature: det.action.clone(),
            label: None,
            shot_index: Some(det.shot_index),
        });
        edges.push((visual_character_node(d), visual_action_node(d)));
        // Sorted input: scan back while within the adjacency window.
        for e in (0..d).rev() {
            if det.shot_index - detections[e].shot_index > 1 {
                break;
            }
            edges.push((visual_character_node(e), visual_character_node(d)));
        }
    }
    TypedGraph::new(nodes, edges)
}

#[derive(Debug, Clone, Default)]
pub struct SemanticGraphOptions {
    /// When set, verbs outside the list are dropped with their attachments.
    pub verb_whitelist: Option<HashSet<String>>,
}

/// Where each record's nodes landed in a semantic graph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SemanticLayout {
    /// `characters[s][c]` is the node of character `c` of record `s`.
    pub characters: Vec<Vec<usize>>,
    /// `verbs[s][v]` is the node of verb `v`, or `None` if filtered out.
    pub verbs: Vec<Vec<Option<usize>>>,
}

pub fn build_semantic_graph(sentences: &[SentenceGraphRecord]) -> Result<TypedGraph> {
    build_semantic_graph_with(sentences, &SemanticGraphOptions::default()).map(|(g, _)| g)
}

/// Semantic graph: each sentence contributes its characters then its kept
/// verbs; characters link to their verbs and characters sharing a verb form
/// a clique. No edge crosses sentences.
pub fn build_semantic_graph_with(
    sentences: &[SentenceGraphRecord],
    opts: &SemanticGraphOptions,
) -> Result<(TypedGraph, SemanticLayout)> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut layout = SemanticLayout::default();
    for rec in sentences {
        for a in &rec.attachments {
            if a.verb >= rec.verbs.len() || a.character >= rec.characters.len() {
                return Err(Error::invalid(format!(
                    "sentence {}: attachment (verb {}, character {}) is dangling",
                    rec.sentence_index, a.verb, a.character
                )));
            }
        }
        let char_nodes: Vec<usize> = rec
            .characters
            .iter()
            .map(|c| {
                nodes.push(Node {
                    kind: NodeKind::Character,
                    feature: c.feature.clone(),
                    label: Some(c.label.clone()),
                    shot_index: None,
                });
                nodes.len() - 1
            })
            .collect();
        let verb_nodes: Vec<Option<usize>> = rec
            .verbs
            .iter()
            .map(|v| {
                let keep = opts
                    .verb_whitelist
                    .as_ref()
                    .is_none_or(|w| w.contains(&v.label));
                keep.then(|| {
                    nodes.push(Node {
                        kind: NodeKind::Action,
                        feature: v.feature.clone(),
                        label: Some(v.label.clone()),
                        shot_index: None,
                    });
                    nodes.len() - 1
                })
            })
            .collect();
        for (v, verb_node) in verb_nodes.iter().enumerate() {
            let Some(verb_node) = *verb_node else {
                continue;
            };
            let mut group: Vec<usize> = rec
                .attachments
                .iter()
                .filter(|a| a.verb == v)
                .map(|a| char_nodes[a.character])
                .collect();
            group.sort_unstable();
            group.dedup();
            for (x, &c) in group.iter().enumerate() {
                edges.push((c, verb_node));
                for &c2 in &group[x + 1..] {
                    edges.push((c, c2));
                }
            }
        }
        layout.characters.push(char_nodes);
        layout.verbs.push(verb_nodes);
    }
    Ok((TypedGraph::new(nodes, edges)?, layout))
}

/// Symmetric 0/1 adjacency with zero diagonal.
pub fn adjacency(g: &TypedGraph) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; g.len()]; g.len()];
    for &(i, j) in g.edges() {
        a[i][j] = true;
        a[j][i] = true;
    }
    a
}

/// Pairwise similarity matrix `K` over node pairs `(i, a)`, `i` in the
/// visual graph and `a` in the semantic graph, flattened as `i * m + a`.
///
/// Only the `n x m` node-similarity block is stored; an off-diagonal entry
/// is the sum of its two node similarities when both node pairs are
/// type-compatible and both graphs carry the corresponding edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSimilarityMatrix {
    node_sim: Matrix,
    q_kinds: Vec<NodeKind>,
    p_kinds: Vec<NodeKind>,
    q_edges: BTreeSet<(usize, usize)>,
    p_edges: BTreeSet<(usize, usize)>,
}

impl PairSimilarityMatrix {
    /// Number of visual-graph nodes.
    pub fn n(&self) -> usize {
        self.node_sim.rows()
    }

    /// Number of semantic-graph nodes.
    pub fn m(&self) -> usize {
        self.node_sim.cols()
    }

    pub fn index(&self, i: usize, a: usize) -> usize {
        i * self.m() + a
    }

    pub fn compatible(&self, i: usize, a: usize) -> bool {
        self.q_kinds[i] == self.p_kinds[a]
    }

    /// `κ_{ia;ia}`, zero for type-incompatible pairs.
    pub fn node(&self, i: usize, a: usize) -> f64 {
        self.node_sim.get(i, a)
    }

    pub fn node_block(&self) -> &Matrix {
        &self.node_sim
    }

    /// `κ_{ia;jb}` for `(i,a) != (j,b)`.
    pub fn edge(&self, i: usize, a: usize, j: usize, b: usize) -> f64 {
        if i == j || a == b {
            return 0.0;
        }
        let q = self.q_edges.contains(&(i.min(j), i.max(j)));
        let p = self.p_edges.contains(&(a.min(b), a.max(b)));
        if q && p && self.compatible(i, a) && self.compatible(j, b) {
            self.node_sim.get(i, a) + self.node_sim.get(j, b)
        } else {
            0.0
        }
    }

    /// Entry at flattened indices.
    pub fn entry(&self, ia: usize, jb: usize) -> f64 {
        let m = self.m();
        let (i, a, j, b) = (ia / m, ia % m, jb / m, jb % m);
        if ia == jb {
            self.node(i, a)
        } else {
            self.edge(i, a, j, b)
        }
    }

    /// Materializes the full `(n·m) x (n·m)` matrix.
    pub fn to_dense(&self) -> Matrix {
        let nm = self.n() * self.m();
        let mut k = Matrix::zeros(nm, nm);
        for x in 0..nm {
            for y in 0..nm {
                k.set(x, y, self.entry(x, y));
            }
        }
        k
    }
}

pub fn build_similarity_matrix(gq: &TypedGraph, gp: &TypedGraph) -> Result<PairSimilarityMatrix> {
    if let (Some(dq), Some(dp)) = (gq.feature_dim(), gp.feature_dim()) {
        if dq != dp {
            return Err(Error::invalid(format!(
                "graph feature dims differ: {dq} vs {dp}"
            )));
        }
    }
    let mut node_sim = Matrix::zeros(gq.len(), gp.len());
    for (i, qn) in gq.nodes().iter().enumerate() {
        for (a, pn) in gp.nodes().iter().enumerate() {
            if qn.kind == pn.kind {
                node_sim.set(i, a, dot(qn.feature.as_slice(), pn.feature.as_slice()));
            }
        }
    }
    Ok(PairSimilarityMatrix {
        node_sim,
        q_kinds: gq.nodes().iter().map(|n| n.kind).collect(),
        p_kinds: gp.nodes().iter().map(|n| n.kind).collect(),
        q_edges: gq.edges().clone(),
        p_edges: gp.edges().clone(),
    })
}

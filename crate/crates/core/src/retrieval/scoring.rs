use serde::{Deserialize, Serialize};

use crate::data::{Paragraph, Segment};
use crate::error::{Error, Result};
use crate::feature::cosine;
use crate::graph::{NodeKind, TypedGraph};
use crate::training::TrainState;

/// One score per node kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeScores {
    pub appearance: f64,
    pub cast: f64,
    pub action: f64,
}

impl NodeScores {
    pub fn scale(self, c: f64) -> NodeScores {
        NodeScores {
            appearance: c * self.appearance,
            cast: c * self.cast,
            action: c * self.action,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionWeights {
    pub appearance: f64,
    pub cast: f64,
    pub action: f64,
}

impl FusionWeights {
    pub const CROSS_MOVIE: FusionWeights = FusionWeights {
        appearance: 0.3,
        cast: 1.0,
        action: 0.1,
    };
    pub const WITHIN_MOVIE: FusionWeights = FusionWeights {
        appearance: 0.3,
        cast: 0.3,
        action: 0.1,
    };

    pub fn new(appearance: f64, cast: f64, action: f64) -> Result<FusionWeights> {
        let w = FusionWeights {
            appearance,
            cast,
            action,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.appearance, self.cast, self.action];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "fusion weights must be finite and nonnegative",
            ));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::invalid(
                "at least one fusion weight must be positive",
            ));
        }
        Ok(())
    }
}

/// Weighted sum of per-kind scores.
pub fn fuse(s: &NodeScores, w: &FusionWeights) -> f64 {
    w.appearance * s.appearance + w.cast * s.cast + w.action * s.action
}

fn mean_of_kind(g: &TypedGraph, kind: NodeKind) -> Option<Vec<f64>> {
    let mut it = g.nodes().iter().filter(|n| n.kind == kind);
    let mut sum = it.next()?.feature.as_slice().to_vec();
    let mut count = 1.0;
    for n in it {
        for (s, x) in sum.iter_mut().zip(n.feature.as_slice()) {
            *s += x;
        }
        count += 1.0;
    }
    Some(sum.into_iter().map(|s| s / count).collect())
}

fn pooled_cosine(a: Option<Vec<f64>>, b: Option<Vec<f64>>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) if a.len() == b.len() => cosine(&a, &b),
        _ => 0.0,
    }
}

/// Mean-pool and cosine on already embedded features. Kinds missing on
/// either side score 0.
pub fn vse_from_embedded(p: &Paragraph, s: &Segment) -> NodeScores {
    NodeScores {
        appearance: pooled_cosine(p.sentences.mean_row(), s.shots.mean_row()),
        cast: pooled_cosine(
            mean_of_kind(&p.graph, NodeKind::Character),
            mean_of_kind(&s.graph, NodeKind::Character),
        ),
        action: pooled_cosine(
            mean_of_kind(&p.graph, NodeKind::Action),
            mean_of_kind(&s.graph, NodeKind::Action),
        ),
    }
}

/// Baseline scores: embed, average over sentences/shots (and over nodes of
/// each kind), then compare by cosine.
pub fn vse_score(p: &Paragraph, s: &Segment, state: &TrainState) -> Result<NodeScores> {
    Ok(vse_from_embedded(
        &state.embed_paragraph(p)?,
        &state.embed_segment(s)?,
    ))
}

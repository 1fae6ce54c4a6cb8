//! EM-style fine-tuning of the embedding maps.
//!
//! The E-step freezes, for every segment/paragraph pair of a batch, the
//! event-flow alignment (exact DP) and the graph matching (KM). With those
//! fixed, each pair score is a weighted sum of inner products between
//! embedded features, so the M-step can descend the ranking loss by plain
//! backpropagation.

mod checkpoint;
mod loss;
mod mlp;

pub use checkpoint::{parse_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};
pub use loss::{ranking_loss, ranking_loss_with_grad};
pub use mlp::{EmbeddingMap, Layer, Trace};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Paragraph, Segment};
use crate::error::{Error, Result};
use crate::event_flow::{align, AssignmentMatrix};
use crate::feature::{dot, similarity_matrix, FeatureMatrix, Matrix, RngSeed};
use crate::graph::{build_similarity_matrix, NodeKind, TypedGraph};
use crate::qap::{solve_km, MatchIndicator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Ranking-loss margin.
    pub margin: f64,
    pub epochs: usize,
    pub seed: RngSeed,
    /// Gradient steps per E-step.
    pub steps_per_e: usize,
    /// Output width of every embedding map. Hidden layers keep the input
    /// width.
    pub embed_dim: usize,
    pub hidden_layers: usize,
    /// Divide the event-flow term by the shot count.
    pub normalize_efm: bool,
    /// Include the graph-matching term in the training score.
    pub use_cim: bool,
    /// Scale every embedded feature to unit length.
    pub unit_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 16,
            margin: 0.2,
            epochs: 30,
            seed: RngSeed(0),
            steps_per_e: 1,
            embed_dim: 32,
            hidden_layers: 1,
            normalize_efm: true,
            use_cim: true,
            unit_embeddings: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid("margin must be nonnegative"));
        }
        if self.steps_per_e == 0 {
            return Err(Error::invalid("steps_per_e must be at least 1"));
        }
        if self.embed_dim == 0 {
            return Err(Error::invalid("embed_dim must be at least 1"));
        }
        Ok(())
    }
}

/// Raw input widths the maps were built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDims {
    pub sentence: usize,
    pub shot: usize,
    pub semantic_node: usize,
    pub visual_node: usize,
}

impl InputDims {
    /// Reads widths off a corpus. Graph widths default to 1 when a side has
    /// no nodes at all.
    pub fn of(corpus: &Corpus) -> Result<InputDims> {
        let sentence = corpus
            .paragraphs
            .first()
            .map(|p| p.sentences.cols())
            .ok_or_else(|| Error::invalid("corpus has no paragraphs"))?;
        let shot = corpus
            .segments
            .first()
            .map(|s| s.shots.cols())
            .ok_or_else(|| Error::invalid("corpus has no segments"))?;
        let semantic_node = corpus
            .paragraphs
            .iter()
            .find_map(|p| p.graph.feature_dim())
            .unwrap_or(1);
        let visual_node = corpus
            .segments
            .iter()
            .find_map(|s| s.graph.feature_dim())
            .unwrap_or(1);
        Ok(InputDims {
            sentence,
            shot,
            semantic_node,
            visual_node,
        })
    }
}

/// Event-flow maps: sentence side and shot side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfmMaps {
    pub sentence: EmbeddingMap,
    pub shot: EmbeddingMap,
}

/// Graph-node maps, one per node kind and modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CimMaps {
    pub text_character: EmbeddingMap,
    pub text_action: EmbeddingMap,
    pub visual_character: EmbeddingMap,
    pub visual_action: EmbeddingMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMaps {
    pub efm: EfmMaps,
    pub cim: CimMaps,
}

impl ModelMaps {
    fn all(&self) -> [&EmbeddingMap; 6] {
        [
            &self.efm.sentence,
            &self.efm.shot,
            &self.cim.text_character,
            &self.cim.text_action,
            &self.cim.visual_character,
            &self.cim.visual_action,
        ]
    }

    fn all_mut(&mut self) -> [&mut EmbeddingMap; 6] {
        [
            &mut self.efm.sentence,
            &mut self.efm.shot,
            &mut self.cim.text_character,
            &mut self.cim.text_action,
            &mut self.cim.visual_character,
            &mut self.cim.visual_action,
        ]
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.all().into_iter().flat_map(|m| m.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.all_mut().into_iter().flat_map(|m| m.params_mut())
    }

    pub fn zeros_like(&self) -> ModelMaps {
        ModelMaps {
            efm: EfmMaps {
                sentence: self.efm.sentence.zeros_like(),
                shot: self.efm.shot.zeros_like(),
            },
            cim: CimMaps {
                text_character: self.cim.text_character.zeros_like(),
                text_action: self.cim.text_action.zeros_like(),
                visual_character: self.cim.visual_character.zeros_like(),
                visual_action: self.cim.visual_action.zeros_like(),
            },
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.all().into_iter().try_for_each(EmbeddingMap::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub dims: InputDims,
    pub maps: ModelMaps,
    pub epoch: usize,
    /// Mean batch loss per completed epoch.
    pub loss_history: Vec<f64>,
    pub rng: ChaCha8Rng,
}

fn paired_maps(
    seed: RngSeed,
    text_in: usize,
    visual_in: usize,
    config: &TrainConfig,
) -> (EmbeddingMap, EmbeddingMap) {
    let build = |s: RngSeed, input| {
        EmbeddingMap::new(
            &mut s.rng(),
            input,
            config.hidden_layers,
            input,
            config.embed_dim,
        )
        .normalized(config.unit_embeddings)
    };
    let text = build(seed.derive(1), text_in);
    // Equal widths start from identical parameters so both modalities
    // begin in a shared space.
    let visual = if text_in == visual_in {
        text.clone()
    } else {
        build(seed.derive(2), visual_in)
    };
    (text, visual)
}

impl TrainState {
    pub fn init(dims: InputDims, config: &TrainConfig) -> TrainState {
        let seed = config.seed;
        let (sentence, shot) = paired_maps(seed.derive(10), dims.sentence, dims.shot, config);
        let (text_character, visual_character) = paired_maps(
            seed.derive(20),
            dims.semantic_node,
            dims.visual_node,
            config,
        );
        let (text_action, visual_action) = paired_maps(
            seed.derive(30),
            dims.semantic_node,
            dims.visual_node,
            config,
        );
        TrainState {
            dims,
            maps: ModelMaps {
                efm: EfmMaps { sentence, shot },
                cim: CimMaps {
                    text_character,
                    text_action,
                    visual_character,
                    visual_action,
                },
            },
            epoch: 0,
            loss_history: Vec::new(),
            rng: seed.derive(40).rng(),
        }
    }

    /// Fails with a compatibility error when the corpus widths differ from
    /// the ones the maps were built for.
    pub fn check_compatible(&self, corpus: &Corpus) -> Result<()> {
        let d = InputDims::of(corpus)?;
        let mismatch = |what: &str, got: usize, want: usize| {
            Error::Compatibility(format!(
                "{what} features have dim {got}, checkpoint expects {want}"
            ))
        };
        if d.sentence != self.dims.sentence {
            return Err(mismatch("sentence", d.sentence, self.dims.sentence));
        }
        if d.shot != self.dims.shot {
            return Err(mismatch("shot", d.shot, self.dims.shot));
        }
        let any_sem = corpus.paragraphs.iter().any(|p| !p.graph.is_empty());
        if any_sem && d.semantic_node != self.dims.semantic_node {
            return Err(mismatch(
                "semantic node",
                d.semantic_node,
                self.dims.semantic_node,
            ));
        }
        let any_vis = corpus.segments.iter().any(|s| !s.graph.is_empty());
        if any_vis && d.visual_node != self.dims.visual_node {
            return Err(mismatch(
                "visual node",
                d.visual_node,
                self.dims.visual_node,
            ));
        }
        Ok(())
    }

    pub fn embed_paragraph(&self, p: &Paragraph) -> Result<Paragraph> {
        let cim = &self.maps.cim;
        Ok(Paragraph {
            id: p.id.clone(),
            movie_id: p.movie_id.clone(),
            sentences: self.maps.efm.sentence.forward_rows(&p.sentences)?,
            graph: p.graph.map_features(|kind, f| match kind {
                NodeKind::Character => cim.text_character.embed(f),
                NodeKind::Action => cim.text_action.embed(f),
            })?,
        })
    }

    pub fn embed_segment(&self, s: &Segment) -> Result<Segment> {
        let cim = &self.maps.cim;
        Ok(Segment {
            id: s.id.clone(),
            movie_id: s.movie_id.clone(),
            shots: self.maps.efm.shot.forward_rows(&s.shots)?,
            graph: s.graph.map_features(|kind, f| match kind {
                NodeKind::Character => cim.visual_character.embed(f),
                NodeKind::Action => cim.visual_action.embed(f),
            })?,
        })
    }
}

/// Frozen discrete choices for one segment/paragraph pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAssignment {
    pub alignment: AssignmentMatrix,
    pub matching: MatchIndicator,
}

/// E-step output for a batch of `b` pairs, indexed `[segment q][paragraph p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAssignments {
    b: usize,
    cells: Vec<PairAssignment>,
}

impl BatchAssignments {
    pub fn size(&self) -> usize {
        self.b
    }

    pub fn get(&self, segment: usize, paragraph: usize) -> &PairAssignment {
        &self.cells[segment * self.b + paragraph]
    }
}

/// A batch of aligned `(paragraph, segment)` pairs.
pub type Batch<'a> = [(&'a Paragraph, &'a Segment)];

/// Solves the alignment by DP and the graph matching by KM for every
/// segment/paragraph combination of the batch under the current maps.
pub fn e_step(
    batch: &Batch<'_>,
    state: &TrainState,
    config: &TrainConfig,
) -> Result<BatchAssignments> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    // finite parameters can still overflow in the forward pass
    let overflow = |e: Error| match e {
        Error::InvalidInput(reason) => Error::Divergence {
            epoch: state.epoch,
            reason: format!("embedding overflowed: {reason}"),
            snapshot: Box::new(state.clone()),
        },
        other => other,
    };
    let paras = batch
        .iter()
        .map(|(p, _)| state.embed_paragraph(p))
        .collect::<Result<Vec<_>>>()
        .map_err(overflow)?;
    let segs = batch
        .iter()
        .map(|(_, s)| state.embed_segment(s))
        .collect::<Result<Vec<_>>>()
        .map_err(overflow)?;
    let b = batch.len();
    let cells = (0..b * b)
        .into_par_iter()
        .map(|cell| {
            let (q, p) = (cell / b, cell % b);
            let s = similarity_matrix(&paras[p].sentences, &segs[q].shots)?;
            let alignment = align(&s)?.assignment;
            let matching = if config.use_cim {
                let k = build_similarity_matrix(&segs[q].graph, &paras[p].graph)?;
                solve_km(&k, &segs[q].graph, &paras[p].graph)?.indicator
            } else {
                MatchIndicator::empty()
            };
            Ok(PairAssignment {
                alignment,
                matching,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchAssignments { b, cells })
}

/// Multiplicity of each matched pair's node similarity in the matching
/// score: once for the node term, plus two for every matched edge pair it
/// takes part in.
pub fn matching_weights(u: &MatchIndicator, gq: &TypedGraph, gp: &TypedGraph) -> Vec<f64> {
    let pairs = u.pairs();
    pairs
        .iter()
        .map(|&(i, a)| {
            let edges = pairs
                .iter()
                .filter(|&&(j, b)| j != i && b != a && gq.has_edge(i, j) && gp.has_edge(a, b))
                .count();
            1.0 + 2.0 * edges as f64
        })
        .collect()
}

fn efm_coeff(shots: usize, config: &TrainConfig) -> f64 {
    if config.normalize_efm {
        1.0 / shots as f64
    } else {
        1.0
    }
}

/// Batch scores under frozen assignments, using plain forward passes.
pub fn frozen_scores(
    batch: &Batch<'_>,
    assignments: &BatchAssignments,
    state: &TrainState,
    config: &TrainConfig,
) -> Result<Matrix> {
    let paras = batch
        .iter()
        .map(|(p, _)| state.embed_paragraph(p))
        .collect::<Result<Vec<_>>>()?;
    let segs = batch
        .iter()
        .map(|(_, s)| state.embed_segment(s))
        .collect::<Result<Vec<_>>>()?;
    let b = batch.len();
    let mut scores = Matrix::zeros(b, b);
    for q in 0..b {
        for p in 0..b {
            let cell = assignments.get(q, p);
            let c = efm_coeff(segs[q].shots.rows(), config);
            let mut s = 0.0;
            for (shot, sent) in cell.alignment.as_slice().iter().enumerate() {
                if let Some(t) = sent {
                    s += c * dot(segs[q].shots.row(shot), paras[p].sentences.row(*t));
                }
            }
            let w = matching_weights(&cell.matching, &batch[q].1.graph, &batch[p].0.graph);
            for (&(i, a), w) in cell.matching.pairs().iter().zip(w) {
                s += w * dot(
                    segs[q].graph.node(i).feature.as_slice(),
                    paras[p].graph.node(a).feature.as_slice(),
                );
            }
            scores.set(q, p, s);
        }
    }
    Ok(scores)
}

/// Ranking loss of the batch under frozen assignments.
pub fn frozen_loss(
    batch: &Batch<'_>,
    assignments: &BatchAssignments,
    state: &TrainState,
    config: &TrainConfig,
) -> Result<f64> {
    ranking_loss(
        &frozen_scores(batch, assignments, state, config)?,
        config.margin,
    )
}

/// Traced forward pass of a feature stack.
struct TracedRows {
    out: Vec<Vec<f64>>,
    traces: Vec<Trace>,
}

impl TracedRows {
    fn run(map: &EmbeddingMap, x: &FeatureMatrix) -> TracedRows {
        let (out, traces) = x.iter_rows().map(|r| map.forward_traced(r)).unzip();
        TracedRows { out, traces }
    }
}

/// Traced node embeddings of one graph; nodes route through the map of
/// their kind.
struct TracedGraph {
    out: Vec<Vec<f64>>,
    traces: Vec<Trace>,
}

impl TracedGraph {
    fn run(g: &TypedGraph, character: &EmbeddingMap, action: &EmbeddingMap) -> TracedGraph {
        let (out, traces) = g
            .nodes()
            .iter()
            .map(|n| match n.kind {
                NodeKind::Character => character.forward_traced(n.feature.as_slice()),
                NodeKind::Action => action.forward_traced(n.feature.as_slice()),
            })
            .unzip();
        TracedGraph { out, traces }
    }
}

fn add_scaled(acc: &mut [f64], x: &[f64], c: f64) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += c * v;
    }
}

/// Ranking loss under frozen assignments and its gradient with respect to
/// every embedding parameter.
pub fn loss_and_gradients(
    batch: &Batch<'_>,
    assignments: &BatchAssignments,
    state: &TrainState,
    config: &TrainConfig,
) -> Result<(f64, ModelMaps)> {
    let maps = &state.maps;
    let b = batch.len();
    if assignments.size() != b {
        return Err(Error::invalid(
            "assignments were computed for a different batch",
        ));
    }
    let sents: Vec<_> = batch
        .iter()
        .map(|(p, _)| TracedRows::run(&maps.efm.sentence, &p.sentences))
        .collect();
    let shots: Vec<_> = batch
        .iter()
        .map(|(_, s)| TracedRows::run(&maps.efm.shot, &s.shots))
        .collect();
    let pnodes: Vec<_> = batch
        .iter()
        .map(|(p, _)| TracedGraph::run(&p.graph, &maps.cim.text_character, &maps.cim.text_action))
        .collect();
    let qnodes: Vec<_> = batch
        .iter()
        .map(|(_, s)| {
            TracedGraph::run(
                &s.graph,
                &maps.cim.visual_character,
                &maps.cim.visual_action,
            )
        })
        .collect();

    let weights: Vec<Vec<f64>> = (0..b * b)
        .map(|cell| {
            let (q, p) = (cell / b, cell % b);
            matching_weights(
                &assignments.get(q, p).matching,
                &batch[q].1.graph,
                &batch[p].0.graph,
            )
        })
        .collect();

    let mut scores = Matrix::zeros(b, b);
    for q in 0..b {
        for p in 0..b {
            let cell = assignments.get(q, p);
            let c = efm_coeff(shots[q].out.len(), config);
            let mut s = 0.0;
            for (shot, sent) in cell.alignment.as_slice().iter().enumerate() {
                if let Some(t) = sent {
                    s += c * dot(&shots[q].out[shot], &sents[p].out[*t]);
                }
            }
            for (&(i, a), w) in cell.matching.pairs().iter().zip(&weights[q * b + p]) {
                s += w * dot(&qnodes[q].out[i], &pnodes[p].out[a]);
            }
            scores.set(q, p, s);
        }
    }
    let (loss, d_scores) = ranking_loss_with_grad(&scores, config.margin)?;

    let zeros = |rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        rows.iter().map(|r| vec![0.0; r.len()]).collect()
    };
    let mut d_sents: Vec<_> = sents.iter().map(|t| zeros(&t.out)).collect();
    let mut d_shots: Vec<_> = shots.iter().map(|t| zeros(&t.out)).collect();
    let mut d_pnodes: Vec<_> = pnodes.iter().map(|t| zeros(&t.out)).collect();
    let mut d_qnodes: Vec<_> = qnodes.iter().map(|t| zeros(&t.out)).collect();
    for q in 0..b {
        for p in 0..b {
            let g = d_scores.get(q, p);
            if g == 0.0 {
                continue;
            }
            let cell = assignments.get(q, p);
            let c = g * efm_coeff(shots[q].out.len(), config);
            for (shot, sent) in cell.alignment.as_slice().iter().enumerate() {
                if let Some(t) = *sent {
                    add_scaled(&mut d_shots[q][shot], &sents[p].out[t], c);
                    add_scaled(&mut d_sents[p][t], &shots[q].out[shot], c);
                }
            }
            for (&(i, a), w) in cell.matching.pairs().iter().zip(&weights[q * b + p]) {
                add_scaled(&mut d_qnodes[q][i], &pnodes[p].out[a], g * w);
                add_scaled(&mut d_pnodes[p][a], &qnodes[q].out[i], g * w);
            }
        }
    }

    let mut grads = maps.zeros_like();
    for x in 0..b {
        for (t, d) in sents[x].traces.iter().zip(&d_sents[x]) {
            maps.efm.sentence.backward(t, d, &mut grads.efm.sentence);
        }
        for (t, d) in shots[x].traces.iter().zip(&d_shots[x]) {
            maps.efm.shot.backward(t, d, &mut grads.efm.shot);
        }
        let (para, seg) = batch[x];
        for (n, (t, d)) in pnodes[x].traces.iter().zip(&d_pnodes[x]).enumerate() {
            match para.graph.kind(n) {
                NodeKind::Character => {
                    maps.cim
                        .text_character
                        .backward(t, d, &mut grads.cim.text_character)
                }
                NodeKind::Action => maps
                    .cim
                    .text_action
                    .backward(t, d, &mut grads.cim.text_action),
            }
        }
        for (n, (t, d)) in qnodes[x].traces.iter().zip(&d_qnodes[x]).enumerate() {
            match seg.graph.kind(n) {
                NodeKind::Character => {
                    maps.cim
                        .visual_character
                        .backward(t, d, &mut grads.cim.visual_character)
                }
                NodeKind::Action => {
                    maps.cim
                        .visual_action
                        .backward(t, d, &mut grads.cim.visual_action)
                }
            }
        }
    }
    Ok((loss, grads))
}

/// Gradient steps on the ranking loss with the batch's assignments held
/// fixed. Returns the loss before the first step.
pub fn m_step(
    batch: &Batch<'_>,
    assignments: &BatchAssignments,
    state: &mut TrainState,
    config: &TrainConfig,
) -> Result<f64> {
    let mut first = None;
    for _ in 0..config.steps_per_e {
        let (loss, grads) = loss_and_gradients(batch, assignments, state, config)?;
        if !loss.is_finite() || !grads.params().all(|g| g.is_finite()) {
            return Err(Error::Divergence {
                epoch: state.epoch,
                reason: format!("non-finite loss or gradient (loss = {loss})"),
                snapshot: Box::new(state.clone()),
            });
        }
        first.get_or_insert(loss);
        let before = state.maps.clone();
        let lr = config.learning_rate;
        for (p, g) in state.maps.params_mut().zip(grads.params()) {
            *p -= lr * g;
        }
        if !state.maps.params().all(|p| p.is_finite()) {
            state.maps = before;
            return Err(Error::Divergence {
                epoch: state.epoch,
                reason: format!("update produced non-finite parameters (loss = {loss})"),
                snapshot: Box::new(state.clone()),
            });
        }
    }
    Ok(first.unwrap_or(0.0))
}

/// Splits shuffled indices into batches; a trailing singleton joins the
/// previous batch so every batch has in-batch negatives when possible.
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("nonempty");
        out.last_mut().expect("nonempty").extend(last);
    }
    out
}

/// Runs `config.epochs` further epochs on `state`, calling `on_epoch` with
/// each epoch's mean batch loss.
pub fn train_epochs(
    state: &mut TrainState,
    corpus: &Corpus,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<()> {
    config.validate()?;
    if corpus.pairs.is_empty() {
        return Err(Error::invalid("training set has no pairs"));
    }
    state.check_compatible(corpus)?;
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..corpus.pairs.len()).collect();
        order.shuffle(&mut state.rng);
        let mut total = 0.0;
        let groups = batches(&order, config.batch_size);
        for group in &groups {
            let batch: Vec<(&Paragraph, &Segment)> = group
                .iter()
                .map(|&x| {
                    let (p, s) = corpus.pairs[x];
                    (&corpus.paragraphs[p], &corpus.segments[s])
                })
                .collect();
            let assignments = e_step(&batch, state, config)?;
            total += m_step(&batch, &assignments, state, config)?;
        }
        let mean = total / groups.len() as f64;
        state.loss_history.push(mean);
        on_epoch(state.epoch, mean);
        state.epoch += 1;
    }
    Ok(())
}

/// Trains fresh maps on the corpus's aligned pairs. Only paragraph-level
/// pairs are read; no node-level correspondence is used.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainState> {
    train_with(corpus, config, |_, _| {})
}

pub fn train_with(
    corpus: &Corpus,
    config: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainState> {
    config.validate()?;
    if corpus.pairs.is_empty() {
        return Err(Error::invalid("training set has no pairs"));
    }
    let mut state = TrainState::init(InputDims::of(corpus)?, config);
    train_epochs(&mut state, corpus, config, on_epoch)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, GenConfig};

    fn small_corpus(seed: u64) -> Corpus {
        let cfg = GenConfig {
            movies: 2,
            segments_per_movie: 2,
            shots_per_segment: 6.0,
            sentences_per_paragraph: 3.0,
            dim: 4,
            seed: RngSeed(seed),
            ..GenConfig::default()
        };
        generate(&cfg).unwrap().dataset().prepare().unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            embed_dim: 4,
            batch_size: 4,
            epochs: 0,
            ..TrainConfig::default()
        }
    }

    fn batch_of(corpus: &Corpus) -> Vec<(&Paragraph, &Segment)> {
        corpus
            .pairs
            .iter()
            .map(|&(p, s)| (&corpus.paragraphs[p], &corpus.segments[s]))
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 1,
                ..Default::default()
            },
            TrainConfig {
                margin: -0.1,
                ..Default::default()
            },
            TrainConfig {
                steps_per_e: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn e_step_single_and_duplicate() {
        let corpus = small_corpus(1);
        let cfg = tiny_config();
        let state = TrainState::init(InputDims::of(&corpus).unwrap(), &cfg);
        let (p, s) = corpus.pairs[0];
        let one = [(&corpus.paragraphs[p], &corpus.segments[s])];
        let a = e_step(&one, &state, &cfg).unwrap();
        let ep = state.embed_paragraph(one[0].0).unwrap();
        let es = state.embed_segment(one[0].1).unwrap();
        let direct = align(&similarity_matrix(&ep.sentences, &es.shots).unwrap()).unwrap();
        assert_eq!(a.get(0, 0).alignment, direct.assignment);
        let k = build_similarity_matrix(&es.graph, &ep.graph).unwrap();
        assert_eq!(
            a.get(0, 0).matching,
            solve_km(&k, &es.graph, &ep.graph).unwrap().indicator
        );

        let dup = [one[0], one[0]];
        let a = e_step(&dup, &state, &cfg).unwrap();
        assert_eq!(a.get(0, 0), a.get(1, 1));
        assert_eq!(a.get(0, 1), a.get(1, 0));
        assert!(e_step(&[], &state, &cfg).is_err());
    }

    #[test]
    fn e_step_outputs_are_feasible() {
        let corpus = small_corpus(2);
        let cfg = tiny_config();
        let state = TrainState::init(InputDims::of(&corpus).unwrap(), &cfg);
        let batch = batch_of(&corpus);
        let a = e_step(&batch, &state, &cfg).unwrap();
        for q in 0..batch.len() {
            for p in 0..batch.len() {
                let cell = a.get(q, p);
                assert!(cell.alignment.is_monotone());
                let es = state.embed_segment(batch[q].1).unwrap();
                let ep = state.embed_paragraph(batch[p].0).unwrap();
                let k = build_similarity_matrix(&es.graph, &ep.graph).unwrap();
                assert!(cell.matching.is_feasible(&k));
            }
        }
    }

    #[test]
    fn zero_learning_rate_and_separated_scores_leave_params() {
        let corpus = small_corpus(3);
        let mut cfg = tiny_config();
        let mut state = TrainState::init(InputDims::of(&corpus).unwrap(), &cfg);
        let batch = batch_of(&corpus);
        let a = e_step(&batch, &state, &cfg).unwrap();
        cfg.learning_rate = 0.0;
        let before = state.maps.clone();
        m_step(&batch, &a, &mut state, &cfg).unwrap();
        assert_eq!(state.maps, before);

        // a margin far below every gap makes every hinge inactive
        cfg.learning_rate = 0.1;
        cfg.margin = -1e9;
        let (loss, grads) = loss_and_gradients(&batch, &a, &state, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.params().all(|&g| g == 0.0));
        m_step(&batch, &a, &mut state, &cfg).unwrap();
        assert_eq!(state.maps, before);
    }

    #[test]
    fn scaling_shot_embeddings_scales_efm_term_unless_unit() {
        let corpus = small_corpus(4);
        for unit in [false, true] {
            let mut cfg = tiny_config();
            cfg.use_cim = false;
            cfg.unit_embeddings = unit;
            let state = TrainState::init(InputDims::of(&corpus).unwrap(), &cfg);
            let batch = batch_of(&corpus);
            let a = e_step(&batch, &state, &cfg).unwrap();
            let base = frozen_scores(&batch, &a, &state, &cfg).unwrap();
            let mut doubled = state.clone();
            let last = doubled.maps.efm.shot.layers.last_mut().unwrap();
            last.weight = last.weight.map(|w| 2.0 * w);
            last.bias.iter_mut().for_each(|b| *b *= 2.0);
            let twice = frozen_scores(&batch, &a, &doubled, &cfg).unwrap();
            let factor = if unit { 1.0 } else { 2.0 };
            for (x, y) in base.as_slice().iter().zip(twice.as_slice()) {
                assert!((factor * x - y).abs() < 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn matching_weights_count_edges() {
        use crate::feature::FeatureVector;
        use crate::graph::Node;
        let n = |k| Node {
            kind: k,
            feature: FeatureVector::new(vec![1.0]).unwrap(),
            label: None,
            shot_index: None,
        };
        let g = TypedGraph::new(
            vec![
                n(NodeKind::Character),
                n(NodeKind::Action),
                n(NodeKind::Character),
            ],
            [(0, 1), (0, 2)],
        )
        .unwrap();
        let u = MatchIndicator::new(vec![(0, 0), (1, 1), (2, 2)]).unwrap();
        assert_eq!(matching_weights(&u, &g, &g), vec![5.0, 3.0, 3.0]);
        let k = build_similarity_matrix(&g, &g).unwrap();
        let direct = crate::qap::matching_score(&k, &u);
        let via_weights: f64 = matching_weights(&u, &g, &g)
            .iter()
            .zip(u.pairs())
            .map(|(w, &(i, a))| w * k.node(i, a))
            .sum();
        assert!((direct - via_weights).abs() < 1e-12);
    }

    #[test]
    fn batching_merges_trailing_singleton() {
        let order: Vec<usize> = (0..5).collect();
        assert_eq!(batches(&order, 2), vec![vec![0, 1], vec![2, 3, 4]]);
        assert_eq!(batches(&order, 5), vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(batches(&[7], 4), vec![vec![7]]);
    }

    #[test]
    fn zero_epochs_returns_initial_state() {
        let corpus = small_corpus(5);
        let cfg = tiny_config();
        let trained = train(&corpus, &cfg).unwrap();
        assert_eq!(
            trained,
            TrainState::init(InputDims::of(&corpus).unwrap(), &cfg)
        );
        assert!(train(&Corpus::default(), &cfg).is_err());
    }

    #[test]
    fn same_seed_same_history() {
        let corpus = small_corpus(6);
        let cfg = TrainConfig {
            epochs: 3,
            ..tiny_config()
        };
        let a = train(&corpus, &cfg).unwrap();
        let b = train(&corpus, &cfg).unwrap();
        assert_eq!(a.loss_history.len(), 3);
        assert_eq!(
            a.loss_history
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>(),
            b.loss_history
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        );
        assert!(a.loss_history.iter().all(|l| l.is_finite() && *l >= 0.0));
        assert_eq!(a, b);
    }

    #[test]
    fn compatibility_is_checked() {
        let corpus = small_corpus(7);
        let cfg = tiny_config();
        let mut dims = InputDims::of(&corpus).unwrap();
        dims.shot += 1;
        let state = TrainState::init(dims, &cfg);
        assert!(matches!(
            state.check_compatible(&corpus),
            Err(Error::Compatibility(_))
        ));
    }
}

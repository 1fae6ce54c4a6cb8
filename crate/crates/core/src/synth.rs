//! Seeded synthetic paragraph/segment pairs with planted alignments and
//! planted node correspondences.
//!
//! A world of latent vectors (story events, verbs, an idle pose) is shared
//! by every dataset built from the same `world_seed`; each movie draws its
//! own cast. A paragraph narrates a few distinct events in order; its
//! segment shows each event over a contiguous run of shots, and each
//! sentence's characters appear as detections inside that run. Observed
//! features are unit-norm latents plus isotropic Gaussian noise whose
//! expected squared norm is `noise_sigma²`, so `noise_sigma` reads as a
//! noise-to-signal ratio independent of `dim`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{write_jsonl, Dataset, PairRecord, ParagraphRecord, SegmentRecord};
use crate::error::{Error, Result};
use crate::event_flow::AssignmentMatrix;
use crate::feature::{FeatureVector, RngSeed};
use crate::graph::{
    visual_action_node, visual_character_node, Attachment, DetectionRecord, LabeledFeature,
    SentenceGraphRecord,
};
use crate::qap::MatchIndicator;

pub const TRUTH_FILE: &str = "truth.jsonl";

/// At most this many named characters per paragraph.
pub const MAX_PARAGRAPH_CHARACTERS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub movies: usize,
    pub segments_per_movie: usize,
    /// Mean sentence count; draws are uniform on `[0.5, 1.5]` times this.
    pub sentences_per_paragraph: f64,
    /// Mean shot count, drawn like the sentence count.
    pub shots_per_segment: f64,
    pub characters_per_movie: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    /// Per-shot probability of an extra detection unrelated to the text.
    pub distractor_rate: f64,
    /// Probability that a sentence names a second character.
    pub interaction_rate: f64,
    /// Size of the shared story-event vocabulary.
    pub events: usize,
    /// Size of the shared verb vocabulary.
    pub verbs: usize,
    pub seed: RngSeed,
    /// Seed of the shared event and verb latents.
    pub world_seed: RngSeed,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            movies: 10,
            segments_per_movie: 4,
            sentences_per_paragraph: 4.0,
            shots_per_segment: 20.0,
            characters_per_movie: 8,
            dim: 16,
            noise_sigma: 0.3,
            distractor_rate: 0.2,
            interaction_rate: 0.5,
            events: 8,
            verbs: 12,
            seed: RngSeed(0),
            world_seed: RngSeed(0),
        }
    }
}

impl GenConfig {
    /// Sizes from the large-scale statistics: about 92 shots per segment and
    /// 6 sentences per paragraph.
    pub fn full_scale() -> GenConfig {
        GenConfig {
            sentences_per_paragraph: 5.9,
            shots_per_segment: 92.3,
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("movies", self.movies),
            ("segments_per_movie", self.segments_per_movie),
            ("characters_per_movie", self.characters_per_movie),
            ("dim", self.dim),
            ("events", self.events),
            ("verbs", self.verbs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("sentences_per_paragraph", self.sentences_per_paragraph),
            ("shots_per_segment", self.shots_per_segment),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be nonnegative"));
        }
        for (name, v) in [
            ("distractor_rate", self.distractor_rate),
            ("interaction_rate", self.interaction_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPair {
    pub movie_id: String,
    pub paragraph: ParagraphRecord,
    pub segment: SegmentRecord,
    /// Shot→sentence alignment used to generate the segment.
    pub alignment: AssignmentMatrix,
    /// Visual node → semantic node correspondence.
    pub node_map: MatchIndicator,
}

/// Ground-truth sidecar line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub paragraph_id: String,
    pub segment_id: String,
    pub sentences: usize,
    /// Sentence of each shot, `null` when unassigned.
    pub alignment: Vec<Option<usize>>,
    /// `[visual node, semantic node]` pairs.
    pub node_map: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthDataset {
    pub pairs: Vec<PlantedPair>,
}

struct World {
    events: Vec<Vec<f64>>,
    verbs: Vec<Vec<f64>>,
    idle: Vec<f64>,
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl World {
    fn new(cfg: &GenConfig) -> World {
        let mut rng = cfg.world_seed.rng();
        World {
            events: (0..cfg.events).map(|_| unit(&mut rng, cfg.dim)).collect(),
            verbs: (0..cfg.verbs).map(|_| unit(&mut rng, cfg.dim)).collect(),
            idle: unit(&mut rng, cfg.dim),
        }
    }
}

struct Sampler<'a> {
    rng: ChaCha8Rng,
    cfg: &'a GenConfig,
}

impl Sampler<'_> {
    fn observe(&mut self, latent: &[f64]) -> FeatureVector {
        let s = self.cfg.noise_sigma / (latent.len() as f64).sqrt();
        let v = latent
            .iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                x + s * z
            })
            .collect();
        FeatureVector::new(v).expect("finite latent plus finite noise")
    }

    fn size(&mut self, mean: f64, lo: usize, hi: usize) -> usize {
        let x = mean * self.rng.random_range(0.5..1.5);
        (x.round() as usize).clamp(lo, hi.max(lo))
    }

    fn pick(&mut self, pool: usize, count: usize) -> Vec<usize> {
        sample(&mut self.rng, pool, count).into_vec()
    }
}

struct Mention {
    cast: usize,
    latent: Vec<f64>,
    action: Vec<f64>,
    verb_label: Option<usize>,
}

impl SynthDataset {
    pub fn dataset(&self) -> Dataset {
        Dataset {
            paragraphs: self.pairs.iter().map(|p| p.paragraph.clone()).collect(),
            segments: self.pairs.iter().map(|p| p.segment.clone()).collect(),
            pairs: self
                .pairs
                .iter()
                .map(|p| PairRecord {
                    paragraph_id: p.paragraph.id.clone(),
                    segment_id: p.segment.id.clone(),
                })
                .collect(),
        }
    }

    pub fn truth(&self) -> Vec<TruthRecord> {
        self.pairs
            .iter()
            .map(|p| TruthRecord {
                paragraph_id: p.paragraph.id.clone(),
                segment_id: p.segment.id.clone(),
                sentences: p.alignment.num_sentences(),
                alignment: p.alignment.as_slice().to_vec(),
                node_map: p.node_map.pairs().to_vec(),
            })
            .collect()
    }

    /// Writes the three dataset files plus the ground-truth sidecar.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.dataset().write(dir)?;
        write_jsonl(&dir.join(TRUTH_FILE), &self.truth())
    }

    /// Reads back a directory written by [`SynthDataset::export`].
    pub fn load(dir: impl AsRef<Path>) -> Result<SynthDataset> {
        let dir = dir.as_ref();
        let ds = Dataset::load(dir)?;
        let path = dir.join(TRUTH_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let truth = parse_truth(&text, TRUTH_FILE)?;
        let paras: HashMap<&str, &ParagraphRecord> =
            ds.paragraphs.iter().map(|p| (p.id.as_str(), p)).collect();
        let segs: HashMap<&str, &SegmentRecord> =
            ds.segments.iter().map(|s| (s.id.as_str(), s)).collect();
        let pairs = truth
            .into_iter()
            .enumerate()
            .map(|(n, t)| {
                let line = n + 1;
                let bad = |msg: String| Error::parse(TRUTH_FILE, line, msg);
                let p = paras
                    .get(t.paragraph_id.as_str())
                    .ok_or_else(|| bad(format!("unknown paragraph {:?}", t.paragraph_id)))?;
                let s = segs
                    .get(t.segment_id.as_str())
                    .ok_or_else(|| bad(format!("unknown segment {:?}", t.segment_id)))?;
                if t.alignment.len() != s.shots.len() || t.sentences != p.sentences.len() {
                    return Err(bad("alignment does not fit the pair's sizes".into()));
                }
                Ok(PlantedPair {
                    movie_id: p.movie_id.clone(),
                    paragraph: (*p).clone(),
                    segment: (*s).clone(),
                    alignment: AssignmentMatrix::new(t.sentences, t.alignment)
                        .map_err(|e| bad(e.to_string()))?,
                    node_map: MatchIndicator::new(t.node_map).map_err(|e| bad(e.to_string()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SynthDataset { pairs })
    }
}

/// Parses a ground-truth sidecar. Each alignment must be monotone.
pub fn parse_truth(text: &str, file: &str) -> Result<Vec<TruthRecord>> {
    let recs: Vec<TruthRecord> = crate::data::parse_jsonl(text, file)?;
    for (n, r) in recs.iter().enumerate() {
        AssignmentMatrix::new(r.sentences, r.alignment.clone())
            .map_err(|e| Error::parse(file, n + 1, e.to_string()))?;
        MatchIndicator::new(r.node_map.clone())
            .map_err(|e| Error::parse(file, n + 1, e.to_string()))?;
    }
    Ok(recs)
}

/// Generates `movies × segments_per_movie` planted pairs. Identical configs
/// give identical output.
pub fn generate(cfg: &GenConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let world = World::new(cfg);
    let mut s = Sampler {
        rng: cfg.seed.rng(),
        cfg,
    };
    let max_sentences = cfg
        .events
        .min(cfg.verbs)
        .min(cfg.characters_per_movie)
        .min(MAX_PARAGRAPH_CHARACTERS);
    let mut pairs = Vec::with_capacity(cfg.movies * cfg.segments_per_movie);
    for movie in 0..cfg.movies {
        let movie_id = format!("m{movie:03}");
        let cast: Vec<Vec<f64>> = (0..cfg.characters_per_movie)
            .map(|_| unit(&mut s.rng, cfg.dim))
            .collect();
        for seg in 0..cfg.segments_per_movie {
            let n_sent = s.size(cfg.sentences_per_paragraph, 1, max_sentences);
            let n_shots = s.size(cfg.shots_per_segment, n_sent, usize::MAX);
            let events = s.pick(cfg.events, n_sent);
            let verbs = s.pick(cfg.verbs, n_sent);

            // contiguous runs: n_sent - 1 distinct cut points in 1..n_shots
            let mut cuts: Vec<usize> = s
                .pick(n_shots - 1, n_sent - 1)
                .iter()
                .map(|c| c + 1)
                .collect();
            cuts.sort_unstable();
            let mut starts = vec![0];
            starts.extend(&cuts);
            let mut ends = cuts.clone();
            ends.push(n_shots);

            // characters: one per sentence, then optional partners, all
            // distinct within the paragraph
            let budget = cfg.characters_per_movie.min(MAX_PARAGRAPH_CHARACTERS);
            let mut who: Vec<Vec<usize>> = Vec::with_capacity(n_sent);
            let mut order = s.pick(cfg.characters_per_movie, budget).into_iter();
            for _ in 0..n_sent {
                who.push(vec![order.next().expect("budget covers one per sentence")]);
            }
            for names in who.iter_mut() {
                if s.rng.random_bool(cfg.interaction_rate) {
                    if let Some(c) = order.next() {
                        names.push(c);
                    }
                }
            }

            let mut sentences = Vec::with_capacity(n_sent);
            let mut graph = Vec::with_capacity(n_sent);
            let mut shot_sentence = vec![None; n_shots];
            let mut shots = Vec::with_capacity(n_shots);
            // (shot, mention, semantic node of the character, semantic node of the verb)
            let mut placed: Vec<(usize, Mention, Option<usize>, Option<usize>)> = Vec::new();
            let mut sem_node = 0;
            for t in 0..n_sent {
                let ev = &world.events[events[t]];
                sentences.push(s.observe(ev));
                for slot in shot_sentence.iter_mut().take(ends[t]).skip(starts[t]) {
                    *slot = Some(t);
                }
                let verb = verbs[t];
                let characters = who[t]
                    .iter()
                    .map(|&c| LabeledFeature {
                        label: format!("c{c}"),
                        feature: s.observe(&cast[c]),
                    })
                    .collect::<Vec<_>>();
                let verb_feature = s.observe(&world.verbs[verb]);
                let shot = s.rng.random_range(starts[t]..ends[t]);
                let verb_node = sem_node + who[t].len();
                for (x, &c) in who[t].iter().enumerate() {
                    let subject = x == 0;
                    placed.push((
                        shot,
                        Mention {
                            cast: c,
                            latent: cast[c].clone(),
                            action: if subject {
                                world.verbs[verb].clone()
                            } else {
                                world.idle.clone()
                            },
                            verb_label: subject.then_some(verb),
                        },
                        Some(sem_node + x),
                        subject.then_some(verb_node),
                    ));
                }
                sem_node = verb_node + 1;
                graph.push(SentenceGraphRecord {
                    sentence_index: t,
                    attachments: (0..characters.len())
                        .map(|c| Attachment {
                            verb: 0,
                            character: c,
                        })
                        .collect(),
                    characters,
                    verbs: vec![LabeledFeature {
                        label: format!("v{verb}"),
                        feature: verb_feature,
                    }],
                });
            }
            for (shot, sent) in shot_sentence.iter().enumerate() {
                let t = sent.expect("runs cover every shot");
                shots.push(s.observe(&world.events[events[t]]));
                if s.rng.random_bool(cfg.distractor_rate) {
                    let c = s.rng.random_range(0..cfg.characters_per_movie);
                    let v = s.rng.random_range(0..cfg.verbs);
                    placed.push((
                        shot,
                        Mention {
                            cast: c,
                            latent: cast[c].clone(),
                            action: world.verbs[v].clone(),
                            verb_label: Some(v),
                        },
                        None,
                        None,
                    ));
                }
            }
            placed.sort_by_key(|p| p.0);
            let mut detections = Vec::with_capacity(placed.len());
            let mut node_map = Vec::new();
            for (d, (shot, m, char_node, verb_node)) in placed.into_iter().enumerate() {
                detections.push(DetectionRecord {
                    shot_index: shot,
                    person: s.observe(&m.latent),
                    action: s.observe(&m.action),
                    label: Some(match m.verb_label {
                        Some(v) => format!("c{} v{v}", m.cast),
                        None => format!("c{}", m.cast),
                    }),
                });
                if let Some(a) = char_node {
                    node_map.push((visual_character_node(d), a));
                }
                if let Some(a) = verb_node {
                    node_map.push((visual_action_node(d), a));
                }
            }
            pairs.push(PlantedPair {
                movie_id: movie_id.clone(),
                paragraph: ParagraphRecord {
                    id: format!("p{movie:03}-{seg}"),
                    movie_id: movie_id.clone(),
                    sentences,
                    graph,
                },
                segment: SegmentRecord {
                    id: format!("s{movie:03}-{seg}"),
                    movie_id: movie_id.clone(),
                    shots,
                    subtitles: None,
                    detections,
                },
                alignment: AssignmentMatrix::new(n_sent, shot_sentence)?,
                node_map: MatchIndicator::new(node_map)?,
            });
        }
    }
    Ok(SynthDataset { pairs })
}

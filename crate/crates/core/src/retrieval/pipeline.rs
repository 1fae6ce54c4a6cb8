use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricReport, RetrievalRun, Setting};
use super::scoring::{fuse, vse_from_embedded, FusionWeights, NodeScores};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::event_flow::efm_score;
use crate::feature::Matrix;
use crate::qap::{cim_score, CimParams};
use crate::training::TrainState;

/// First-stage scorer, optionally followed by graph-matching re-ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "vse")]
    Vse,
    #[serde(rename = "efm")]
    Efm,
    #[serde(rename = "efm+cim")]
    EfmCim,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Vse => "vse",
            Method::Efm => "efm",
            Method::EfmCim => "efm+cim",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "vse" => Ok(Method::Vse),
            "efm" => Ok(Method::Efm),
            "efm+cim" => Ok(Method::EfmCim),
            _ => Err(Error::invalid(format!("unknown method {s:?}"))),
        }
    }
}

/// Which node kinds enter the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSet {
    #[serde(rename = "appr")]
    Appearance,
    #[serde(rename = "appr+action")]
    AppearanceAction,
    #[serde(rename = "appr+action+cast")]
    All,
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeSet::Appearance => "appr",
            NodeSet::AppearanceAction => "appr+action",
            NodeSet::All => "appr+action+cast",
        })
    }
}

impl FromStr for NodeSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<NodeSet> {
        match s {
            "appr" => Ok(NodeSet::Appearance),
            "appr+action" => Ok(NodeSet::AppearanceAction),
            "appr+action+cast" => Ok(NodeSet::All),
            _ => Err(Error::invalid(format!("unknown node set {s:?}"))),
        }
    }
}

impl NodeSet {
    /// Zeroes the weights of kinds outside the set.
    pub fn mask(self, w: FusionWeights) -> FusionWeights {
        FusionWeights {
            appearance: w.appearance,
            action: if self == NodeSet::Appearance {
                0.0
            } else {
                w.action
            },
            cast: if self == NodeSet::All { w.cast } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub method: Method,
    pub nodes: NodeSet,
    /// Divide event-flow scores by the segment's shot count.
    pub normalize_efm: bool,
    pub cross_movie_weights: FusionWeights,
    pub within_movie_weights: FusionWeights,
    /// Candidates per query re-scored by graph matching.
    pub rerank_n: usize,
    pub cim: CimParams,
    pub cross_movie_ks: Vec<usize>,
    pub within_movie_ks: Vec<usize>,
    pub settings: Vec<Setting>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            method: Method::EfmCim,
            nodes: NodeSet::All,
            normalize_efm: true,
            cross_movie_weights: FusionWeights::CROSS_MOVIE,
            within_movie_weights: FusionWeights::WITHIN_MOVIE,
            rerank_n: 15,
            cim: CimParams::default(),
            cross_movie_ks: vec![1, 5, 10],
            within_movie_ks: vec![1, 5, 7],
            settings: vec![Setting::CrossMovie, Setting::WithinMovie],
        }
    }
}

impl PipelineConfig {
    pub fn weights(&self, setting: Setting) -> FusionWeights {
        match setting {
            Setting::CrossMovie => self.cross_movie_weights,
            Setting::WithinMovie => self.within_movie_weights,
        }
    }

    pub fn ks(&self, setting: Setting) -> &[usize] {
        match setting {
            Setting::CrossMovie => &self.cross_movie_ks,
            Setting::WithinMovie => &self.within_movie_ks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [Setting::CrossMovie, Setting::WithinMovie] {
            self.nodes.mask(self.weights(s)).validate()?;
            if self.ks(s).contains(&0) {
                return Err(Error::invalid("recall cutoffs must be at least 1"));
            }
        }
        if self.rerank_n == 0 {
            return Err(Error::invalid("rerank_n must be at least 1"));
        }
        if self.cim.k == 0 {
            return Err(Error::invalid("pruning k must be at least 1"));
        }
        Ok(())
    }
}

/// Every paragraph and segment passed through the trained maps.
pub fn embed_corpus(corpus: &Corpus, state: &TrainState) -> Result<Corpus> {
    state.check_compatible(corpus)?;
    Ok(Corpus {
        paragraphs: corpus
            .paragraphs
            .par_iter()
            .map(|p| state.embed_paragraph(p))
            .collect::<Result<Vec<_>>>()?,
        segments: corpus
            .segments
            .par_iter()
            .map(|s| state.embed_segment(s))
            .collect::<Result<Vec<_>>>()?,
        pairs: corpus.pairs.clone(),
    })
}

/// Per-kind first-stage scores of every query (paragraphs of `pairs`, in
/// order) against every segment of an embedded corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub queries: usize,
    pub candidates: usize,
    pub cells: Vec<NodeScores>,
}

impl ScoreTable {
    pub fn get(&self, q: usize, c: usize) -> NodeScores {
        self.cells[q * self.candidates + c]
    }
}

/// With `Method::Vse` every kind is mean-pooled cosine; otherwise the
/// appearance score is the event-flow alignment score.
pub fn score_table(embedded: &Corpus, method: Method, normalize_efm: bool) -> Result<ScoreTable> {
    let q = embedded.pairs.len();
    let c = embedded.segments.len();
    let cells = (0..q * c)
        .into_par_iter()
        .map(|cell| {
            let p = &embedded.paragraphs[embedded.pairs[cell / c].0];
            let s = &embedded.segments[cell % c];
            let mut scores = vse_from_embedded(p, s);
            if method != Method::Vse {
                scores.appearance = efm_score(&p.sentences, &s.shots, normalize_efm)?;
            }
            Ok(scores)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable {
        queries: q,
        candidates: c,
        cells,
    })
}

/// Fuses a score table into a run for one setting.
pub fn build_run(
    corpus: &Corpus,
    table: &ScoreTable,
    setting: Setting,
    weights: &FusionWeights,
) -> Result<RetrievalRun> {
    let mut scores = Matrix::zeros(table.queries, table.candidates);
    for q in 0..table.queries {
        for c in 0..table.candidates {
            scores.set(q, c, fuse(&table.get(q, c), weights));
        }
    }
    RetrievalRun::new(
        setting,
        corpus
            .pairs
            .iter()
            .map(|&(p, _)| {
                let p = &corpus.paragraphs[p];
                (p.id.clone(), p.movie_id.clone())
            })
            .collect(),
        corpus
            .segments
            .iter()
            .map(|s| (s.id.clone(), s.movie_id.clone()))
            .collect(),
        scores,
        corpus.pairs.iter().map(|&(_, s)| s).collect(),
    )
}

/// Adds `scorer(q, c)` to the first-stage score of each query's `n`
/// best-ranked candidates; other candidates keep their scores.
pub fn rerank_top_n<F>(run: &RetrievalRun, n: usize, scorer: F) -> Result<RetrievalRun>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    if n == 0 {
        return Err(Error::invalid("re-rank depth must be at least 1"));
    }
    let updates = (0..run.queries().len())
        .into_par_iter()
        .map(|q| {
            run.ranking(q)
                .into_iter()
                .take(n)
                .map(|c| Ok((q, c, scorer(q, c)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = run.clone();
    for (q, c, extra) in updates.into_iter().flatten() {
        out.set_score(q, c, run.score(q, c) + extra);
    }
    Ok(out)
}

/// Graph-matching scorer over an embedded corpus, indexed like its runs.
pub fn cim_scorer<'a>(
    embedded: &'a Corpus,
    params: &'a CimParams,
) -> impl Fn(usize, usize) -> Result<f64> + Sync + 'a {
    move |q, c| {
        let p = &embedded.paragraphs[embedded.pairs[q].0];
        cim_score(&embedded.segments[c].graph, &p.graph, params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingResult {
    pub run: RetrievalRun,
    pub report: MetricReport,
}

/// Scores every query against the candidate pool of each configured setting
/// and evaluates the resulting rankings.
pub fn run_pipeline(
    corpus: &Corpus,
    state: &TrainState,
    config: &PipelineConfig,
) -> Result<Vec<SettingResult>> {
    config.validate()?;
    let embedded = embed_corpus(corpus, state)?;
    let table = score_table(&embedded, config.method, config.normalize_efm)?;
    config
        .settings
        .iter()
        .map(|&setting| {
            let weights = config.nodes.mask(config.weights(setting));
            let mut run = build_run(&embedded, &table, setting, &weights)?;
            if config.method == Method::EfmCim {
                run = rerank_top_n(&run, config.rerank_n, cim_scorer(&embedded, &config.cim))?;
            }
            let report = evaluate(&run, config.ks(setting))?;
            Ok(SettingResult { run, report })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::RngSeed;
    use crate::synth::{generate, GenConfig};
    use crate::training::{InputDims, TrainConfig};
    use rand::Rng;

    fn run_from(scores: Vec<f64>, rows: usize, truth: Vec<usize>) -> RetrievalRun {
        let cols = scores.len() / rows;
        RetrievalRun::new(
            Setting::CrossMovie,
            (0..rows).map(|q| (format!("p{q}"), "m".into())).collect(),
            (0..cols).map(|c| (format!("s{c}"), "m".into())).collect(),
            Matrix::from_vec(rows, cols, scores).unwrap(),
            truth,
        )
        .unwrap()
    }

    #[test]
    fn rerank_lifts_planted_candidate() {
        // truth (candidate 2) sits third in the first stage
        let run = run_from(vec![0.9, 0.8, 0.7, 0.1, 0.0], 1, vec![2]);
        assert_eq!(run.rank_of(0, 2), 3);
        let out = rerank_top_n(&run, 3, |_, c| Ok(if c == 2 { 5.0 } else { 0.0 })).unwrap();
        assert_eq!(out.rank_of(0, 2), 1);
    }

    #[test]
    fn rerank_zero_scorer_and_full_depth() {
        let run = run_from(vec![0.3, 0.9, 0.1, 0.5], 1, vec![0]);
        let same = rerank_top_n(&run, 2, |_, _| Ok(0.0)).unwrap();
        assert_eq!(same, run);
        let all = rerank_top_n(&run, 10, |_, _| Ok(1.0)).unwrap();
        for c in 0..4 {
            assert_eq!(all.score(0, c), run.score(0, c) + 1.0);
        }
        assert!(rerank_top_n(&run, 0, |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn rerank_only_touches_top_n() {
        let mut rng = RngSeed(8).rng();
        for _ in 0..50 {
            let c = rng.random_range(2..12);
            let scores: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0)).collect();
            let run = run_from(scores, 1, vec![0]);
            let n = rng.random_range(1..=c);
            let top: Vec<usize> = run.ranking(0)[..n].to_vec();
            let out = rerank_top_n(&run, n, |_, _| Ok(0.75)).unwrap();
            for cand in 0..c {
                if !top.contains(&cand) {
                    assert_eq!(out.score(0, cand), run.score(0, cand));
                    // rank can only worsen, and only by top-n candidates passing it
                    let before = run.rank_of(0, cand);
                    let after = out.rank_of(0, cand);
                    assert!(after >= before);
                }
            }
        }
    }

    fn small_setup(pairs_per_movie: usize) -> (Corpus, TrainState) {
        let cfg = GenConfig {
            movies: 3,
            segments_per_movie: pairs_per_movie,
            dim: 6,
            seed: RngSeed(5),
            ..GenConfig::default()
        };
        let corpus = generate(&cfg).unwrap().dataset().prepare().unwrap();
        let tc = TrainConfig {
            embed_dim: 6,
            ..TrainConfig::default()
        };
        let state = TrainState::init(InputDims::of(&corpus).unwrap(), &tc);
        (corpus, state)
    }

    #[test]
    fn vse_appearance_pathway_matches_hand_trace() {
        let (corpus, state) = small_setup(4);
        let cfg = PipelineConfig {
            method: Method::Vse,
            nodes: NodeSet::Appearance,
            settings: vec![Setting::CrossMovie],
            ..PipelineConfig::default()
        };
        let results = run_pipeline(&corpus, &state, &cfg).unwrap();
        let run = &results[0].run;
        for (q, &(p, _)) in corpus.pairs.iter().enumerate() {
            for c in 0..corpus.segments.len() {
                let s =
                    crate::retrieval::vse_score(&corpus.paragraphs[p], &corpus.segments[c], &state)
                        .unwrap();
                assert!((run.score(q, c) - 0.3 * s.appearance).abs() < 1e-12);
            }
        }
        let ranks = run.truth_ranks();
        assert_eq!(
            results[0].report.recall_at[&1],
            ranks.iter().filter(|&&r| r == 1).count() as f64 / ranks.len() as f64
        );
    }

    #[test]
    fn single_query_pool_is_perfect() {
        let (mut corpus, state) = small_setup(1);
        corpus.segments.truncate(1);
        corpus.paragraphs.truncate(1);
        corpus.pairs.truncate(1);
        for method in [Method::Vse, Method::Efm, Method::EfmCim] {
            let cfg = PipelineConfig {
                method,
                ..PipelineConfig::default()
            };
            for r in run_pipeline(&corpus, &state, &cfg).unwrap() {
                assert_eq!(r.report.recall_at[&1], 1.0);
            }
        }
    }

    #[test]
    fn within_movie_runs_never_see_other_movies() {
        let (corpus, state) = small_setup(3);
        let results = run_pipeline(&corpus, &state, &PipelineConfig::default()).unwrap();
        let within = results
            .iter()
            .find(|r| r.run.setting() == Setting::WithinMovie)
            .unwrap();
        for q in 0..within.run.queries().len() {
            for &c in within.run.pool(q) {
                assert_eq!(within.run.candidate_movie(c), within.run.query_movie(q));
            }
            assert_eq!(within.run.pool(q).len(), 3);
        }
        assert!(within.report.avg_medr.is_some());
        for r in &results {
            let v: Vec<f64> = r.report.recall_at.values().copied().collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn parses_method_and_nodes() {
        assert_eq!("efm+cim".parse::<Method>().unwrap(), Method::EfmCim);
        assert!("bogus".parse::<Method>().is_err());
        assert_eq!(
            "appr+action".parse::<NodeSet>().unwrap(),
            NodeSet::AppearanceAction
        );
        let w = NodeSet::Appearance.mask(FusionWeights::CROSS_MOVIE);
        assert_eq!((w.cast, w.action), (0.0, 0.0));
    }
}

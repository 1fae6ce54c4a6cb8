use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use segmatch::config::{read_run_config, RunConfig};
use segmatch::data::{Corpus, Dataset};
use segmatch::event_flow::align as align_dp;
use segmatch::feature::similarity_matrix;
use segmatch::graph::{build_similarity_matrix, NodeKind, TypedGraph};
use segmatch::qap::{cim_match, score_contributions, CimParams};
use segmatch::retrieval::{run_pipeline, MetricReport};
use segmatch::synth::{generate as synth_generate, GenConfig};
use segmatch::training::{read_checkpoint, train_with, write_checkpoint, Checkpoint, TrainState};
use segmatch::{Error, Result, RngSeed};

use crate::{EvaluateArgs, GenerateArgs, MatchArgs, PairArgs, TrainArgs};

/// `println!` that ends the process quietly when stdout is closed.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        if let Err(e) = writeln!(std::io::stdout(), $($t)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            eprintln!("error: stdout: {e}");
            std::process::exit(7);
        }
    }};
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const DIVERGED_FILE: &str = "diverged.json";
pub const REPORT_FILE: &str = "report.json";

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) => 2,
        Error::Parse { .. } => 3,
        Error::Compatibility(_) => 4,
        Error::Divergence { .. } => 5,
        Error::Lookup(_) => 6,
        Error::Io { .. } => 7,
        Error::SizeLimit(_) => 1,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), read_run_config)
}

fn data_dir(flag: Option<PathBuf>, from_config: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| from_config.cloned()).ok_or_else(|| {
        Error::InvalidInput(format!(
            "no {what} data: pass --data or set data.{what} in the config"
        ))
    })
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    Dataset::load(dir)?.prepare()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn mean(total: usize, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        total as f64 / count as f64
    }
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let base = if a.full_scale {
        GenConfig::full_scale()
    } else {
        GenConfig {
            sentences_per_paragraph: a.sentences,
            shots_per_segment: a.shots,
            ..GenConfig::default()
        }
    };
    let cfg = GenConfig {
        movies: a.movies as usize,
        segments_per_movie: a.segments_per_movie as usize,
        characters_per_movie: a.characters as usize,
        dim: a.dim as usize,
        noise_sigma: a.sigma,
        distractor_rate: a.distractors,
        interaction_rate: a.interaction,
        events: a.events as usize,
        verbs: a.verbs as usize,
        seed: RngSeed(a.seed),
        world_seed: RngSeed(a.world_seed),
        ..base
    };
    let synth = synth_generate(&cfg)?;
    synth.export(&a.out)?;

    let ds = synth.dataset();
    let movies: BTreeSet<&str> = ds.paragraphs.iter().map(|p| p.movie_id.as_str()).collect();
    let segs = ds.segments.len();
    let paras = ds.paragraphs.len();
    let shots: usize = ds.segments.iter().map(|s| s.shots.len()).sum();
    let dets: usize = ds.segments.iter().map(|s| s.detections.len()).sum();
    let sents: usize = ds.paragraphs.iter().map(|p| p.sentences.len()).sum();
    let mentions: usize = ds
        .paragraphs
        .iter()
        .flat_map(|p| &p.graph)
        .map(|g| g.characters.len())
        .sum();
    say!("{:<20} {:>8}", "# Movies", movies.len());
    say!("{:<20} {:>8}", "# Segments", segs);
    say!("{:<20} {:>8.1}", "# Shots / seg.", mean(shots, segs));
    say!("{:<20} {:>8.1}", "# Detections / seg.", mean(dets, segs));
    say!("{:<20} {:>8.1}", "# Sents. / para.", mean(sents, paras));
    say!(
        "{:<20} {:>8.1}",
        "# Mentions / para.",
        mean(mentions, paras)
    );
    say!("wrote {}", a.out.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = RngSeed(s);
    }
    cfg.validate()?;
    let dir = data_dir(a.data, cfg.data.train.as_ref(), "train")?;
    let corpus = load_corpus(&dir)?;
    create_dir(&a.out)?;
    let state = match train_with(&corpus, &cfg.train, |e, l| {
        say!("epoch {:>4}  loss {l:.6}", e + 1)
    }) {
        Ok(s) => s,
        Err(Error::Divergence {
            epoch,
            reason,
            snapshot,
        }) => {
            let path = a.out.join(DIVERGED_FILE);
            write_checkpoint(
                &path,
                &Checkpoint::new(cfg.train.clone(), (*snapshot).clone()),
            )?;
            eprintln!("last finite state written to {}", path.display());
            return Err(Error::Divergence {
                epoch,
                reason,
                snapshot,
            });
        }
        Err(e) => return Err(e),
    };
    let path = a.out.join(CHECKPOINT_FILE);
    write_checkpoint(&path, &Checkpoint::new(cfg.train, state))?;
    say!("wrote {}", path.display());
    Ok(())
}

fn report_line(r: &MetricReport) -> String {
    let mut s = format!("{:<13}", r.setting.to_string());
    for v in r.recall_at.values() {
        s.push_str(&format!(" {:>7.2}", 100.0 * v));
    }
    s.push_str(&format!(" {:>7.1}", r.medr));
    if let Some(a) = r.avg_medr {
        s.push_str(&format!(" {a:>9.2}"));
    }
    s
}

fn report_header(r: &MetricReport) -> String {
    let mut s = format!("{:<13}", "setting");
    for k in r.recall_at.keys() {
        s.push_str(&format!(" {:>7}", format!("R@{k}")));
    }
    s.push_str(&format!(" {:>7}", "MedR"));
    if r.avg_medr.is_some() {
        s.push_str(&format!(" {:>9}", "Avg.MedR"));
    }
    s
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(m) = a.method {
        cfg.evaluate.method = m;
    }
    if let Some(n) = a.nodes {
        cfg.evaluate.nodes = n;
    }
    if let Some(n) = a.rerank_n {
        cfg.rerank.n = n as usize;
    }
    if !a.settings.is_empty() {
        cfg.evaluate.settings = a.settings;
    }
    cfg.validate()?;
    let ck = read_checkpoint(&a.checkpoint)?;
    let dir = data_dir(a.data, cfg.data.test.as_ref(), "test")?;
    let corpus = load_corpus(&dir)?;
    ck.state.check_compatible(&corpus)?;
    let pipeline = cfg.pipeline();
    let results = run_pipeline(&corpus, &ck.state, &pipeline)?;

    say!("method {}  nodes {}", pipeline.method, pipeline.nodes);
    for r in &results {
        say!("{}", report_header(&r.report));
        say!("{}", report_line(&r.report));
    }
    let reports: Vec<&MetricReport> = results.iter().map(|r| &r.report).collect();
    let doc = serde_json::json!({
        "method": pipeline.method,
        "nodes": pipeline.nodes,
        "rerank_n": pipeline.rerank_n,
        "reports": reports,
    });
    create_dir(&a.out)?;
    let path = a.out.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    say!("wrote {}", path.display());
    Ok(())
}

/// The selected pair, embedded when a checkpoint is given.
struct Selected {
    corpus: Corpus,
    paragraph: usize,
    segment: usize,
    state: Option<TrainState>,
}

impl Selected {
    fn load(
        data: &Path,
        paragraph: &str,
        segment: &str,
        checkpoint: Option<&Path>,
    ) -> Result<Selected> {
        let corpus = load_corpus(data)?;
        let paragraph = corpus.paragraph_index(paragraph)?;
        let segment = corpus.segment_index(segment)?;
        let state = checkpoint
            .map(|p| -> Result<TrainState> {
                let ck = read_checkpoint(p)?;
                ck.state.check_compatible(&corpus)?;
                Ok(ck.state)
            })
            .transpose()?;
        Ok(Selected {
            corpus,
            paragraph,
            segment,
            state,
        })
    }

    fn pair(&self) -> Result<(segmatch::data::Paragraph, segmatch::data::Segment)> {
        let p = &self.corpus.paragraphs[self.paragraph];
        let s = &self.corpus.segments[self.segment];
        match &self.state {
            Some(st) => Ok((st.embed_paragraph(p)?, st.embed_segment(s)?)),
            None => Ok((p.clone(), s.clone())),
        }
    }
}

fn require_same_dim(what: &str, a: Option<usize>, b: Option<usize>) -> Result<()> {
    match (a, b) {
        (Some(x), Some(y)) if x != y => Err(Error::Compatibility(format!(
            "{what} features have dims {x} and {y}; pass --checkpoint to embed them"
        ))),
        _ => Ok(()),
    }
}

pub fn align(a: PairArgs) -> Result<()> {
    let sel = Selected::load(&a.data, &a.paragraph, &a.segment, a.checkpoint.as_deref())?;
    let (p, s) = sel.pair()?;
    require_same_dim(
        "sentence and shot",
        Some(p.sentences.cols()),
        Some(s.shots.cols()),
    )?;
    let r = align_dp(&similarity_matrix(&p.sentences, &s.shots)?)?;
    for (t, range) in r.assignment.sentence_ranges().iter().enumerate() {
        match range {
            Some((first, last)) => say!("sentence {t}: shots {first}..={last}"),
            None => say!("sentence {t}: no shots"),
        }
    }
    let score = if a.normalize {
        r.score / s.shots.rows() as f64
    } else {
        r.score
    };
    say!("score {score:.6}");
    Ok(())
}

fn describe(g: &TypedGraph, i: usize) -> String {
    let n = g.node(i);
    let kind = match n.kind {
        NodeKind::Character => "character",
        NodeKind::Action => "action",
    };
    match &n.label {
        Some(l) => format!("{i} ({kind} {l})"),
        None => format!("{i} ({kind})"),
    }
}

pub fn match_graphs(a: MatchArgs) -> Result<()> {
    let sel = Selected::load(&a.data, &a.paragraph, &a.segment, a.checkpoint.as_deref())?;
    let (p, s) = sel.pair()?;
    let (gq, gp) = (&s.graph, &p.graph);
    if gq.is_empty() || gp.is_empty() {
        say!("pruning: nodes {} -> {}", gq.len(), gq.len());
        say!("no correspondences");
        say!("score {:.6}", 0.0);
        return Ok(());
    }
    require_same_dim(
        "visual and semantic node",
        gq.feature_dim(),
        gp.feature_dim(),
    )?;
    let params = CimParams {
        k: a.k as usize,
        hops: a.j,
        exact_threshold: a.exact_threshold,
    };
    let out = cim_match(gq, gp, &params, a.exact)?;
    say!(
        "pruning: nodes {} -> {}, edges {} -> {}",
        out.nodes_before,
        out.nodes_after,
        out.edges_before,
        out.edges_after
    );
    say!(
        "solver: {}",
        if out.result.exact {
            "exact"
        } else {
            "kuhn-munkres"
        }
    );
    let k = build_similarity_matrix(gq, gp)?;
    let (nodes, edges) = score_contributions(&k, &out.result.indicator);
    for ((i, a), v) in nodes {
        say!(
            "visual {} <-> semantic {}  node {v:.6}",
            describe(gq, i),
            describe(gp, a)
        );
    }
    for ((i, a), (j, b), v) in edges {
        say!("edge ({i},{a})-({j},{b})  {v:.6}");
    }
    say!("score {:.6}", out.result.score);
    Ok(())
}

//! JSON-lines dataset schemas.
//!
//! A dataset directory holds `paragraphs.jsonl`, `segments.jsonl` and
//! `pairs.jsonl`, one object per line. Parsing is strict: unknown fields,
//! blank lines, duplicate ids, ragged feature dims and dangling references
//! are all rejected with the offending file and line.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{FeatureMatrix, FeatureVector, Matrix};
use crate::graph::{
    build_semantic_graph, build_visual_graph, DetectionRecord, SentenceGraphRecord, TypedGraph,
};

pub const PARAGRAPHS_FILE: &str = "paragraphs.jsonl";
pub const SEGMENTS_FILE: &str = "segments.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParagraphRecord {
    pub id: String,
    pub movie_id: String,
    pub sentences: Vec<FeatureVector>,
    #[serde(default)]
    pub graph: Vec<SentenceGraphRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub id: String,
    pub movie_id: String,
    pub shots: Vec<FeatureVector>,
    /// Per-shot subtitle features, appended to the visual features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitles: Option<Vec<FeatureVector>>,
    #[serde(default)]
    pub detections: Vec<DetectionRecord>,
}

/// Paragraph-level ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub paragraph_id: String,
    pub segment_id: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub paragraphs: Vec<ParagraphRecord>,
    pub segments: Vec<SegmentRecord>,
    pub pairs: Vec<PairRecord>,
}

/// A paragraph ready for scoring: stacked sentence features and its
/// semantic graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Paragraph {
    pub id: String,
    pub movie_id: String,
    pub sentences: FeatureMatrix,
    pub graph: TypedGraph,
}

/// A segment ready for scoring: stacked shot features (subtitles
/// concatenated) and its visual graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub movie_id: String,
    pub shots: FeatureMatrix,
    pub graph: TypedGraph,
}

/// Prepared dataset with pairs resolved to indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub paragraphs: Vec<Paragraph>,
    pub segments: Vec<Segment>,
    /// `(paragraph index, segment index)`.
    pub pairs: Vec<(usize, usize)>,
}

impl Corpus {
    pub fn paragraph_index(&self, id: &str) -> Result<usize> {
        self.paragraphs
            .iter()
            .position(|p| p.id == id)
            .ok_or_else(|| Error::Lookup(format!("paragraph {id:?}")))
    }

    pub fn segment_index(&self, id: &str) -> Result<usize> {
        self.segments
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::Lookup(format!("segment {id:?}")))
    }
}

/// Parses one JSON object per line.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, file: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            if line.trim().is_empty() {
                return Err(Error::parse(file, n + 1, "empty line"));
            }
            serde_json::from_str(line).map_err(|e| Error::parse(file, n + 1, e.to_string()))
        })
        .collect()
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, file: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for (n, id) in ids.enumerate() {
        if !seen.insert(id) {
            return Err(Error::parse(file, n + 1, format!("duplicate id {id:?}")));
        }
    }
    Ok(())
}

/// Tracks a dimension that must agree across a whole file.
struct UniformDim<'a> {
    file: &'a str,
    what: &'static str,
    dim: Option<usize>,
}

impl<'a> UniformDim<'a> {
    fn new(file: &'a str, what: &'static str) -> Self {
        UniformDim {
            file,
            what,
            dim: None,
        }
    }

    fn check(&mut self, line: usize, d: usize) -> Result<()> {
        match self.dim {
            None => {
                self.dim = Some(d);
                Ok(())
            }
            Some(e) if e == d => Ok(()),
            Some(e) => Err(Error::parse(
                self.file,
                line,
                format!(
                    "{} dim {d} differs from {e} used earlier in the file",
                    self.what
                ),
            )),
        }
    }
}

pub fn parse_paragraphs(text: &str, file: &str) -> Result<Vec<ParagraphRecord>> {
    let records: Vec<ParagraphRecord> = parse_jsonl(text, file)?;
    check_unique(records.iter().map(|r| r.id.as_str()), file)?;
    let mut sent_dim = UniformDim::new(file, "sentence feature");
    let mut node_dim = UniformDim::new(file, "graph node feature");
    for (n, r) in records.iter().enumerate() {
        let line = n + 1;
        if r.sentences.is_empty() {
            return Err(Error::parse(file, line, "paragraph has no sentences"));
        }
        for s in &r.sentences {
            sent_dim.check(line, s.dim())?;
        }
        for g in &r.graph {
            if g.sentence_index >= r.sentences.len() {
                return Err(Error::parse(
                    file,
                    line,
                    format!("sentence_index {} out of range", g.sentence_index),
                ));
            }
            for f in g.characters.iter().chain(&g.verbs) {
                node_dim.check(line, f.feature.dim())?;
            }
        }
        build_semantic_graph(&r.graph).map_err(|e| Error::parse(file, line, e.to_string()))?;
    }
    Ok(records)
}

pub fn parse_segments(text: &str, file: &str) -> Result<Vec<SegmentRecord>> {
    let records: Vec<SegmentRecord> = parse_jsonl(text, file)?;
    check_unique(records.iter().map(|r| r.id.as_str()), file)?;
    let mut shot_dim = UniformDim::new(file, "shot feature");
    let mut sub_dim = UniformDim::new(file, "subtitle feature");
    let mut node_dim = UniformDim::new(file, "detection feature");
    let mut has_subs = None;
    for (n, r) in records.iter().enumerate() {
        let line = n + 1;
        if r.shots.is_empty() {
            return Err(Error::parse(file, line, "segment has no shots"));
        }
        for s in &r.shots {
            shot_dim.check(line, s.dim())?;
        }
        match (has_subs, &r.subtitles) {
            (Some(prev), subs) if prev != subs.is_some() => {
                return Err(Error::parse(
                    file,
                    line,
                    "subtitles must be present on every segment or on none",
                ))
            }
            _ => has_subs = Some(r.subtitles.is_some()),
        }
        if let Some(subs) = &r.subtitles {
            if subs.len() != r.shots.len() {
                return Err(Error::parse(
                    file,
                    line,
                    format!("{} subtitle rows for {} shots", subs.len(), r.shots.len()),
                ));
            }
            for s in subs {
                sub_dim.check(line, s.dim())?;
            }
        }
        for d in &r.detections {
            if d.shot_index >= r.shots.len() {
                return Err(Error::parse(
                    file,
                    line,
                    format!("detection shot_index {} out of range", d.shot_index),
                ));
            }
            node_dim.check(line, d.person.dim())?;
            node_dim.check(line, d.action.dim())?;
        }
        build_visual_graph(&r.detections).map_err(|e| Error::parse(file, line, e.to_string()))?;
    }
    Ok(records)
}

pub fn parse_pairs(text: &str, file: &str) -> Result<Vec<PairRecord>> {
    let records: Vec<PairRecord> = parse_jsonl(text, file)?;
    check_unique(records.iter().map(|r| r.paragraph_id.as_str()), file)?;
    Ok(records)
}

/// A missing dataset file is a schema violation of the directory; line 0
/// stands for the whole file.
fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::parse(
            path.display().to_string(),
            0,
            "required dataset file is missing",
        ),
        _ => Error::io(path, e),
    })
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let ds = Dataset {
            paragraphs: parse_paragraphs(&read(dir, PARAGRAPHS_FILE)?, PARAGRAPHS_FILE)?,
            segments: parse_segments(&read(dir, SEGMENTS_FILE)?, SEGMENTS_FILE)?,
            pairs: parse_pairs(&read(dir, PAIRS_FILE)?, PAIRS_FILE)?,
        };
        ds.check_references()?;
        Ok(ds)
    }

    /// Pair ids resolve, and pairs never join different movies.
    pub fn check_references(&self) -> Result<()> {
        let paras: HashMap<&str, &str> = self
            .paragraphs
            .iter()
            .map(|p| (p.id.as_str(), p.movie_id.as_str()))
            .collect();
        let segs: HashMap<&str, &str> = self
            .segments
            .iter()
            .map(|s| (s.id.as_str(), s.movie_id.as_str()))
            .collect();
        for (n, pair) in self.pairs.iter().enumerate() {
            let line = n + 1;
            let pm = paras.get(pair.paragraph_id.as_str()).ok_or_else(|| {
                Error::parse(
                    PAIRS_FILE,
                    line,
                    format!("unknown paragraph {:?}", pair.paragraph_id),
                )
            })?;
            let sm = segs.get(pair.segment_id.as_str()).ok_or_else(|| {
                Error::parse(
                    PAIRS_FILE,
                    line,
                    format!("unknown segment {:?}", pair.segment_id),
                )
            })?;
            if pm != sm {
                return Err(Error::parse(
                    PAIRS_FILE,
                    line,
                    format!("pair joins movie {pm:?} with movie {sm:?}"),
                ));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join(PARAGRAPHS_FILE), &self.paragraphs)?;
        write_jsonl(&dir.join(SEGMENTS_FILE), &self.segments)?;
        write_jsonl(&dir.join(PAIRS_FILE), &self.pairs)
    }

    pub fn prepare(&self) -> Result<Corpus> {
        let paragraphs = self
            .paragraphs
            .iter()
            .map(prepare_paragraph)
            .collect::<Result<Vec<_>>>()?;
        let segments = self
            .segments
            .iter()
            .map(prepare_segment)
            .collect::<Result<Vec<_>>>()?;
        let mut corpus = Corpus {
            paragraphs,
            segments,
            pairs: Vec::new(),
        };
        corpus.pairs = self
            .pairs
            .iter()
            .map(|p| {
                Ok((
                    corpus.paragraph_index(&p.paragraph_id)?,
                    corpus.segment_index(&p.segment_id)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(corpus)
    }
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn prepare_paragraph(r: &ParagraphRecord) -> Result<Paragraph> {
    Ok(Paragraph {
        id: r.id.clone(),
        movie_id: r.movie_id.clone(),
        sentences: Matrix::from_rows(&r.sentences)?,
        graph: build_semantic_graph(&r.graph)?,
    })
}

pub fn prepare_segment(r: &SegmentRecord) -> Result<Segment> {
    let mut shots = Matrix::from_rows(&r.shots)?;
    if let Some(subs) = &r.subtitles {
        shots = shots.hconcat(&Matrix::from_rows(subs)?)?;
    }
    Ok(Segment {
        id: r.id.clone(),
        movie_id: r.movie_id.clone(),
        shots,
        graph: build_visual_graph(&r.detections)?,
    })
}

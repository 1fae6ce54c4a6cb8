//! Paragraph→segment retrieval: first-stage scoring, score fusion,
//! graph-matching re-ranking and ranking metrics.

mod metrics;
mod pipeline;
mod scoring;

pub use metrics::{evaluate, median, MetricReport, RetrievalRun, Setting};
pub use pipeline::{
    build_run, cim_scorer, embed_corpus, rerank_top_n, run_pipeline, score_table, Method, NodeSet,
    PipelineConfig, ScoreTable, SettingResult,
};
pub use scoring::{fuse, vse_from_embedded, vse_score, FusionWeights, NodeScores};

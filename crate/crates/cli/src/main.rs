//! `segmatch` command-line driver: generate → train → evaluate, plus
//! single-pair `align` and `match-graphs` inspection.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segmatch::retrieval::{Method, NodeSet, Setting};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "segmatch",
    version,
    about = "Match movie segments to synopsis paragraphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with planted ground truth.
    Generate(GenerateArgs),
    /// Train embedding maps and write a checkpoint.
    Train(TrainArgs),
    /// Rank segments for every paragraph and report Recall@K / MedR.
    Evaluate(EvaluateArgs),
    /// Align one paragraph's sentences to one segment's shots.
    Align(PairArgs),
    /// Match one paragraph's semantic graph to one segment's visual graph.
    MatchGraphs(MatchArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    movies: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    segments_per_movie: u64,
    /// Mean sentences per paragraph.
    #[arg(long, default_value_t = 4.0)]
    sentences: f64,
    /// Mean shots per segment.
    #[arg(long, default_value_t = 20.0)]
    shots: f64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    characters: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    distractors: f64,
    #[arg(long, default_value_t = 0.5)]
    interaction: f64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    events: u64,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
    verbs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    world_seed: u64,
    /// Use the large-scale shot and sentence counts (92.3 and 5.9).
    #[arg(long, conflicts_with_all = ["sentences", "shots"])]
    full_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training data directory; overrides `data.train`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving `checkpoint.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test data directory; overrides `data.test`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, value_parser = parse_nodes)]
    nodes: Option<NodeSet>,
    /// Re-rank depth for efm+cim.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    rerank_n: Option<u64>,
    #[arg(long = "setting", value_parser = parse_setting)]
    settings: Vec<Setting>,
    /// Directory receiving `report.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    paragraph: String,
    #[arg(long)]
    segment: String,
    /// Embed features first; raw features are compared otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Divide the score by the shot count.
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    paragraph: String,
    #[arg(long)]
    segment: String,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Seeds per semantic node.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Propagation depth.
    #[arg(long, default_value_t = 2)]
    j: usize,
    #[arg(long, default_value_t = 10)]
    exact_threshold: usize,
    /// Solve the pruned instance exactly whenever it fits.
    #[arg(long)]
    exact: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
        .map_err(|_| "expected one of: vse, efm, efm+cim".to_string())
}

fn parse_nodes(s: &str) -> Result<NodeSet, String> {
    s.parse()
        .map_err(|_| "expected one of: appr, appr+action, appr+action+cast".to_string())
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    match s {
        "cross-movie" | "cross_movie" => Ok(Setting::CrossMovie),
        "within-movie" | "within_movie" => Ok(Setting::WithinMovie),
        _ => Err("expected cross-movie or within-movie".to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Align(a) => commands::align(a),
        Command::MatchGraphs(a) => commands::match_graphs(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

//! Trains on one synthetic dataset and compares retrieval methods on a
//! held-out one sharing the same event/verb world.
//!
//! ```text
//! cargo run --release -p segmatch --example benchmark -- [movies] [epochs] [sigma] [distractors] [seed]
//! ```

use std::time::Instant;

use segmatch::retrieval::{
    build_run, cim_scorer, embed_corpus, evaluate, rerank_top_n, score_table, Method, NodeSet,
    PipelineConfig, Setting,
};
use segmatch::synth::{generate, GenConfig};
use segmatch::training::{train_with, TrainConfig};
use segmatch::RngSeed;

fn arg<T: std::str::FromStr>(n: usize, default: T) -> T {
    std::env::args()
        .nth(n)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() -> segmatch::Result<()> {
    let movies = arg(1, 50);
    let epochs = arg(2, 30);
    let sigma = arg(3, 0.3);
    let distractors = arg(4, 0.2);
    let seed: u64 = arg(5, 1);
    let gen = |seed| GenConfig {
        movies,
        segments_per_movie: 4,
        noise_sigma: sigma,
        distractor_rate: distractors,
        seed: RngSeed(seed),
        ..GenConfig::default()
    };
    let train_set = generate(&gen(seed))?.dataset().prepare()?;
    let test_set = generate(&gen(seed + 1))?.dataset().prepare()?;

    let t = Instant::now();
    let tc = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let state = train_with(&train_set, &tc, |e, l| {
        println!("epoch {e:>3}  loss {l:.4}")
    })?;
    println!("trained in {:.1?}", t.elapsed());

    let t = Instant::now();
    let cfg = PipelineConfig::default();
    let embedded = embed_corpus(&test_set, &state)?;
    let vse = score_table(&embedded, Method::Vse, cfg.normalize_efm)?;
    let efm = score_table(&embedded, Method::Efm, cfg.normalize_efm)?;
    for setting in [Setting::CrossMovie, Setting::WithinMovie] {
        let ks = cfg.ks(setting);
        let w = cfg.weights(setting);
        let row = |name: &str, run: &segmatch::retrieval::RetrievalRun| -> segmatch::Result<()> {
            let r = evaluate(run, ks)?;
            let recalls: Vec<String> = r
                .recall_at
                .values()
                .map(|v| format!("{:6.2}", 100.0 * v))
                .collect();
            println!(
                "{setting:<13} {name:<28} {}  MedR {:5.1}{}",
                recalls.join(" "),
                r.medr,
                r.avg_medr
                    .map_or(String::new(), |a| format!("  Avg.MedR {a:.2}"))
            );
            Ok(())
        };
        for nodes in [NodeSet::Appearance, NodeSet::AppearanceAction, NodeSet::All] {
            row(
                &format!("vse {nodes}"),
                &build_run(&embedded, &vse, setting, &nodes.mask(w))?,
            )?;
        }
        row(
            "efm appr",
            &build_run(&embedded, &efm, setting, &NodeSet::Appearance.mask(w))?,
        )?;
        let base = build_run(&embedded, &efm, setting, &w)?;
        row("efm appr+action+cast", &base)?;
        for n in [5, 15, 40, 80] {
            let run = rerank_top_n(&base, n, cim_scorer(&embedded, &cfg.cim))?;
            row(&format!("efm+cim N={n}"), &run)?;
        }
    }
    println!("evaluated in {:.1?}", t.elapsed());
    Ok(())
}

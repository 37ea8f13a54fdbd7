//! `randset tsne`: exact t-SNE on stored test embeddings plus a k-means
//! labeling of the resulting 2-D layout, written as a plottable CSV.

use crate::artifacts::{fmt_metric, render_csv, report_skeleton, unix_now, write_json_report, write_text_atomic};
use crate::commands::RunCtx;
use crate::config::Config;
use crate::pipeline::{tags, EmbedIo};
use randset::analysis::{kmeans_pp, run_tsne, silhouette_score, KmeansParams, TsneParams};
use randset::rng::{derive_seed, RngState};
use randset::{EmbeddingMatrix, Result};
use serde::Serialize;
use std::time::Instant;

pub const TSNE_CSV_HEADER: [&str; 5] = ["id", "x", "y", "true_label", "cluster_label"];

#[derive(Serialize)]
struct TsneRun {
    n_points: usize,
    initial_kl: f64,
    final_kl: f64,
    max_entropy_error: f64,
    kmeans_ami_vs_truth: f64,
    silhouette_truth: Option<f64>,
    wall_s: f64,
}

/// Deterministic subsample: shuffle indices with the layout seed stream,
/// keep the first `limit`, restore ascending order.
fn subsample(em: &EmbeddingMatrix, limit: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if limit == 0 || limit >= em.n_items() {
        return Ok(em.clone());
    }
    let mut indices: Vec<usize> = (0..em.n_items()).collect();
    RngState::new(seed).shuffle(&mut indices);
    indices.truncate(limit);
    indices.sort_unstable();
    em.take(&indices)
}

pub fn run(cfg: &mut Config) -> Result<()> {
    let ctx = RunCtx::resolve(cfg)?;
    let io = EmbedIo::resolve(cfg, ctx.base_seed, "mnist-pc")?;
    let test = io.load_embeddings(&ctx.dirs, "test")?;

    let limit: usize = cfg.ensure_parsed("tsne", "limit", 500usize)?;
    let seed: u64 = cfg.ensure_parsed("tsne", "seed", derive_seed(ctx.base_seed, tags::TSNE))?;
    let mut params = TsneParams::new(seed);
    params.perplexity = cfg.ensure_parsed("tsne", "perplexity", params.perplexity)?;
    params.iterations = cfg.ensure_parsed("tsne", "iterations", params.iterations)?;
    params.learning_rate = cfg.ensure_parsed("tsne", "learning_rate", params.learning_rate)?;
    params.early_exaggeration = cfg.ensure_parsed("tsne", "early_exaggeration", params.early_exaggeration)?;
    params.exaggeration_iters = cfg.ensure_parsed("tsne", "exaggeration_iters", params.exaggeration_iters)?;
    params.momentum_start = cfg.ensure_parsed("tsne", "momentum_start", params.momentum_start)?;
    params.momentum_final = cfg.ensure_parsed("tsne", "momentum_final", params.momentum_final)?;
    params.momentum_switch = cfg.ensure_parsed("tsne", "momentum_switch", params.momentum_switch)?;

    let em = subsample(&test, limit, seed)?;
    let start = Instant::now();
    let result = run_tsne(&em.values, &params)?;
    let wall_s = start.elapsed().as_secs_f64();

    let kparams = KmeansParams::new(em.n_classes(), derive_seed(ctx.base_seed, tags::KMEANS));
    let assignment = kmeans_pp(&result.coords, &kparams)?;
    let ami = randset::analysis::adjusted_mutual_information(&em.labels, &assignment.labels)?;
    let silhouette = silhouette_score(&result.coords, &em.labels).ok();

    let mut rows = Vec::with_capacity(em.n_items());
    for i in 0..em.n_items() {
        rows.push(vec![
            em.ids[i].clone(),
            fmt_metric(result.coords.get(i, 0)),
            fmt_metric(result.coords.get(i, 1)),
            em.labels[i].to_string(),
            assignment.labels[i].to_string(),
        ]);
    }

    let mut report = report_skeleton("tsne", unix_now());
    report.runs.push(TsneRun {
        n_points: em.n_items(),
        initial_kl: result.initial_kl,
        final_kl: result.final_kl,
        max_entropy_error: result.max_entropy_error,
        kmeans_ami_vs_truth: ami,
        silhouette_truth: silhouette,
        wall_s,
    });
    report.config = cfg.render();
    report.finished_unix = unix_now();

    let stem = format!("tsne-{}-{}", io.plan.name, io.spec.tag());
    let csv_path = ctx.dirs.reports.join(format!("{stem}.csv"));
    write_text_atomic(&csv_path, &render_csv(&TSNE_CSV_HEADER, &rows)?)?;
    let json_path = ctx.dirs.reports.join(format!("{stem}.json"));
    write_json_report(&json_path, &report)?;
    println!(
        "tsne on {} points: kl {:.4} -> {:.4}, layout ami {:.4}, {wall_s:.1}s -> {}",
        em.n_items(),
        result.initial_kl,
        result.final_kl,
        ami,
        csv_path.display()
    );
    Ok(())
}

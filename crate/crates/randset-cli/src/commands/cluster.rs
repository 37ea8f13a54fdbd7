//! `randset cluster`: k-means++ on stored test embeddings, scored against
//! the true class labels with adjusted mutual information.

use crate::artifacts::{fmt_metric, render_csv, report_skeleton, unix_now, write_json_report, write_text_atomic, Aggregate};
use crate::commands::RunCtx;
use crate::config::Config;
use crate::pipeline::{parse_tag, tags, EmbedIo};
use randset::analysis::{adjusted_mutual_information, kmeans_pp, KmeansParams};
use randset::rng::derive_seed;
use randset::Result;
use serde::Serialize;
use std::time::Instant;

pub const CLUSTER_CSV_HEADER: [&str; 10] =
    ["dataset", "encoder", "norm", "depth", "k", "seed", "ami", "inertia", "n_iters", "wall_s"];

#[derive(Serialize)]
struct ClusterRun {
    seed: u64,
    ami: f64,
    inertia: f64,
    n_iters: usize,
    restart: usize,
    wall_s: f64,
}

pub fn run(cfg: &mut Config) -> Result<()> {
    let ctx = RunCtx::resolve(cfg)?;
    let io = EmbedIo::resolve(cfg, ctx.base_seed, "mnist-pc")?;
    let test = io.load_embeddings(&ctx.dirs, "test")?;
    let mut k: usize = cfg.ensure_parsed("cluster", "k", 0usize)?;
    if k == 0 {
        k = test.n_classes();
        cfg.set("cluster", "k", k);
    }
    let n_init: usize = cfg.ensure_parsed("cluster", "n_init", 10usize)?;
    let max_iters: usize = cfg.ensure_parsed("cluster", "max_iters", 300usize)?;
    let tag = io.spec.tag();
    let (family, norm, depth) = parse_tag(&tag)?;
    let mut report = report_skeleton("cluster", unix_now());
    let mut rows = Vec::new();
    let mut amis = Vec::new();

    for run_idx in 0..ctx.n_runs {
        let seed = derive_seed(derive_seed(ctx.base_seed, run_idx as u64), tags::KMEANS);
        let params = KmeansParams { k, n_init, max_iters, seed };
        let start = Instant::now();
        let assignment = kmeans_pp(&test.values, &params)?;
        let wall_s = start.elapsed().as_secs_f64();
        let ami = adjusted_mutual_information(&test.labels, &assignment.labels)?;
        println!(
            "cluster run {}/{}: ami {:.4}, inertia {:.3e}, {} iters, {:.1}s",
            run_idx + 1,
            ctx.n_runs,
            ami,
            assignment.inertia,
            assignment.n_iters,
            wall_s
        );
        rows.push(vec![
            io.plan.name.clone(),
            family.clone(),
            norm.clone(),
            depth.to_string(),
            k.to_string(),
            seed.to_string(),
            fmt_metric(ami),
            fmt_metric(assignment.inertia),
            assignment.n_iters.to_string(),
            format!("{wall_s:.3}"),
        ]);
        amis.push(ami);
        report.runs.push(ClusterRun {
            seed,
            ami,
            inertia: assignment.inertia,
            n_iters: assignment.n_iters,
            restart: assignment.restart,
            wall_s,
        });
    }

    let agg = Aggregate::of(&amis);
    for (name, value) in [("mean", Some(agg.mean)), ("std", agg.std)] {
        rows.push(vec![
            io.plan.name.clone(),
            family.clone(),
            norm.clone(),
            depth.to_string(),
            k.to_string(),
            name.to_string(),
            value.map(fmt_metric).unwrap_or_default(),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    report.aggregates.insert("ami".to_string(), agg.clone());
    report.config = cfg.render();
    report.finished_unix = unix_now();

    let stem = format!("cluster-{}-{}", io.plan.name, tag);
    let csv_path = ctx.dirs.reports.join(format!("{stem}.csv"));
    write_text_atomic(&csv_path, &render_csv(&CLUSTER_CSV_HEADER, &rows)?)?;
    let json_path = ctx.dirs.reports.join(format!("{stem}.json"));
    write_json_report(&json_path, &report)?;
    println!("mean ami {:.4} -> {}", agg.mean, csv_path.display());
    Ok(())
}

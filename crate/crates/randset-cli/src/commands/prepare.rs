//! `randset prepare`: build the train/test point-cloud splits for a dataset
//! and store them in the on-disk cache that every other subcommand reads.

use crate::artifacts::{cache_path, report_skeleton, unix_now, write_json_report};
use crate::commands::RunCtx;
use crate::config::Config;
use crate::pipeline::{DatasetPlan, SPLITS};
use randset::dataio::write_cache;
use randset::Result;
use serde::Serialize;

#[derive(Serialize)]
struct SplitSummary {
    split: String,
    path: String,
    n_clouds: usize,
    n_points: usize,
    point_dim: usize,
    class_names: Vec<String>,
}

pub fn run(cfg: &mut Config) -> Result<()> {
    let ctx = RunCtx::resolve(cfg)?;
    let plan = DatasetPlan::resolve(cfg, "mnist-pc")?;
    let mut report = report_skeleton("prepare", unix_now());

    for &split in &SPLITS {
        let ds = plan.build(split)?;
        let path = cache_path(&ctx.dirs, &ds.manifest.name, split);
        write_cache(&ds, &path)?;
        let first = ds.clouds.first().map(|c| (c.n_points(), c.dim())).unwrap_or((0, 0));
        let summary = SplitSummary {
            split: split.to_string(),
            path: path.display().to_string(),
            n_clouds: ds.clouds.len(),
            n_points: first.0,
            point_dim: first.1,
            class_names: ds.manifest.class_names.clone(),
        };
        println!(
            "prepared {} {}: {} clouds x {} points (dim {}) -> {}",
            ds.manifest.name, summary.split, summary.n_clouds, summary.n_points, summary.point_dim, summary.path
        );
        report.runs.push(summary);
    }

    report.config = cfg.render();
    report.finished_unix = unix_now();
    let json_path = ctx.dirs.reports.join(format!("prepare-{}.json", plan.name));
    write_json_report(&json_path, &report)?;
    println!("report -> {}", json_path.display());
    Ok(())
}

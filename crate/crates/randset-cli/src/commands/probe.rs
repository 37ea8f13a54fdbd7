//! `randset probe`: train classifier probes on stored embeddings over
//! several seeds and report per-run plus aggregate test accuracy.

use crate::artifacts::{fmt_metric, render_csv, report_skeleton, unix_now, write_json_report, write_text_atomic, Aggregate};
use crate::commands::RunCtx;
use crate::config::Config;
use crate::pipeline::{parse_tag, resolve_probe, tags, EmbedIo};
use randset::probes::train_probe;
use randset::rng::derive_seed;
use randset::Result;

pub const PROBE_CSV_HEADER: [&str; 9] =
    ["dataset", "encoder", "norm", "depth", "probe", "seed", "test_acc", "epochs", "wall_s"];

pub fn run(cfg: &mut Config) -> Result<()> {
    let ctx = RunCtx::resolve(cfg)?;
    let io = EmbedIo::resolve(cfg, ctx.base_seed, "mnist-pc")?;
    let train = io.load_embeddings(&ctx.dirs, "train")?;
    let test = io.load_embeddings(&ctx.dirs, "test")?;
    let mut spec = resolve_probe(cfg, train.n_classes())?;
    let tag = io.spec.tag();
    let (family, norm, depth) = parse_tag(&tag)?;
    let mut report = report_skeleton("probe", unix_now());
    let mut rows = Vec::new();
    let mut accs = Vec::new();

    for run_idx in 0..ctx.n_runs {
        spec.seed = derive_seed(derive_seed(ctx.base_seed, run_idx as u64), tags::PROBE);
        let (_, train_report) = train_probe(&spec, &train, &test)?;
        println!(
            "probe {} run {}/{}: best test acc {:.4} (epoch {}), {:.1}s",
            spec.kind.code(),
            run_idx + 1,
            ctx.n_runs,
            train_report.best_test_acc,
            train_report.best_epoch,
            train_report.wall_s
        );
        rows.push(vec![
            io.plan.name.clone(),
            family.clone(),
            norm.clone(),
            depth.to_string(),
            spec.kind.code().to_string(),
            spec.seed.to_string(),
            fmt_metric(train_report.best_test_acc),
            train_report.epochs.to_string(),
            format!("{:.3}", train_report.wall_s),
        ]);
        accs.push(train_report.best_test_acc);
        report.runs.push(train_report);
    }

    let agg = Aggregate::of(&accs);
    for (name, value) in [("mean", Some(agg.mean)), ("std", agg.std)] {
        rows.push(vec![
            io.plan.name.clone(),
            family.clone(),
            norm.clone(),
            depth.to_string(),
            spec.kind.code().to_string(),
            name.to_string(),
            value.map(fmt_metric).unwrap_or_default(),
            String::new(),
            String::new(),
        ]);
    }
    report.aggregates.insert("best_test_acc".to_string(), agg.clone());
    report.config = cfg.render();
    report.finished_unix = unix_now();

    let stem = format!("probe-{}-{}-{}", io.plan.name, tag, spec.kind.code());
    let csv_path = ctx.dirs.reports.join(format!("{stem}.csv"));
    write_text_atomic(&csv_path, &render_csv(&PROBE_CSV_HEADER, &rows)?)?;
    let json_path = ctx.dirs.reports.join(format!("{stem}.json"));
    write_json_report(&json_path, &report)?;
    println!("mean best test acc {:.4} -> {}", agg.mean, csv_path.display());
    Ok(())
}

//! `randset reconstruct`: train a Chamfer-loss decoder from frozen random
//! embeddings back to point clouds, score held-out reconstruction quality,
//! and dump a few ground-truth/prediction pairs as .xyz files.

use crate::artifacts::{cache_path, report_skeleton, unix_now, write_json_report, write_text_atomic};
use crate::commands::RunCtx;
use crate::config::Config;
use crate::pipeline::{embed_splits, load_cache, tags, EmbedIo};
use randset::decoder::{train_decoder, DecoderSpec};
use randset::rng::derive_seed;
use randset::{Matrix, Result};
use serde::Serialize;

#[derive(Serialize)]
struct ReconstructRun {
    decoder_seed: u64,
    epochs: usize,
    final_train_chamfer: f64,
    heldout_chamfer: Option<f64>,
    epoch_chamfer: Vec<f64>,
    xyz_files: Vec<String>,
    wall_s: f64,
}

/// Renders one cloud in whitespace-separated xyz format; 2-D clouds get a
/// zero z column so standard viewers accept them.
fn render_xyz(points: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..points.rows() {
        let row = points.row(r);
        let x = row[0];
        let y = if row.len() > 1 { row[1] } else { 0.0 };
        let z = if row.len() > 2 { row[2] } else { 0.0 };
        out.push_str(&format!("{x:.6} {y:.6} {z:.6}\n"));
    }
    out
}

pub fn run(cfg: &mut Config) -> Result<()> {
    let ctx = RunCtx::resolve(cfg)?;
    let io = EmbedIo::resolve(cfg, ctx.base_seed, "chairs")?;
    let train_ds = load_cache(&cache_path(&ctx.dirs, &io.plan.name, "train"))?;
    let test_ds = load_cache(&cache_path(&ctx.dirs, &io.plan.name, "test"))?;
    let point_dim = train_ds.clouds.first().map(|c| c.dim()).unwrap_or(3);

    let mut spec = DecoderSpec::new(
        cfg.ensure_parsed("decoder", "n_out", 256usize)?,
        point_dim,
        cfg.ensure_parsed("decoder", "seed", derive_seed(ctx.base_seed, tags::DECODER))?,
    );
    spec.hidden.0 = cfg.ensure_parsed("decoder", "hidden1", spec.hidden.0)?;
    spec.hidden.1 = cfg.ensure_parsed("decoder", "hidden2", spec.hidden.1)?;
    spec.epochs = cfg.ensure_parsed("decoder", "epochs", spec.epochs)?;
    spec.batch_size = cfg.ensure_parsed("decoder", "batch_size", spec.batch_size)?;
    spec.lr = cfg.ensure_parsed("decoder", "lr", spec.lr)?;
    cfg.set("decoder", "point_dim", spec.point_dim);
    let xyz_count: usize = cfg.ensure_parsed("decoder", "xyz_count", 4usize)?;
    spec.input_dim = io.spec.widths.last().copied().unwrap_or(spec.input_dim);
    cfg.set("decoder", "input_dim", spec.input_dim);

    let embedded = embed_splits(
        &io.spec,
        &train_ds,
        &test_ds,
        io.batch_size,
        io.order_seed_train,
        io.order_seed_test,
    )?;
    let train_targets: Vec<&Matrix> = train_ds.clouds.iter().map(|c| &c.points).collect();
    let test_targets: Vec<&Matrix> = test_ds.clouds.iter().map(|c| &c.points).collect();

    let (model, decoder_report) = train_decoder(
        &spec,
        &embedded.train,
        &train_targets,
        Some((&embedded.test, &test_targets[..])),
    )?;
    println!(
        "decoder trained {} epochs: train chamfer {:.6}, heldout {:?}, {:.1}s",
        decoder_report.epochs,
        decoder_report.final_train_chamfer,
        decoder_report.heldout_chamfer,
        decoder_report.wall_s
    );

    // Dump the first few held-out items as ground-truth/prediction pairs.
    let n_dump = xyz_count.min(embedded.test.n_items());
    let mut xyz_files = Vec::new();
    if n_dump > 0 {
        let head = embedded.test.take(&(0..n_dump).collect::<Vec<_>>())?;
        let preds = model.decode(&head.values)?;
        for (i, pred) in preds.iter().enumerate() {
            let id = &head.ids[i];
            let gt_path = ctx.dirs.xyz.join(format!("{id}-gt.xyz"));
            let pred_path = ctx.dirs.xyz.join(format!("{id}-pred.xyz"));
            write_text_atomic(&gt_path, &render_xyz(&test_ds.clouds[i].points))?;
            write_text_atomic(&pred_path, &render_xyz(pred))?;
            xyz_files.push(gt_path.display().to_string());
            xyz_files.push(pred_path.display().to_string());
        }
        println!("wrote {} xyz files under {}", xyz_files.len(), ctx.dirs.xyz.display());
    }

    let mut report = report_skeleton("reconstruct", unix_now());
    report.runs.push(ReconstructRun {
        decoder_seed: spec.seed,
        epochs: decoder_report.epochs,
        final_train_chamfer: decoder_report.final_train_chamfer,
        heldout_chamfer: decoder_report.heldout_chamfer,
        epoch_chamfer: decoder_report.epoch_chamfer,
        xyz_files,
        wall_s: decoder_report.wall_s,
    });
    report.config = cfg.render();
    report.finished_unix = unix_now();
    let json_path = ctx
        .dirs
        .reports
        .join(format!("reconstruct-{}-{}.json", io.plan.name, io.spec.tag()));
    write_json_report(&json_path, &report)?;
    println!("report -> {}", json_path.display());
    Ok(())
}

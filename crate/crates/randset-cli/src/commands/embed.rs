//! `randset embed`: push each cached split through a freshly drawn random
//! encoder and store the resulting embedding matrices.

use crate::artifacts::{cache_path, report_skeleton, unix_now, write_json_report};
use crate::commands::RunCtx;
use crate::config::Config;
use crate::pipeline::{load_cache, EmbedIo, SPLITS};
use randset::encoders::build_encoder;
use randset::{EncoderParams, Result};
use serde::Serialize;
use std::time::Instant;

#[derive(Serialize)]
struct EmbedSummary {
    split: String,
    path: String,
    n_items: usize,
    dim: usize,
    encoder_tag: String,
    encoder_seed: u64,
    order_seed: u64,
    wall_s: f64,
}

pub fn run(cfg: &mut Config) -> Result<()> {
    let ctx = RunCtx::resolve(cfg)?;
    let io = EmbedIo::resolve(cfg, ctx.base_seed, "mnist-pc")?;
    let params: EncoderParams = build_encoder(&io.spec)?;
    let mut report = report_skeleton("embed", unix_now());

    for &split in &SPLITS {
        let ds = load_cache(&cache_path(&ctx.dirs, &io.plan.name, split))?;
        let dim = ds.clouds.first().map(|c| c.dim()).unwrap_or(0);
        if dim != io.spec.input_dim {
            return Err(randset::Error::InvalidArgument(format!(
                "dataset '{}' has {dim}-d points but encoder.input_dim = {}",
                io.plan.name, io.spec.input_dim
            )));
        }
        let start = Instant::now();
        let em = randset::embedding::embed_dataset(&params, &ds, io.batch_size, io.order_seed(split))?;
        let wall_s = start.elapsed().as_secs_f64();
        let path = io.embedding_path(&ctx.dirs, split);
        em.save(&path)?;
        println!(
            "embedded {} {} with {}: {} x {} in {wall_s:.1}s -> {}",
            io.plan.name,
            split,
            em.encoder_tag,
            em.n_items(),
            em.dim(),
            path.display()
        );
        report.runs.push(EmbedSummary {
            split: split.to_string(),
            path: path.display().to_string(),
            n_items: em.n_items(),
            dim: em.dim(),
            encoder_tag: em.encoder_tag.clone(),
            encoder_seed: em.encoder_seed,
            order_seed: em.order_seed,
            wall_s,
        });
    }

    report.config = cfg.render();
    report.finished_unix = unix_now();
    let json_path = ctx
        .dirs
        .reports
        .join(format!("embed-{}-{}.json", io.plan.name, io.spec.tag()));
    write_json_report(&json_path, &report)?;
    println!("report -> {}", json_path.display());
    Ok(())
}

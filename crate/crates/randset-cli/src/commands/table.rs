//! `randset table <name>`: run one of the five benchmark grids end to end
//! and emit a deterministic CSV (the JSON report next to it carries timing
//! and provenance, which the CSV deliberately omits).
//!
//! Grids:
//! * `table1` — the four encoder families under both probes (PointNet with
//!   batch norm, the others with their family defaults).
//! * `table2` — PointNet under each normalization, both probes.
//! * `table3` — PointNet depth sweep {1, 2, 3, 5} with instance vs no
//!   normalization, linear probe only.
//! * `table4` — aligned vs randomly rotated clouds, both probes,
//!   PointNet-IN-4 (defaults to the shapes5 dataset).
//! * `table5` — five architectures scored by k-means AMI on test embeddings.

use crate::artifacts::{cache_path, fmt_metric, render_csv, report_skeleton, unix_now, write_json_report, write_text_atomic, Aggregate};
use crate::commands::RunCtx;
use crate::config::Config;
use crate::pipeline::{load_cache, resolve_probe, tags, DatasetPlan};
use randset::analysis::{adjusted_mutual_information, kmeans_pp, KmeansParams};
use randset::encoders::{build_encoder, EncoderFamily, EncoderSpec};
use randset::nn::NormKind;
use randset::probes::{train_probe, ProbeKind, ProbeSpec};
use randset::rng::derive_seed;
use randset::{Dataset, EncoderParams, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// What a grid cell measures on its embeddings.
#[derive(Clone, Copy)]
enum Measure {
    Probe(ProbeKind),
    ClusterAmi,
}

/// One grid cell: dataset variant, encoder draw, and measurement.
struct Cell {
    rotated: bool,
    family: EncoderFamily,
    /// PointNet normalization; `None` means the family default.
    norm: Option<NormKind>,
    /// PointNet block count; `None` means the family default.
    depth: Option<usize>,
    measure: Measure,
}

impl Cell {
    fn of(family: EncoderFamily, norm: Option<NormKind>, probe: ProbeKind) -> Cell {
        Cell { rotated: false, family, norm, depth: None, measure: Measure::Probe(probe) }
    }

    /// Encoder spec of this cell for one weight seed.
    fn spec(&self, input_dim: usize, seed: u64) -> Result<EncoderSpec> {
        match self.family {
            EncoderFamily::PointNet => EncoderSpec::pointnet(
                input_dim,
                self.depth.unwrap_or(4),
                self.norm.unwrap_or(NormKind::Instance),
                seed,
            ),
            family => EncoderSpec::family_default(family, input_dim, seed),
        }
    }
}

const BOTH_PROBES: [ProbeKind; 2] = [ProbeKind::Linear, ProbeKind::NonLinear];

fn grid(name: &str) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    match name {
        "table1" => {
            for family in [
                EncoderFamily::LinSet,
                EncoderFamily::LinSetNn,
                EncoderFamily::PointNet,
                EncoderFamily::DeepSets,
            ] {
                // The family comparison pins PointNet to its batch-norm form.
                let norm = (family == EncoderFamily::PointNet).then_some(NormKind::Batch);
                for probe in BOTH_PROBES {
                    cells.push(Cell::of(family, norm, probe));
                }
            }
        }
        "table2" => {
            for norm in [NormKind::Batch, NormKind::Instance, NormKind::Layer, NormKind::None] {
                for probe in BOTH_PROBES {
                    cells.push(Cell::of(EncoderFamily::PointNet, Some(norm), probe));
                }
            }
        }
        "table3" => {
            for depth in [1usize, 2, 3, 5] {
                for norm in [NormKind::Instance, NormKind::None] {
                    cells.push(Cell {
                        rotated: false,
                        family: EncoderFamily::PointNet,
                        norm: Some(norm),
                        depth: Some(depth),
                        measure: Measure::Probe(ProbeKind::Linear),
                    });
                }
            }
        }
        "table4" => {
            for rotated in [false, true] {
                for probe in BOTH_PROBES {
                    cells.push(Cell {
                        rotated,
                        family: EncoderFamily::PointNet,
                        norm: Some(NormKind::Instance),
                        depth: Some(4),
                        measure: Measure::Probe(probe),
                    });
                }
            }
        }
        "table5" => {
            for (family, norm) in [
                (EncoderFamily::LinSet, None),
                (EncoderFamily::LinSetNn, None),
                (EncoderFamily::PointNet, Some(NormKind::Instance)),
                (EncoderFamily::PointNet, Some(NormKind::None)),
                (EncoderFamily::DeepSets, None),
            ] {
                cells.push(Cell {
                    rotated: false,
                    family,
                    norm,
                    depth: None,
                    measure: Measure::ClusterAmi,
                });
            }
        }
        other => {
            return Err(randset::Error::InvalidArgument(format!(
                "unknown table '{other}' (expected table1..table5)"
            )));
        }
    }
    Ok(cells)
}

/// Finished cell, ready for one CSV row.
#[derive(Serialize)]
struct CellResult {
    dataset: String,
    encoder: String,
    norm: String,
    depth: usize,
    probe: String,
    metric: String,
    values: Vec<f64>,
    mean: f64,
    std: Option<f64>,
    wall_s: f64,
}

struct TableData {
    aligned_train: Dataset,
    aligned_test: Dataset,
    rotated_train: Option<Dataset>,
    rotated_test: Option<Dataset>,
}

impl TableData {
    fn splits(&self, rotated: bool) -> (&Dataset, &Dataset) {
        if rotated {
            (
                self.rotated_train.as_ref().expect("rotated splits built"),
                self.rotated_test.as_ref().expect("rotated splits built"),
            )
        } else {
            (&self.aligned_train, &self.aligned_test)
        }
    }
}

struct CellJob<'a> {
    data: &'a TableData,
    base_probe: &'a ProbeSpec,
    batch_size: usize,
    n_runs: usize,
    epochs_linclf: usize,
    epochs_nonlinclf: usize,
    kmeans_n_init: usize,
    kmeans_max_iters: usize,
}

fn run_cell(cell: &Cell, cell_seed: u64, job: &CellJob) -> Result<CellResult> {
    let (train_ds, test_ds) = job.data.splits(cell.rotated);
    let input_dim = train_ds.clouds.first().map(|c| c.dim()).unwrap_or(3);
    let start = Instant::now();
    let mut values = Vec::with_capacity(job.n_runs);

    for run_idx in 0..job.n_runs {
        let run_seed = derive_seed(cell_seed, run_idx as u64);
        let spec = cell.spec(input_dim, derive_seed(run_seed, tags::ENCODER))?;
        let params: EncoderParams = build_encoder(&spec)?;
        let test_em = randset::embedding::embed_dataset(
            &params,
            test_ds,
            job.batch_size,
            derive_seed(run_seed, tags::ORDER_TEST),
        )?;
        let value = match cell.measure {
            Measure::Probe(kind) => {
                let train_em = randset::embedding::embed_dataset(
                    &params,
                    train_ds,
                    job.batch_size,
                    derive_seed(run_seed, tags::ORDER_TRAIN),
                )?;
                let mut pspec = job.base_probe.clone();
                pspec.kind = kind;
                pspec.input_dim = train_em.dim();
                pspec.n_classes = train_em.n_classes();
                pspec.seed = derive_seed(run_seed, tags::PROBE);
                let per_kind = match kind {
                    ProbeKind::Linear => job.epochs_linclf,
                    ProbeKind::NonLinear => job.epochs_nonlinclf,
                };
                if per_kind > 0 {
                    pspec.epochs = per_kind;
                }
                let (_, report) = train_probe(&pspec, &train_em, &test_em)?;
                report.best_test_acc
            }
            Measure::ClusterAmi => {
                let kparams = KmeansParams {
                    k: test_em.n_classes(),
                    n_init: job.kmeans_n_init,
                    max_iters: job.kmeans_max_iters,
                    seed: derive_seed(run_seed, tags::KMEANS),
                };
                let assignment = kmeans_pp(&test_em.values, &kparams)?;
                adjusted_mutual_information(&test_em.labels, &assignment.labels)?
            }
        };
        values.push(value);
    }

    // Naming comes from a spec built with a throwaway seed; the weight seed
    // does not affect family/norm/depth.
    let spec = cell.spec(input_dim, 0)?;
    let (probe, metric) = match cell.measure {
        Measure::Probe(kind) => (kind.code().to_string(), "test_acc".to_string()),
        Measure::ClusterAmi => ("kmeans".to_string(), "ami".to_string()),
    };
    let agg = Aggregate::of(&values);
    Ok(CellResult {
        dataset: train_ds.manifest.name.clone(),
        encoder: spec.family.code().to_string(),
        norm: spec.effective_norm().code().to_string(),
        depth: spec.n_mlp_blocks,
        probe,
        metric,
        values,
        mean: agg.mean,
        std: agg.std,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

pub fn run(cfg: &mut Config, name: &str) -> Result<()> {
    let normalized = match name.trim() {
        "1" | "2" | "3" | "4" | "5" => format!("table{}", name.trim()),
        other => other.to_string(),
    };
    let cells = grid(&normalized)?;
    let ctx = RunCtx::resolve(cfg)?;
    let default_dataset = if normalized == "table4" { "shapes5" } else { "mnist-pc" };
    let plan = DatasetPlan::resolve(cfg, default_dataset)?;
    let needs_rotated = cells.iter().any(|c| c.rotated);
    if needs_rotated && plan.name.ends_with("-rot") {
        return Err(randset::Error::InvalidArgument(
            "table4 builds its own rotated variant; run it with dataset.rotate = false".into(),
        ));
    }

    let aligned_train = load_cache(&cache_path(&ctx.dirs, &plan.name, "train"))?;
    let aligned_test = load_cache(&cache_path(&ctx.dirs, &plan.name, "test"))?;
    let (rotated_train, rotated_test) = if needs_rotated {
        (
            Some(plan.rotate_split(&aligned_train, "train")?),
            Some(plan.rotate_split(&aligned_test, "test")?),
        )
    } else {
        (None, None)
    };
    let data = TableData { aligned_train, aligned_test, rotated_train, rotated_test };

    let needs_probe = cells.iter().any(|c| matches!(c.measure, Measure::Probe(_)));
    let needs_kmeans = cells.iter().any(|c| matches!(c.measure, Measure::ClusterAmi));
    let base_probe = if needs_probe {
        resolve_probe(cfg, data.aligned_train.n_classes())?
    } else {
        ProbeSpec::linear(data.aligned_train.n_classes(), 0)
    };
    let batch_size = cfg.ensure_parsed("embed", "batch_size", 32usize)?;
    let epochs_linclf = if needs_probe { cfg.ensure_parsed("table", "linclf_epochs", 0usize)? } else { 0 };
    let epochs_nonlinclf = if needs_probe { cfg.ensure_parsed("table", "nonlinclf_epochs", 0usize)? } else { 0 };
    let (kmeans_n_init, kmeans_max_iters) = if needs_kmeans {
        (
            cfg.ensure_parsed("cluster", "n_init", 10usize)?,
            cfg.ensure_parsed("cluster", "max_iters", 300usize)?,
        )
    } else {
        (10, 300)
    };

    let job = CellJob {
        data: &data,
        base_probe: &base_probe,
        batch_size,
        n_runs: ctx.n_runs,
        epochs_linclf,
        epochs_nonlinclf,
        kmeans_n_init,
        kmeans_max_iters,
    };

    // Each cell owns an independent seed stream keyed by its grid position,
    // so results do not depend on scheduling.
    let mut results: Vec<CellResult> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, cell)| run_cell(cell, derive_seed(ctx.base_seed, idx as u64), &job))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| {
        (&a.dataset, &a.encoder, &a.norm, a.depth, &a.probe)
            .cmp(&(&b.dataset, &b.encoder, &b.norm, b.depth, &b.probe))
    });

    let mut header: Vec<String> = ["table", "dataset", "encoder", "norm", "depth", "probe", "metric"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..ctx.n_runs {
        header.push(format!("run_{i}"));
    }
    header.push("mean".to_string());
    header.push("std".to_string());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();

    let mut rows = Vec::with_capacity(results.len());
    for r in &results {
        let mut row = vec![
            normalized.clone(),
            r.dataset.clone(),
            r.encoder.clone(),
            r.norm.clone(),
            r.depth.to_string(),
            r.probe.clone(),
            r.metric.clone(),
        ];
        row.extend(r.values.iter().copied().map(fmt_metric));
        row.push(fmt_metric(r.mean));
        row.push(r.std.map(fmt_metric).unwrap_or_default());
        rows.push(row);
        println!(
            "{normalized} {} {}-{}{} {}: mean {} {:.4} ({:.1}s)",
            r.dataset, r.encoder, r.norm, r.depth, r.probe, r.metric, r.mean, r.wall_s
        );
    }

    let csv_path = ctx.dirs.reports.join(format!("{normalized}.csv"));
    write_text_atomic(&csv_path, &render_csv(&header_refs, &rows)?)?;

    let mut report = report_skeleton(&format!("table {normalized}"), unix_now());
    for r in results {
        report.aggregates.insert(
            format!("{}/{}-{}{}/{}", r.dataset, r.encoder, r.norm, r.depth, r.probe),
            Aggregate { mean: r.mean, std: r.std },
        );
        report.runs.push(r);
    }
    report.config = cfg.render();
    report.finished_unix = unix_now();
    let json_path = ctx.dirs.reports.join(format!("{normalized}.json"));
    write_json_report(&json_path, &report)?;
    println!("table -> {}", csv_path.display());
    Ok(())
}

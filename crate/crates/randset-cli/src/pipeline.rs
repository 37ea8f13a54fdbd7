//! Shared experiment plumbing: seed-stream layout, dataset construction
//! from config, encoder resolution, and the embed-then-measure runners the
//! subcommands and table sweeps are built from.

use crate::config::Config;
use randset::dataio::{
    build_chairs, build_mnist_pc, build_shapes5, parse_idx_images, parse_idx_labels,
    rotate_dataset,
};
use randset::encoders::{build_encoder, EncoderSpec};
use randset::probes::{apply_probe_overrides, ProbeKind, ProbeSpec};
use randset::rng::derive_seed;
use randset::{Dataset, EmbeddingMatrix, EncoderParams, Error, Result};
use std::path::Path;

/// Child-stream tags hung off a run seed. Every source of randomness in a
/// command is `derive_seed(run_seed, TAG)` for one of these, so runs never
/// share streams and reruns reproduce bit-identically.
pub mod tags {
    pub const ENCODER: u64 = 1;
    pub const PROBE: u64 = 2;
    pub const ORDER_TRAIN: u64 = 3;
    pub const KMEANS: u64 = 4;
    pub const TSNE: u64 = 5;
    pub const DECODER: u64 = 6;
    pub const ROTATION: u64 = 7;
    pub const ORDER_TEST: u64 = 8;
}

pub const SPLITS: [&str; 2] = ["train", "test"];

/// Dataset block of the config with defaults materialized.
pub struct DatasetPlan {
    /// Effective dataset name, including the `-rot` suffix when rotation is on.
    pub name: String,
    base: String,
    n_points: usize,
    threshold: u8,
    seed: u64,
    rotate: bool,
    rotation_seed: u64,
    train_limit: usize,
    test_limit: usize,
    train_per_class: usize,
    test_per_class: usize,
    train_count: usize,
    test_count: usize,
    train_images: String,
    train_labels: String,
    test_images: String,
    test_labels: String,
}

impl DatasetPlan {
    /// Reads `[dataset]` and writes every default back into the config.
    pub fn resolve(cfg: &mut Config, default_name: &str) -> Result<DatasetPlan> {
        let base = cfg.ensure("dataset", "name", default_name);
        if !matches!(base.as_str(), "mnist-pc" | "shapes5" | "chairs") {
            return Err(Error::InvalidArgument(format!(
                "unknown dataset '{base}' (expected mnist-pc, shapes5 or chairs)"
            )));
        }
        let seed = cfg.ensure_parsed("dataset", "seed", 7u64)?;
        let rotate = cfg.ensure_bool("dataset", "rotate", false)?;
        let plan = DatasetPlan {
            n_points: cfg.ensure_parsed("dataset", "n_points", 512usize)?,
            threshold: cfg.ensure_parsed("dataset", "threshold", 127u8)?,
            rotation_seed: cfg.ensure_parsed(
                "dataset",
                "rotation_seed",
                derive_seed(seed, tags::ROTATION),
            )?,
            train_limit: cfg.ensure_parsed("dataset", "train_limit", 10_000usize)?,
            test_limit: cfg.ensure_parsed("dataset", "test_limit", 2_000usize)?,
            train_per_class: cfg.ensure_parsed("dataset", "train_per_class", 40usize)?,
            test_per_class: cfg.ensure_parsed("dataset", "test_per_class", 20usize)?,
            train_count: cfg.ensure_parsed("dataset", "train_count", 50usize)?,
            test_count: cfg.ensure_parsed("dataset", "test_count", 10usize)?,
            train_images: cfg.ensure("dataset", "train_images", "data/mnist/train-images-idx3-ubyte"),
            train_labels: cfg.ensure("dataset", "train_labels", "data/mnist/train-labels-idx1-ubyte"),
            test_images: cfg.ensure("dataset", "test_images", "data/mnist/t10k-images-idx3-ubyte"),
            test_labels: cfg.ensure("dataset", "test_labels", "data/mnist/t10k-labels-idx1-ubyte"),
            name: if rotate { format!("{base}-rot") } else { base.clone() },
            base,
            seed,
            rotate,
        };
        Ok(plan)
    }

    /// Builds one split from its sources. Split seeds are
    /// `derive_seed(dataset.seed, 0)` for train and `…(seed, 1)` for test;
    /// rotation (when enabled) draws from the same split tags off
    /// `rotation_seed`.
    pub fn build(&self, split: &str) -> Result<Dataset> {
        let split_tag = match split {
            "train" => 0,
            "test" => 1,
            other => {
                return Err(Error::InvalidArgument(format!("unknown split '{other}'")));
            }
        };
        let split_seed = derive_seed(self.seed, split_tag);
        let ds = match self.base.as_str() {
            "mnist-pc" => {
                let (img_path, lbl_path, limit) = if split == "train" {
                    (&self.train_images, &self.train_labels, self.train_limit)
                } else {
                    (&self.test_images, &self.test_labels, self.test_limit)
                };
                let read = |path: &str| {
                    std::fs::read(path).map_err(|e| {
                        Error::InvalidArgument(format!("cannot read '{path}': {e}"))
                    })
                };
                let images = parse_idx_images(&read(img_path)?)?;
                let labels = parse_idx_labels(&read(lbl_path)?)?;
                build_mnist_pc(
                    &images,
                    &labels,
                    self.n_points,
                    self.threshold,
                    split_seed,
                    limit,
                    "mnist-pc",
                    split,
                )?
            }
            "shapes5" => {
                let per_class = if split == "train" { self.train_per_class } else { self.test_per_class };
                build_shapes5(per_class, self.n_points, split_seed, split)?
            }
            "chairs" => {
                let count = if split == "train" { self.train_count } else { self.test_count };
                build_chairs(count, self.n_points, split_seed, split)?
            }
            _ => unreachable!("validated in resolve"),
        };
        if self.rotate {
            rotate_dataset(&ds, derive_seed(self.rotation_seed, split_tag))
        } else {
            Ok(ds)
        }
    }

    /// Rotated copy of an already-built split, drawn from the same rotation
    /// stream `build` uses when `rotate = true`.
    pub fn rotate_split(&self, ds: &Dataset, split: &str) -> Result<Dataset> {
        let split_tag = match split {
            "train" => 0,
            "test" => 1,
            other => {
                return Err(Error::InvalidArgument(format!("unknown split '{other}'")));
            }
        };
        rotate_dataset(ds, derive_seed(self.rotation_seed, split_tag))
    }
}

/// Loads a prepared cache, with a hint when it is missing.
pub fn load_cache(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "cache '{}' not found; run `randset prepare` first",
            path.display()
        )));
    }
    randset::dataio::read_cache(path)
}

/// Resolves `[encoder]` against the dataset's point dimension and a default
/// seed, materializing the full effective spec back into the config.
pub fn resolve_encoder(cfg: &mut Config, input_dim: usize, default_seed: u64) -> Result<EncoderSpec> {
    cfg.ensure("encoder", "family", "pointnet");
    cfg.ensure("encoder", "input_dim", input_dim);
    cfg.ensure("encoder", "seed", default_seed);
    let spec = EncoderSpec::from_kv(&cfg.section("encoder"))?;
    // Echo the derived fields so the report shows the complete spec.
    cfg.set("encoder", "norm", spec.norm.code());
    cfg.set("encoder", "norm_eps", spec.norm_eps);
    cfg.set("encoder", "n_mlp_blocks", spec.n_mlp_blocks);
    cfg.set("encoder", "init", spec.init.code());
    cfg.set(
        "encoder",
        "widths",
        spec.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
    );
    Ok(spec)
}

/// Splits an encoder tag like `pointnet-in4` or `linset-nn-nn3` back into
/// (family, norm, depth) for report columns.
pub fn parse_tag(tag: &str) -> Result<(String, String, usize)> {
    let bad = || Error::Format(format!("malformed encoder tag '{tag}'"));
    let (family, last) = tag.rsplit_once('-').ok_or_else(bad)?;
    let digits = last.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    let norm = &last[..last.len() - digits.len()];
    if family.is_empty() || norm.is_empty() || digits.is_empty() {
        return Err(bad());
    }
    Ok((family.to_string(), norm.to_string(), digits.parse().map_err(|_| bad())?))
}

/// Everything the artifact-level commands (`embed`, `probe`, `cluster`,
/// `tsne`) agree on: the dataset identity, one encoder draw, and the batch
/// grouping. Resolving this from the same config always yields the same
/// file paths, which is how the commands find each other's outputs.
pub struct EmbedIo {
    pub plan: DatasetPlan,
    pub spec: EncoderSpec,
    pub batch_size: usize,
    pub order_seed_train: u64,
    pub order_seed_test: u64,
}

impl EmbedIo {
    pub fn resolve(cfg: &mut Config, base_seed: u64, default_dataset: &str) -> Result<EmbedIo> {
        let plan = DatasetPlan::resolve(cfg, default_dataset)?;
        let input_dim = if plan.base == "mnist-pc" { 2 } else { 3 };
        let spec = resolve_encoder(cfg, input_dim, derive_seed(base_seed, tags::ENCODER))?;
        let batch_size = cfg.ensure_parsed("embed", "batch_size", 32usize)?;
        let order_seed_train = cfg.ensure_parsed(
            "embed",
            "order_seed",
            derive_seed(base_seed, tags::ORDER_TRAIN),
        )?;
        Ok(EmbedIo {
            order_seed_test: derive_seed(order_seed_train, 1),
            plan,
            spec,
            batch_size,
            order_seed_train,
        })
    }

    pub fn order_seed(&self, split: &str) -> u64 {
        if split == "train" { self.order_seed_train } else { self.order_seed_test }
    }

    pub fn embedding_path(&self, dirs: &crate::artifacts::OutDirs, split: &str) -> std::path::PathBuf {
        crate::artifacts::embedding_path(
            dirs,
            &self.plan.name,
            split,
            &self.spec.tag(),
            self.spec.seed,
            self.order_seed(split),
        )
    }

    /// Loads one split's embeddings, with a hint when the file is missing.
    pub fn load_embeddings(&self, dirs: &crate::artifacts::OutDirs, split: &str) -> Result<EmbeddingMatrix> {
        let path = self.embedding_path(dirs, split);
        if !path.exists() {
            return Err(Error::InvalidArgument(format!(
                "embeddings '{}' not found; run `randset embed` first",
                path.display()
            )));
        }
        EmbeddingMatrix::load(&path)
    }
}

/// Resolves `[probe]` into a full spec (seed left at 0; callers derive one
/// per run) and echoes every effective field back into the config.
pub fn resolve_probe(cfg: &mut Config, n_classes: usize) -> Result<ProbeSpec> {
    let kind = ProbeKind::parse(&cfg.ensure("probe", "kind", "linclf"))?;
    let mut spec = ProbeSpec::of_kind(kind, n_classes, 0);
    let mut kv = cfg.section("probe");
    kv.remove("kind");
    kv.remove("seed");
    apply_probe_overrides(&mut spec, &kv)?;
    cfg.set("probe", "input_dim", spec.input_dim);
    cfg.set("probe", "n_classes", spec.n_classes);
    cfg.set("probe", "hidden1", spec.hidden.0);
    cfg.set("probe", "hidden2", spec.hidden.1);
    cfg.set("probe", "dropout", spec.dropout);
    cfg.set("probe", "dropout_is_keep", spec.dropout_is_keep);
    cfg.set("probe", "leaky_slope", spec.leaky_slope);
    cfg.set("probe", "epochs", spec.epochs);
    cfg.set("probe", "batch_size", spec.batch_size);
    cfg.set("probe", "lr", spec.lr);
    cfg.set("probe", "beta1", spec.beta1);
    cfg.set("probe", "beta2", spec.beta2);
    cfg.set("probe", "adam_eps", spec.adam_eps);
    cfg.set("probe", "bn_eps", spec.bn_eps);
    cfg.set("probe", "bn_momentum", spec.bn_momentum);
    Ok(spec)
}

/// Embeds both splits of a dataset with one encoder draw.
pub struct EmbeddedSplits {
    pub train: EmbeddingMatrix,
    pub test: EmbeddingMatrix,
}

pub fn embed_splits(
    spec: &EncoderSpec,
    train: &Dataset,
    test: &Dataset,
    batch_size: usize,
    order_seed_train: u64,
    order_seed_test: u64,
) -> Result<EmbeddedSplits> {
    let params: EncoderParams = build_encoder(spec)?;
    Ok(EmbeddedSplits {
        train: randset::embedding::embed_dataset(&params, train, batch_size, order_seed_train)?,
        test: randset::embedding::embed_dataset(&params, test, batch_size, order_seed_test)?,
    })
}

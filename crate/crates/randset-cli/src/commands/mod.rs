//! One module per subcommand plus the run-block context they all share.

pub mod cluster;
pub mod embed;
pub mod prepare;
pub mod probe;
pub mod reconstruct;
pub mod table;
pub mod tsne;

use crate::artifacts::OutDirs;
use crate::config::Config;
use randset::Result;

/// The `[run]` block, materialized: base seed, run count, output layout.
pub struct RunCtx {
    pub base_seed: u64,
    pub n_runs: usize,
    pub dirs: OutDirs,
}

impl RunCtx {
    pub fn resolve(cfg: &mut Config) -> Result<RunCtx> {
        let base_seed = cfg.ensure_parsed("run", "seed", 12_345u64)?;
        let n_runs: usize = cfg.ensure_parsed("run", "n_runs", 5usize)?;
        if n_runs == 0 {
            return Err(randset::Error::InvalidArgument("run.n_runs must be >= 1".into()));
        }
        let out_dir = cfg.ensure("run", "out_dir", "out");
        let dirs = OutDirs::new(&out_dir);
        for dir in [&dirs.cache, &dirs.embeddings, &dirs.reports, &dirs.xyz] {
            std::fs::create_dir_all(dir).map_err(|e| {
                randset::Error::InvalidArgument(format!("cannot create '{}': {e}", dir.display()))
            })?;
        }
        Ok(RunCtx { base_seed, n_runs, dirs })
    }
}

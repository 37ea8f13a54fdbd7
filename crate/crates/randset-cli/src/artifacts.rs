//! Output artifacts: path conventions under the run's output directory,
//! atomic text writes, CSV assembly, and the JSON experiment report.

use randset::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// Directory layout under `run.out_dir`.
pub struct OutDirs {
    pub cache: PathBuf,
    pub embeddings: PathBuf,
    pub reports: PathBuf,
    pub xyz: PathBuf,
}

impl OutDirs {
    pub fn new(root: &str) -> OutDirs {
        let root = PathBuf::from(root);
        OutDirs {
            cache: root.join("cache"),
            embeddings: root.join("embeddings"),
            reports: root.join("reports"),
            xyz: root.join("xyz"),
        }
    }
}

pub fn cache_path(dirs: &OutDirs, dataset: &str, split: &str) -> PathBuf {
    dirs.cache.join(format!("{dataset}-{split}.rsdc"))
}

pub fn embedding_path(
    dirs: &OutDirs,
    dataset: &str,
    split: &str,
    tag: &str,
    encoder_seed: u64,
    order_seed: u64,
) -> PathBuf {
    dirs.embeddings
        .join(format!("{dataset}-{split}-{tag}-e{encoder_seed}-o{order_seed}.rsem"))
}

/// Writes text through a temporary sibling then renames, so a crash never
/// leaves a partial file.
pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Renders rows as CSV. Fields are plain tokens by construction (tags,
/// numbers, identifiers), so no quoting is needed; a comma in a field is a
/// bug we refuse to mask.
pub fn render_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "CSV row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        for field in row {
            if field.contains(',') || field.contains('\n') {
                return Err(Error::InvalidArgument(format!(
                    "CSV field '{field}' contains a separator"
                )));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Mean and (sample) standard deviation of one reported metric.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Aggregate {
    /// Sample statistics of the runs; `std` is `None` below two samples.
    pub fn of(values: &[f64]) -> Aggregate {
        let n = values.len();
        let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
        let std = (n >= 2).then(|| {
            let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        });
        Aggregate { mean, std }
    }
}

/// JSON experiment report: full provenance (effective config, tool version,
/// wall-clock bounds) plus per-run records and their aggregates. The CSV
/// artifacts next to it hold the table-shaped view.
#[derive(Debug, Serialize)]
pub struct ExperimentReport<R: Serialize> {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Effective configuration (defaults materialized), canonical text form.
    pub config: String,
    pub runs: Vec<R>,
    pub aggregates: BTreeMap<String, Aggregate>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn report_skeleton<R: Serialize>(command: &str, started_unix: u64) -> ExperimentReport<R> {
    ExperimentReport {
        tool: "randset",
        tool_version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        started_unix,
        finished_unix: 0,
        config: String::new(),
        runs: Vec::new(),
        aggregates: BTreeMap::new(),
    }
}

pub fn write_json_report<R: Serialize>(path: &Path, report: &ExperimentReport<R>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    text.push('\n');
    write_text_atomic(path, &text)
}

/// Fixed-precision decimal used in CSV cells so identical runs render
/// identical bytes on any platform.
pub fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rejects_ragged_rows_and_separators() {
        let ok = render_csv(&["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(ok, "a,b\n1,2\n");
        assert!(render_csv(&["a"], &[vec!["1".into(), "2".into()]]).is_err());
        assert!(render_csv(&["a"], &[vec!["x,y".into()]]).is_err());
    }

    #[test]
    fn atomic_write_creates_parents_and_replaces() {
        let dir = std::env::temp_dir().join(format!("randset-cli-test-{}", std::process::id()));
        let path = dir.join("nested/report.csv");
        write_text_atomic(&path, "one\n").unwrap();
        write_text_atomic(&path, "two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two\n");
        assert!(!path.with_extension("tmp").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn metric_formatting_is_fixed_width() {
        assert_eq!(fmt_metric(0.5), "0.500000");
        assert_eq!(fmt_metric(1.0 / 3.0), "0.333333");
    }
}

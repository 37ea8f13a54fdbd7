//! Label-free structure analysis of embeddings: K-Means++ clustering,
//! adjusted mutual information against ground-truth classes, an exact t-SNE
//! for 2-D visualisation, and the Chamfer pointcloud distance.

pub mod ami;
pub mod chamfer;
pub mod kmeans;
pub mod tsne;

pub use ami::adjusted_mutual_information;
pub use chamfer::chamfer_distance;
pub use kmeans::{kmeans_pp, ClusterAssignment, KmeansParams};
pub use tsne::{run_tsne, TsneParams, TsneResult};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Mean silhouette coefficient of a labelled point set: for each point,
/// `(b - a) / max(a, b)` with `a` the mean distance to its own cluster and
/// `b` the smallest mean distance to another cluster. Points in singleton
/// clusters score 0. Needs at least 2 clusters and 2 points.
pub fn silhouette_score<S: Scalar>(points: &Matrix<S>, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} points vs {} labels",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::EmptyInput("silhouette needs at least 2 points".into()));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let counts = {
        let mut c = vec![0usize; k];
        for &l in labels {
            c[l] += 1;
        }
        c
    };
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidArgument(
            "silhouette needs at least 2 non-empty clusters".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..n {
        if counts[labels[i]] == 1 {
            continue; // singleton scores 0
        }
        let mut sums = vec![0.0f64; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = Matrix::sq_dist_rows(points.row(i), points.row(j)).to_f64().sqrt();
            sums[labels[j]] += d;
        }
        let a = sums[labels[i]] / (counts[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Ok(total / n as f64)
}

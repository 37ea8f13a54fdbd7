//! Dataset construction and persistence: IDX (MNIST) parsing, rejection
//! sampling of digit images into 2-D pointclouds, OFF mesh parsing, uniform
//! surface sampling, cloud normalization, random SO(3) rotations, synthetic
//! mesh generators, and a checksummed binary cache format.

mod cache;
mod geom;
mod idx;
mod mnist;
mod off;
mod shapes;

pub use cache::{read_cache, write_cache, CACHE_VERSION};
pub(crate) use cache::{ByteReader, ByteWriter};
pub use geom::{
    normalize_points, random_rotation, rotate_points, sample_mesh_surface,
    triangle_area,
};
pub use idx::{parse_idx, parse_idx_images, parse_idx_labels, IdxData, IdxImages, ImageRef};
pub use mnist::{build_mnist_pc, mnist_to_pointcloud, MNIST_POINTS, MNIST_WHITE_THRESHOLD};
pub use off::parse_off;
pub use shapes::{build_chairs, build_shapes5, generate_shape_mesh, ShapeClass, SHAPES5_CLASSES};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, RngState};
use crate::scalar::Scalar;

/// Triangle mesh: `V x 3` vertex coordinates plus triangle index triples
/// (polygon faces are fan-triangulated at parse time).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<S> {
    pub vertices: Matrix<S>,
    pub faces: Vec<[usize; 3]>,
}

impl<S: Scalar> Mesh<S> {
    /// Validates index ranges and that at least one face exists.
    pub fn new(vertices: Matrix<S>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.cols() != 3 {
            return Err(Error::InvalidArgument(format!(
                "mesh vertices must be 3-D, got {} columns",
                vertices.cols()
            )));
        }
        if faces.is_empty() {
            return Err(Error::EmptyInput("mesh has no faces".into()));
        }
        for f in &faces {
            for &i in f {
                if i >= vertices.rows() {
                    return Err(Error::InvalidArgument(format!(
                        "face references vertex {i} but only {} exist",
                        vertices.rows()
                    )));
                }
            }
        }
        Ok(Mesh { vertices, faces })
    }

    pub fn vertex(&self, i: usize) -> [S; 3] {
        let r = self.vertices.row(i);
        [r[0], r[1], r[2]]
    }
}

/// One pointcloud: `n x d` coordinates (d = 2 for MNIST-PC, 3 for meshes)
/// with a class label and a stable item id.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<S> {
    pub points: Matrix<S>,
    pub label: usize,
    pub id: String,
}

impl<S: Scalar> PointCloud<S> {
    /// Validates the cloud invariants: at least one point, d in {2, 3},
    /// finite coordinates.
    pub fn new(points: Matrix<S>, label: usize, id: String) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::EmptyInput(format!("cloud '{id}' has no points")));
        }
        if !(points.cols() == 2 || points.cols() == 3) {
            return Err(Error::InvalidArgument(format!(
                "cloud '{id}' has dimension {} (expected 2 or 3)",
                points.cols()
            )));
        }
        if !points.is_finite() {
            return Err(Error::NonFinite(format!(
                "cloud '{id}' has non-finite coordinates"
            )));
        }
        Ok(PointCloud { points, label, id })
    }

    pub fn n_points(&self) -> usize {
        self.points.rows()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }
}

/// Centers a cloud at its centroid and scales it to unit max norm; see
/// [`normalize_points`].
pub fn normalize_cloud<S: Scalar>(cloud: &mut PointCloud<S>) {
    normalize_points(&mut cloud.points);
}

/// Descriptive header stored alongside every cached dataset.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub split: String,
    pub class_names: Vec<String>,
    pub item_count: usize,
    pub points_per_cloud: usize,
    pub creation_seed: u64,
    /// (source name, FNV-1a 64 checksum of its bytes) pairs.
    pub source_checksums: Vec<(String, u64)>,
}

/// A manifest plus its clouds; the unit every pipeline stage consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub manifest: DatasetManifest,
    pub clouds: Vec<PointCloud<S>>,
}

impl<S: Scalar> Dataset<S> {
    /// Validates manifest/record consistency: counts match, labels index
    /// into the class-name table, every cloud has the nominal point count.
    pub fn new(manifest: DatasetManifest, clouds: Vec<PointCloud<S>>) -> Result<Self> {
        if manifest.item_count != clouds.len() {
            return Err(Error::InvalidArgument(format!(
                "manifest claims {} items but {} clouds supplied",
                manifest.item_count,
                clouds.len()
            )));
        }
        for c in &clouds {
            if c.label >= manifest.class_names.len() {
                return Err(Error::InvalidArgument(format!(
                    "cloud '{}' has label {} but only {} classes are named",
                    c.id,
                    c.label,
                    manifest.class_names.len()
                )));
            }
            if c.n_points() != manifest.points_per_cloud {
                return Err(Error::InvalidArgument(format!(
                    "cloud '{}' has {} points, manifest says {}",
                    c.id,
                    c.n_points(),
                    manifest.points_per_cloud
                )));
            }
        }
        Ok(Dataset { manifest, clouds })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.clouds.iter().map(|c| c.label).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.manifest.class_names.len()
    }
}

/// Copy of `dataset` with one independent random rotation applied per item
/// (item i uses the stream `derive_seed(rotation_seed, i)`), for the
/// alignment-sensitivity experiments. The manifest name gains a `-rot`
/// suffix and records the rotation seed.
pub fn rotate_dataset<S: Scalar>(
    dataset: &Dataset<S>,
    rotation_seed: u64,
) -> Result<Dataset<S>> {
    let mut clouds = Vec::with_capacity(dataset.len());
    for (i, c) in dataset.clouds.iter().enumerate() {
        if c.dim() != 3 {
            return Err(Error::InvalidArgument(format!(
                "rotation augmentation needs 3-D clouds, '{}' is {}-D",
                c.id,
                c.dim()
            )));
        }
        let mut rng = RngState::new(derive_seed(rotation_seed, i as u64));
        let r = random_rotation::<S>(&mut rng);
        let mut rotated = c.clone();
        rotate_points(&mut rotated.points, &r)?;
        clouds.push(rotated);
    }
    let mut manifest = dataset.manifest.clone();
    manifest.name = format!("{}-rot", manifest.name);
    manifest.creation_seed = rotation_seed;
    Dataset::new(manifest, clouds)
}

/// FNV-1a 64-bit hash, used for source checksums and cache integrity.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

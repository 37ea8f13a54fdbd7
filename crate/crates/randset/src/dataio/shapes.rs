//! Built-in parametric mesh generators: a 5-class shape suite (box, sphere,
//! cylinder, cone, torus) for classification/alignment experiments where no
//! external mesh corpus is available, plus a composite chair for the decoder
//! reconstruction demo. Shapes are generated in a canonical axis-aligned
//! pose (z up) with per-item proportion jitter.

use rayon::prelude::*;

use crate::error::Result;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, RngState};
use crate::scalar::Scalar;

use super::{sample_mesh_surface, Dataset, DatasetManifest, Mesh, PointCloud};

/// Shape families the generator knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Box,
    Sphere,
    Cylinder,
    Cone,
    Torus,
    Chair,
}

/// The five classes of the `shapes5` classification dataset (the chair is
/// reserved for reconstruction experiments).
pub const SHAPES5_CLASSES: [ShapeClass; 5] = [
    ShapeClass::Box,
    ShapeClass::Sphere,
    ShapeClass::Cylinder,
    ShapeClass::Cone,
    ShapeClass::Torus,
];

impl ShapeClass {
    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Box => "box",
            ShapeClass::Sphere => "sphere",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Cone => "cone",
            ShapeClass::Torus => "torus",
            ShapeClass::Chair => "chair",
        }
    }
}

/// Builds one randomized mesh of the given class; proportions are drawn
/// from `rng` in a fixed order, so (class, stream position) determines the
/// mesh exactly.
pub fn generate_shape_mesh<S: Scalar>(class: ShapeClass, rng: &mut RngState) -> Mesh<S> {
    match class {
        ShapeClass::Box => {
            let sx = rng.uniform(0.4, 1.0);
            let sy = rng.uniform(0.4, 1.0);
            let sz = rng.uniform(0.4, 1.0);
            let mut b = MeshBuilder::new();
            b.push_box(0.0, 0.0, 0.0, sx, sy, sz);
            b.finish()
        }
        ShapeClass::Sphere => {
            let rx = rng.uniform(0.7, 1.0);
            let ry = rng.uniform(0.7, 1.0);
            let rz = rng.uniform(0.7, 1.0);
            ellipsoid(rx, ry, rz, 12, 18)
        }
        ShapeClass::Cylinder => {
            let r = rng.uniform(0.2, 0.5);
            let h = rng.uniform(0.9, 1.6);
            cylinder(r, h, 24)
        }
        ShapeClass::Cone => {
            let r = rng.uniform(0.35, 0.7);
            let h = rng.uniform(0.9, 1.6);
            cone(r, h, 24)
        }
        ShapeClass::Torus => {
            let major = rng.uniform(0.7, 1.0);
            let minor = rng.uniform(0.15, 0.3);
            torus(major, minor, 24, 12)
        }
        ShapeClass::Chair => chair(rng),
    }
}

/// Balanced 5-class dataset: `n_per_class` items per class, classes
/// interleaved (item i has class i mod 5), each item sampled from its own
/// stream `derive_seed(seed, i)` (proportions first, then surface points).
pub fn build_shapes5<S: Scalar>(
    n_per_class: usize,
    n_points: usize,
    seed: u64,
    split: &str,
) -> Result<Dataset<S>> {
    let total = n_per_class * SHAPES5_CLASSES.len();
    let clouds: Vec<PointCloud<S>> = (0..total)
        .into_par_iter()
        .map(|i| {
            let class_idx = i % SHAPES5_CLASSES.len();
            let class = SHAPES5_CLASSES[class_idx];
            let mut rng = RngState::new(derive_seed(seed, i as u64));
            let mesh = generate_shape_mesh::<S>(class, &mut rng);
            let points = sample_mesh_surface(&mesh, n_points, &mut rng)?;
            PointCloud::new(points, class_idx, format!("{split}-{}-{i:04}", class.name()))
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        name: "shapes5".into(),
        split: split.to_string(),
        class_names: SHAPES5_CLASSES.iter().map(|c| c.name().to_string()).collect(),
        item_count: clouds.len(),
        points_per_cloud: n_points,
        creation_seed: seed,
        source_checksums: vec![],
    };
    Dataset::new(manifest, clouds)
}

/// Single-class chair dataset for decoder experiments; same per-item seeding
/// scheme as [`build_shapes5`].
pub fn build_chairs<S: Scalar>(
    count: usize,
    n_points: usize,
    seed: u64,
    split: &str,
) -> Result<Dataset<S>> {
    let clouds: Vec<PointCloud<S>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngState::new(derive_seed(seed, i as u64));
            let mesh = generate_shape_mesh::<S>(ShapeClass::Chair, &mut rng);
            let points = sample_mesh_surface(&mesh, n_points, &mut rng)?;
            PointCloud::new(points, 0, format!("{split}-chair-{i:04}"))
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        name: "chairs".into(),
        split: split.to_string(),
        class_names: vec!["chair".into()],
        item_count: clouds.len(),
        points_per_cloud: n_points,
        creation_seed: seed,
        source_checksums: vec![],
    };
    Dataset::new(manifest, clouds)
}

/// Accumulates vertices/faces across composite parts.
struct MeshBuilder {
    vertices: Vec<f64>,
    faces: Vec<[usize; 3]>,
}

impl MeshBuilder {
    fn new() -> Self {
        MeshBuilder { vertices: Vec::new(), faces: Vec::new() }
    }

    fn push_vertex(&mut self, x: f64, y: f64, z: f64) -> usize {
        self.vertices.extend_from_slice(&[x, y, z]);
        self.vertices.len() / 3 - 1
    }

    fn push_tri(&mut self, a: usize, b: usize, c: usize) {
        self.faces.push([a, b, c]);
    }

    /// Axis-aligned box centered at (cx, cy, cz) with half-extents
    /// (sx, sy, sz): 8 vertices, 12 triangles.
    fn push_box(&mut self, cx: f64, cy: f64, cz: f64, sx: f64, sy: f64, sz: f64) {
        let base = self.vertices.len() / 3;
        for &dz in &[-sz, sz] {
            for &dy in &[-sy, sy] {
                for &dx in &[-sx, sx] {
                    self.push_vertex(cx + dx, cy + dy, cz + dz);
                }
            }
        }
        // Corner indexing: bit 0 = +x, bit 1 = +y, bit 2 = +z.
        const QUADS: [[usize; 4]; 6] = [
            [0, 1, 3, 2], // z-
            [4, 5, 7, 6], // z+
            [0, 1, 5, 4], // y-
            [2, 3, 7, 6], // y+
            [0, 2, 6, 4], // x-
            [1, 3, 7, 5], // x+
        ];
        for q in QUADS {
            self.push_tri(base + q[0], base + q[1], base + q[2]);
            self.push_tri(base + q[0], base + q[2], base + q[3]);
        }
    }

    fn finish<S: Scalar>(self) -> Mesh<S> {
        let n = self.vertices.len() / 3;
        let mut m = Matrix::zeros(n, 3);
        for (i, v) in self.vertices.iter().enumerate() {
            m.data_mut()[i] = S::cast(*v);
        }
        Mesh::new(m, self.faces).expect("generated mesh is structurally valid")
    }
}

fn ellipsoid<S: Scalar>(rx: f64, ry: f64, rz: f64, stacks: usize, slices: usize) -> Mesh<S> {
    let mut b = MeshBuilder::new();
    let tau = 2.0 * std::f64::consts::PI;
    let top = b.push_vertex(0.0, 0.0, rz);
    let bottom = b.push_vertex(0.0, 0.0, -rz);
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for s in 1..stacks {
        let phi = std::f64::consts::PI * s as f64 / stacks as f64;
        let mut ring = Vec::with_capacity(slices);
        for j in 0..slices {
            let theta = tau * j as f64 / slices as f64;
            ring.push(b.push_vertex(
                rx * phi.sin() * theta.cos(),
                ry * phi.sin() * theta.sin(),
                rz * phi.cos(),
            ));
        }
        rings.push(ring);
    }
    for j in 0..slices {
        let jn = (j + 1) % slices;
        b.push_tri(top, rings[0][j], rings[0][jn]);
        let last = rings.len() - 1;
        b.push_tri(bottom, rings[last][jn], rings[last][j]);
    }
    for s in 0..rings.len() - 1 {
        for j in 0..slices {
            let jn = (j + 1) % slices;
            b.push_tri(rings[s][j], rings[s + 1][j], rings[s + 1][jn]);
            b.push_tri(rings[s][j], rings[s + 1][jn], rings[s][jn]);
        }
    }
    b.finish()
}

fn cylinder<S: Scalar>(r: f64, h: f64, slices: usize) -> Mesh<S> {
    let mut b = MeshBuilder::new();
    let tau = 2.0 * std::f64::consts::PI;
    let (zt, zb) = (h / 2.0, -h / 2.0);
    let ct = b.push_vertex(0.0, 0.0, zt);
    let cb = b.push_vertex(0.0, 0.0, zb);
    let mut top = Vec::new();
    let mut bot = Vec::new();
    for j in 0..slices {
        let theta = tau * j as f64 / slices as f64;
        top.push(b.push_vertex(r * theta.cos(), r * theta.sin(), zt));
        bot.push(b.push_vertex(r * theta.cos(), r * theta.sin(), zb));
    }
    for j in 0..slices {
        let jn = (j + 1) % slices;
        b.push_tri(ct, top[j], top[jn]);
        b.push_tri(cb, bot[jn], bot[j]);
        b.push_tri(bot[j], top[j], top[jn]);
        b.push_tri(bot[j], top[jn], bot[jn]);
    }
    b.finish()
}

fn cone<S: Scalar>(r: f64, h: f64, slices: usize) -> Mesh<S> {
    let mut b = MeshBuilder::new();
    let tau = 2.0 * std::f64::consts::PI;
    let apex = b.push_vertex(0.0, 0.0, h / 2.0);
    let center = b.push_vertex(0.0, 0.0, -h / 2.0);
    let mut ring = Vec::new();
    for j in 0..slices {
        let theta = tau * j as f64 / slices as f64;
        ring.push(b.push_vertex(r * theta.cos(), r * theta.sin(), -h / 2.0));
    }
    for j in 0..slices {
        let jn = (j + 1) % slices;
        b.push_tri(apex, ring[j], ring[jn]);
        b.push_tri(center, ring[jn], ring[j]);
    }
    b.finish()
}

fn torus<S: Scalar>(major: f64, minor: f64, rings: usize, sides: usize) -> Mesh<S> {
    let mut b = MeshBuilder::new();
    let tau = 2.0 * std::f64::consts::PI;
    let mut grid = vec![vec![0usize; sides]; rings];
    for (i, row) in grid.iter_mut().enumerate() {
        let theta = tau * i as f64 / rings as f64;
        for (j, cell) in row.iter_mut().enumerate() {
            let phi = tau * j as f64 / sides as f64;
            let rad = major + minor * phi.cos();
            *cell = b.push_vertex(
                rad * theta.cos(),
                rad * theta.sin(),
                minor * phi.sin(),
            );
        }
    }
    for i in 0..rings {
        let inext = (i + 1) % rings;
        for j in 0..sides {
            let jn = (j + 1) % sides;
            b.push_tri(grid[i][j], grid[inext][j], grid[inext][jn]);
            b.push_tri(grid[i][j], grid[inext][jn], grid[i][jn]);
        }
    }
    b.finish()
}

/// Seat + backrest + four legs, all boxes, proportions jittered.
fn chair<S: Scalar>(rng: &mut RngState) -> Mesh<S> {
    let seat_w = rng.uniform(0.4, 0.6); // half-extent x
    let seat_d = rng.uniform(0.4, 0.6); // half-extent y
    let seat_t = 0.05;
    let leg_h = rng.uniform(0.5, 0.8);
    let leg_t = 0.04;
    let back_h = rng.uniform(0.6, 1.0);
    let back_t = 0.04;

    let mut b = MeshBuilder::new();
    // Seat slab with its top at z = leg_h.
    b.push_box(0.0, 0.0, leg_h - seat_t, seat_w, seat_d, seat_t);
    // Legs at the four corners, feet on z = 0.
    for &sx in &[-1.0f64, 1.0] {
        for &sy in &[-1.0f64, 1.0] {
            b.push_box(
                sx * (seat_w - leg_t),
                sy * (seat_d - leg_t),
                (leg_h - 2.0 * seat_t) / 2.0,
                leg_t,
                leg_t,
                (leg_h - 2.0 * seat_t) / 2.0,
            );
        }
    }
    // Backrest along the -y edge.
    b.push_box(0.0, -(seat_d - back_t), leg_h + back_h / 2.0, seat_w, back_t, back_h / 2.0);
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::triangle_area;

    #[test]
    fn every_class_builds_a_positive_area_mesh() {
        for class in [
            ShapeClass::Box,
            ShapeClass::Sphere,
            ShapeClass::Cylinder,
            ShapeClass::Cone,
            ShapeClass::Torus,
            ShapeClass::Chair,
        ] {
            let mut rng = RngState::new(1);
            let mesh: Mesh<f64> = generate_shape_mesh(class, &mut rng);
            let total: f64 = mesh
                .faces
                .iter()
                .map(|f| triangle_area(mesh.vertex(f[0]), mesh.vertex(f[1]), mesh.vertex(f[2])))
                .sum();
            assert!(total > 0.1, "{} area {total}", class.name());
            assert!(mesh.vertices.is_finite());
        }
    }

    #[test]
    fn shapes5_dataset_is_balanced_and_deterministic() {
        let a: Dataset<f64> = build_shapes5(4, 64, 11, "train").unwrap();
        let b: Dataset<f64> = build_shapes5(4, 64, 11, "train").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        for class in 0..5 {
            assert_eq!(a.labels().iter().filter(|&&l| l == class).count(), 4);
        }
        assert_eq!(a.manifest.class_names[0], "box");
        assert_eq!(a.clouds[0].dim(), 3);
        assert_eq!(a.clouds[0].n_points(), 64);
        // Different seed, different clouds.
        let c: Dataset<f64> = build_shapes5(4, 64, 12, "train").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chairs_dataset_builds() {
        let d: Dataset<f64> = build_chairs(3, 128, 5, "train").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.manifest.class_names, vec!["chair".to_string()]);
        // Chairs are tall: z spread should exceed x spread on average
        // (sanity that the composite parts are placed, not collapsed).
        let pts = &d.clouds[0].points;
        let (mut zmin, mut zmax) = (f64::MAX, f64::MIN);
        for r in 0..pts.rows() {
            zmin = zmin.min(pts.get(r, 2));
            zmax = zmax.max(pts.get(r, 2));
        }
        assert!(zmax - zmin > 0.8, "z spread {}", zmax - zmin);
    }
}

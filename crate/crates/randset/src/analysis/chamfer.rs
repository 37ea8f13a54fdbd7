//! Chamfer distance between two pointclouds: the mean squared distance from
//! each point of A to its nearest neighbour in B, plus the same in the other
//! direction. Nearest-neighbour ties resolve to the lowest index, and the
//! final means accumulate per-point terms in point order, so the value is
//! independent of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Index (lowest on ties) and squared distance of the row of `m` nearest to
/// `point`.
pub(crate) fn nearest_row<S: Scalar>(point: &[S], m: &Matrix<S>) -> (usize, S) {
    let mut best = 0usize;
    let mut best_d = Matrix::sq_dist_rows(point, m.row(0));
    for r in 1..m.rows() {
        let d = Matrix::sq_dist_rows(point, m.row(r));
        if d < best_d {
            best_d = d;
            best = r;
        }
    }
    (best, best_d)
}

/// Mean squared nearest-neighbour distance from each row of `from` to the
/// rows of `to`.
fn directed_mean<S: Scalar>(from: &Matrix<S>, to: &Matrix<S>) -> S {
    let d2: Vec<S> = (0..from.rows())
        .into_par_iter()
        .map(|i| nearest_row(from.row(i), to).1)
        .collect();
    let mut acc = S::zero();
    for d in d2 {
        acc += d;
    }
    acc / S::cast(from.rows() as f64)
}

/// Symmetric Chamfer distance between two clouds of the same dimension
/// (possibly different sizes).
pub fn chamfer_distance<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<S> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::EmptyInput("Chamfer distance of an empty cloud".into()));
    }
    if a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{}-D vs {}-D clouds",
            a.cols(),
            b.cols()
        )));
    }
    Ok(directed_mean(a, b) + directed_mean(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{random_rotation, rotate_points};
    use crate::rng::RngState;

    fn random_cloud(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = RngState::new(seed);
        let mut m = Matrix::zeros(n, d);
        for v in m.data_mut() {
            *v = rng.uniform(-2.0, 2.0);
        }
        m
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let a = random_cloud(40, 3, 1);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
        // Also under row permutation.
        let rev: Vec<usize> = (0..40).rev().collect();
        let b = a.take_rows(&rev).unwrap();
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn single_point_clouds_give_twice_the_squared_distance() {
        let a = Matrix::<f64>::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let b = Matrix::<f64>::from_vec(1, 3, vec![4.0, 6.0, 3.0]).unwrap();
        let d = chamfer_distance(&a, &b).unwrap();
        assert!((d - 2.0 * 25.0).abs() < 1e-12);
    }

    #[test]
    fn matches_a_naive_double_loop() {
        let a = random_cloud(23, 3, 5);
        let b = random_cloud(31, 3, 6);
        let got = chamfer_distance(&a, &b).unwrap();
        let mut expect = 0.0;
        for i in 0..a.rows() {
            let mut best = f64::INFINITY;
            for j in 0..b.rows() {
                let mut d = 0.0;
                for c in 0..3 {
                    let t = a.get(i, c) - b.get(j, c);
                    d += t * t;
                }
                best = best.min(d);
            }
            expect += best / a.rows() as f64;
        }
        for j in 0..b.rows() {
            let mut best = f64::INFINITY;
            for i in 0..a.rows() {
                let mut d = 0.0;
                for c in 0..3 {
                    let t = a.get(i, c) - b.get(j, c);
                    d += t * t;
                }
                best = best.min(d);
            }
            expect += best / b.rows() as f64;
        }
        assert!((got - expect).abs() < 1e-12, "got {got}, expect {expect}");
    }

    #[test]
    fn rigid_rotation_preserves_the_distance() {
        let a = random_cloud(30, 3, 7);
        let b = random_cloud(25, 3, 8);
        let before = chamfer_distance(&a, &b).unwrap();
        let mut rng = RngState::new(9);
        let rot = random_rotation::<f64>(&mut rng);
        let mut ra = a.clone();
        let mut rb = b.clone();
        rotate_points(&mut ra, &rot).unwrap();
        rotate_points(&mut rb, &rot).unwrap();
        let after = chamfer_distance(&ra, &rb).unwrap();
        assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn shape_errors_are_reported() {
        let a = random_cloud(5, 3, 1);
        let b = random_cloud(5, 2, 1);
        assert!(chamfer_distance(&a, &b).is_err());
        let empty = Matrix::<f64>::zeros(0, 3);
        assert!(chamfer_distance(&a, &empty).is_err());
    }
}

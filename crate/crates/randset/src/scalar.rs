//! Scalar abstraction: every numeric kernel is generic over [`Scalar`],
//! implemented for `f32` and `f64`.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps};

/// Floating-point scalar usable by all kernels in this crate.
///
/// Beyond the `num-traits` float surface this adds infallible conversions to
/// and from `f64` (constants, RNG draws, and file formats are all f64-based)
/// and the IEEE total order, which the crate uses to sort addends before
/// summation wherever a reduction must not depend on element order.
pub trait Scalar:
    Float + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar (rounding for `f32`).
    fn cast(x: f64) -> Self;

    /// Widens to `f64` (exact for both implementations).
    fn to_f64(self) -> f64;

    /// IEEE 754 `totalOrder` comparison; a total order even across NaNs.
    fn total_cmp(&self, other: &Self) -> Ordering;
}

impl Scalar for f64 {
    #[inline]
    fn cast(x: f64) -> f64 {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn total_cmp(&self, other: &Self) -> Ordering {
        f64::total_cmp(self, other)
    }
}

impl Scalar for f32 {
    #[inline]
    fn cast(x: f64) -> f32 {
        x as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn total_cmp(&self, other: &Self) -> Ordering {
        f32::total_cmp(self, other)
    }
}

/// Sums `values` in ascending IEEE total order.
///
/// Sorting first makes the result independent of the order the values arrived
/// in, which is what makes the set encoders exactly permutation invariant:
/// every statistic over a cloud's points goes through this (max-pool needs no
/// help, since `max` is exactly commutative).
pub fn ordered_sum<S: Scalar>(values: &mut [S]) -> S {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let mut acc = S::zero();
    for &v in values.iter() {
        acc += v;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cast_round_trips() {
        assert_eq!(<f64 as Scalar>::cast(1.5).to_f64(), 1.5);
        assert_eq!(<f32 as Scalar>::cast(1.5).to_f64(), 1.5);
        // f32 rounds: 0.1 is not representable.
        assert_ne!(<f32 as Scalar>::cast(0.1).to_f64(), 0.1);
    }

    #[test]
    fn ordered_sum_is_permutation_independent() {
        // Values chosen so naive left-to-right summation differs between
        // orderings (catastrophic cancellation at different magnitudes).
        let base = vec![1e16, 1.0, -1e16, 3.0, 1e-8, -2.5, 7e7, -7e7];
        let mut naive_sums = std::collections::HashSet::new();
        let mut ordered_sums = std::collections::HashSet::new();
        // A handful of fixed permutations, including reversal.
        let perms: [&[usize]; 4] = [
            &[0, 1, 2, 3, 4, 5, 6, 7],
            &[7, 6, 5, 4, 3, 2, 1, 0],
            &[3, 0, 7, 1, 6, 2, 5, 4],
            &[4, 2, 0, 6, 1, 7, 5, 3],
        ];
        for p in perms {
            let mut v: Vec<f64> = p.iter().map(|&i| base[i]).collect();
            naive_sums.insert(v.iter().sum::<f64>().to_bits());
            ordered_sums.insert(ordered_sum(&mut v).to_bits());
        }
        assert!(naive_sums.len() > 1, "test vector too tame");
        assert_eq!(ordered_sums.len(), 1);
    }

    #[test]
    fn ordered_sum_handles_empty_and_single() {
        assert_eq!(ordered_sum::<f64>(&mut []), 0.0);
        assert_eq!(ordered_sum(&mut [4.25f32]), 4.25);
    }
}

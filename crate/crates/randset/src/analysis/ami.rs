//! Adjusted mutual information between two labelings of the same items.
//!
//! `AMI = (MI - E[MI]) / (mean(H(U), H(V)) - E[MI])` with natural
//! logarithms, the arithmetic-mean normalizer, and the expected mutual
//! information taken over the hypergeometric model of random labelings with
//! the same cluster sizes. Two special cases, checked in this order:
//! identical partitions (after relabeling by first appearance) score
//! exactly 1.0, and a vanishing denominator scores 0.0.

use crate::error::{Error, Result};

/// Renames labels to 0..k by order of first appearance, so partitions that
/// group identically become equal vectors.
fn dense_relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let dense = match map.iter().find(|&&(orig, _)| orig == l) {
            Some(&(_, d)) => d,
            None => {
                let d = map.len();
                map.push((l, d));
                d
            }
        };
        out.push(dense);
    }
    (out, map.len())
}

/// ln(i!) for i in 0..=n, by cumulative sums of ln.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for i in 2..=n {
        t[i] = t[i - 1] + (i as f64).ln();
    }
    t
}

/// Mutual information (nats) of a contingency table with the given margins.
fn mutual_information(table: &[Vec<usize>], row_sums: &[usize], col_sums: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / nf * (nf * nij / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
        }
    }
    mi
}

fn entropy(sums: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    -sums
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / nf;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Expected mutual information under the hypergeometric model: for each
/// margin pair `(a_i, b_j)`, the cell count ranges over
/// `max(1, a_i + b_j - N) ..= min(a_i, b_j)` with hypergeometric weight.
fn expected_mutual_information(row_sums: &[usize], col_sums: &[usize], n: usize) -> f64 {
    let lnf = ln_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in row_sums {
        for &b in col_sums {
            let lo = 1.max((a + b).saturating_sub(n));
            let hi = a.min(b);
            for nij in lo..=hi {
                let nij_f = nij as f64;
                let term = nij_f / nf * (nf * nij_f / (a as f64 * b as f64)).ln();
                let ln_w = lnf[a] + lnf[b] + lnf[n - a] + lnf[n - b]
                    - lnf[n]
                    - lnf[nij]
                    - lnf[a - nij]
                    - lnf[b - nij]
                    - lnf[n + nij - a - b];
                emi += term * ln_w.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information of two labelings (order-paired, same length).
pub fn adjusted_mutual_information(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} labels",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("no labels".into()));
    }
    let n = a.len();
    let (da, ka) = dense_relabel(a);
    let (db, kb) = dense_relabel(b);
    if da == db {
        return Ok(1.0);
    }
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in da.iter().zip(&db) {
        table[x][y] += 1;
    }
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mi = mutual_information(&table, &row_sums, &col_sums, n);
    let emi = expected_mutual_information(&row_sums, &col_sums, n);
    let h_mean = 0.5 * (entropy(&row_sums, n) + entropy(&col_sums, n));
    let denom = h_mean - emi;
    if denom.abs() < f64::EPSILON * h_mean.abs().max(1.0) {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_partitions_score_exactly_one() {
        let a = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(adjusted_mutual_information(&a, &a).unwrap(), 1.0);
        // Same grouping under renamed labels.
        let renamed = vec![7, 7, 3, 3, 9, 9];
        assert_eq!(adjusted_mutual_information(&a, &renamed).unwrap(), 1.0);
        // Single-cluster vs single-cluster is also identical.
        assert_eq!(adjusted_mutual_information(&[4, 4, 4], &[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn one_flat_partition_scores_zero() {
        // MI = EMI = 0 and the denominator is positive: AMI = 0.
        let a = vec![0, 0, 0, 0];
        let b = vec![0, 1, 0, 1];
        assert_eq!(adjusted_mutual_information(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn emi_matches_exhaustive_permutation_average() {
        // Exact oracle: EMI is the mean MI over all n! pairings of the two
        // labelings' items (margins fixed, assignment random).
        let a = vec![0, 0, 0, 1, 1, 1];
        let b = vec![0, 0, 1, 0, 1, 1];
        let n = a.len();
        let (da, ka) = dense_relabel(&a);
        let (db, kb) = dense_relabel(&b);
        let row_sums: Vec<usize> = (0..ka).map(|c| da.iter().filter(|&&x| x == c).count()).collect();
        let col_sums: Vec<usize> = (0..kb).map(|c| db.iter().filter(|&&x| x == c).count()).collect();

        fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
            if k == items.len() {
                out.push(items.clone());
                return;
            }
            for i in k..items.len() {
                items.swap(k, i);
                permutations(items, k + 1, out);
                items.swap(k, i);
            }
        }
        let mut perms = Vec::new();
        permutations(&mut (0..n).collect(), 0, &mut perms);
        let mut total = 0.0;
        for p in &perms {
            let permuted: Vec<usize> = p.iter().map(|&i| db[i]).collect();
            let mut table = vec![vec![0usize; kb]; ka];
            for (&x, &y) in da.iter().zip(&permuted) {
                table[x][y] += 1;
            }
            total += mutual_information(&table, &row_sums, &col_sums, n);
        }
        let brute = total / perms.len() as f64;
        let emi = expected_mutual_information(&row_sums, &col_sums, n);
        assert!((brute - emi).abs() < 1e-10, "brute {brute} vs formula {emi}");
    }

    #[test]
    fn near_independent_oracle_value() {
        // Contingency [[2,1],[1,2]]: recompute AMI from first principles
        // with independent arithmetic.
        let a = vec![0, 0, 0, 1, 1, 1];
        let b = vec![0, 0, 1, 0, 1, 1];
        let got = adjusted_mutual_information(&a, &b).unwrap();
        let n = 6.0f64;
        let mi = 2.0 * (2.0 / n * (n * 2.0 / 9.0).ln() + 1.0 / n * (n * 1.0 / 9.0).ln());
        let h = -(0.5f64.ln()); // each margin is (3, 3)
        let emi = expected_mutual_information(&[3, 3], &[3, 3], 6);
        let expect = (mi - emi) / (h - emi);
        assert!((got - expect).abs() < 1e-12, "got {got}, expect {expect}");
        // Weak association: well below 1, and possibly negative (the observed
        // mutual information can undershoot its chance expectation).
        assert!(got < 0.5, "ami {got}");
    }

    #[test]
    fn ami_is_symmetric_and_rename_invariant() {
        let a = vec![0, 0, 1, 1, 2, 2, 2, 0];
        let b = vec![1, 1, 1, 0, 0, 2, 2, 2];
        let ab = adjusted_mutual_information(&a, &b).unwrap();
        let ba = adjusted_mutual_information(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        let renamed: Vec<usize> = b.iter().map(|&l| l * 10 + 5).collect();
        let ar = adjusted_mutual_information(&a, &renamed).unwrap();
        assert!((ab - ar).abs() < 1e-15);
    }

    #[test]
    fn random_labels_score_near_zero() {
        use crate::rng::RngState;
        let mut rng = RngState::new(8);
        let truth: Vec<usize> = (0..240).map(|i| i % 4).collect();
        let noise: Vec<usize> = (0..240).map(|_| rng.next_below(4) as usize).collect();
        let ami = adjusted_mutual_information(&truth, &noise).unwrap();
        assert!(ami.abs() < 0.15, "ami {ami}");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(adjusted_mutual_information(&[0, 1], &[0]).is_err());
        assert!(adjusted_mutual_information(&[], &[]).is_err());
    }
}

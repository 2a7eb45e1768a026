//! Clustering-quality measures on a shared contingency table: SSE, adjusted
//! Rand index, adjusted mutual information, homogeneity, completeness and
//! V-measure.
//!
//! All entropies use natural logarithms; the bases cancel in every ratio.
//! Identical partitions (the contingency table is a permutation matrix,
//! which covers renamed labels and the degenerate single-cluster case) score
//! exactly 1 in ARI and AMI.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Joint label counts between two partitions, rows indexed by the first
/// argument's labels in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_marginals: Vec<u64>,
    col_marginals: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn new<A, B>(truth: &[A], pred: &[B]) -> Result<Self>
    where
        A: Eq + Hash,
        B: Eq + Hash,
    {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch {
                left: truth.len(),
                right: pred.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::EmptyLabels);
        }
        let mut row_index: HashMap<&A, usize> = HashMap::new();
        let mut col_index: HashMap<&B, usize> = HashMap::new();
        let mut cells: Vec<(usize, usize)> = Vec::with_capacity(truth.len());
        for (a, b) in truth.iter().zip(pred.iter()) {
            let next = row_index.len();
            let i = *row_index.entry(a).or_insert(next);
            let next = col_index.len();
            let j = *col_index.entry(b).or_insert(next);
            cells.push((i, j));
        }
        let (rows, cols) = (row_index.len(), col_index.len());
        let mut counts = vec![vec![0u64; cols]; rows];
        let mut row_marginals = vec![0u64; rows];
        let mut col_marginals = vec![0u64; cols];
        for (i, j) in cells {
            counts[i][j] += 1;
            row_marginals[i] += 1;
            col_marginals[j] += 1;
        }
        Ok(ContingencyTable {
            counts,
            row_marginals,
            col_marginals,
            n: truth.len() as u64,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_marginals(&self) -> &[u64] {
        &self.row_marginals
    }

    pub fn col_marginals(&self) -> &[u64] {
        &self.col_marginals
    }

    /// True when the partitions are identical up to label names: exactly one
    /// nonzero cell per row and per column.
    fn is_permutation(&self) -> bool {
        if self.counts.len() != self.col_marginals.len() {
            return false;
        }
        let mut col_hit = vec![false; self.col_marginals.len()];
        for row in &self.counts {
            let mut nonzero = 0;
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    nonzero += 1;
                    if col_hit[j] {
                        return false;
                    }
                    col_hit[j] = true;
                }
            }
            if nonzero != 1 {
                return false;
            }
        }
        true
    }

    fn entropy(marginals: &[u64], n: u64) -> f64 {
        let n = n as f64;
        let mut h = 0.0;
        for &c in marginals {
            if c > 0 {
                let c = c as f64;
                h -= (c / n) * (c.ln() - n.ln());
            }
        }
        h
    }

    fn row_entropy(&self) -> f64 {
        Self::entropy(&self.row_marginals, self.n)
    }

    fn col_entropy(&self) -> f64 {
        Self::entropy(&self.col_marginals, self.n)
    }

    /// Mutual information in nats.
    fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    let c = c as f64;
                    let outer = self.row_marginals[i] as f64 * self.col_marginals[j] as f64;
                    mi += (c / n) * ((c * n).ln() - outer.ln());
                }
            }
        }
        mi.max(0.0)
    }

    /// Expected mutual information under the permutation (hypergeometric)
    /// model.
    fn expected_mutual_information(&self) -> f64 {
        let n = self.n as usize;
        let lf = ln_factorial_table(n);
        let nf = self.n as f64;
        let mut emi = 0.0;
        for &ai in &self.row_marginals {
            for &bj in &self.col_marginals {
                let (ai, bj) = (ai as usize, bj as usize);
                let lo = 1.max((ai + bj).saturating_sub(n));
                let hi = ai.min(bj);
                for nij in lo..=hi {
                    let nij_f = nij as f64;
                    let term = (nij_f / nf) * ((nf * nij_f).ln() - (ai as f64 * bj as f64).ln());
                    let ln_p = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj]
                        - lf[n]
                        - lf[nij]
                        - lf[ai - nij]
                        - lf[bj - nij]
                        - lf[n + nij - ai - bj];
                    emi += term * ln_p.exp();
                }
            }
        }
        emi
    }
}

/// Cumulative `ln(i!)` table, Neumaier-compensated so the entries stay
/// accurate for large arguments.
fn ln_factorial_table(n: usize) -> Vec<f64> {
    let mut table = vec![0.0; n + 1];
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for (i, slot) in table.iter_mut().enumerate().skip(2) {
        let term = (i as f64).ln();
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        *slot = sum + comp;
    }
    table
}

fn comb2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index: pair-counting agreement with hypergeometric chance
/// correction. 1 for identical partitions (exactly), near 0 for independent
/// labelings. Errors on length mismatch or empty inputs.
pub fn ari<A, B>(truth: &[A], pred: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    let table = ContingencyTable::new(truth, pred)?;
    if table.is_permutation() {
        return Ok(1.0);
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let a: f64 = table.row_marginals.iter().map(|&c| comb2(c)).sum();
    let b: f64 = table.col_marginals.iter().map(|&c| comb2(c)).sum();
    let nc2 = comb2(table.n);
    if nc2 == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / nc2;
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Adjusted mutual information with the arithmetic-mean normalizer:
/// `(MI - E[MI]) / (mean(H(U), H(V)) - E[MI])`. 1 for identical partitions
/// (exactly), near 0 for independent labelings.
pub fn ami<A, B>(truth: &[A], pred: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    let table = ContingencyTable::new(truth, pred)?;
    if table.is_permutation() {
        return Ok(1.0);
    }
    let mi = table.mutual_information();
    let emi = table.expected_mutual_information();
    let mean_h = 0.5 * (table.row_entropy() + table.col_entropy());
    let denom = mean_h - emi;
    // Keep the denominator away from zero, preserving its sign.
    let denom = if denom < 0.0 {
        denom.min(-f64::EPSILON)
    } else {
        denom.max(f64::EPSILON)
    };
    Ok((mi - emi) / denom)
}

/// Homogeneity, completeness and V-measure.
///
/// `completeness` is `None` (reported as NA) when the prediction collapses
/// to a single cluster while the truth has several classes; that case is a
/// failure, not a perfectly complete labeling, even though the conditional
/// entropy vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcvScore {
    pub homogeneity: f64,
    pub completeness: Option<f64>,
    pub v_measure: f64,
}

/// Entropy-based scores: `h = 1 - H(C|K)/H(C)`, `c = 1 - H(K|C)/H(K)`,
/// `v = 2hc/(h+c)` (0 when `h + c = 0`). A zero marginal entropy makes the
/// corresponding score 1 by convention.
pub fn homogeneity_completeness_v<A, B>(truth: &[A], pred: &[B]) -> Result<HcvScore>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    let table = ContingencyTable::new(truth, pred)?;
    let n = table.n as f64;
    let h_true = table.row_entropy();
    let h_pred = table.col_entropy();

    // H(C|K): condition the truth on the prediction columns.
    let mut h_true_given_pred = 0.0;
    let mut h_pred_given_true = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                h_true_given_pred -= (c / n) * (c.ln() - (table.col_marginals[j] as f64).ln());
                h_pred_given_true -= (c / n) * (c.ln() - (table.row_marginals[i] as f64).ln());
            }
        }
    }

    let homogeneity = if h_true == 0.0 {
        1.0
    } else {
        (1.0 - h_true_given_pred / h_true).clamp(0.0, 1.0)
    };
    let completeness_value = if h_pred == 0.0 {
        1.0
    } else {
        (1.0 - h_pred_given_true / h_pred).clamp(0.0, 1.0)
    };
    let v_measure = if homogeneity + completeness_value == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness_value / (homogeneity + completeness_value)
    };

    let collapsed = table.col_marginals.len() == 1 && table.row_marginals.len() > 1;
    let completeness = if collapsed {
        None
    } else {
        Some(completeness_value)
    };
    Ok(HcvScore {
        homogeneity,
        completeness,
        v_measure,
    })
}

/// Sum of squared distances from each point to its assigned center, in
/// working precision.
pub fn sse(ds: &Dataset, labels: &[usize], centers: &[f64]) -> f64 {
    let dim = ds.dim();
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let p = ds.point(i);
        let c = &centers[label * dim..(label + 1) * dim];
        let mut d2 = 0.0;
        for (a, b) in p.iter().zip(c) {
            d2 += (a - b) * (a - b);
        }
        total += d2;
    }
    total
}

/// The reported columns for one clustering run. Label-dependent metrics are
/// `None` when no ground truth exists; `completeness` is additionally `None`
/// in the collapse case; `eta` is `None` outside mixed mode. `None`
/// serializes as `null` in JSON and an empty cell in CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sse: f64,
    pub ari: Option<f64>,
    pub ami: Option<f64>,
    pub homogeneity: Option<f64>,
    pub completeness: Option<f64>,
    pub v_measure: Option<f64>,
    pub eta: Option<f64>,
}

impl MetricsReport {
    /// Evaluates every metric that the available ground truth supports.
    pub fn evaluate(
        truth: Option<&[i64]>,
        pred: &[usize],
        sse: f64,
        eta: Option<f64>,
    ) -> Result<Self> {
        match truth {
            None => Ok(MetricsReport {
                sse,
                ari: None,
                ami: None,
                homogeneity: None,
                completeness: None,
                v_measure: None,
                eta,
            }),
            Some(t) => {
                let hcv = homogeneity_completeness_v(t, pred)?;
                Ok(MetricsReport {
                    sse,
                    ari: Some(ari(t, pred)?),
                    ami: Some(ami(t, pred)?),
                    homogeneity: Some(hcv.homogeneity),
                    completeness: hcv.completeness,
                    v_measure: Some(hcv.v_measure),
                    eta,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_identical_is_exactly_one() {
        let a = vec![0, 0, 1, 1, 2];
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ari_invariant_under_renaming() {
        let a = vec![0, 0, 1, 1, 2, 2];
        let renamed = vec![5, 5, 9, 9, 1, 1];
        assert_eq!(ari(&a, &renamed).unwrap(), 1.0);
    }

    #[test]
    fn ari_six_point_hand_computed() {
        // Two classes of three versus three clusters of two: among the 15
        // pairs, 2 are together in both, 6 in the truth, 3 in the
        // prediction, giving (2 - 18/15) / (9/2 - 18/15) = 8/33.
        let truth = vec![0, 0, 0, 1, 1, 1];
        let pred = vec![0, 0, 1, 1, 2, 2];
        let got = ari(&truth, &pred).unwrap();
        assert!((got - 8.0 / 33.0).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn ari_mismatched_lengths_error() {
        assert!(ari(&[0, 1], &[0, 1, 2]).is_err());
    }

    #[test]
    fn ami_identical_is_exactly_one() {
        let a = vec![3, 3, 1, 1, 2, 2, 2];
        assert_eq!(ami(&a, &a).unwrap(), 1.0);
        let renamed = vec![0, 0, 1, 1, 9, 9, 9];
        assert_eq!(ami(&a, &renamed).unwrap(), 1.0);
    }

    #[test]
    fn ami_single_cluster_pair_is_one_by_convention() {
        let a = vec![0, 0, 0];
        let b = vec![7, 7, 7];
        assert_eq!(ami(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn hcv_identical_partitions() {
        let a = vec![0, 1, 1, 2];
        let s = homogeneity_completeness_v(&a, &a).unwrap();
        assert_eq!(s.homogeneity, 1.0);
        assert_eq!(s.completeness, Some(1.0));
        assert_eq!(s.v_measure, 1.0);
    }

    #[test]
    fn hcv_collapse_reports_na() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        let pred = vec![0; 6];
        let s = homogeneity_completeness_v(&truth, &pred).unwrap();
        assert_eq!(s.homogeneity, 0.0);
        assert_eq!(s.completeness, None);
        assert_eq!(s.v_measure, 0.0);
    }

    #[test]
    fn hcv_four_point_merged_pair() {
        // truth [0,0,1,1], pred [0,0,0,1]: entropies evaluated directly.
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 0, 1];
        let s = homogeneity_completeness_v(&truth, &pred).unwrap();
        let ln2 = 2.0_f64.ln();
        let h_c = ln2;
        let h_c_given_k = -(0.5 * (2.0f64 / 3.0).ln() + 0.25 * (1.0f64 / 3.0).ln());
        let expect_h = 1.0 - h_c_given_k / h_c;
        let h_k = -(0.75 * 0.75_f64.ln() + 0.25 * 0.25_f64.ln());
        let h_k_given_c = -(0.5 * 1.0_f64.ln() + 2.0 * 0.25 * 0.5_f64.ln());
        let expect_c = 1.0 - h_k_given_c / h_k;
        let expect_v = 2.0 * expect_h * expect_c / (expect_h + expect_c);
        assert!((s.homogeneity - expect_h).abs() < 1e-12);
        assert!((s.completeness.unwrap() - expect_c).abs() < 1e-12);
        assert!((s.v_measure - expect_v).abs() < 1e-12);
    }

    #[test]
    fn sse_trivial_cases() {
        let ds = Dataset::from_flat(vec![0.0, 0.0, 2.0, 0.0], 2).unwrap();
        // Each point its own center.
        let centers = vec![0.0, 0.0, 2.0, 0.0];
        assert_eq!(sse(&ds, &[0, 1], &centers), 0.0);
        // Shared center (1, 0).
        let centers = vec![1.0, 0.0];
        assert_eq!(sse(&ds, &[0, 0], &centers), 2.0);
    }

    #[test]
    fn report_without_truth_has_only_sse() {
        let r = MetricsReport::evaluate(None, &[0, 1], 3.5, None).unwrap();
        assert_eq!(r.sse, 3.5);
        assert_eq!(r.ari, None);
        assert_eq!(r.completeness, None);
    }

    #[test]
    fn ln_factorial_table_matches_direct_products() {
        let lf = ln_factorial_table(20);
        assert_eq!(lf[0], 0.0);
        assert_eq!(lf[1], 0.0);
        let mut fact = 1.0_f64;
        for i in 2..=20 {
            fact *= i as f64;
            assert!((lf[i] - fact.ln()).abs() < 1e-10, "i = {i}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn label_pairs() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
            (2usize..30).prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u8..5, n),
                    proptest::collection::vec(0u8..5, n),
                )
            })
        }

        proptest! {
            #[test]
            fn ari_and_ami_are_symmetric((a, b) in label_pairs()) {
                prop_assert!((ari(&a, &b).unwrap() - ari(&b, &a).unwrap()).abs() < 1e-12);
                prop_assert!((ami(&a, &b).unwrap() - ami(&b, &a).unwrap()).abs() < 1e-10);
            }

            #[test]
            fn homogeneity_mirrors_completeness((a, b) in label_pairs()) {
                let fwd = homogeneity_completeness_v(&a, &b).unwrap();
                let rev = homogeneity_completeness_v(&b, &a).unwrap();
                // completeness(b, a) as a value equals homogeneity(a, b).
                let rev_c = rev.completeness.unwrap_or(1.0);
                prop_assert!((fwd.homogeneity - rev_c).abs() < 1e-12);
            }

            #[test]
            fn scores_are_invariant_under_relabeling((a, b) in label_pairs()) {
                // A bijective rename of the prediction labels.
                let renamed: Vec<u8> = b.iter().map(|&x| 9 - x).collect();
                prop_assert!((ari(&a, &b).unwrap() - ari(&a, &renamed).unwrap()).abs() < 1e-12);
                prop_assert!((ami(&a, &b).unwrap() - ami(&a, &renamed).unwrap()).abs() < 1e-10);
                let s1 = homogeneity_completeness_v(&a, &b).unwrap();
                let s2 = homogeneity_completeness_v(&a, &renamed).unwrap();
                prop_assert!((s1.homogeneity - s2.homogeneity).abs() < 1e-12);
            }

            #[test]
            fn bounded_scores((a, b) in label_pairs()) {
                let s = homogeneity_completeness_v(&a, &b).unwrap();
                prop_assert!((0.0..=1.0).contains(&s.homogeneity));
                if let Some(c) = s.completeness {
                    prop_assert!((0.0..=1.0).contains(&c));
                }
                prop_assert!((0.0..=1.0).contains(&s.v_measure));
                prop_assert!(ari(&a, &b).unwrap() <= 1.0);
                prop_assert!(ami(&a, &b).unwrap() <= 1.0 + 1e-12);
            }

            #[test]
            fn v_is_the_harmonic_mean((a, b) in label_pairs()) {
                let s = homogeneity_completeness_v(&a, &b).unwrap();
                if let Some(c) = s.completeness {
                    if s.homogeneity + c > 0.0 {
                        let hm = 2.0 * s.homogeneity * c / (s.homogeneity + c);
                        prop_assert!((s.v_measure - hm).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

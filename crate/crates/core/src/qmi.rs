//! Quadratic mutual information between a representation and class labels,
//! expressed through the three information potentials.
//!
//! Unlike the conditional probabilities in [`crate::affinity`], the
//! potentials sum over *all* ordered pairs, self-pairs included.
//!
//! The marginal density can be written either as the sum of the per-class
//! joint densities or as a direct KDE over all samples; the two coincide, so
//! `v_all` and `v_btw` use the full kernel matrix directly.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::affinity::FeatureMatrix;
use crate::error::{PktError, Result};
use crate::kernel::{self, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSet {
    pub v_in: f64,
    pub v_all: f64,
    pub v_btw: f64,
    /// `v_in + v_all - 2 v_btw`
    pub qmi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualityReport {
    /// Largest `|K(x_i, x_j) - K(y_i, y_j)|` over all pairs.
    pub max_deviation: f64,
    pub within_tol: bool,
}

fn full_kernel_matrix(feats: &FeatureMatrix, spec: &KernelSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let n = feats.rows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = kernel::eval_unchecked(feats.row(i), feats.row(j), spec);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(k)
}

/// Computes `V_IN`, `V_ALL`, `V_BTW` and the resulting QMI.
pub fn information_potentials(
    feats: &FeatureMatrix,
    labels: &[usize],
    spec: &KernelSpec,
) -> Result<PotentialSet> {
    let n = feats.rows();
    if n < 2 {
        return Err(PktError::TooFewSamples {
            required: 2,
            actual: n,
        });
    }
    if labels.len() != n {
        return Err(PktError::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    let k = full_kernel_matrix(feats, spec)?;

    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }

    let nf = n as f64;
    let norm = 1.0 / (nf * nf);
    let row_sums: Vec<f64> = k.rows().into_iter().map(|r| r.sum()).collect();
    let total: f64 = row_sums.iter().sum();

    let mut in_sum = 0.0;
    let mut prior_sq = 0.0;
    let mut btw_sum = 0.0;
    for members in classes.values() {
        let prior = members.len() as f64 / nf;
        prior_sq += prior * prior;
        let mut block = 0.0;
        for &a in members {
            for &b in members {
                block += k[[a, b]];
            }
        }
        in_sum += block;
        btw_sum += prior * members.iter().map(|&j| row_sums[j]).sum::<f64>();
    }

    let v_in = norm * in_sum;
    let v_all = norm * prior_sq * total;
    let v_btw = norm * btw_sum;
    Ok(PotentialSet {
        v_in,
        v_all,
        v_btw,
        qmi: v_in + v_all - 2.0 * v_btw,
    })
}

/// Compares pairwise kernel values of teacher and student embeddings.
///
/// When every pair agrees within `tol`, each potential of the two spaces
/// agrees within `tol` for any labeling.
pub fn potential_equality_check(
    teacher: &FeatureMatrix,
    student: &FeatureMatrix,
    spec_t: &KernelSpec,
    spec_s: &KernelSpec,
    tol: f64,
) -> Result<EqualityReport> {
    if teacher.rows() != student.rows() {
        return Err(PktError::DimensionMismatch {
            expected: teacher.rows(),
            actual: student.rows(),
        });
    }
    let kt = full_kernel_matrix(teacher, spec_t)?;
    let ks = full_kernel_matrix(student, spec_s)?;
    let max_deviation = kt
        .iter()
        .zip(ks.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(EqualityReport {
        max_deviation,
        within_tol: max_deviation <= tol,
    })
}

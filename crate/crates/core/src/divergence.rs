//! PKT losses and the analytic gradient with respect to student embeddings.
//!
//! Both matrices share the column-conditioned orientation described in
//! [`crate::affinity`], so a loss is simply a sum over all off-diagonal
//! entries of the two matrices.

use ndarray::Array2;

use crate::affinity::{conditional_matrix, FeatureMatrix, ProbabilityMatrix};
use crate::error::{PktError, Result};
use crate::kernel::{self, KernelSpec};

/// Lower clamp applied to student probabilities inside the logarithm.
pub const Q_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct LossReport {
    pub value: f64,
    /// `∂value / ∂y`, same shape as the student embeddings.
    pub grad_y: Array2<f64>,
    /// Number of ordered off-diagonal pairs the loss sums over.
    pub n_pairs: usize,
}

/// Label-derived target distribution.
#[derive(Debug, Clone)]
pub struct SupervisedTargets {
    pub targets: ProbabilityMatrix,
    /// `mask[j]` is false when sample `j` has no same-class partner; such a
    /// slot is all zeros and contributes nothing to the loss.
    pub mask: Vec<bool>,
}

fn check_same_size(a: &ProbabilityMatrix, b: &ProbabilityMatrix) -> Result<()> {
    if a.n() != b.n() {
        return Err(PktError::DimensionMismatch {
            expected: a.n(),
            actual: b.n(),
        });
    }
    Ok(())
}

#[inline]
fn kl_term(p: f64, q: f64) -> f64 {
    if p > 0.0 {
        p * (p / q.clamp(Q_FLOOR, 1.0)).ln()
    } else {
        0.0
    }
}

/// `Σ_i Σ_{j≠i} p_{j|i} ln(p_{j|i} / q_{j|i})` with `q` clamped to `[1e-7, 1]`.
pub fn kl_loss(p_teacher: &ProbabilityMatrix, q_student: &ProbabilityMatrix) -> Result<f64> {
    check_same_size(p_teacher, q_student)?;
    Ok(kl_sum(p_teacher.as_array(), q_student.as_array()))
}

fn kl_sum(p: &Array2<f64>, q: &Array2<f64>) -> f64 {
    let n = p.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += kl_term(p[[j, i]], q[[j, i]]);
            }
        }
    }
    total
}

/// Symmetric squared-difference divergence over all off-diagonal entries.
pub fn quadratic_loss(p_teacher: &ProbabilityMatrix, q_student: &ProbabilityMatrix) -> Result<f64> {
    check_same_size(p_teacher, q_student)?;
    let (p, q) = (p_teacher.as_array(), q_student.as_array());
    let n = p.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = p[[j, i]] - q[[j, i]];
                total += d * d;
            }
        }
    }
    Ok(total)
}

/// Targets that spread each slot's mass uniformly over same-class partners.
pub fn supervised_targets(labels: &[usize]) -> Result<SupervisedTargets> {
    let n = labels.len();
    if n < 2 {
        return Err(PktError::TooFewSamples {
            required: 2,
            actual: n,
        });
    }
    let mut t = Array2::zeros((n, n));
    let mut mask = vec![false; n];
    for j in 0..n {
        let partners = (0..n).filter(|&i| i != j && labels[i] == labels[j]).count();
        if partners == 0 {
            continue;
        }
        mask[j] = true;
        let w = 1.0 / partners as f64;
        for i in 0..n {
            if i != j && labels[i] == labels[j] {
                t[[i, j]] = w;
            }
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(PktError::NoSameClassPairs);
    }
    Ok(SupervisedTargets {
        targets: ProbabilityMatrix::new(t)?,
        mask,
    })
}

/// PKT loss for student embeddings `y` and its exact gradient.
///
/// `value = KL(P ‖ Q(y)) + weight · KL(S ‖ Q(y))`, where `S` is the optional
/// supervised target matrix. The gradient accounts for every `q_{j|i}`
/// depending on all rows through its normalizer.
pub fn pkt_loss_and_grad(
    y: &FeatureMatrix,
    p_teacher: &ProbabilityMatrix,
    student_spec: &KernelSpec,
    sup: Option<(&ProbabilityMatrix, f64)>,
) -> Result<LossReport> {
    let n = y.rows();
    if n < 2 {
        return Err(PktError::TooFewSamples {
            required: 2,
            actual: n,
        });
    }
    if p_teacher.n() != n {
        return Err(PktError::DimensionMismatch {
            expected: p_teacher.n(),
            actual: n,
        });
    }
    if let Some((s, w)) = sup {
        check_same_size(p_teacher, s)?;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(PktError::InvalidArgument(format!(
                "supervised weight must be >= 0, got {w}"
            )));
        }
    }

    let (q, sums) = conditional_matrix(y, student_spec)?;
    let p = p_teacher.as_array();

    let mut value = kl_sum(p, &q);
    if let Some((s, w)) = sup {
        if w > 0.0 {
            value += w * kl_sum(s.as_array(), &q);
        }
    }

    // dL/dq for every off-diagonal entry; zero where q sits below the clamp.
    let mut g = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        for r in 0..n {
            if r == c {
                continue;
            }
            let qv = q[[r, c]];
            if qv < Q_FLOOR {
                continue;
            }
            let mut target = p[[r, c]];
            if let Some((s, w)) = sup {
                target += w * s.get(r, c);
            }
            g[[r, c]] = -target / qv;
        }
    }

    // Through the column normalization, with t_c = Σ_r g[r][c] q[r][c]:
    //   dL/dK[k][c] = (g[k][c] - t_c) / S_c
    // Gaussian slots are a softmax of logits l = -‖y_k - y_c‖² / width, so
    // there we carry dL/dl[k][c] = (g[k][c] - t_c) q[k][c] instead, which
    // needs no kernel value or normalizer.
    let gaussian = matches!(student_spec, KernelSpec::Gaussian { .. });
    let mut dk = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        let mut t = 0.0;
        for r in 0..n {
            if r != c {
                t += g[[r, c]] * q[[r, c]];
            }
        }
        for k in 0..n {
            if k != c {
                dk[[k, c]] = if gaussian {
                    (g[[k, c]] - t) * q[[k, c]]
                } else {
                    (g[[k, c]] - t) / sums[c]
                };
            }
        }
    }

    // Each symmetric pair value appears in two slots.
    let d = y.dim();
    let mut grad = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let yi = y.row(i);
        let gi = grad.row_mut(i).into_slice().expect("row-major gradient");
        for j in 0..n {
            if j == i {
                continue;
            }
            let b = dk[[i, j]] + dk[[j, i]];
            if b == 0.0 {
                continue;
            }
            match *student_spec {
                KernelSpec::Gaussian { width } => {
                    // d l / d y_i = -2 (y_i - y_j) / width
                    let s = -2.0 * b / width;
                    for ((o, &a), &bj) in gi.iter_mut().zip(yi).zip(y.row(j)) {
                        *o += s * (a - bj);
                    }
                }
                KernelSpec::Cosine => kernel::accumulate_grad_a(yi, y.row(j), student_spec, b, gi),
            }
        }
    }

    Ok(LossReport {
        value,
        grad_y: grad,
        n_pairs: n * (n - 1),
    })
}

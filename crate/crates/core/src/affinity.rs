//! Kernel density estimates over a batch of embeddings.
//!
//! Orientation convention used throughout the crate: entry `[i][j]` of a
//! [`ProbabilityMatrix`] is the probability of sample `i` given the
//! conditioning sample `j`, so every *column* sums to one over its
//! off-diagonal entries. The loss reads `p_{j|i}` as entry `[j][i]`.
//! Self-pairs are excluded and the stored diagonal is exactly zero.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PktError, Result};
use crate::kernel::{self, KernelSpec};

/// Smallest conditional normalizer accepted before the geometry is
/// declared degenerate.
pub const MIN_NORMALIZER: f64 = 1e-12;

/// `N × D` table of sample representations, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    /// Wraps an array after checking that it is non-empty and finite.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 {
            return Err(PktError::TooFewSamples {
                required: 1,
                actual: 0,
            });
        }
        if d == 0 {
            return Err(PktError::InvalidArgument(
                "feature dimension must be >= 1".into(),
            ));
        }
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(PktError::NonFinite { row, col });
        }
        Ok(FeatureMatrix { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n * d);
        for r in rows {
            if r.len() != d {
                return Err(PktError::DimensionMismatch {
                    expected: d,
                    actual: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        let data = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| PktError::ShapeMismatch(e.to_string()))?;
        Self::new(data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data
            .row(i)
            .to_slice()
            .expect("feature rows are contiguous")
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    /// Rows picked by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            data: self
                .data
                .select(Axis(0), indices)
                .as_standard_layout()
                .into_owned(),
        }
    }
}

/// Column-conditioned probability matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    p: Array2<f64>,
}

impl ProbabilityMatrix {
    /// Wraps a square matrix. The diagonal is zeroed; entries must be finite
    /// and lie in `[0, 1]`. Column sums are not checked here, since
    /// supervised targets legitimately carry empty columns.
    pub fn new(mut p: Array2<f64>) -> Result<Self> {
        let (r, c) = p.dim();
        if r != c {
            return Err(PktError::ShapeMismatch(format!(
                "probability matrix must be square, got {r}x{c}"
            )));
        }
        for i in 0..r {
            p[[i, i]] = 0.0;
        }
        if let Some(((row, col), _)) = p
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(PktError::InvalidArgument(format!(
                "probability entry [{row}][{col}] outside [0, 1]"
            )));
        }
        Ok(ProbabilityMatrix { p })
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// Probability of sample `i` given conditioning sample `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[[i, j]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.p
    }

    /// The distribution conditioned on sample `j`.
    pub fn slot(&self, j: usize) -> ArrayView1<'_, f64> {
        self.p.column(j)
    }

    /// Off-diagonal sum of each conditioning slot.
    pub fn slot_sums(&self) -> Vec<f64> {
        (0..self.n()).map(|j| self.slot(j).sum()).collect()
    }
}

fn require_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(PktError::TooFewSamples {
            required: 2,
            actual: n,
        });
    }
    Ok(())
}

/// Symmetric kernel matrix with a zero diagonal.
pub(crate) fn offdiag_kernel_matrix(
    feats: &FeatureMatrix,
    spec: &KernelSpec,
) -> Result<Array2<f64>> {
    spec.validate()?;
    let n = feats.rows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = kernel::eval_unchecked(feats.row(i), feats.row(j), spec);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(k)
}

/// Joint density estimate: `K(x_i, x_j) / N` off the diagonal, zero on it.
pub fn joint_density(feats: &FeatureMatrix, spec: &KernelSpec) -> Result<Array2<f64>> {
    require_samples(feats.rows())?;
    let n = feats.rows() as f64;
    Ok(offdiag_kernel_matrix(feats, spec)? / n)
}

/// Conditional probabilities `p_{i|j} = K(x_i, x_j) / Σ_{k≠j} K(x_k, x_j)`.
pub fn conditional_probabilities(
    feats: &FeatureMatrix,
    spec: &KernelSpec,
) -> Result<ProbabilityMatrix> {
    let (p, _) = conditional_matrix(feats, spec)?;
    Ok(ProbabilityMatrix { p })
}

/// Conditional matrix plus, per conditioning slot, the normalizer that
/// was divided out.
///
/// Gaussian slots are normalized as a max-shifted softmax of `-‖x_k - x_j‖² / width`,
/// so distant points cannot underflow the normalizer; the returned
/// normalizer is then the shifted sum (always `>= 1`). Cosine slots use the
/// plain kernel sum.
pub(crate) fn conditional_matrix(
    feats: &FeatureMatrix,
    spec: &KernelSpec,
) -> Result<(Array2<f64>, Vec<f64>)> {
    require_samples(feats.rows())?;
    spec.validate()?;
    match *spec {
        KernelSpec::Cosine => normalize_columns(offdiag_kernel_matrix(feats, spec)?),
        KernelSpec::Gaussian { width } => {
            let n = feats.rows();
            let mut logits = Array2::from_elem((n, n), f64::NEG_INFINITY);
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = -kernel::sq_dist(feats.row(i), feats.row(j)) / width;
                    logits[[i, j]] = v;
                    logits[[j, i]] = v;
                }
            }
            let mut sums = Vec::with_capacity(n);
            for j in 0..n {
                let mut col = logits.column_mut(j);
                let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                col.mapv_inplace(|v| (v - m).exp());
                let s: f64 = col.iter().sum();
                if s.is_nan() || s < MIN_NORMALIZER {
                    return Err(PktError::DegenerateNormalizer { index: j, value: s });
                }
                col.mapv_inplace(|v| v / s);
                sums.push(s);
            }
            Ok((logits, sums))
        }
    }
}

/// Divides each column of an off-diagonal kernel matrix by its sum.
/// Returns the normalized matrix and the column sums.
fn normalize_columns(mut k: Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let n = k.ncols();
    let mut sums = Vec::with_capacity(n);
    for j in 0..n {
        let mut col = k.column_mut(j);
        let s: f64 = col.iter().sum();
        if s.is_nan() || s < MIN_NORMALIZER {
            return Err(PktError::DegenerateNormalizer { index: j, value: s });
        }
        col.mapv_inplace(|v| v / s);
        sums.push(s);
    }
    Ok((k, sums))
}

/// Batches for one epoch: consecutive chunks of a permutation of
/// `0..n_total` that depends only on `(seed, epoch)`. A trailing chunk with
/// fewer than two samples is dropped.
pub fn sample_batch(
    n_total: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(PktError::InvalidArgument(format!(
            "batch size must be >= 2, got {batch_size}"
        )));
    }
    if batch_size > n_total {
        return Err(PktError::InvalidArgument(format!(
            "batch size {batch_size} exceeds sample count {n_total}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut perm: Vec<usize> = (0..n_total).collect();
    perm.shuffle(&mut rng);
    let mut chunks: Vec<Vec<usize>> = perm.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if let Some(dropped) = chunks.pop_if(|c| c.len() < 2) {
        log::debug!(
            "epoch {epoch}: dropping tail batch of {} sample(s)",
            dropped.len()
        );
    }
    Ok(chunks)
}

//! Symmetric pairwise-affinity kernels.
//!
//! Both families map a pair of vectors into `[0, 1]`:
//!
//! - cosine: `K(a, b) = (cos(a, b) + 1) / 2`
//! - Gaussian: `K(a, b) = exp(-||a - b||² / width)`
//!
//! The Gaussian `width` is the whole denominator of the exponent (what is
//! often written `2σ²`), so no squaring or doubling happens inside.

use crate::error::{PktError, Result};

/// Norm floor for the cosine kernel. A vector whose norm is below this is
/// treated as having norm `COSINE_NORM_FLOOR`, so a zero vector gets
/// cosine 0 (affinity 0.5) against anything.
pub const COSINE_NORM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum KernelSpec {
    #[default]
    Cosine,
    /// `width` is the full scale denominator of the exponent.
    Gaussian {
        width: f64,
    },
}

impl KernelSpec {
    pub fn gaussian(width: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { width };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Cosine => Ok(()),
            KernelSpec::Gaussian { width } if width > 0.0 && width.is_finite() => Ok(()),
            KernelSpec::Gaussian { width } => Err(PktError::InvalidWidth(width)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Cosine => "cosine",
            KernelSpec::Gaussian { .. } => "gaussian",
        }
    }
}

/// Evaluates the kernel on a pair of equal-length vectors.
pub fn kernel_eval(a: &[f64], b: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_dims(a, b)?;
    spec.validate()?;
    Ok(eval_unchecked(a, b, spec))
}

/// Cosine similarity in `[-1, 1]` with the norm floor applied.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(cosine_unchecked(a, b))
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(PktError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(PktError::InvalidArgument(
            "kernel inputs must have dimension >= 1".into(),
        ));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let den = norm(a).max(COSINE_NORM_FLOOR) * norm(b).max(COSINE_NORM_FLOOR);
    (dot(a, b) / den).clamp(-1.0, 1.0)
}

/// Kernel value without argument checks. Callers validate dims and spec once
/// per matrix rather than once per pair.
#[inline]
pub(crate) fn eval_unchecked(a: &[f64], b: &[f64], spec: &KernelSpec) -> f64 {
    match *spec {
        KernelSpec::Cosine => 0.5 * (cosine_unchecked(a, b) + 1.0),
        KernelSpec::Gaussian { width } => (-sq_dist(a, b) / width).exp(),
    }
}

/// Adds `scale * ∂K(a, b)/∂a` into `out`.
///
/// For the cosine kernel the clamp to `[-1, 1]` only absorbs rounding, so it
/// is ignored here. Below the norm floor the norm is constant and contributes
/// no derivative.
pub(crate) fn accumulate_grad_a(
    a: &[f64],
    b: &[f64],
    spec: &KernelSpec,
    scale: f64,
    out: &mut [f64],
) {
    match *spec {
        KernelSpec::Cosine => {
            let na = norm(a);
            let nb = norm(b);
            let da = na.max(COSINE_NORM_FLOOR);
            let db = nb.max(COSINE_NORM_FLOOR);
            let ab = dot(a, b);
            let inv = 1.0 / (da * db);
            // d cos / d a = b / (da db) - (a.b) / (da^2 db) * d(da)/da
            let radial = if na > COSINE_NORM_FLOOR {
                ab * inv / (da * na)
            } else {
                0.0
            };
            let s = 0.5 * scale;
            for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
                *o += s * (bi * inv - radial * ai);
            }
        }
        KernelSpec::Gaussian { width } => {
            let k = (-sq_dist(a, b) / width).exp();
            let s = -2.0 * scale * k / width;
            for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
                *o += s * (ai - bi);
            }
        }
    }
}

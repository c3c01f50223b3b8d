//! Central finite-difference check of the analytic PKT gradient.
//!
//! The numeric side only ever calls the loss value, never the gradient
//! path, so the two routes are independent.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::affinity::{conditional_probabilities, FeatureMatrix, ProbabilityMatrix};
use crate::divergence::{pkt_loss_and_grad, supervised_targets};
use crate::error::{PktError, Result};
use crate::kernel::KernelSpec;

/// Differences smaller than this in magnitude are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub const PASS_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Cosine,
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub instances: usize,
    /// Fixed sample count; drawn from `4..=12` per instance when `None`.
    pub n: Option<usize>,
    /// Fixed student dimension; drawn from `2..=8` per instance when `None`.
    pub dim: Option<usize>,
    pub kernels: Vec<KernelFamily>,
    pub step: f64,
    /// Flip the sign of the analytic gradient. Used to confirm the check
    /// can fail.
    pub corrupt_sign: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seed: 0,
            instances: 20,
            n: None,
            dim: None,
            kernels: vec![KernelFamily::Cosine, KernelFamily::Gaussian],
            step: 1e-5,
            corrupt_sign: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InstanceResult {
    pub kernel: KernelFamily,
    pub n: usize,
    pub dim: usize,
    pub supervised: bool,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckSummary {
    pub instances: Vec<InstanceResult>,
    pub max_rel_error: f64,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.max_rel_error < PASS_THRESHOLD
    }
}

/// Elementwise `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`, maximized.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient(
    x: &[f64],
    step: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut *rng))
}

fn spec_for(family: KernelFamily, dim: usize) -> KernelSpec {
    match family {
        KernelFamily::Cosine => KernelSpec::Cosine,
        // Squared distance between standard normal points averages 2·dim.
        KernelFamily::Gaussian => KernelSpec::Gaussian {
            width: 2.0 * dim as f64,
        },
    }
}

/// Student points whose affinities are well defined. Cosine in one
/// dimension only sees signs, so a point alone in its sign has no partner
/// with nonzero affinity; such draws are rejected.
fn draw_student(
    rng: &mut ChaCha8Rng,
    n: usize,
    dim: usize,
    spec: &KernelSpec,
) -> Result<FeatureMatrix> {
    const MAX_DRAWS: usize = 1000;
    let mut last_err = None;
    for _ in 0..MAX_DRAWS {
        let y = FeatureMatrix::new(normal_matrix(rng, n, dim))?;
        match conditional_probabilities(&y, spec) {
            Ok(_) => return Ok(y),
            Err(e @ PktError::DegenerateNormalizer { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one draw"))
}

/// Compares the analytic and numeric gradient of the PKT loss on one
/// random instance.
pub fn check_instance(
    rng: &mut ChaCha8Rng,
    family: KernelFamily,
    n: usize,
    dim: usize,
    step: f64,
    corrupt_sign: bool,
) -> Result<InstanceResult> {
    let teacher_dim = dim + 3;
    let teacher = FeatureMatrix::new(normal_matrix(rng, n, teacher_dim))?;
    let p = conditional_probabilities(&teacher, &spec_for(family, teacher_dim))?;
    let student_spec = spec_for(family, dim);
    let y = draw_student(rng, n, dim, &student_spec)?;

    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let sup: Option<ProbabilityMatrix> = if n >= 4 {
        Some(supervised_targets(&labels)?.targets)
    } else {
        None
    };
    let sup_arg = sup.as_ref().map(|s| (s, 0.5));

    let report = pkt_loss_and_grad(&y, &p, &student_spec, sup_arg)?;
    let mut analytic: Vec<f64> = report.grad_y.iter().copied().collect();
    if corrupt_sign {
        analytic.iter_mut().for_each(|g| *g = -*g);
    }

    let x0: Vec<f64> = y.as_array().iter().copied().collect();
    let numeric = numeric_gradient(&x0, step, |x| {
        let yy =
            FeatureMatrix::new(Array2::from_shape_vec((n, dim), x.to_vec()).expect("same shape"))?;
        Ok(pkt_loss_and_grad(&yy, &p, &student_spec, sup_arg)?.value)
    })?;

    Ok(InstanceResult {
        kernel: family,
        n,
        dim,
        supervised: sup.is_some(),
        max_rel_error: max_relative_error(&analytic, &numeric),
    })
}

/// Runs `instances` random checks per kernel family.
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = Vec::new();
    for _ in 0..cfg.instances {
        for &family in &cfg.kernels {
            let n = cfg
                .n
                .unwrap_or_else(|| rand::Rng::random_range(&mut rng, 4..=12));
            let dim = cfg
                .dim
                .unwrap_or_else(|| rand::Rng::random_range(&mut rng, 2..=8));
            instances.push(check_instance(
                &mut rng,
                family,
                n,
                dim,
                cfg.step,
                cfg.corrupt_sign,
            )?);
        }
    }
    let max_rel_error = instances
        .iter()
        .map(|r| r.max_rel_error)
        .fold(0.0, f64::max);
    Ok(GradcheckSummary {
        instances,
        max_rel_error,
    })
}

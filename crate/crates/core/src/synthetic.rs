//! Seeded synthetic transfer problems.
//!
//! Samples are Gaussian blobs whose class information lives in a few
//! "signal" coordinates, padded with high-variance nuisance coordinates.
//! The teacher is a fixed random nonlinear map that only looks at the
//! signal coordinates, so it is a strictly better representation than the
//! raw input and there is something to transfer.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::affinity::FeatureMatrix;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BlobConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub query_per_class: usize,
    pub signal_dim: usize,
    pub nuisance_dim: usize,
    /// Standard deviation of class centers around the origin.
    pub center_scale: f64,
    /// Within-class standard deviation of the signal coordinates.
    pub signal_noise: f64,
    /// Standard deviation of the nuisance coordinates.
    pub nuisance_scale: f64,
    pub teacher_dim: usize,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            classes: 4,
            train_per_class: 100,
            query_per_class: 25,
            signal_dim: 4,
            nuisance_dim: 12,
            center_scale: 2.0,
            signal_noise: 0.6,
            nuisance_scale: 2.0,
            teacher_dim: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferProblem {
    pub train_inputs: FeatureMatrix,
    pub train_teacher: FeatureMatrix,
    pub train_labels: Vec<usize>,
    pub query_inputs: FeatureMatrix,
    pub query_teacher: FeatureMatrix,
    pub query_labels: Vec<usize>,
}

/// Fixed random map `x ↦ tanh(x_signal · A + b)`.
#[derive(Debug, Clone)]
pub struct TeacherMap {
    signal_dim: usize,
    a: Array2<f64>,
    b: Array1<f64>,
}

impl TeacherMap {
    pub fn new(signal_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (signal_dim as f64).sqrt();
        let a = Array2::from_shape_simple_fn((signal_dim, out_dim), || {
            let z: f64 = StandardNormal.sample(&mut *rng);
            scale * z
        });
        let b = Array1::from_shape_simple_fn(out_dim, || {
            let z: f64 = StandardNormal.sample(&mut *rng);
            0.5 * z
        });
        TeacherMap { signal_dim, a, b }
    }

    pub fn apply(&self, inputs: &Array2<f64>) -> Array2<f64> {
        let x = inputs.slice(s![.., ..self.signal_dim]);
        (x.dot(&self.a) + &self.b).mapv(f64::tanh)
    }
}

fn sample_split(
    cfg: &BlobConfig,
    centers: &Array2<f64>,
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, Vec<usize>) {
    let dim = cfg.signal_dim + cfg.nuisance_dim;
    let n = cfg.classes * per_class;
    let signal = Normal::new(0.0, cfg.signal_noise).expect("valid std");
    let nuisance = Normal::new(0.0, cfg.nuisance_scale).expect("valid std");
    let mut x = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % cfg.classes;
        labels.push(c);
        for k in 0..cfg.signal_dim {
            x[[i, k]] = centers[[c, k]] + signal.sample(rng);
        }
        for k in cfg.signal_dim..dim {
            x[[i, k]] = nuisance.sample(rng);
        }
    }
    (x, labels)
}

pub fn gaussian_blobs(cfg: &BlobConfig) -> Result<TransferProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let center_dist = Normal::new(0.0, cfg.center_scale).expect("valid std");
    let centers = Array2::from_shape_simple_fn((cfg.classes, cfg.signal_dim), || {
        center_dist.sample(&mut rng)
    });
    let teacher = TeacherMap::new(cfg.signal_dim, cfg.teacher_dim, &mut rng);

    let (train, train_labels) = sample_split(cfg, &centers, cfg.train_per_class, &mut rng);
    let (query, query_labels) = sample_split(cfg, &centers, cfg.query_per_class, &mut rng);
    Ok(TransferProblem {
        train_teacher: FeatureMatrix::new(teacher.apply(&train))?,
        query_teacher: FeatureMatrix::new(teacher.apply(&query))?,
        train_inputs: FeatureMatrix::new(train)?,
        train_labels,
        query_inputs: FeatureMatrix::new(query)?,
        query_labels,
    })
}

/// Replaces a `fraction` of the teacher's coordinates with independent
/// standard normal noise: `fraction = 1` gives a teacher that carries no
/// information about the inputs.
pub fn corrupt_teacher(teacher: &FeatureMatrix, fraction: f64, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (teacher.rows(), teacher.dim());
    let noise: Array2<f64> =
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng));
    let mixed = teacher.as_array() * (1.0 - fraction) + noise * fraction;
    FeatureMatrix::new(mixed)
}

/// Uniformly random embeddings with balanced binary labels.
pub fn random_binary_embeddings(
    n: usize,
    dim: usize,
    seed: u64,
) -> Result<(FeatureMatrix, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, dim), || StandardNormal.sample(&mut rng));
    let labels = (0..n).map(|i| i % 2).collect();
    Ok((FeatureMatrix::new(x)?, labels))
}

/// Stacks two feature matrices row-wise.
pub fn stack(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix> {
    let joined = concatenate(Axis(0), &[a.view(), b.view()])
        .map_err(|e| crate::error::PktError::ShapeMismatch(e.to_string()))?;
    FeatureMatrix::new(joined)
}

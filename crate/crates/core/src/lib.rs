//! Probabilistic knowledge transfer (PKT).
//!
//! A fixed teacher representation is distilled into a small trainable
//! student by matching the kernel-induced conditional probability
//! distributions of the two feature spaces, rather than the features
//! themselves. Because only pairwise affinities are matched, the teacher
//! and student may have different dimensionality, and the teacher can be
//! anything that produces a vector per sample (a deep network, a
//! handcrafted descriptor, another modality).
//!
//! Crate layout:
//!
//! - [`kernel`]: cosine and Gaussian affinity kernels.
//! - [`affinity`]: joint and conditional probability matrices, batch sampling.
//! - [`divergence`]: KL / quadratic losses, supervised targets, analytic gradient.
//! - [`qmi`]: quadratic mutual information via information potentials.
//! - [`student`]: fully connected student network and the Adam optimizer.
//! - [`trainer`]: the transfer loop.
//! - [`retrieval`]: cosine ranking, 11-point interpolated mAP, top-k precision.
//! - [`io`]: decimal-text feature, label and model files.
//! - [`gradcheck`]: central finite-difference comparison for the loss gradient.
//! - [`synthetic`]: seeded synthetic transfer problems.

pub mod affinity;
pub mod divergence;
mod error;
pub mod gradcheck;
pub mod io;
pub mod kernel;
pub mod qmi;
pub mod retrieval;
pub mod student;
pub mod synthetic;
pub mod trainer;

pub use affinity::{
    conditional_probabilities, joint_density, sample_batch, FeatureMatrix, ProbabilityMatrix,
};
pub use divergence::{
    kl_loss, pkt_loss_and_grad, quadratic_loss, supervised_targets, LossReport, SupervisedTargets,
};
pub use error::{PktError, Result};
pub use kernel::{kernel_eval, KernelSpec};
pub use qmi::{information_potentials, potential_equality_check, EqualityReport, PotentialSet};
pub use retrieval::{
    average_precision_11pt, evaluate, rank, top_k_precision, RetrievalIndex, RetrievalResult,
};
pub use student::{AdamState, Gradients, StudentModel};
pub use trainer::{train, LossRecord, TrainConfig};

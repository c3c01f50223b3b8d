//! The transfer loop.
//!
//! Each epoch reshuffles the transfer set, and every batch builds its own
//! teacher and student conditional matrices, so memory stays `O(B²)`.
//! The loss is a sum over the batch's pairs (not a mean), which makes the
//! effective step size depend on the batch size.

use crate::affinity::{conditional_probabilities, sample_batch, FeatureMatrix};
use crate::divergence::{pkt_loss_and_grad, supervised_targets};
use crate::error::{PktError, Result};
use crate::kernel::KernelSpec;
use crate::student::{AdamState, StudentModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub teacher_spec: KernelSpec,
    pub student_spec: KernelSpec,
    /// Weight of the label-derived divergence; 0 disables it and labels are
    /// not needed.
    pub sup_weight: f64,
    pub seed: u64,
    /// Log the running loss every `log_every` batches; 0 disables.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            lr: 1e-4,
            teacher_spec: KernelSpec::Cosine,
            student_spec: KernelSpec::Cosine,
            sup_weight: 0.0,
            seed: 0,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(PktError::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(PktError::InvalidArgument(format!(
                "batch size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(PktError::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.sup_weight >= 0.0 && self.sup_weight.is_finite()) {
            return Err(PktError::InvalidArgument(format!(
                "supervised weight must be >= 0, got {}",
                self.sup_weight
            )));
        }
        self.teacher_spec.validate()?;
        self.student_spec.validate()
    }
}

/// Loss of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

/// Trains `model` so its batch conditionals match those of `teacher_feats`.
///
/// `raw_inputs` row `i` is the student input for the sample whose teacher
/// representation is `teacher_feats` row `i`. `labels` is only consulted
/// when `cfg.sup_weight > 0`. The batch size is capped at the number of
/// samples.
pub fn train(
    mut model: StudentModel,
    raw_inputs: &FeatureMatrix,
    teacher_feats: &FeatureMatrix,
    labels: Option<&[usize]>,
    cfg: &TrainConfig,
) -> Result<(StudentModel, Vec<LossRecord>)> {
    cfg.validate()?;
    let n = raw_inputs.rows();
    if teacher_feats.rows() != n {
        return Err(PktError::DimensionMismatch {
            expected: n,
            actual: teacher_feats.rows(),
        });
    }
    if raw_inputs.dim() != model.input_dim() {
        return Err(PktError::DimensionMismatch {
            expected: model.input_dim(),
            actual: raw_inputs.dim(),
        });
    }
    let labels = if cfg.sup_weight > 0.0 {
        let l = labels.ok_or_else(|| {
            PktError::InvalidArgument("a positive supervised weight requires labels".into())
        })?;
        if l.len() != n {
            return Err(PktError::DimensionMismatch {
                expected: n,
                actual: l.len(),
            });
        }
        Some(l)
    } else {
        None
    };
    if n < 2 {
        return Err(PktError::TooFewSamples {
            required: 2,
            actual: n,
        });
    }
    let batch_size = cfg.batch_size.min(n);

    let mut adam = AdamState::new(&model, cfg.lr)?;
    let mut trace = Vec::new();
    for epoch in 0..cfg.epochs {
        let batches = sample_batch(n, batch_size, cfg.seed, epoch as u64)?;
        for (b, idx) in batches.iter().enumerate() {
            let x = raw_inputs.select(idx);
            let p = conditional_probabilities(&teacher_feats.select(idx), &cfg.teacher_spec)?;
            let fwd = model.forward_trace(&x)?;
            let y = FeatureMatrix::new(fwd.output().clone())?;

            let sup = match labels {
                Some(l) => {
                    let batch_labels: Vec<usize> = idx.iter().map(|&i| l[i]).collect();
                    match supervised_targets(&batch_labels) {
                        Ok(s) => Some(s.targets),
                        Err(PktError::NoSameClassPairs) => {
                            log::debug!("epoch {epoch} batch {b}: no same-class pair, supervised term skipped");
                            None
                        }
                        Err(e) => return Err(e),
                    }
                }
                None => None,
            };

            let report = pkt_loss_and_grad(
                &y,
                &p,
                &cfg.student_spec,
                sup.as_ref().map(|s| (s, cfg.sup_weight)),
            )?;
            let grads = model.backward_from_trace(&fwd, &report.grad_y)?;
            adam.step(&mut model, &grads)?;

            trace.push(LossRecord {
                epoch,
                batch: b,
                loss: report.value,
            });
            if cfg.log_every > 0 && trace.len() % cfg.log_every == 0 {
                log::info!("epoch {epoch} batch {b} loss {:.6}", report.value);
            }
        }
    }
    Ok((model, trace))
}

/// Mean loss of each epoch, in epoch order.
pub fn epoch_means(trace: &[LossRecord]) -> Vec<f64> {
    let epochs = trace.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
    let mut sums = vec![0.0; epochs];
    let mut counts = vec![0usize; epochs];
    for r in trace {
        sums[r.epoch] += r.loss;
        counts[r.epoch] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| s / c.max(1) as f64)
        .collect()
}

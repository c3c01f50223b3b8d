//! Trainable student network: a fully connected stack with ReLU hidden
//! layers and an identity output layer.

mod adam;

pub use adam::AdamState;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::FeatureMatrix;
use crate::error::{PktError, Result};

/// One affine layer, `out = input · weight + bias`, with `weight` stored
/// `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    layers: Vec<Layer>,
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &StudentModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// All entries in parameter order (per layer: weight row-major, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[l]` is the input to layer `l`; the last entry is the output.
    inputs: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.inputs.last().expect("trace holds at least the input")
    }
}

impl StudentModel {
    /// Seeded model with uniform Glorot initialization and zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        rng.random_range(-limit..=limit)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(StudentModel { layers })
    }

    /// Builds a model from explicit layers, checking shape compatibility and
    /// finiteness.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(PktError::InvalidArgument(
                "model needs at least one layer".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(PktError::ShapeMismatch(format!(
                    "layer {i}: bias has {} entries, weight has {} columns",
                    l.bias.len(),
                    l.fan_out()
                )));
            }
            if l.fan_in() == 0 || l.fan_out() == 0 {
                return Err(PktError::ShapeMismatch(format!(
                    "layer {i} has an empty dimension"
                )));
            }
            if i > 0 && layers[i - 1].fan_out() != l.fan_in() {
                return Err(PktError::ShapeMismatch(format!(
                    "layer {i} expects {} inputs, previous layer produces {}",
                    l.fan_in(),
                    layers[i - 1].fan_out()
                )));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(PktError::InvalidArgument(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
        }
        Ok(StudentModel { layers })
    }

    /// Square identity layer, mostly useful in tests and pipelines that pass
    /// features through untouched.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_layers(vec![Layer {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
        }])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// `[D_in, h_1, ..., D_out]`
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].fan_in())
            .chain(self.layers.iter().map(Layer::fan_out))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::fan_out).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Mutable references to every parameter, in [`Gradients::flatten`] order.
    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
            .collect()
    }

    pub fn forward(&self, batch: &FeatureMatrix) -> Result<FeatureMatrix> {
        let trace = self.forward_trace(batch)?;
        FeatureMatrix::new(trace.inputs.into_iter().last().unwrap())
    }

    pub fn forward_trace(&self, batch: &FeatureMatrix) -> Result<ForwardTrace> {
        if batch.dim() != self.input_dim() {
            return Err(PktError::DimensionMismatch {
                expected: self.input_dim(),
                actual: batch.dim(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        inputs.push(batch.as_array().clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = inputs[l].dot(&layer.weight) + &layer.bias;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(z);
        }
        Ok(ForwardTrace { inputs })
    }

    /// Parameter gradients for a loss whose gradient with respect to the
    /// model output on `batch` is `grad_y`.
    pub fn backward(&self, batch: &FeatureMatrix, grad_y: &Array2<f64>) -> Result<Gradients> {
        let trace = self.forward_trace(batch)?;
        self.backward_from_trace(&trace, grad_y)
    }

    pub fn backward_from_trace(
        &self,
        trace: &ForwardTrace,
        grad_y: &Array2<f64>,
    ) -> Result<Gradients> {
        let out = trace.output();
        if grad_y.dim() != out.dim() {
            return Err(PktError::ShapeMismatch(format!(
                "output gradient is {:?}, model output is {:?}",
                grad_y.dim(),
                out.dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_y.clone();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            grads.push(Layer {
                weight: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let mut prev = delta.dot(&self.layers[l].weight.t());
                // `input` is the ReLU output of layer l-1; its derivative is 1 where positive.
                prev.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(PktError::InvalidArgument(format!(
            "architecture needs at least input and output sizes, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(PktError::InvalidArgument(format!(
            "layer sizes must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

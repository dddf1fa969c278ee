//! Multilayer perceptron with exact reverse-mode gradients.
//!
//! Layout of a [`ParameterVector`] for an `MlpSpec`: for every affine layer in
//! order, the row-major weight matrix of shape `(out, in)` followed by the
//! bias vector of length `out`. Hidden layers apply the spec's activation;
//! the output layer is linear.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ParameterVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
}

/// Activations recorded by a batched forward pass; `layers[0]` is the input
/// and the last entry is the network output.
#[derive(Debug, Clone)]
pub struct Tape {
    layers: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.layers.last().expect("tape always holds the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.layers[0]
    }
}

/// Result of a backward pass, summed over the batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParameterVector,
    /// Gradient with respect to each input row.
    pub input: Array2<f64>,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        hidden_activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config(format!(
                "network dimensions must be >= 1, got {} -> {:?} -> {}",
                self.input_dim, self.hidden_dims, self.output_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let mut values = Vec::with_capacity(self.param_count());
        for (fan_in, fan_out) in self.layer_dims() {
            let limit = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        ParameterVector(values)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::config(format!(
                "parameter vector has {} entries, network needs {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    fn layer_views<'a>(&self, params: &'a [f64]) -> Vec<(ArrayView2<'a, f64>, ArrayView1<'a, f64>)> {
        let mut offset = 0;
        self.layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let w_len = fan_in * fan_out;
                let w = ArrayView2::from_shape((fan_out, fan_in), &params[offset..offset + w_len])
                    .expect("layer shape matches layout");
                let b = ArrayView1::from(&params[offset + w_len..offset + w_len + fan_out]);
                offset += w_len + fan_out;
                (w, b)
            })
            .collect()
    }

    /// Forward pass over a batch of row inputs, keeping every activation.
    pub fn forward_batch(&self, params: &[f64], inputs: ArrayView2<'_, f64>) -> Result<Tape> {
        self.check_params(params)?;
        if inputs.ncols() != self.input_dim {
            return Err(Error::config(format!(
                "input has {} columns, network expects {}",
                inputs.ncols(),
                self.input_dim
            )));
        }
        let views = self.layer_views(params);
        let last = views.len() - 1;
        let mut layers = Vec::with_capacity(views.len() + 1);
        layers.push(inputs.to_owned());
        for (l, (w, b)) in views.iter().enumerate() {
            let mut z = layers[l].dot(&w.t());
            z += b;
            if l < last {
                let act = self.hidden_activation;
                z.mapv_inplace(|x| act.apply(x));
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::numerical(
                    format!("forward pass, layer {l}"),
                    "non-finite activation",
                ));
            }
            layers.push(z);
        }
        Ok(Tape { layers })
    }

    /// Reverse-mode pass: gradient of `sum_rows <output_row, cotangent_row>`
    /// with respect to the parameters and to every input row.
    pub fn backward(
        &self,
        params: &[f64],
        tape: &Tape,
        cotangent: ArrayView2<'_, f64>,
    ) -> Result<Gradients> {
        self.check_params(params)?;
        if cotangent.dim() != tape.output().dim() {
            return Err(Error::config(format!(
                "cotangent shape {:?} does not match output shape {:?}",
                cotangent.dim(),
                tape.output().dim()
            )));
        }
        let views = self.layer_views(params);
        let last = views.len() - 1;
        let mut grad = vec![0.0; params.len()];
        let mut offsets = Vec::with_capacity(views.len());
        let mut offset = 0;
        for (fan_in, fan_out) in self.layer_dims() {
            offsets.push(offset);
            offset += fan_in * fan_out + fan_out;
        }

        let mut delta: Array2<f64> = cotangent.to_owned();
        for l in (0..views.len()).rev() {
            if l < last {
                let act = self.hidden_activation;
                ndarray::Zip::from(&mut delta)
                    .and(&tape.layers[l + 1])
                    .for_each(|d, &y| *d *= act.derivative_at_output(y));
            }
            let (w, _) = &views[l];
            let (fan_out, fan_in) = w.dim();
            let dw = delta.t().dot(&tape.layers[l]);
            let db: Array1<f64> = delta.sum_axis(Axis(0));
            let o = offsets[l];
            grad[o..o + fan_in * fan_out]
                .iter_mut()
                .zip(dw.iter())
                .for_each(|(g, v)| *g = *v);
            grad[o + fan_in * fan_out..o + fan_in * fan_out + fan_out]
                .iter_mut()
                .zip(db.iter())
                .for_each(|(g, v)| *g = *v);
            delta = delta.dot(w);
            if !delta.iter().all(|v| v.is_finite()) || !dw.iter().all(|v| v.is_finite()) {
                return Err(Error::numerical(
                    format!("backward pass, layer {l}"),
                    "non-finite gradient",
                ));
            }
        }
        Ok(Gradients {
            params: ParameterVector(grad),
            input: delta,
        })
    }

    /// Single-input forward pass.
    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        let row = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::config(e.to_string()))?;
        Ok(self.forward_batch(params, row)?.output().iter().copied().collect())
    }
}

/// Evaluates the network on one input.
pub fn mlp_forward(spec: &MlpSpec, params: &ParameterVector, input: &[f64]) -> Result<Vec<f64>> {
    spec.forward(params, input)
}

/// Gradient of `<output, cotangent>` with respect to the parameters.
pub fn mlp_gradient(
    spec: &MlpSpec,
    params: &ParameterVector,
    input: &[f64],
    output_cotangent: &[f64],
) -> Result<ParameterVector> {
    if output_cotangent.len() != spec.output_dim {
        return Err(Error::config(format!(
            "cotangent has {} entries, network output has {}",
            output_cotangent.len(),
            spec.output_dim
        )));
    }
    let row = ArrayView2::from_shape((1, input.len()), input)
        .map_err(|e| Error::config(e.to_string()))?;
    let tape = spec.forward_batch(params, row)?;
    let cot = ArrayView2::from_shape((1, output_cotangent.len()), output_cotangent)
        .map_err(|e| Error::config(e.to_string()))?;
    Ok(spec.backward(params, &tape, cot)?.params)
}

//! Policy and value networks shared by the agents.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::{log_prob_with_grads, Activation, GaussianHead, MlpSpec, ParameterVector, Tape};
use crate::rng::Stream;
use crate::{Error, Result};

/// Packs rows of equal length into a matrix.
pub(crate) fn stack_rows<'a, I>(rows: I, cols: usize) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for row in rows {
        if row.len() != cols {
            return Err(Error::config(format!("row has {} entries, expected {cols}", row.len())));
        }
        data.extend_from_slice(row);
        n += 1;
    }
    Array2::from_shape_vec((n, cols), data).map_err(|e| Error::config(e.to_string()))
}

/// Gaussian policy whose mean is an MLP of the observation and whose log
/// standard deviation is a separate, state-independent parameter vector.
///
/// `params` holds the mean network's parameters followed by the log-std entries.
#[derive(Debug, Clone)]
pub struct GaussianMlpPolicy {
    pub spec: MlpSpec,
    pub params: ParameterVector,
}

impl GaussianMlpPolicy {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut Stream) -> Result<Self> {
        let spec = MlpSpec::new(obs_dim, hidden.to_vec(), action_dim, Activation::Tanh)?;
        let mut params = spec.init(rng);
        // initial log σ = 0
        params.0.extend(std::iter::repeat_n(0.0, action_dim));
        Ok(Self { spec, params })
    }

    pub fn action_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn mean_len(&self) -> usize {
        self.spec.param_count()
    }

    pub fn mean_params(&self) -> &[f64] {
        &self.params[..self.mean_len()]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.mean_len()..]
    }

    pub fn head(&self, observation: &[f64]) -> Result<GaussianHead> {
        let mean = self.spec.forward(self.mean_params(), observation)?;
        GaussianHead::from_log_std(mean, self.log_std())
    }

    pub fn sample(&self, observation: &[f64], rng: &mut Stream) -> Result<Vec<f64>> {
        let mean = self.spec.forward(self.mean_params(), observation)?;
        Ok(mean
            .iter()
            .zip(self.log_std())
            .map(|(m, l)| m + rng.sample::<f64, _>(StandardNormal) * l.exp())
            .collect())
    }

    /// Log-probabilities of each `(state, action)` row pair, with the tape of
    /// the mean network for a later [`Self::weighted_log_prob_grad`].
    pub fn log_probs(&self, states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Tape)> {
        let tape = self.spec.forward_batch(self.mean_params(), states)?;
        let means = tape.output();
        let log_std = self.log_std();
        let lps = means
            .rows()
            .into_iter()
            .zip(actions.rows())
            .map(|(mu, a)| {
                mu.iter()
                    .zip(a.iter())
                    .zip(log_std)
                    .map(|((m, a), l)| log_prob_with_grads(*a, *m, *l).0)
                    .sum()
            })
            .collect();
        Ok((lps, tape))
    }

    /// `sum_i weights[i] * grad_params log π(actions[i] | states[i])`.
    pub fn weighted_log_prob_grad(
        &self,
        tape: &Tape,
        actions: ArrayView2<'_, f64>,
        weights: &[f64],
    ) -> Result<ParameterVector> {
        let means = tape.output();
        let log_std = self.log_std();
        let mut cotangent = Array2::zeros(means.dim());
        let mut log_std_grad = vec![0.0; log_std.len()];
        for (i, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for j in 0..log_std.len() {
                let (_, d_mean, d_log_std, _) = log_prob_with_grads(actions[[i, j]], means[[i, j]], log_std[j]);
                cotangent[[i, j]] = w * d_mean;
                log_std_grad[j] += w * d_log_std;
            }
        }
        let mut grad = self.spec.backward(self.mean_params(), tape, cotangent.view())?.params;
        grad.0.extend(log_std_grad);
        Ok(grad)
    }
}

/// Scalar-output network, used for state values and (with a concatenated
/// action input) action values.
#[derive(Debug, Clone)]
pub struct ValueNet {
    pub spec: MlpSpec,
    pub params: ParameterVector,
}

impl ValueNet {
    pub fn new(input_dim: usize, hidden: &[usize], activation: Activation, rng: &mut Stream) -> Result<Self> {
        let spec = MlpSpec::new(input_dim, hidden.to_vec(), 1, activation)?;
        let params = spec.init(rng);
        Ok(Self { spec, params })
    }

    pub fn value(&self, input: &[f64]) -> Result<f64> {
        Ok(self.spec.forward(&self.params, input)?[0])
    }

    pub fn values(&self, inputs: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Tape)> {
        self.values_with(&self.params, inputs)
    }

    /// Evaluates with an arbitrary parameter vector of this network's shape.
    pub fn values_with(&self, params: &[f64], inputs: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Tape)> {
        let tape = self.spec.forward_batch(params, inputs)?;
        let v = tape.output().column(0).to_vec();
        Ok((v, tape))
    }

    /// `sum_i weights[i] * grad v(inputs[i])`, plus the gradient with respect to each input row.
    pub fn weighted_grad(&self, tape: &Tape, weights: &[f64]) -> Result<(ParameterVector, Array2<f64>)> {
        let cotangent = Array2::from_shape_vec((weights.len(), 1), weights.to_vec())
            .map_err(|e| Error::config(e.to_string()))?;
        let g = self.spec.backward(&self.params, tape, cotangent.view())?;
        Ok((g.params, g.input))
    }
}

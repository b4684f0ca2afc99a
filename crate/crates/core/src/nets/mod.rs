//! Fully connected networks with layer-wise adaptive tanh activations.
//!
//! Parameters of a network live in one flat `Vec<f64>` so the optimizer can
//! treat them as a single vector. Per layer `k` the block is the row-major
//! weight matrix (`out x in`) followed by the bias; the trailing block holds
//! one activation slope per hidden layer.

use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::real::Real;

pub mod batch;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network configuration: {0}")]
    Config(&'static str),
    #[error("parameter vector has {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Architecture of one perceptron.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlpConfig {
    pub input_width: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_width: usize,
    /// Fixed scale `n` in `tanh(n * a_k * z)`.
    pub activation_scale: f64,
}

impl MlpConfig {
    /// Displacement/pressure network: (X1, X2) -> (u1, u2, p).
    pub const fn displacement() -> Self {
        MlpConfig {
            input_width: 2,
            hidden_layers: 4,
            hidden_width: 30,
            output_width: 3,
            activation_scale: 1.0,
        }
    }

    /// Modulus network: (X1, X2) -> mu.
    pub const fn modulus() -> Self {
        MlpConfig {
            output_width: 1,
            ..Self::displacement()
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.hidden_layers == 0 {
            return Err(NetError::Config("at least one hidden layer is required"));
        }
        if self.input_width == 0 || self.hidden_width == 0 || self.output_width == 0 {
            return Err(NetError::Config("layer widths must be positive"));
        }
        if !(self.activation_scale.is_finite() && self.activation_scale > 0.0) {
            return Err(NetError::Config("activation scale must be positive and finite"));
        }
        Ok(())
    }

    /// Number of affine layers (hidden + output).
    pub fn layer_count(&self) -> usize {
        self.hidden_layers + 1
    }

    /// `(fan_in, fan_out)` of affine layer `k`.
    pub fn layer_shape(&self, k: usize) -> (usize, usize) {
        let fan_in = if k == 0 {
            self.input_width
        } else {
            self.hidden_width
        };
        let fan_out = if k == self.hidden_layers {
            self.output_width
        } else {
            self.hidden_width
        };
        (fan_in, fan_out)
    }

    pub fn weight_range(&self, k: usize) -> Range<usize> {
        let start = self.block_start(k);
        let (fi, fo) = self.layer_shape(k);
        start..start + fi * fo
    }

    pub fn bias_range(&self, k: usize) -> Range<usize> {
        let w = self.weight_range(k);
        let (_, fo) = self.layer_shape(k);
        w.end..w.end + fo
    }

    pub fn slope_range(&self) -> Range<usize> {
        let start = self.block_start(self.layer_count());
        start..start + self.hidden_layers
    }

    fn block_start(&self, k: usize) -> usize {
        (0..k)
            .map(|j| {
                let (fi, fo) = self.layer_shape(j);
                fi * fo + fo
            })
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.slope_range().end
    }
}

/// Trainable parameters of one network, tied to its configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    config: MlpConfig,
    values: Vec<f64>,
}

impl NetworkParams {
    pub fn from_values(config: MlpConfig, values: Vec<f64>) -> Result<Self, NetError> {
        config.validate()?;
        if values.len() != config.param_count() {
            return Err(NetError::ShapeMismatch {
                expected: config.param_count(),
                got: values.len(),
            });
        }
        Ok(NetworkParams { config, values })
    }

    /// All weights and biases zero, slopes at `1/n`.
    pub fn zeros(config: MlpConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut values = alloc::vec![0.0; config.param_count()];
        let slope = 1.0 / config.activation_scale;
        values[config.slope_range()].fill(slope);
        Ok(NetworkParams { config, values })
    }

    /// Uniform Xavier initialization on `±sqrt(6 / (fan_in + fan_out))`,
    /// zero biases, slopes at `1/n`. Deterministic in `seed`.
    pub fn init_xavier(config: MlpConfig, seed: u64) -> Result<Self, NetError> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..config.layer_count() {
            let (fi, fo) = config.layer_shape(k);
            let limit = libm::sqrt(6.0 / (fi + fo) as f64);
            for w in &mut params.values[config.weight_range(k)] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn weights(&self, k: usize) -> &[f64] {
        &self.values[self.config.weight_range(k)]
    }

    pub fn bias(&self, k: usize) -> &[f64] {
        &self.values[self.config.bias_range(k)]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.values[self.config.slope_range()]
    }

    /// Plain evaluation at one input point.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        forward_generic(&self.config, &self.values, x)
    }
}

/// `tanh(n * a * z)`.
pub fn adaptive_tanh<T: Real>(a: T, n: f64, z: T) -> T {
    (a * n * z).tanh()
}

/// Evaluates the network over any [`Real`]; with tape variables for `params`
/// and `x` the outputs are differentiable with respect to both.
pub fn forward_generic<T: Real>(
    config: &MlpConfig,
    params: &[T],
    x: &[T],
) -> Result<Vec<T>, NetError> {
    if params.len() != config.param_count() {
        return Err(NetError::ShapeMismatch {
            expected: config.param_count(),
            got: params.len(),
        });
    }
    if x.len() != config.input_width {
        return Err(NetError::ShapeMismatch {
            expected: config.input_width,
            got: x.len(),
        });
    }
    let slopes = &params[config.slope_range()];
    let mut h: Vec<T> = x.to_vec();
    for k in 0..config.layer_count() {
        let (fi, fo) = config.layer_shape(k);
        let w = &params[config.weight_range(k)];
        let b = &params[config.bias_range(k)];
        let mut next = Vec::with_capacity(fo);
        for r in 0..fo {
            let row = &w[r * fi..(r + 1) * fi];
            let mut z = b[r];
            for (wi, hi) in row.iter().zip(&h) {
                z = z + *wi * *hi;
            }
            next.push(if k < config.hidden_layers {
                adaptive_tanh(slopes[k], config.activation_scale, z)
            } else {
                z
            });
        }
        h = next;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Var};

    #[test]
    fn layout_matches_default_architecture() {
        let c = MlpConfig::displacement();
        assert_eq!(c.param_count(), (2 * 30 + 30) + 3 * (900 + 30) + (90 + 3) + 4);
        assert_eq!(MlpConfig::modulus().param_count(), 90 + 2790 + 31 + 4);
        assert_eq!(c.weight_range(1).start, 90);
        assert_eq!(c.slope_range().len(), 4);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = MlpConfig::modulus();
        c.hidden_layers = 0;
        assert!(NetworkParams::zeros(c).is_err());
        let mut c = MlpConfig::modulus();
        c.hidden_width = 0;
        assert!(c.validate().is_err());
        assert!(NetworkParams::from_values(MlpConfig::modulus(), alloc::vec![0.0; 3]).is_err());
    }

    #[test]
    fn xavier_is_deterministic_with_zero_biases() {
        let c = MlpConfig::displacement();
        let a = NetworkParams::init_xavier(c, 7).unwrap();
        let b = NetworkParams::init_xavier(c, 7).unwrap();
        assert_eq!(a.values(), b.values());
        let d = NetworkParams::init_xavier(c, 8).unwrap();
        assert_ne!(a.values(), d.values());
        for k in 0..c.layer_count() {
            assert!(a.bias(k).iter().all(|&v| v == 0.0));
            let (fi, fo) = c.layer_shape(k);
            let lim = libm::sqrt(6.0 / (fi + fo) as f64);
            assert!(a.weights(k).iter().all(|w| w.abs() < lim));
        }
        assert!(a.slopes().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn xavier_variance_monte_carlo() {
        // fan_in = 2, fan_out = 30 -> variance 2 / 32.
        let c = MlpConfig {
            input_width: 2,
            hidden_layers: 1,
            hidden_width: 30,
            output_width: 1,
            activation_scale: 1.0,
        };
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut n = 0usize;
        let mut seed = 0;
        while n < 100_000 {
            let p = NetworkParams::init_xavier(c, seed).unwrap();
            for &w in p.weights(0) {
                sum += w;
                sq += w * w;
                n += 1;
            }
            seed += 1;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((var / 0.0625 - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let c = MlpConfig::displacement();
        let mut p = NetworkParams::zeros(c).unwrap();
        let r = c.bias_range(c.hidden_layers);
        p.values_mut()[r].copy_from_slice(&[0.1, -0.2, 0.3]);
        for x in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            assert_eq!(p.forward(&x).unwrap(), alloc::vec![0.1, -0.2, 0.3]);
        }
    }

    #[test]
    fn unit_slope_reduces_to_plain_tanh() {
        let c = MlpConfig {
            input_width: 2,
            hidden_layers: 2,
            hidden_width: 5,
            output_width: 2,
            activation_scale: 1.0,
        };
        let p = NetworkParams::init_xavier(c, 3).unwrap();
        let x = [0.4, 0.7];
        let mut h = x.to_vec();
        for k in 0..c.layer_count() {
            let (fi, fo) = c.layer_shape(k);
            h = (0..fo)
                .map(|r| {
                    let z = p.bias(k)[r]
                        + (0..fi).map(|j| p.weights(k)[r * fi + j] * h[j]).sum::<f64>();
                    if k < c.hidden_layers {
                        libm::tanh(z)
                    } else {
                        z
                    }
                })
                .collect();
        }
        let out = p.forward(&x).unwrap();
        for (a, b) in out.iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_set_single_hidden_unit() {
        let c = MlpConfig {
            input_width: 2,
            hidden_layers: 1,
            hidden_width: 1,
            output_width: 1,
            activation_scale: 1.0,
        };
        let mut p = NetworkParams::zeros(c).unwrap();
        let v = p.values_mut();
        v[c.weight_range(0)].copy_from_slice(&[1.0, 0.0]);
        v[c.weight_range(1)].copy_from_slice(&[1.0]);
        let out = p.forward(&[1.0, 0.0]).unwrap()[0];
        assert!((out - 0.761_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn adaptive_tanh_examples() {
        assert_eq!(adaptive_tanh(1.0, 1.0, 0.0), 0.0);
        assert!((adaptive_tanh(1.0, 1.0, 20.0) - 1.0).abs() < 1e-12);
        let tape = Tape::new();
        let z = tape.leaf(0.0);
        let a = tape.constant(2.0);
        let y: Var<'_> = adaptive_tanh(a, 1.0, z);
        assert_eq!(y.grad(&[z]).unwrap()[0], 2.0);
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let c = MlpConfig::modulus();
        let p = NetworkParams::zeros(c).unwrap();
        assert!(matches!(
            p.forward(&[0.0, 0.0, 0.0]),
            Err(NetError::ShapeMismatch { .. })
        ));
        assert!(forward_generic(&c, &[0.0; 4], &[0.0, 0.0]).is_err());
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv2d_backward, conv2d_forward, dense, dense_backward, maxpool2x2, maxpool2x2_backward, relu,
    relu_backward, LayerGrad,
};
use super::Tensor;
use crate::error::{ensure, Result};

/// A layer viewed as a function of its input and an ordered parameter list.
pub trait Differentiable {
    fn params(&self) -> Vec<Tensor>;
    fn forward(&self, input: &Tensor, params: &[Tensor]) -> Result<Tensor>;
    /// Gradients with `d_params` in the same order as [`Differentiable::params`].
    fn backward(&self, input: &Tensor, params: &[Tensor], upstream: &Tensor) -> Result<LayerGrad>;
}

pub struct Conv2dLayer {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Differentiable for Conv2dLayer {
    fn params(&self) -> Vec<Tensor> {
        vec![self.kernels.clone(), self.bias.clone()]
    }

    fn forward(&self, input: &Tensor, params: &[Tensor]) -> Result<Tensor> {
        conv2d_forward(input, &params[0], &params[1], self.stride, self.padding)
    }

    fn backward(&self, input: &Tensor, params: &[Tensor], upstream: &Tensor) -> Result<LayerGrad> {
        conv2d_backward(input, &params[0], upstream, self.stride, self.padding)
    }
}

pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Differentiable for DenseLayer {
    fn params(&self) -> Vec<Tensor> {
        vec![self.weights.clone(), self.bias.clone()]
    }

    fn forward(&self, input: &Tensor, params: &[Tensor]) -> Result<Tensor> {
        dense(input, &params[0], &params[1])
    }

    fn backward(&self, input: &Tensor, params: &[Tensor], upstream: &Tensor) -> Result<LayerGrad> {
        dense_backward(input, &params[0], upstream)
    }
}

pub struct ReluLayer;

impl Differentiable for ReluLayer {
    fn params(&self) -> Vec<Tensor> {
        Vec::new()
    }

    fn forward(&self, input: &Tensor, _: &[Tensor]) -> Result<Tensor> {
        Ok(relu(input))
    }

    fn backward(&self, input: &Tensor, _: &[Tensor], upstream: &Tensor) -> Result<LayerGrad> {
        Ok(LayerGrad {
            d_input: relu_backward(input, upstream)?,
            d_params: Vec::new(),
        })
    }
}

pub struct MaxPoolLayer;

impl Differentiable for MaxPoolLayer {
    fn params(&self) -> Vec<Tensor> {
        Vec::new()
    }

    fn forward(&self, input: &Tensor, _: &[Tensor]) -> Result<Tensor> {
        maxpool2x2(input)
    }

    fn backward(&self, input: &Tensor, _: &[Tensor], upstream: &Tensor) -> Result<LayerGrad> {
        Ok(LayerGrad {
            d_input: maxpool2x2_backward(input, upstream)?,
            d_params: Vec::new(),
        })
    }
}

/// Relative error with a small absolute floor so exact zeros compare cleanly.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between the analytic backward pass and central
/// differences, over every input entry and every parameter entry.
///
/// The scalar probed is `Σ r ⊙ forward(x)` with a fixed pseudo-random `r`.
pub fn gradient_check(layer: &dyn Differentiable, input: &Tensor, eps: f64) -> Result<f64> {
    ensure!(eps > 0.0 && eps <= 1e-2, "eps must lie in (0, 1e-2], got {eps}");
    let params = layer.params();
    let out = layer.forward(input, &params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let probe: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream = Tensor::new(out.shape().to_vec(), probe.clone())?;
    let objective = |x: &Tensor, p: &[Tensor]| -> Result<f64> {
        let y = layer.forward(x, p)?;
        Ok(y.data().iter().zip(&probe).map(|(a, b)| a * b).sum())
    };
    let grad = layer.backward(input, &params, &upstream)?;
    ensure!(
        grad.d_params.len() == params.len(),
        "layer returned {} parameter gradients for {} parameters",
        grad.d_params.len(),
        params.len()
    );

    let mut worst: f64 = 0.0;
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + eps;
        let plus = objective(&x, &params)?;
        x.data_mut()[i] = orig - eps;
        let minus = objective(&x, &params)?;
        x.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(grad.d_input.data()[i], numeric));
    }
    let mut probe_params = params.clone();
    for (k, (_, analytic)) in grad.d_params.iter().enumerate() {
        for i in 0..probe_params[k].len() {
            let orig = probe_params[k].data()[i];
            probe_params[k].data_mut()[i] = orig + eps;
            let plus = objective(input, &probe_params)?;
            probe_params[k].data_mut()[i] = orig - eps;
            let minus = objective(input, &probe_params)?;
            probe_params[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_layer_is_exact() {
        let layer = DenseLayer {
            weights: seeded(&[3, 5], 1),
            bias: seeded(&[3], 2),
        };
        let err = gradient_check(&layer, &seeded(&[5], 3), 1e-5).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn conv_on_seeded_input() {
        let layer = Conv2dLayer {
            kernels: seeded(&[1, 1, 2, 2], 11),
            bias: seeded(&[1], 12),
            stride: 1,
            padding: 0,
        };
        let err = gradient_check(&layer, &seeded(&[1, 4, 4], 13), 1e-5).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn relu_away_from_kink() {
        let mut x = seeded(&[12], 21);
        for v in x.data_mut() {
            if v.abs() <= 1e-4 {
                *v = 0.5;
            }
        }
        let err = gradient_check(&ReluLayer, &x, 1e-5).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn rejects_bad_eps() {
        assert!(gradient_check(&ReluLayer, &seeded(&[2], 1), 0.0).is_err());
        assert!(gradient_check(&ReluLayer, &seeded(&[2], 1), 0.5).is_err());
    }
}

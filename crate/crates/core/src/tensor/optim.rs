use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
}

/// A named network parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
    /// Frozen parameters are skipped entirely by [`sgd_step`].
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: Tensor) -> Self {
        Param {
            name: name.into(),
            kind,
            value,
            trainable: true,
        }
    }
}

/// `lambda · Σ w²` over weight tensors. Biases do not contribute.
pub fn l2_penalty(params: &[Param], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda
        * params
            .iter()
            .filter(|p| p.kind == ParamKind::Weight)
            .map(|p| p.value.sum_squares())
            .sum::<f64>()
}

/// One plain SGD update with L2 decay applied to weights:
/// `w ← w − lr·(g + 2·lambda·w)`, `b ← b − lr·g`.
pub fn sgd_step(params: &mut [Param], grads: &[Tensor], learning_rate: f64, lambda: f64) -> Result<()> {
    ensure!(
        params.len() == grads.len(),
        "sgd_step got {} gradients for {} parameters",
        grads.len(),
        params.len()
    );
    for (p, g) in params.iter().zip(grads) {
        ensure!(
            p.value.shape() == g.shape(),
            "gradient for {} has shape {:?}, parameter is {:?}",
            p.name,
            g.shape(),
            p.value.shape()
        );
    }
    for (p, g) in params.iter_mut().zip(grads) {
        if !p.trainable {
            continue;
        }
        let decay = match p.kind {
            ParamKind::Weight => 2.0 * lambda,
            ParamKind::Bias => 0.0,
        };
        for (w, &gv) in p.value.data_mut().iter_mut().zip(g.data()) {
            *w -= learning_rate * (gv + decay * *w);
        }
    }
    Ok(())
}

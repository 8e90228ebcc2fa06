use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::tensor::{
    conv2d_backward, conv2d_forward, dense, dense_backward, maxpool2x2, maxpool2x2_backward, relu,
    relu_backward, softmax, Param, ParamKind, Tensor,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
    Dense {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetKind {
    Classifier,
    Detector { grid: usize, boxes: usize, classes: usize },
}

/// Everything needed to rebuild a network's shape, minus its parameter values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: NetKind,
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Output shape of every layer, validating that consecutive layers compose.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input.clone()];
        let mut names: Vec<&str> = Vec::new();
        for layer in &self.layers {
            let cur = shapes.last().unwrap().clone();
            let next = match layer {
                LayerSpec::Conv2d {
                    name,
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    ensure!(cur.len() == 3, "{name} expects CxHxW input, got {cur:?}");
                    ensure!(cur[0] == *in_channels, "{name} expects {in_channels} channels, got {}", cur[0]);
                    ensure!(*stride >= 1 && *kernel >= 1, "{name} has zero kernel or stride");
                    ensure!(
                        *kernel <= cur[1] + 2 * padding && *kernel <= cur[2] + 2 * padding,
                        "{name} kernel larger than its padded input"
                    );
                    names.push(name);
                    vec![
                        *out_channels,
                        (cur[1] + 2 * padding - kernel) / stride + 1,
                        (cur[2] + 2 * padding - kernel) / stride + 1,
                    ]
                }
                LayerSpec::Relu | LayerSpec::Softmax => cur,
                LayerSpec::MaxPool2 => {
                    ensure!(
                        cur.len() == 3 && cur[1] % 2 == 0 && cur[2] % 2 == 0,
                        "maxpool needs even CxHxW input, got {cur:?}"
                    );
                    vec![cur[0], cur[1] / 2, cur[2] / 2]
                }
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::Dense { name, inputs, outputs } => {
                    ensure!(
                        cur.len() == 1 && cur[0] == *inputs,
                        "{name} expects a {inputs}-vector, got {cur:?}"
                    );
                    names.push(name);
                    vec![*outputs]
                }
            };
            shapes.push(next);
        }
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        ensure!(sorted.len() == names.len(), "layer names must be unique");
        if let Some(pos) = self.layers.iter().position(|l| *l == LayerSpec::Softmax) {
            ensure!(pos + 1 == self.layers.len(), "softmax may only be the final layer");
        }
        Ok(shapes)
    }

    /// Compact single-line form used in error messages.
    pub fn summary(&self) -> String {
        let layers: Vec<String> = self
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv2d {
                    out_channels, kernel, ..
                } => format!("conv{out_channels}@{kernel}x{kernel}"),
                LayerSpec::Relu => "relu".into(),
                LayerSpec::MaxPool2 => "pool".into(),
                LayerSpec::Flatten => "flatten".into(),
                LayerSpec::Dense { inputs, outputs, .. } => format!("dense{inputs}->{outputs}"),
                LayerSpec::Softmax => "softmax".into(),
            })
            .collect();
        format!("{:?} input {:?} [{}]", self.kind, self.input, layers.join(" "))
    }
}

/// An ordered layer stack with named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<Param>,
    /// Class names by zero-based output index.
    pub labels: Vec<String>,
}

/// Gradients for every parameter, aligned with [`Network::params`].
pub type Gradients = Vec<Tensor>;

impl Network {
    /// Builds the network with He-normal weights from `seed` and zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for layer in &arch.layers {
            let (name, wshape, fan_in, outputs) = match layer {
                LayerSpec::Conv2d {
                    name,
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => (
                    name,
                    vec![*out_channels, *in_channels, *kernel, *kernel],
                    in_channels * kernel * kernel,
                    *out_channels,
                ),
                LayerSpec::Dense { name, inputs, outputs } => (name, vec![*outputs, *inputs], *inputs, *outputs),
                _ => continue,
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let n: usize = wshape.iter().product();
            let w: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            params.push(Param::new(format!("{name}.weight"), ParamKind::Weight, Tensor::new(wshape, w)?));
            params.push(Param::new(format!("{name}.bias"), ParamKind::Bias, Tensor::zeros(&[outputs])));
        }
        Ok(Network {
            arch,
            params,
            labels: Vec::new(),
        })
    }

    /// Assembles a network from explicit parameters (e.g. a checkpoint).
    pub fn from_parts(arch: Architecture, params: Vec<Param>, labels: Vec<String>) -> Result<Self> {
        let template = Network::new(arch.clone(), 0)?;
        ensure!(
            template.params.len() == params.len(),
            "architecture needs {} parameters, got {}",
            template.params.len(),
            params.len()
        );
        for (t, p) in template.params.iter().zip(&params) {
            ensure!(
                t.name == p.name && t.value.shape() == p.value.shape() && t.kind == p.kind,
                "parameter {} {:?} does not match architecture slot {} {:?}",
                p.name,
                p.value.shape(),
                t.name,
                t.value.shape()
            );
        }
        Ok(Network { arch, params, labels })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn kind(&self) -> NetKind {
        self.arch.kind
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.arch.input
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn output_len(&self) -> usize {
        self.arch.shapes().expect("validated").last().unwrap().iter().product()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    fn weight_bias(&self, name: &str) -> (&Tensor, &Tensor) {
        let w = &self.param(&format!("{name}.weight")).expect("validated").value;
        let b = &self.param(&format!("{name}.bias")).expect("validated").value;
        (w, b)
    }

    fn param_index(&self, name: &str) -> usize {
        self.params.iter().position(|p| p.name == name).expect("validated")
    }

    /// Number of layers evaluated by [`Network::forward_trace`] (a final softmax is left out).
    fn traced_layers(&self) -> usize {
        match self.arch.layers.last() {
            Some(LayerSpec::Softmax) => self.arch.layers.len() - 1,
            _ => self.arch.layers.len(),
        }
    }

    /// Activations at every layer boundary, starting with the input and ending
    /// with the pre-softmax output.
    pub fn forward_trace(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        ensure!(
            input.shape() == self.arch.input.as_slice(),
            "network expects input {:?}, got {:?}",
            self.arch.input,
            input.shape()
        );
        let mut acts = Vec::with_capacity(self.traced_layers() + 1);
        acts.push(input.clone());
        for layer in &self.arch.layers[..self.traced_layers()] {
            let x = acts.last().unwrap();
            let y = match layer {
                LayerSpec::Conv2d {
                    name, stride, padding, ..
                } => {
                    let (w, b) = self.weight_bias(name);
                    conv2d_forward(x, w, b, *stride, *padding)?
                }
                LayerSpec::Relu => relu(x),
                LayerSpec::MaxPool2 => maxpool2x2(x)?,
                LayerSpec::Flatten => x.clone().reshape(&[x.len()])?,
                LayerSpec::Dense { name, .. } => {
                    let (w, b) = self.weight_bias(name);
                    dense(x, w, b)?
                }
                LayerSpec::Softmax => softmax(x),
            };
            acts.push(y);
        }
        Ok(acts)
    }

    /// Raw network output before any final softmax.
    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(input)?.pop().expect("input is always traced"))
    }

    /// Network output, with the final softmax applied when the stack has one.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let out = self.logits(input)?;
        Ok(match self.arch.layers.last() {
            Some(LayerSpec::Softmax) => softmax(&out),
            _ => out,
        })
    }

    /// Back-propagates `d_out` (gradient w.r.t. the traced output) through the
    /// stack, returning parameter gradients and the input gradient.
    pub fn backward(&self, acts: &[Tensor], d_out: &Tensor) -> Result<(Gradients, Tensor)> {
        self.backward_to(acts, d_out, 0)
    }

    /// Parameter gradients only. Back-propagation stops at the lowest layer
    /// holding a trainable parameter; gradients of frozen parameters are zero.
    pub fn param_gradients(&self, acts: &[Tensor], d_out: &Tensor) -> Result<Gradients> {
        let lowest = self
            .arch
            .layers
            .iter()
            .position(|l| match l {
                LayerSpec::Conv2d { name, .. } | LayerSpec::Dense { name, .. } => self
                    .params
                    .iter()
                    .any(|p| p.trainable && p.name.strip_prefix(name.as_str()).is_some_and(|r| r.starts_with('.'))),
                _ => false,
            })
            .unwrap_or(self.arch.layers.len());
        let (mut grads, _) = self.backward_to(acts, d_out, lowest)?;
        for (g, p) in grads.iter_mut().zip(&self.params) {
            if !p.trainable {
                g.scale(0.0);
            }
        }
        Ok(grads)
    }

    fn backward_to(&self, acts: &[Tensor], d_out: &Tensor, lowest: usize) -> Result<(Gradients, Tensor)> {
        let n = self.traced_layers();
        ensure!(acts.len() == n + 1, "trace has {} activations, expected {}", acts.len(), n + 1);
        ensure!(
            d_out.shape() == acts[n].shape(),
            "output gradient {:?} does not match output {:?}",
            d_out.shape(),
            acts[n].shape()
        );
        let mut grads: Gradients = self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        let mut up = d_out.clone();
        for (i, layer) in self.arch.layers[..n].iter().enumerate().rev() {
            if i < lowest {
                break;
            }
            let x = &acts[i];
            up = match layer {
                LayerSpec::Conv2d {
                    name, stride, padding, ..
                } => {
                    let (w, _) = self.weight_bias(name);
                    let g = conv2d_backward(x, w, &up, *stride, *padding)?;
                    self.store(&mut grads, name, g.d_params);
                    g.d_input
                }
                LayerSpec::Relu => relu_backward(x, &up)?,
                LayerSpec::MaxPool2 => maxpool2x2_backward(x, &up)?,
                LayerSpec::Flatten => up.reshape(x.shape())?,
                LayerSpec::Dense { name, .. } => {
                    let (w, _) = self.weight_bias(name);
                    let g = dense_backward(x, w, &up)?;
                    self.store(&mut grads, name, g.d_params);
                    g.d_input
                }
                LayerSpec::Softmax => unreachable!("softmax is only ever the untraced final layer"),
            };
        }
        Ok((grads, up))
    }

    fn store(&self, grads: &mut Gradients, layer: &str, d_params: Vec<(String, Tensor)>) {
        for (role, g) in d_params {
            grads[self.param_index(&format!("{layer}.{role}"))] = g;
        }
    }

    /// Flags every parameter whose name starts with `prefix`; returns how many matched.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) -> Result<usize> {
        let mut matched = 0;
        for p in &mut self.params {
            if p.name.starts_with(prefix) {
                p.trainable = trainable;
                matched += 1;
            }
        }
        if matched == 0 {
            return Err(Error::contract(format!("no parameter matches prefix {prefix:?}")));
        }
        Ok(matched)
    }

    /// Copies parameters whose names start with `prefix` and whose names and
    /// shapes match in `other`; returns the names copied.
    pub fn copy_matching_params(&mut self, other: &Network, prefix: &str) -> Vec<String> {
        let mut copied = Vec::new();
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            if let Some(src) = other.param(&p.name) {
                if src.value.shape() == p.value.shape() {
                    p.value = src.value.clone();
                    copied.push(p.name.clone());
                }
            }
        }
        copied
    }
}

fn conv(name: &str, in_channels: usize, out_channels: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        name: name.into(),
        in_channels,
        out_channels,
        kernel: 3,
        stride: 1,
        padding: 1,
    }
}

fn fc(name: &str, inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::Dense {
        name: name.into(),
        inputs,
        outputs,
    }
}

/// conv(8@3×3)–relu–pool–conv(16@3×3)–relu–pool–flatten–dense(64)–relu–dense(C)–softmax
/// over a one-channel `input_side`² image.
pub fn classifier_architecture(num_classes: usize, input_side: usize) -> Result<Architecture> {
    ensure!(
        input_side >= 16 && input_side.is_multiple_of(4),
        "classifier input side must be >= 16 and divisible by 4, got {input_side}"
    );
    ensure!(num_classes >= 1, "classifier needs at least one class");
    let flat = 16 * (input_side / 4) * (input_side / 4);
    Ok(Architecture {
        kind: NetKind::Classifier,
        input: vec![1, input_side, input_side],
        layers: vec![
            conv("conv1", 1, 8),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            conv("conv2", 8, 16),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
            fc("fc1", flat, 64),
            LayerSpec::Relu,
            fc("fc2", 64, num_classes),
            LayerSpec::Softmax,
        ],
    })
}

pub fn build_classifier(num_classes: usize, input_side: usize, seed: u64) -> Result<Network> {
    Network::new(classifier_architecture(num_classes, input_side)?, seed)
}

/// Three conv/pool stages over an RGB `input_side`² frame, then a dense head
/// producing the S×S×(5B+C) grid as a flat vector.
pub fn detector_architecture(cfg: &super::DetectorConfig, input_side: usize) -> Result<Architecture> {
    cfg.validate()?;
    ensure!(
        input_side >= 16 && input_side.is_multiple_of(8),
        "detector input side must be >= 16 and divisible by 8, got {input_side}"
    );
    let flat = 16 * (input_side / 8) * (input_side / 8);
    Ok(Architecture {
        kind: NetKind::Detector {
            grid: cfg.grid,
            boxes: cfg.boxes,
            classes: cfg.classes,
        },
        input: vec![3, input_side, input_side],
        layers: vec![
            conv("conv1", 3, 8),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            conv("conv2", 8, 16),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            conv("conv3", 16, 16),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
            fc("fc1", flat, 64),
            LayerSpec::Relu,
            fc("fc2", 64, cfg.grid * cfg.grid * cfg.cell_len()),
        ],
    })
}

pub fn build_detector(cfg: &super::DetectorConfig, input_side: usize, seed: u64) -> Result<Network> {
    Network::new(detector_architecture(cfg, input_side)?, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{cross_entropy, cross_entropy_grad, gradient_check, sgd_step, Differentiable, LayerGrad};

    #[test]
    fn classifier_head_size() {
        let net = build_classifier(6, 32, 1).unwrap();
        let w = net.param("fc2.weight").unwrap();
        assert_eq!(w.value.shape(), &[6, 64]);
        assert_eq!(w.value.len() + net.param("fc2.bias").unwrap().value.len(), 390);
        assert!(build_classifier(6, 30, 1).is_err());
        assert!(build_classifier(6, 12, 1).is_err());
    }

    #[test]
    fn probabilities_and_seeding() {
        let net = build_classifier(6, 32, 7).unwrap();
        let x = Tensor::filled(&[1, 32, 32], 0.3);
        let p = net.forward(&x).unwrap();
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert_eq!(build_classifier(6, 32, 7).unwrap(), net);
        assert_ne!(build_classifier(6, 32, 8).unwrap(), net);
        assert!(net.param("fc2.bias").unwrap().value.data().iter().all(|&b| b == 0.0));
        assert!(net.forward(&Tensor::zeros(&[1, 16, 16])).is_err());
    }

    #[test]
    fn freezing_everything_but_head() {
        let mut net = build_classifier(6, 32, 1).unwrap();
        net.set_trainable("", false).unwrap();
        net.set_trainable("fc2", true).unwrap();
        assert_eq!(net.trainable_parameter_count(), 390);
        assert!(net.set_trainable("conv9", false).is_err());
    }

    #[test]
    fn frozen_convs_untouched_by_a_step() {
        let mut net = build_classifier(3, 16, 2).unwrap();
        assert_eq!(net.set_trainable("conv", false).unwrap(), 4);
        let before = net.clone();
        let x = Tensor::new(vec![1, 16, 16], (0..256).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let acts = net.forward_trace(&x).unwrap();
        let probs = softmax(acts.last().unwrap());
        let (grads, _) = net.backward(&acts, &cross_entropy_grad(&probs, 1).unwrap()).unwrap();
        sgd_step(net.params_mut(), &grads, 0.1, 0.01).unwrap();
        for (a, b) in before.params().iter().zip(net.params()) {
            if a.name.starts_with("conv") {
                assert_eq!(a.value, b.value);
            } else if a.name == "fc2.weight" {
                assert_ne!(a.value, b.value);
            }
        }
        net.set_trainable("conv", true).unwrap();
        let snapshot = net.clone();
        sgd_step(net.params_mut(), &grads, 0.1, 0.0).unwrap();
        assert_ne!(snapshot.param("conv1.weight"), net.param("conv1.weight"));
    }

    #[test]
    fn param_gradients_match_backward_where_trainable() {
        let mut net = build_classifier(3, 16, 4).unwrap();
        net.set_trainable("conv1", false).unwrap();
        let x = Tensor::new(vec![1, 16, 16], (0..256).map(|i| (i % 11) as f64 / 11.0).collect()).unwrap();
        let acts = net.forward_trace(&x).unwrap();
        let d = cross_entropy_grad(&softmax(acts.last().unwrap()), 0).unwrap();
        let (full, _) = net.backward(&acts, &d).unwrap();
        let partial = net.param_gradients(&acts, &d).unwrap();
        for ((p, f), g) in net.params().iter().zip(&full).zip(&partial) {
            if p.trainable {
                assert_eq!(f, g, "{}", p.name);
            } else {
                assert!(g.data().iter().all(|&v| v == 0.0), "{}", p.name);
            }
        }
    }

    /// Whole-network check: loss = CE(softmax(logits), target) w.r.t. every parameter.
    struct WholeNet(Network, usize);

    impl Differentiable for WholeNet {
        fn params(&self) -> Vec<Tensor> {
            self.0.params().iter().map(|p| p.value.clone()).collect()
        }

        fn forward(&self, input: &Tensor, params: &[Tensor]) -> Result<Tensor> {
            let mut net = self.0.clone();
            for (p, v) in net.params_mut().iter_mut().zip(params) {
                p.value = v.clone();
            }
            let probs = net.forward(input)?;
            Ok(Tensor::from_vec(vec![cross_entropy(&probs, self.1)?]))
        }

        fn backward(&self, input: &Tensor, params: &[Tensor], upstream: &Tensor) -> Result<LayerGrad> {
            let mut net = self.0.clone();
            for (p, v) in net.params_mut().iter_mut().zip(params) {
                p.value = v.clone();
            }
            let acts = net.forward_trace(input)?;
            let mut d = cross_entropy_grad(&softmax(acts.last().unwrap()), self.1)?;
            d.scale(upstream.data()[0]);
            let (grads, d_input) = net.backward(&acts, &d)?;
            Ok(LayerGrad {
                d_input,
                d_params: grads.into_iter().map(|g| (String::new(), g)).collect(),
            })
        }
    }

    #[test]
    fn whole_classifier_gradient() {
        let net = build_classifier(3, 16, 5).unwrap();
        let x = Tensor::new(vec![1, 16, 16], (0..256).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect()).unwrap();
        let err = gradient_check(&WholeNet(net, 2), &x, 1e-5).unwrap();
        assert!(err <= 1e-4, "{err}");
    }
}

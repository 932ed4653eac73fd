use super::block::{residual_block_backward, residual_block_forward, BlockCache, BlockParams, ConvParams};
use super::layers::{
    conv_backward_raw, conv_forward_raw, dense_backward, dense_forward, dropout_backward, dropout_forward, flatten,
    relu_backward, relu_forward, softmax_rows, softmax_xent_backward, softmax_xent_forward, Mode,
};
use super::spec::{BuildConfig, Flow, LayerSpec, ModelSpec};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{glorot_uniform, Rng, Tensor};

/// Instantiated parameters of one layer.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layer {
    Conv { params: ConvParams, dilation: usize },
    Relu,
    Dropout { rate: f64 },
    Dense { weight: Tensor, bias: Tensor },
    Flatten,
    Residual { params: BlockParams, dilation: usize, dropout_rate: f64 },
}

/// A model spec together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    pub(crate) layers: Vec<Layer>,
    init_seed: u64,
    build: Option<BuildConfig>,
}

#[derive(Clone, Debug)]
enum LayerCache {
    Conv(Tensor),
    Relu(Tensor),
    Dropout(Tensor),
    Dense(Tensor),
    Flatten(Vec<usize>),
    Residual(Box<BlockCache>),
}

/// Everything one forward pass produced; consumed by [`Model::backward`].
#[derive(Debug)]
pub struct ForwardPass {
    pub logits: Tensor,
    pub probs: Tensor,
    caches: Vec<LayerCache>,
}

impl ForwardPass {
    /// Sign of every ReLU input in the pass, in layer order. Two passes with
    /// equal patterns lie on the same linear piece of every activation.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for cache in &self.caches {
            match cache {
                LayerCache::Relu(input) => out.extend(input.data().iter().map(|&v| v > 0.0)),
                LayerCache::Residual(block) => {
                    for input in block.relu_inputs() {
                        out.extend(input.data().iter().map(|&v| v > 0.0));
                    }
                }
                _ => {}
            }
        }
        out
    }
}

fn conv_params(rng: &mut Rng, k: usize, cin: usize, cout: usize) -> Result<ConvParams> {
    Ok(ConvParams {
        kernel: glorot_uniform(rng, k * cin, k * cout, &[k, cin, cout])?,
        bias: Tensor::zeros(&[cout]),
    })
}

impl Model {
    /// Glorot-uniform weights, zero biases, drawn from `Rng::new(seed)`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let flows = spec.flows()?;
        let mut rng = Rng::new(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer, flow) in spec.layers.iter().zip(flows) {
            layers.push(match (*layer, flow) {
                (LayerSpec::DilatedCausalConv { out_channels, kernel_size, dilation }, Flow::Sequence { channels, .. }) => {
                    Layer::Conv {
                        params: conv_params(&mut rng, kernel_size, channels, out_channels)?,
                        dilation,
                    }
                }
                (
                    LayerSpec::ResidualBlock { out_channels, kernel_size, dilation, dropout_rate },
                    Flow::Sequence { channels, .. },
                ) => Layer::Residual {
                    params: BlockParams {
                        conv1: conv_params(&mut rng, kernel_size, channels, out_channels)?,
                        conv2: conv_params(&mut rng, kernel_size, out_channels, out_channels)?,
                        downsample: if channels != out_channels {
                            Some(conv_params(&mut rng, 1, channels, out_channels)?)
                        } else {
                            None
                        },
                    },
                    dilation,
                    dropout_rate,
                },
                (LayerSpec::Dense { units }, Flow::Vector(d)) => Layer::Dense {
                    weight: glorot_uniform(&mut rng, d, units, &[d, units])?,
                    bias: Tensor::zeros(&[units]),
                },
                (LayerSpec::Relu, _) => Layer::Relu,
                (LayerSpec::Dropout { rate }, _) => Layer::Dropout { rate },
                (LayerSpec::Flatten, _) => Layer::Flatten,
                _ => unreachable!("flows() validated the stack"),
            });
        }
        Ok(Self {
            spec,
            layers,
            init_seed: seed,
            build: None,
        })
    }

    /// Builds a `ModelSpec` from a builder configuration and initializes it.
    pub fn from_build(build: BuildConfig, seed: u64) -> Result<Self> {
        let spec = build.kind.build(&build.arch)?;
        let mut model = Self::new(spec, seed)?;
        model.build = Some(build);
        Ok(model)
    }

    pub fn build_config(&self) -> Option<&BuildConfig> {
        self.build.as_ref()
    }

    pub(crate) fn set_build_config(&mut self, build: Option<BuildConfig>) {
        self.build = build;
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Parameter names in the canonical order shared by
    /// [`parameters`](Self::parameters) and [`backward`](Self::backward).
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            match layer {
                Layer::Conv { .. } => names.extend([format!("{p}.kernel"), format!("{p}.bias")]),
                Layer::Dense { .. } => names.extend([format!("{p}.weight"), format!("{p}.bias")]),
                Layer::Residual { params, .. } => {
                    for sub in ["conv1", "conv2"] {
                        names.extend([format!("{p}.{sub}.kernel"), format!("{p}.{sub}.bias")]);
                    }
                    if params.downsample.is_some() {
                        names.extend([format!("{p}.downsample.kernel"), format!("{p}.downsample.bias")]);
                    }
                }
                _ => {}
            }
        }
        names
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { params, .. } => out.extend([&params.kernel, &params.bias]),
                Layer::Dense { weight, bias } => out.extend([weight, bias]),
                Layer::Residual { params, .. } => {
                    out.extend([&params.conv1.kernel, &params.conv1.bias, &params.conv2.kernel, &params.conv2.bias]);
                    if let Some(d) = &params.downsample {
                        out.extend([&d.kernel, &d.bias]);
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { params, .. } => out.extend([&mut params.kernel, &mut params.bias]),
                Layer::Dense { weight, bias } => out.extend([weight, bias]),
                Layer::Residual { params, .. } => {
                    let BlockParams { conv1, conv2, downsample } = params;
                    out.extend([&mut conv1.kernel, &mut conv1.bias, &mut conv2.kernel, &mut conv2.bias]);
                    if let Some(d) = downsample {
                        out.extend([&mut d.kernel, &mut d.bias]);
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        match *x.shape() {
            [_, t, c] if t == self.spec.input_length && c == self.spec.input_channels => Ok(()),
            ref s => Err(dim_err(format!(
                "model expects [B, {}, {}] input, got {s:?}",
                self.spec.input_length, self.spec.input_channels
            ))),
        }
    }

    fn run_layers(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut Rng,
        stop_at_flatten: bool,
        mut caches: Option<&mut Vec<LayerCache>>,
    ) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            if stop_at_flatten && matches!(layer, Layer::Flatten) {
                break;
            }
            let (next, cache) = match layer {
                Layer::Conv { params, dilation } => {
                    let y = conv_forward_raw(&h, &params.kernel, &params.bias, *dilation)?;
                    (y, LayerCache::Conv(h))
                }
                Layer::Relu => (relu_forward(&h), LayerCache::Relu(h)),
                Layer::Dropout { rate } => {
                    let (y, mask) = dropout_forward(&h, *rate, rng, mode)?;
                    (y, LayerCache::Dropout(mask))
                }
                Layer::Dense { weight, bias } => {
                    let y = dense_forward(&h, weight, bias)?;
                    (y, LayerCache::Dense(h))
                }
                Layer::Flatten => (flatten(&h)?, LayerCache::Flatten(h.shape().to_vec())),
                Layer::Residual { params, dilation, dropout_rate } => {
                    let (y, c) = residual_block_forward(&h, params, *dilation, *dropout_rate, rng, mode)?;
                    (y, LayerCache::Residual(Box::new(c)))
                }
            };
            if let Some(c) = caches.as_deref_mut() {
                c.push(cache);
            }
            h = next;
        }
        h.ensure_finite("model forward")
    }

    /// Forward pass over a `[B, T, C]` batch, keeping per-layer caches.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<ForwardPass> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let logits = self.run_layers(x, mode, rng, false, Some(&mut caches))?;
        let k = self.spec.num_classes;
        let probs = Tensor::from_parts(logits.shape().to_vec(), softmax_rows(logits.data(), k));
        Ok(ForwardPass { logits, probs, caches })
    }

    /// Inference-mode logits without caches.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.run_layers(x, Mode::Inference, &mut Rng::new(0), false, None)
    }

    /// Output of the convolutional stack (everything before `Flatten`) in
    /// inference mode, shaped `[B, T, C']`.
    pub fn sequence_features(&self, x: &Tensor) -> Result<Tensor> {
        self.run_layers(x, Mode::Inference, &mut Rng::new(0), true, None)
    }

    /// Mean cross-entropy of a batch under the given mode.
    pub fn loss(&self, x: &Tensor, labels: &[usize], mode: Mode, rng: &mut Rng) -> Result<f64> {
        let logits = self.run_layers(x, mode, rng, false, None)?;
        Ok(softmax_xent_forward(&logits, labels)?.0)
    }

    /// Gradients of the mean cross-entropy, one per parameter in
    /// [`parameter_names`](Self::parameter_names) order.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Vec<Tensor>> {
        if pass.caches.len() != self.layers.len() {
            return Err(dim_err("forward pass does not belong to this model"));
        }
        let mut g = softmax_xent_backward(&pass.probs, labels)?;
        let mut grads_rev: Vec<Tensor> = Vec::new();
        for (layer, cache) in self.layers.iter().zip(&pass.caches).rev() {
            g = match (layer, cache) {
                (Layer::Conv { params, dilation }, LayerCache::Conv(x)) => {
                    let (gx, gk, gb) = conv_backward_raw(x, &params.kernel, *dilation, &g)?;
                    grads_rev.extend([gb, gk]);
                    gx
                }
                (Layer::Relu, LayerCache::Relu(x)) => relu_backward(x, &g)?,
                (Layer::Dropout { .. }, LayerCache::Dropout(mask)) => dropout_backward(mask, &g)?,
                (Layer::Dense { weight, .. }, LayerCache::Dense(x)) => {
                    let d = dense_backward(x, weight, &g)?;
                    grads_rev.extend([d.grad_bias, d.grad_weight]);
                    d.grad_x
                }
                (Layer::Flatten, LayerCache::Flatten(shape)) => g.reshape(shape)?,
                (Layer::Residual { params, .. }, LayerCache::Residual(c)) => {
                    let bg = residual_block_backward(params, c, &g)?;
                    if let Some((k, b)) = bg.downsample {
                        grads_rev.extend([b, k]);
                    }
                    grads_rev.extend([bg.conv2.1, bg.conv2.0, bg.conv1.1, bg.conv1.0]);
                    bg.grad_x
                }
                _ => return Err(dim_err("cache does not match layer")),
            };
        }
        grads_rev.reverse();
        Ok(grads_rev)
    }

    /// Class probabilities in inference mode.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        let logits = self.logits(x)?;
        Ok(Tensor::from_parts(
            logits.shape().to_vec(),
            softmax_rows(logits.data(), self.spec.num_classes),
        ))
    }

    /// Arg-max class per sample, ties going to the lowest index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let probs = self.predict_proba(x)?;
        Ok(probs.data().chunks_exact(self.spec.num_classes).map(argmax).collect())
    }

    /// Replaces all parameters, checking shapes against the current ones.
    pub fn set_parameters(&mut self, values: Vec<Tensor>) -> Result<()> {
        let names = self.parameter_names();
        let mut slots = self.parameters_mut();
        if values.len() != slots.len() {
            return Err(dim_err(format!("expected {} parameter tensors, got {}", slots.len(), values.len())));
        }
        for ((slot, value), name) in slots.iter_mut().zip(&values).zip(&names) {
            if slot.shape() != value.shape() {
                return Err(Error::Shape {
                    name: name.clone(),
                    expected: slot.shape().to_vec(),
                    found: value.shape().to_vec(),
                });
            }
        }
        for (slot, value) in slots.into_iter().zip(values) {
            *slot = value;
        }
        Ok(())
    }
}

/// Index of the largest value; the first one wins on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{build_cnn_baseline, build_tcn, ArchConfig};
    use crate::nn::test_support::{jitter_biases, random_tensor, relative_error, EPS, REL_TOL};

    fn small_tcn() -> Model {
        let cfg = ArchConfig {
            input_length: 10,
            channels: 4,
            head_units: 6,
            num_classes: 3,
            ..Default::default()
        };
        Model::new(build_tcn(&cfg).unwrap(), 7).unwrap()
    }

    #[test]
    fn activation_pattern_covers_every_relu() {
        let model = small_tcn();
        let x = random_tensor(&mut Rng::new(1), &[2, 10, 1]);
        let pass = model.forward(&x, Mode::Inference, &mut Rng::new(0)).unwrap();
        // three blocks with three ReLU inputs of [2, 10, 4] each, then the head
        assert_eq!(pass.activation_pattern().len(), 3 * 3 * 2 * 10 * 4 + 2 * 6);
        let again = model.forward(&x, Mode::Inference, &mut Rng::new(0)).unwrap();
        assert_eq!(pass.activation_pattern(), again.activation_pattern());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.8, 0.1]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn single_layer_model_equals_layer() {
        let spec = ModelSpec {
            input_length: 3,
            input_channels: 2,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 4 }],
            num_classes: 4,
        };
        let model = Model::new(spec, 1).unwrap();
        let x = random_tensor(&mut Rng::new(2), &[2, 3, 2]);
        let Layer::Dense { weight, bias } = &model.layers[1] else { panic!() };
        let direct = dense_forward(&flatten(&x).unwrap(), weight, bias).unwrap();
        assert_eq!(model.logits(&x).unwrap(), direct);
    }

    #[test]
    fn names_match_parameters() {
        let model = small_tcn();
        assert_eq!(model.parameter_names().len(), model.parameters().len());
        assert_eq!(model.parameter_count(), model.spec().parameter_count().unwrap());
        // block 0 goes 1 -> 4 channels so it carries a projection
        assert!(model.parameter_names().contains(&"layers.0.downsample.kernel".to_string()));
    }

    #[test]
    fn gradients_match_finite_differences_on_samples() {
        let mut model = small_tcn();
        jitter_biases(&mut model, &mut Rng::new(99));
        let mut rng = Rng::new(3);
        let x = random_tensor(&mut rng, &[2, 10, 1]);
        let labels = [0, 2];
        let pass = model.forward(&x, Mode::Train, &mut Rng::new(11)).unwrap();
        let grads = model.backward(&pass, &labels).unwrap();
        for (pi, g) in grads.iter().enumerate() {
            for _ in 0..4 {
                let idx = rng.below(g.len());
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    m.parameters_mut()[pi].data_mut()[idx] += delta;
                    m.loss(&x, &labels, Mode::Train, &mut Rng::new(11)).unwrap()
                };
                let numeric = (eval(EPS) - eval(-EPS)) / (2.0 * EPS);
                let err = relative_error(g.data()[idx], numeric);
                assert!(err < REL_TOL, "param {pi} idx {idx}: {} vs {numeric}", g.data()[idx]);
            }
        }
    }

    #[test]
    fn one_hot_predictions_give_zero_gradients() {
        let mut model = small_tcn();
        // drive the output bias so the softmax saturates on class 1
        let n = model.parameters().len();
        model.parameters_mut()[n - 1].data_mut().copy_from_slice(&[-800.0, 800.0, -800.0]);
        let last_w = model.parameters_mut().into_iter().nth(n - 2).unwrap();
        last_w.data_mut().iter_mut().for_each(|w| *w = 0.0);
        let x = random_tensor(&mut Rng::new(4), &[3, 10, 1]);
        let pass = model.forward(&x, Mode::Inference, &mut Rng::new(0)).unwrap();
        let grads = model.backward(&pass, &[1, 1, 1]).unwrap();
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn batch_prediction_equals_per_sample() {
        let model = Model::new(
            build_cnn_baseline(&ArchConfig { input_length: 8, channels: 3, head_units: 5, num_classes: 4, ..Default::default() })
                .unwrap(),
            5,
        )
        .unwrap();
        let x = random_tensor(&mut Rng::new(6), &[6, 8, 1]);
        let batch = model.predict(&x).unwrap();
        for (i, &p) in batch.iter().enumerate() {
            let one = Tensor::new(vec![1, 8, 1], x.data()[i * 8..(i + 1) * 8].to_vec()).unwrap();
            assert_eq!(model.predict(&one).unwrap(), vec![p]);
        }
    }

    #[test]
    fn determinism() {
        let model = small_tcn();
        let x = random_tensor(&mut Rng::new(8), &[2, 10, 1]);
        let run = || {
            let pass = model.forward(&x, Mode::Train, &mut Rng::new(12)).unwrap();
            let g = model.backward(&pass, &[1, 0]).unwrap();
            (pass.logits, g)
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn wrong_input_shape() {
        let model = small_tcn();
        assert!(matches!(model.logits(&Tensor::zeros(&[1, 9, 1])), Err(Error::Dimension(_))));
    }
}

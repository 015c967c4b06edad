//! Graph nodes: each wraps one layer's parameters, caches the forward-pass
//! intermediates it needs, and exposes an explicit backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::nn::{
    avg_pool_backward, avg_pool_forward, batchnorm_backward, batchnorm_forward, conv2d_backward,
    conv2d_forward, dense_backward_batch, dense_forward_batch, dropout_backward, dropout_forward,
    elu_backward, elu_forward, softmax_backward, softmax_batch, ActivationConfig, BatchNormCache,
    BatchNormState, DenseLayer, DropoutMask, Pad, Tensor4,
};
use crate::vqc::{vqc_forward, vqc_param_shift_grad, VqcConfig, VqcParams};

/// Whether a forward pass runs in training mode (with an RNG for dropout)
/// or in deterministic evaluation mode.
pub enum ForwardMode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

impl ForwardMode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, ForwardMode::Train(_))
    }
}

fn missing_cache(layer: &str) -> Error {
    Error::State(format!("backward on {layer} called without a preceding forward"))
}

/// Grouped convolution node; covers both the temporal (groups = 1) and the
/// channel-axis depthwise (groups = in_channels) stages.
#[derive(Clone, Debug)]
pub struct ConvNode {
    pub label: &'static str,
    pub weight: Tensor4,
    pub groups: usize,
    pub pad: Pad,
    cache_x: Option<Tensor4>,
    pub grad_weight: Option<Tensor4>,
}

impl ConvNode {
    pub fn new(label: &'static str, weight: Tensor4, groups: usize, pad: Pad) -> Self {
        ConvNode {
            label,
            weight,
            groups,
            pad,
            cache_x: None,
            grad_weight: None,
        }
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = conv2d_forward(x, &self.weight, self.groups, self.pad)?;
        self.cache_x = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self.cache_x.take().ok_or_else(|| missing_cache(self.label))?;
        let (dx, dw) = conv2d_backward(&x, &self.weight, self.groups, self.pad, dy)?;
        self.grad_weight = Some(dw);
        Ok(dx)
    }

    fn out_shape(&self, x: [usize; 4]) -> Result<[usize; 4]> {
        let probe = Tensor4::zeros(x);
        conv2d_forward(&probe, &self.weight, self.groups, self.pad).map(|t| t.shape())
    }
}

/// Depthwise temporal convolution followed by 1x1 pointwise channel mixing.
#[derive(Clone, Debug)]
pub struct SeparableNode {
    pub depthwise: Tensor4,
    pub pointwise: Tensor4,
    pub pad: Pad,
    cache_x: Option<Tensor4>,
    cache_mid: Option<Tensor4>,
    pub grad_depthwise: Option<Tensor4>,
    pub grad_pointwise: Option<Tensor4>,
}

impl SeparableNode {
    pub fn new(depthwise: Tensor4, pointwise: Tensor4, pad: Pad) -> Self {
        SeparableNode {
            depthwise,
            pointwise,
            pad,
            cache_x: None,
            cache_mid: None,
            grad_depthwise: None,
            grad_pointwise: None,
        }
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let mid = conv2d_forward(x, &self.depthwise, x.channels(), self.pad)?;
        let y = conv2d_forward(&mid, &self.pointwise, 1, Pad::VALID)?;
        self.cache_x = Some(x.clone());
        self.cache_mid = Some(mid);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self.cache_x.take().ok_or_else(|| missing_cache("separable_conv"))?;
        let mid = self.cache_mid.take().ok_or_else(|| missing_cache("separable_conv"))?;
        let (dmid, dpw) = conv2d_backward(&mid, &self.pointwise, 1, Pad::VALID, dy)?;
        let (dx, ddw) = conv2d_backward(&x, &self.depthwise, x.channels(), self.pad, &dmid)?;
        self.grad_pointwise = Some(dpw);
        self.grad_depthwise = Some(ddw);
        Ok(dx)
    }

    fn out_shape(&self, x: [usize; 4]) -> Result<[usize; 4]> {
        let probe = Tensor4::zeros(x);
        let mid = conv2d_forward(&probe, &self.depthwise, x[1], self.pad)?;
        conv2d_forward(&mid, &self.pointwise, 1, Pad::VALID).map(|t| t.shape())
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormNode {
    pub state: BatchNormState,
    cache: Option<BatchNormCache>,
    pub grad_gamma: Option<Vec<f64>>,
    pub grad_beta: Option<Vec<f64>>,
}

impl BatchNormNode {
    pub fn new(channels: usize) -> Self {
        BatchNormNode {
            state: BatchNormState::new(channels),
            cache: None,
            grad_gamma: None,
            grad_beta: None,
        }
    }

    fn forward(&mut self, x: &Tensor4, training: bool) -> Result<Tensor4> {
        let (y, cache) = batchnorm_forward(x, &mut self.state, training)?;
        self.cache = Some(cache);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("batchnorm"))?;
        let (dx, dg, db) = batchnorm_backward(dy, &cache, &self.state)?;
        self.grad_gamma = Some(dg);
        self.grad_beta = Some(db);
        Ok(dx)
    }

    fn out_shape(&self, x: [usize; 4]) -> Result<[usize; 4]> {
        if x[1] != self.state.channels() {
            return Err(Error::Shape(format!(
                "batchnorm expects {} channels, input has {}",
                self.state.channels(),
                x[1]
            )));
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
pub struct EluNode {
    pub cfg: ActivationConfig,
    cache_x: Option<Tensor4>,
}

impl EluNode {
    pub fn new(cfg: ActivationConfig) -> Self {
        EluNode { cfg, cache_x: None }
    }

    fn forward(&mut self, x: &Tensor4) -> Tensor4 {
        let y = elu_forward(x, self.cfg);
        self.cache_x = Some(x.clone());
        y
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self.cache_x.take().ok_or_else(|| missing_cache("elu"))?;
        elu_backward(&x, dy, self.cfg)
    }
}

#[derive(Clone, Debug)]
pub struct AvgPoolNode {
    pub window: usize,
    cache_shape: Option<[usize; 4]>,
}

impl AvgPoolNode {
    pub fn new(window: usize) -> Self {
        AvgPoolNode {
            window,
            cache_shape: None,
        }
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = avg_pool_forward(x, self.window)?;
        self.cache_shape = Some(x.shape());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let shape = self.cache_shape.take().ok_or_else(|| missing_cache("avg_pool"))?;
        avg_pool_backward(shape, self.window, dy)
    }

    fn out_shape(&self, x: [usize; 4]) -> Result<[usize; 4]> {
        if self.window > x[3] {
            return Err(Error::Argument(format!(
                "pool window {} larger than input width {}",
                self.window, x[3]
            )));
        }
        Ok([x[0], x[1], x[2], x[3] / self.window])
    }
}

#[derive(Clone, Debug)]
pub struct DropoutNode {
    pub rate: f64,
    cache_mask: Option<DropoutMask>,
}

impl DropoutNode {
    pub fn new(rate: f64) -> Self {
        DropoutNode {
            rate,
            cache_mask: None,
        }
    }

    fn forward(&mut self, x: &Tensor4, mode: &mut ForwardMode) -> Result<Tensor4> {
        let (y, mask) = match mode {
            ForwardMode::Train(rng) => dropout_forward(x, self.rate, true, rng)?,
            ForwardMode::Eval => {
                // eval mode never samples; any rng satisfies the signature
                let mut unused = ChaCha8Rng::seed_from_u64(0);
                dropout_forward(x, self.rate, false, &mut unused)?
            }
        };
        self.cache_mask = Some(mask);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let mask = self.cache_mask.take().ok_or_else(|| missing_cache("dropout"))?;
        dropout_backward(dy, &mask)
    }
}

#[derive(Clone, Debug)]
pub struct FlattenNode {
    cache_shape: Option<[usize; 4]>,
}

impl FlattenNode {
    pub fn new() -> Self {
        FlattenNode { cache_shape: None }
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        self.cache_shape = Some(x.shape());
        let features = x.channels() * x.height() * x.width();
        x.clone().reshape([x.batch(), features, 1, 1])
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let shape = self.cache_shape.take().ok_or_else(|| missing_cache("flatten"))?;
        dy.clone().reshape(shape)
    }
}

#[derive(Clone, Debug)]
pub struct DenseNode {
    pub label: &'static str,
    pub layer: DenseLayer,
    cache_x: Option<Tensor4>,
    pub grad_weight: Option<Vec<f64>>,
    pub grad_bias: Option<Vec<f64>>,
}

impl DenseNode {
    pub fn new(label: &'static str, layer: DenseLayer) -> Self {
        DenseNode {
            label,
            layer,
            cache_x: None,
            grad_weight: None,
            grad_bias: None,
        }
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = dense_forward_batch(x, &self.layer)?;
        self.cache_x = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self.cache_x.take().ok_or_else(|| missing_cache(self.label))?;
        let (dx, dw, db) = dense_backward_batch(&x, &self.layer, dy)?;
        self.grad_weight = Some(dw);
        self.grad_bias = Some(db);
        Ok(dx)
    }

    /// Flattened input rows from the last forward pass; used for embedding
    /// export on models without a quantum layer.
    pub fn cached_input_rows(&self) -> Option<Vec<Vec<f64>>> {
        self.cache_x
            .as_ref()
            .map(|x| (0..x.batch()).map(|b| x.row(b).to_vec()).collect())
    }

    fn out_shape(&self, x: [usize; 4]) -> Result<[usize; 4]> {
        let features = x[1] * x[2] * x[3];
        if features != self.layer.in_dim {
            return Err(Error::Shape(format!(
                "{} expects {} input features, got {features}",
                self.label, self.layer.in_dim
            )));
        }
        Ok([x[0], self.layer.out_dim, 1, 1])
    }
}

/// The quantum head: squashes each embedding value into [-pi, pi] with
/// pi * tanh(z) (unbounded angles would alias modulo 2pi), encodes the
/// result as RY angles, runs the variational circuit, and reads per-qubit
/// ⟨Z⟩ values. Weight gradients come from the parameter-shift rule; input
/// gradients chain through the same rule and the tanh squash.
#[derive(Clone, Debug)]
pub struct VqcNode {
    pub config: VqcConfig,
    pub params: VqcParams,
    cache_z: Option<Tensor4>,
    cache_outputs: Option<Vec<Vec<f64>>>,
    pub grad_weights: Option<Vec<f64>>,
}

impl VqcNode {
    pub fn new(config: VqcConfig) -> Self {
        VqcNode {
            params: VqcParams::zeros(&config),
            config,
            cache_z: None,
            cache_outputs: None,
            grad_weights: None,
        }
    }

    fn angles(z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| PI * v.tanh()).collect()
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let n = self.config.n_qubits;
        if x.channels() * x.height() * x.width() != n {
            return Err(Error::Shape(format!(
                "vqc expects {n} input features, got {}",
                x.channels() * x.height() * x.width()
            )));
        }
        let outputs: Vec<Result<Vec<f64>>> = (0..x.batch())
            .into_par_iter()
            .map(|b| vqc_forward(&Self::angles(x.row(b)), &self.params, &self.config))
            .collect();
        let mut y = Tensor4::zeros([x.batch(), n, 1, 1]);
        let mut collected = Vec::with_capacity(x.batch());
        for (b, out) in outputs.into_iter().enumerate() {
            let out = out?;
            y.row_mut(b).copy_from_slice(&out);
            collected.push(out);
        }
        self.cache_z = Some(x.clone());
        self.cache_outputs = Some(collected);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let z = self.cache_z.take().ok_or_else(|| missing_cache("vqc"))?;
        self.cache_outputs = None;
        if dy.shape() != [z.batch(), self.config.n_qubits, 1, 1] {
            return Err(Error::Shape(format!(
                "vqc upstream gradient has shape {:?}",
                dy.shape()
            )));
        }
        let per_item: Vec<Result<crate::vqc::VqcGradient>> = (0..z.batch())
            .into_par_iter()
            .map(|b| {
                vqc_param_shift_grad(
                    &Self::angles(z.row(b)),
                    &self.params,
                    &self.config,
                    dy.row(b),
                )
            })
            .collect();

        let mut d_weights = vec![0.0; self.config.param_count()];
        let mut dz = Tensor4::zeros(z.shape());
        for (b, grad) in per_item.into_iter().enumerate() {
            let grad = grad?;
            for (acc, g) in d_weights.iter_mut().zip(&grad.d_weights) {
                *acc += g;
            }
            let zr = z.row(b);
            let dzr = dz.row_mut(b);
            for i in 0..self.config.n_qubits {
                // d angle / d z = pi * (1 - tanh^2 z)
                let t = zr[i].tanh();
                dzr[i] = grad.d_inputs[i] * PI * (1.0 - t * t);
            }
        }
        self.grad_weights = Some(d_weights);
        Ok(dz)
    }

    /// Per-item circuit outputs from the last forward pass.
    pub fn cached_outputs(&self) -> Option<&[Vec<f64>]> {
        self.cache_outputs.as_deref()
    }

    fn out_shape(&self, x: [usize; 4]) -> Result<[usize; 4]> {
        let n = self.config.n_qubits;
        if x[1] * x[2] * x[3] != n {
            return Err(Error::Shape(format!(
                "vqc expects {n} input features, got {}",
                x[1] * x[2] * x[3]
            )));
        }
        Ok([x[0], n, 1, 1])
    }
}

#[derive(Clone, Debug)]
pub struct SoftmaxNode {
    cache_probs: Option<Tensor4>,
}

impl SoftmaxNode {
    pub fn new() -> Self {
        SoftmaxNode { cache_probs: None }
    }

    fn forward(&mut self, x: &Tensor4) -> Tensor4 {
        let y = softmax_batch(x);
        self.cache_probs = Some(y.clone());
        y
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let probs = self.cache_probs.take().ok_or_else(|| missing_cache("softmax"))?;
        softmax_backward(&probs, dy)
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Conv(ConvNode),
    Separable(SeparableNode),
    BatchNorm(BatchNormNode),
    Elu(EluNode),
    AvgPool(AvgPoolNode),
    Dropout(DropoutNode),
    Flatten(FlattenNode),
    Dense(DenseNode),
    Vqc(VqcNode),
    Softmax(SoftmaxNode),
}

impl Layer {
    pub fn name(&self) -> String {
        match self {
            Layer::Conv(n) => n.label.to_string(),
            Layer::Separable(_) => "separable_conv".into(),
            Layer::BatchNorm(_) => "batchnorm".into(),
            Layer::Elu(_) => "elu".into(),
            Layer::AvgPool(n) => format!("avg_pool{}", n.window),
            Layer::Dropout(_) => "dropout".into(),
            Layer::Flatten(_) => "flatten".into(),
            Layer::Dense(n) => n.label.to_string(),
            Layer::Vqc(_) => "vqc".into(),
            Layer::Softmax(_) => "softmax".into(),
        }
    }

    pub fn forward(&mut self, x: &Tensor4, mode: &mut ForwardMode) -> Result<Tensor4> {
        match self {
            Layer::Conv(n) => n.forward(x),
            Layer::Separable(n) => n.forward(x),
            Layer::BatchNorm(n) => n.forward(x, mode.is_training()),
            Layer::Elu(n) => Ok(n.forward(x)),
            Layer::AvgPool(n) => n.forward(x),
            Layer::Dropout(n) => n.forward(x, mode),
            Layer::Flatten(n) => n.forward(x),
            Layer::Dense(n) => n.forward(x),
            Layer::Vqc(n) => n.forward(x),
            Layer::Softmax(n) => Ok(n.forward(x)),
        }
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        match self {
            Layer::Conv(n) => n.backward(dy),
            Layer::Separable(n) => n.backward(dy),
            Layer::BatchNorm(n) => n.backward(dy),
            Layer::Elu(n) => n.backward(dy),
            Layer::AvgPool(n) => n.backward(dy),
            Layer::Dropout(n) => n.backward(dy),
            Layer::Flatten(n) => n.backward(dy),
            Layer::Dense(n) => n.backward(dy),
            Layer::Vqc(n) => n.backward(dy),
            Layer::Softmax(n) => n.backward(dy),
        }
    }

    /// Symbolic shape propagation without touching any data.
    pub fn out_shape(&self, x: [usize; 4]) -> Result<[usize; 4]> {
        match self {
            Layer::Conv(n) => n.out_shape(x),
            Layer::Separable(n) => n.out_shape(x),
            Layer::BatchNorm(n) => n.out_shape(x),
            Layer::Elu(_) | Layer::Dropout(_) | Layer::Softmax(_) => Ok(x),
            Layer::AvgPool(n) => n.out_shape(x),
            Layer::Flatten(_) => Ok([x[0], x[1] * x[2] * x[3], 1, 1]),
            Layer::Dense(n) => n.out_shape(x),
            Layer::Vqc(n) => n.out_shape(x),
        }
    }

    /// Trainable tensors as (suffix, dims, data).
    pub fn params(&self) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        match self {
            Layer::Conv(n) => vec![(
                "weight".into(),
                n.weight.shape().to_vec(),
                conv_data(&n.weight),
            )],
            Layer::Separable(n) => vec![
                ("depthwise".into(), n.depthwise.shape().to_vec(), conv_data(&n.depthwise)),
                ("pointwise".into(), n.pointwise.shape().to_vec(), conv_data(&n.pointwise)),
            ],
            Layer::BatchNorm(n) => vec![
                ("gamma".into(), vec![n.state.gamma.len()], &n.state.gamma),
                ("beta".into(), vec![n.state.beta.len()], &n.state.beta),
            ],
            Layer::Dense(n) => vec![
                (
                    "weight".into(),
                    vec![n.layer.out_dim, n.layer.in_dim],
                    &n.layer.weight,
                ),
                ("bias".into(), vec![n.layer.out_dim], &n.layer.bias),
            ],
            Layer::Vqc(n) => vec![(
                "weights".into(),
                vec![n.config.n_layers, n.config.n_qubits],
                vqc_data(&n.params),
            )],
            _ => Vec::new(),
        }
    }

    /// Mutable view of the same tensors, in the same order as [`Layer::params`].
    pub fn params_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        match self {
            Layer::Conv(n) => vec![("weight".into(), conv_data_mut(&mut n.weight))],
            Layer::Separable(n) => vec![
                ("depthwise".into(), conv_data_mut(&mut n.depthwise)),
                ("pointwise".into(), conv_data_mut(&mut n.pointwise)),
            ],
            Layer::BatchNorm(n) => vec![
                ("gamma".into(), &mut n.state.gamma),
                ("beta".into(), &mut n.state.beta),
            ],
            Layer::Dense(n) => vec![
                ("weight".into(), &mut n.layer.weight),
                ("bias".into(), &mut n.layer.bias),
            ],
            Layer::Vqc(n) => vec![("weights".into(), vqc_data_mut(&mut n.params))],
            _ => Vec::new(),
        }
    }

    /// Non-trainable tensors that still belong in a checkpoint.
    pub fn buffers(&self) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        match self {
            Layer::BatchNorm(n) => vec![
                (
                    "running_mean".into(),
                    vec![n.state.running_mean.len()],
                    &n.state.running_mean,
                ),
                (
                    "running_var".into(),
                    vec![n.state.running_var.len()],
                    &n.state.running_var,
                ),
            ],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        match self {
            Layer::BatchNorm(n) => vec![
                ("running_mean".into(), &mut n.state.running_mean),
                ("running_var".into(), &mut n.state.running_var),
            ],
            _ => Vec::new(),
        }
    }

    /// Parameter gradients recorded by the last backward pass, aligned with
    /// [`Layer::params`].
    pub fn grads(&self) -> Result<Vec<(String, Vec<f64>)>> {
        let take = |g: &Option<Vec<f64>>, what: &str| -> Result<Vec<f64>> {
            g.clone()
                .ok_or_else(|| Error::State(format!("no gradient recorded for {what}")))
        };
        match self {
            Layer::Conv(n) => Ok(vec![(
                "weight".into(),
                n.grad_weight
                    .as_ref()
                    .map(|t| t.data().to_vec())
                    .ok_or_else(|| Error::State(format!("no gradient recorded for {}", n.label)))?,
            )]),
            Layer::Separable(n) => Ok(vec![
                (
                    "depthwise".into(),
                    n.grad_depthwise
                        .as_ref()
                        .map(|t| t.data().to_vec())
                        .ok_or_else(|| Error::State("no gradient for separable depthwise".into()))?,
                ),
                (
                    "pointwise".into(),
                    n.grad_pointwise
                        .as_ref()
                        .map(|t| t.data().to_vec())
                        .ok_or_else(|| Error::State("no gradient for separable pointwise".into()))?,
                ),
            ]),
            Layer::BatchNorm(n) => Ok(vec![
                ("gamma".into(), take(&n.grad_gamma, "batchnorm gamma")?),
                ("beta".into(), take(&n.grad_beta, "batchnorm beta")?),
            ]),
            Layer::Dense(n) => Ok(vec![
                ("weight".into(), take(&n.grad_weight, n.label)?),
                ("bias".into(), take(&n.grad_bias, n.label)?),
            ]),
            Layer::Vqc(n) => Ok(vec![("weights".into(), take(&n.grad_weights, "vqc weights")?)]),
            _ => Ok(Vec::new()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, _, d)| d.len()).sum()
    }
}

// Tensor4 keeps its data private; these helpers give the parameter walkers
// a uniform Vec<f64> view.
fn conv_data(t: &Tensor4) -> &Vec<f64> {
    t.data_vec()
}

fn conv_data_mut(t: &mut Tensor4) -> &mut Vec<f64> {
    t.data_vec_mut()
}

fn vqc_data(p: &VqcParams) -> &Vec<f64> {
    p.weights_vec()
}

fn vqc_data_mut(p: &mut VqcParams) -> &mut Vec<f64> {
    p.weights_vec_mut()
}

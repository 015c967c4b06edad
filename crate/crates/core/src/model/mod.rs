//! Model assembly: the classical feature-extraction stack, the hybrid
//! variant with a quantum layer between embedding and head, and the
//! operation-count report comparing the two.

pub mod graph;
pub mod layer;

pub use graph::{ModelGraph, ModelGrads};
pub use layer::ForwardMode;

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::layer::{
    AvgPoolNode, BatchNormNode, ConvNode, DenseNode, DropoutNode, EluNode, FlattenNode, Layer,
    SeparableNode, SoftmaxNode, VqcNode,
};
use crate::nn::{ActivationConfig, ConvKernels, DenseLayer, Pad, Tensor4};
use crate::vqc::VqcConfig;

/// Which of the two architectures a graph implements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Eegnet,
    Qeegnet,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Eegnet => write!(f, "eegnet"),
            ModelKind::Qeegnet => write!(f, "qeegnet"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eegnet" => Ok(ModelKind::Eegnet),
            "qeegnet" => Ok(ModelKind::Qeegnet),
            other => Err(Error::Argument(format!(
                "unknown model '{other}', expected eegnet or qeegnet"
            ))),
        }
    }
}

/// All sizes of the feature extractor and hybrid head.
///
/// Defaults follow the canonical 8/2/16 feature-extractor sizing with a
/// half-second temporal kernel, (1x4) then (1x8) pooling, and a 4-qubit,
/// 2-layer quantum head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_channels: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    /// F1: temporal filter count.
    #[serde(default = "default_temporal_filters")]
    pub temporal_filters: usize,
    /// D: spatial filters learned per temporal filter.
    #[serde(default = "default_depth_multiplier")]
    pub depth_multiplier: usize,
    /// F2: output channels of the separable block.
    #[serde(default = "default_pointwise_filters")]
    pub pointwise_filters: usize,
    /// Temporal kernel length; half the sampling rate is the usual choice.
    #[serde(default = "default_temporal_kernel")]
    pub temporal_kernel: usize,
    #[serde(default = "default_separable_kernel")]
    pub separable_kernel: usize,
    #[serde(default = "default_pool1")]
    pub pool1: usize,
    #[serde(default = "default_pool2")]
    pub pool2: usize,
    /// d': embedding width fed to the quantum layer; must equal vqc.n_qubits.
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_vqc")]
    pub vqc: VqcConfig,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
}

fn default_temporal_filters() -> usize {
    8
}
fn default_depth_multiplier() -> usize {
    2
}
fn default_pointwise_filters() -> usize {
    16
}
fn default_temporal_kernel() -> usize {
    64
}
fn default_separable_kernel() -> usize {
    16
}
fn default_pool1() -> usize {
    4
}
fn default_pool2() -> usize {
    8
}
fn default_embedding_dim() -> usize {
    4
}
fn default_vqc() -> VqcConfig {
    VqcConfig {
        n_qubits: 4,
        n_layers: 2,
    }
}
fn default_dropout() -> f64 {
    0.25
}

impl ModelConfig {
    /// Canonical configuration for the given data dimensions; the temporal
    /// kernel spans half a second of samples.
    pub fn new(n_channels: usize, n_samples: usize, n_classes: usize, sample_rate_hz: f64) -> Self {
        let kernel = ((sample_rate_hz / 2.0).round() as usize).clamp(1, n_samples.max(1));
        ModelConfig {
            n_channels,
            n_samples,
            n_classes,
            temporal_filters: default_temporal_filters(),
            depth_multiplier: default_depth_multiplier(),
            pointwise_filters: default_pointwise_filters(),
            temporal_kernel: kernel,
            separable_kernel: default_separable_kernel(),
            pool1: default_pool1(),
            pool2: default_pool2(),
            embedding_dim: default_embedding_dim(),
            vqc: default_vqc(),
            dropout_rate: default_dropout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_channels", self.n_channels),
            ("n_samples", self.n_samples),
            ("n_classes", self.n_classes),
            ("temporal_filters", self.temporal_filters),
            ("depth_multiplier", self.depth_multiplier),
            ("pointwise_filters", self.pointwise_filters),
            ("temporal_kernel", self.temporal_kernel),
            ("separable_kernel", self.separable_kernel),
            ("pool1", self.pool1),
            ("pool2", self.pool2),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.embedding_dim != self.vqc.n_qubits {
            return Err(Error::Config(format!(
                "embedding_dim {} must equal vqc.n_qubits {}",
                self.embedding_dim, self.vqc.n_qubits
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        VqcConfig::new(self.vqc.n_qubits, self.vqc.n_layers)?;
        Ok(())
    }

    /// Fresh zero kernels with the configured shapes.
    pub fn conv_kernels(&self) -> ConvKernels {
        let f1 = self.temporal_filters;
        let fd = f1 * self.depth_multiplier;
        ConvKernels {
            temporal: Tensor4::zeros([f1, 1, 1, self.temporal_kernel]),
            depthwise: Tensor4::zeros([fd, 1, self.n_channels, 1]),
            pointwise: Tensor4::zeros([self.pointwise_filters, fd, 1, 1]),
        }
    }
}

/// The shared feature extractor: temporal conv, channel-axis depthwise conv,
/// and a separable block, each batch-normalized, ELU-activated, pooled and
/// regularized with dropout, ending in a flatten.
fn backbone(cfg: &ModelConfig) -> Vec<Layer> {
    let kernels = cfg.conv_kernels();
    let fd = cfg.temporal_filters * cfg.depth_multiplier;
    let elu = ActivationConfig::default();
    vec![
        Layer::Conv(ConvNode::new(
            "temporal_conv",
            kernels.temporal,
            1,
            Pad::same_width(cfg.temporal_kernel),
        )),
        Layer::BatchNorm(BatchNormNode::new(cfg.temporal_filters)),
        Layer::Conv(ConvNode::new(
            "depthwise_conv",
            kernels.depthwise,
            cfg.temporal_filters,
            Pad::VALID,
        )),
        Layer::BatchNorm(BatchNormNode::new(fd)),
        Layer::Elu(EluNode::new(elu)),
        Layer::AvgPool(AvgPoolNode::new(cfg.pool1)),
        Layer::Dropout(DropoutNode::new(cfg.dropout_rate)),
        Layer::Separable(SeparableNode::new(
            Tensor4::zeros([fd, 1, 1, cfg.separable_kernel]),
            kernels.pointwise,
            Pad::same_width(cfg.separable_kernel),
        )),
        Layer::BatchNorm(BatchNormNode::new(cfg.pointwise_filters)),
        Layer::Elu(EluNode::new(elu)),
        Layer::AvgPool(AvgPoolNode::new(cfg.pool2)),
        Layer::Dropout(DropoutNode::new(cfg.dropout_rate)),
        Layer::Flatten(FlattenNode::new()),
    ]
}

fn flatten_width(cfg: &ModelConfig) -> usize {
    let t1 = cfg.n_samples / cfg.pool1;
    let t2 = t1 / cfg.pool2;
    cfg.pointwise_filters * t2
}

/// Classical baseline: backbone, dense head, softmax.
pub fn build_eegnet(cfg: &ModelConfig) -> Result<ModelGraph> {
    cfg.validate()?;
    let mut layers = backbone(cfg);
    layers.push(Layer::Dense(DenseNode::new(
        "head",
        DenseLayer::zeros(flatten_width(cfg), cfg.n_classes),
    )));
    layers.push(Layer::Softmax(SoftmaxNode::new()));
    ModelGraph::from_layers(ModelKind::Eegnet, cfg.clone(), layers)
}

/// Hybrid variant: the same backbone, a dense embedding down to d' (with an
/// ELU nonlinearity), the quantum layer, then a dense head and softmax.
pub fn build_qeegnet(cfg: &ModelConfig) -> Result<ModelGraph> {
    cfg.validate()?;
    let mut layers = backbone(cfg);
    layers.push(Layer::Dense(DenseNode::new(
        "embedding",
        DenseLayer::zeros(flatten_width(cfg), cfg.embedding_dim),
    )));
    layers.push(Layer::Elu(EluNode::new(ActivationConfig::default())));
    layers.push(Layer::Vqc(VqcNode::new(cfg.vqc)));
    layers.push(Layer::Dense(DenseNode::new(
        "head",
        DenseLayer::zeros(cfg.vqc.n_qubits, cfg.n_classes),
    )));
    layers.push(Layer::Softmax(SoftmaxNode::new()));
    ModelGraph::from_layers(ModelKind::Qeegnet, cfg.clone(), layers)
}

pub fn build_model(kind: ModelKind, cfg: &ModelConfig) -> Result<ModelGraph> {
    match kind {
        ModelKind::Eegnet => build_eegnet(cfg),
        ModelKind::Qeegnet => build_qeegnet(cfg),
    }
}

/// Operation counts: the classical stage costs C*T*K for the depthwise pass
/// plus C*M*T for the pointwise pass, and the quantum stage adds one
/// operation per qubit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// C: input channels.
    pub n_channels: u64,
    /// T: samples per trial.
    pub n_samples: u64,
    /// K: kernel size.
    pub kernel_size: u64,
    /// M: output feature count.
    pub output_features: u64,
    /// n: qubit count (0 for the classical model).
    pub n_qubits: u64,
    pub classical_ops: u64,
    pub quantum_ops: u64,
    pub total: u64,
}

impl ComplexityReport {
    pub fn from_counts(c: u64, t: u64, k: u64, m: u64, n: u64) -> Self {
        let classical_ops = c * t * k + c * m * t;
        ComplexityReport {
            n_channels: c,
            n_samples: t,
            kernel_size: k,
            output_features: m,
            n_qubits: n,
            classical_ops,
            quantum_ops: n,
            total: classical_ops + n,
        }
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "C={} T={} K={} M={} n={}",
            self.n_channels, self.n_samples, self.kernel_size, self.output_features, self.n_qubits
        )?;
        writeln!(
            f,
            "classical_ops = C*T*K + C*M*T = {} + {} = {}",
            self.n_channels * self.n_samples * self.kernel_size,
            self.n_channels * self.output_features * self.n_samples,
            self.classical_ops
        )?;
        writeln!(f, "quantum_ops   = n = {}", self.quantum_ops)?;
        write!(f, "total         = {}", self.total)
    }
}

/// Operation counts for the hybrid model under this configuration; the
/// quantum term is the qubit count.
pub fn complexity_report(cfg: &ModelConfig, kernel_size: usize, output_features: usize) -> ComplexityReport {
    ComplexityReport::from_counts(
        cfg.n_channels as u64,
        cfg.n_samples as u64,
        kernel_size as u64,
        output_features as u64,
        cfg.vqc.n_qubits as u64,
    )
}

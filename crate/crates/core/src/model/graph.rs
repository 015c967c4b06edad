//! The assembled model: an ordered layer list with shape validation at build
//! time, batched forward/backward, and uniform parameter access for the
//! optimizer and checkpointing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::layer::{DenseNode, ForwardMode, Layer, VqcNode};
use crate::model::{ModelConfig, ModelKind};
use crate::nn::Tensor4;

/// An ordered stack of layers plus the configuration it was built from.
/// Freshly built graphs carry all-zero weights; call [`ModelGraph::init_weights`]
/// before training.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub(crate) layers: Vec<Layer>,
    forward_ran: bool,
}

impl ModelGraph {
    pub(crate) fn from_layers(
        kind: ModelKind,
        config: ModelConfig,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let graph = ModelGraph {
            kind,
            config,
            layers,
            forward_ran: false,
        };
        graph.shape_plan()?; // fail at build time, naming the offending layer
        Ok(graph)
    }

    pub fn input_shape(&self, batch: usize) -> [usize; 4] {
        [batch, 1, self.config.n_channels, self.config.n_samples]
    }

    /// Propagate shapes symbolically through every layer. Errors name the
    /// layer that rejected its input.
    pub fn shape_plan(&self) -> Result<Vec<[usize; 4]>> {
        let mut shape = self.input_shape(1);
        let mut plan = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.out_shape(shape).map_err(|e| {
                Error::Config(format!("layer {i} ({}) rejected its input: {e}", layer.name()))
            })?;
            plan.push(shape);
        }
        Ok(plan)
    }

    /// Run the whole stack on a [B, 1, C, T] batch and return per-row class
    /// probabilities as [B, n_classes, 1, 1].
    pub fn forward(&mut self, batch: &Tensor4, mode: &mut ForwardMode) -> Result<Tensor4> {
        let expected = self.input_shape(batch.batch());
        if batch.shape() != expected {
            return Err(Error::Shape(format!(
                "input shape {:?}, model expects {expected:?}",
                batch.shape()
            )));
        }
        let mut x = batch.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, mode)?;
        }
        self.forward_ran = true;
        Ok(x)
    }

    /// Backpropagate from d loss / d probabilities through every layer and
    /// collect the parameter gradients in the same order as
    /// [`ModelGraph::for_each_param`].
    pub fn backward(&mut self, upstream: &Tensor4) -> Result<ModelGrads> {
        if !self.forward_ran {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        self.forward_ran = false;
        let mut grad = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(&grad)?;
        }
        let mut entries = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (suffix, g) in layer.grads()? {
                entries.push((tensor_name(i, layer, &suffix), g));
            }
        }
        Ok(ModelGrads { entries })
    }

    /// Visit every trainable tensor in a stable order.
    pub fn for_each_param(&self, mut f: impl FnMut(&str, &[usize], &[f64])) {
        for (i, layer) in self.layers.iter().enumerate() {
            for (suffix, dims, data) in layer.params() {
                f(&tensor_name(i, layer, &suffix), &dims, data);
            }
        }
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&str, &mut Vec<f64>)) {
        for i in 0..self.layers.len() {
            let name = self.layers[i].name();
            for (suffix, data) in self.layers[i].params_mut() {
                f(&format!("L{i:02}.{name}.{suffix}"), data);
            }
        }
    }

    /// Visit trainable tensors plus non-trainable buffers (running stats);
    /// this is the full state a checkpoint must capture.
    pub fn for_each_state(&self, mut f: impl FnMut(&str, &[usize], &[f64])) {
        for (i, layer) in self.layers.iter().enumerate() {
            for (suffix, dims, data) in layer.params() {
                f(&tensor_name(i, layer, &suffix), &dims, data);
            }
            for (suffix, dims, data) in layer.buffers() {
                f(&tensor_name(i, layer, &suffix), &dims, data);
            }
        }
    }

    pub fn for_each_state_mut(&mut self, mut f: impl FnMut(&str, &mut Vec<f64>)) {
        for i in 0..self.layers.len() {
            let name = self.layers[i].name();
            for (suffix, data) in self.layers[i].params_mut() {
                f(&format!("L{i:02}.{name}.{suffix}"), data);
            }
            for (suffix, data) in self.layers[i].buffers_mut() {
                f(&format!("L{i:02}.{name}.{suffix}"), data);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Trainable angle count of the quantum layer, 0 for the classical model.
    pub fn vqc_param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Vqc(n) => n.config.param_count(),
                _ => 0,
            })
            .sum()
    }

    /// Glorot-uniform weights for convolutions and dense layers, small
    /// uniform angles for the quantum layer, affine identity for batch norm.
    pub fn init_weights(&mut self, seed: u64) {
        let mut tensor_index = 0u64;
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(n) => {
                    let [out_c, w_in, kh, kw] = n.weight.shape();
                    let fan_in = (w_in * kh * kw) as f64;
                    let fan_out = (out_c / n.groups.max(1) * kh * kw) as f64;
                    glorot(n.weight.data_mut(), fan_in, fan_out, seed, &mut tensor_index);
                }
                Layer::Separable(n) => {
                    let [out_c, w_in, kh, kw] = n.depthwise.shape();
                    glorot(
                        n.depthwise.data_mut(),
                        (w_in * kh * kw) as f64,
                        (out_c * kh * kw) as f64,
                        seed,
                        &mut tensor_index,
                    );
                    let [out_c, in_c, _, _] = n.pointwise.shape();
                    glorot(
                        n.pointwise.data_mut(),
                        in_c as f64,
                        out_c as f64,
                        seed,
                        &mut tensor_index,
                    );
                }
                Layer::Dense(n) => {
                    let (fi, fo) = (n.layer.in_dim as f64, n.layer.out_dim as f64);
                    glorot(&mut n.layer.weight, fi, fo, seed, &mut tensor_index);
                    tensor_index += 1; // biases stay zero but consume a slot
                }
                Layer::Vqc(n) => {
                    n.params = crate::vqc::VqcParams::init_small(
                        &n.config,
                        seed ^ 0xC0FF_EE00u64.wrapping_add(tensor_index),
                    );
                    tensor_index += 1;
                }
                _ => {}
            }
        }
    }

    /// Per-trial embedding rows for export: the quantum layer's ⟨Z⟩ outputs
    /// when one exists, otherwise the flattened features entering the head.
    pub fn embed(&mut self, batch: &Tensor4) -> Result<Vec<Vec<f64>>> {
        self.forward(batch, &mut ForwardMode::Eval)?;
        if let Some(vqc) = self.vqc_node() {
            return vqc
                .cached_outputs()
                .map(|rows| rows.to_vec())
                .ok_or_else(|| Error::State("no cached circuit outputs".into()));
        }
        let head = self
            .head_node()
            .ok_or_else(|| Error::State("model has no head layer".into()))?;
        head.cached_input_rows()
            .ok_or_else(|| Error::State("no cached head inputs".into()))
    }

    fn vqc_node(&self) -> Option<&VqcNode> {
        self.layers.iter().find_map(|l| match l {
            Layer::Vqc(n) => Some(n),
            _ => None,
        })
    }

    pub(crate) fn vqc_node_mut(&mut self) -> Option<&mut VqcNode> {
        self.layers.iter_mut().find_map(|l| match l {
            Layer::Vqc(n) => Some(n),
            _ => None,
        })
    }

    fn head_node(&self) -> Option<&DenseNode> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Dense(n) if n.label == "head" => Some(n),
            _ => None,
        })
    }

    /// Human-readable layer table: name, output shape, parameter count.
    pub fn summary(&self) -> String {
        let plan = self.shape_plan().expect("a built graph always has a valid plan");
        let mut out = String::new();
        let _ = writeln!(out, "{} ({} parameters)", self.kind, self.param_count());
        let _ = writeln!(out, "{:<4} {:<16} {:<22} {:>8}", "#", "layer", "output shape", "params");
        let input = self.input_shape(1);
        let _ = writeln!(
            out,
            "{:<4} {:<16} {:<22} {:>8}",
            "-",
            "input",
            format!("{:?}", input),
            0
        );
        for (i, (layer, shape)) in self.layers.iter().zip(&plan).enumerate() {
            let _ = writeln!(
                out,
                "{:<4} {:<16} {:<22} {:>8}",
                i,
                layer.name(),
                format!("{:?}", shape),
                layer.param_count()
            );
        }
        out
    }

    /// Canonical architecture description used for checkpoint compatibility
    /// checks: one line per layer with its output shape and tensor dims.
    pub fn arch_descriptor(&self) -> String {
        let plan = self.shape_plan().expect("a built graph always has a valid plan");
        let mut lines = vec![format!("kind={}", self.kind)];
        for (i, (layer, shape)) in self.layers.iter().zip(&plan).enumerate() {
            let tensors: Vec<String> = layer
                .params()
                .iter()
                .map(|(suffix, dims, _)| format!("{suffix}{dims:?}"))
                .collect();
            lines.push(format!(
                "L{i:02} {} out={:?} tensors=[{}]",
                layer.name(),
                shape,
                tensors.join(",")
            ));
        }
        lines.join("\n")
    }
}

fn tensor_name(index: usize, layer: &Layer, suffix: &str) -> String {
    format!("L{index:02}.{}.{suffix}", layer.name())
}

fn glorot(data: &mut [f64], fan_in: f64, fan_out: f64, seed: u64, tensor_index: &mut u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(*tensor_index + 1));
    let limit = (6.0 / (fan_in + fan_out)).sqrt();
    for v in data.iter_mut() {
        *v = rng.gen_range(-limit..limit);
    }
    *tensor_index += 1;
}

/// Parameter gradients keyed by tensor name, ordered like
/// [`ModelGraph::for_each_param`].
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub entries: Vec<(String, Vec<f64>)>,
}

impl ModelGrads {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g.as_slice())
    }
}

//! Elementwise and structural layers: ELU, temporal average pooling,
//! dropout, and the fully connected layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor4;

/// ELU saturation parameter; `alpha` scales the negative branch.
#[derive(Clone, Copy, Debug)]
pub struct ActivationConfig {
    pub alpha: f64,
}

impl Default for ActivationConfig {
    fn default() -> Self {
        ActivationConfig { alpha: 1.0 }
    }
}

/// x for x > 0, alpha * (e^x - 1) otherwise.
pub fn elu_forward(x: &Tensor4, cfg: ActivationConfig) -> Tensor4 {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > 0.0 { v } else { cfg.alpha * (v.exp() - 1.0) })
        .collect();
    Tensor4::from_vec(data, x.shape()).expect("shape preserved")
}

/// Derivative 1 for x > 0, alpha * e^x for x <= 0, evaluated at the cached input.
pub fn elu_backward(x: &Tensor4, dy: &Tensor4, cfg: ActivationConfig) -> Result<Tensor4> {
    if x.shape() != dy.shape() {
        return Err(Error::Shape(format!(
            "elu input {:?} vs upstream {:?}",
            x.shape(),
            dy.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { g * cfg.alpha * v.exp() })
        .collect();
    Tensor4::from_vec(data, x.shape())
}

/// Non-overlapping mean over windows of `window` samples along the width
/// axis. A trailing remainder shorter than the window is dropped.
pub fn avg_pool_forward(x: &Tensor4, window: usize) -> Result<Tensor4> {
    if window == 0 {
        return Err(Error::Argument("pool window must be >= 1".into()));
    }
    if window > x.width() {
        return Err(Error::Argument(format!(
            "pool window {window} larger than input width {}",
            x.width()
        )));
    }
    let out_w = x.width() / window;
    let mut y = Tensor4::zeros([x.batch(), x.channels(), x.height(), out_w]);
    for b in 0..x.batch() {
        for c in 0..x.channels() {
            for h in 0..x.height() {
                for j in 0..out_w {
                    let mut acc = 0.0;
                    for k in 0..window {
                        acc += x.at(b, c, h, j * window + k);
                    }
                    *y.at_mut(b, c, h, j) = acc / window as f64;
                }
            }
        }
    }
    Ok(y)
}

/// Distribute each pooled gradient equally over its window; positions the
/// forward pass truncated receive zero.
pub fn avg_pool_backward(in_shape: [usize; 4], window: usize, dy: &Tensor4) -> Result<Tensor4> {
    let out_w = in_shape[3] / window;
    let expected = [in_shape[0], in_shape[1], in_shape[2], out_w];
    if dy.shape() != expected {
        return Err(Error::Shape(format!(
            "upstream gradient shape {:?}, expected {expected:?}",
            dy.shape()
        )));
    }
    let mut dx = Tensor4::zeros(in_shape);
    for b in 0..in_shape[0] {
        for c in 0..in_shape[1] {
            for h in 0..in_shape[2] {
                for j in 0..out_w {
                    let g = dy.at(b, c, h, j) / window as f64;
                    for k in 0..window {
                        *dx.at_mut(b, c, h, j * window + k) = g;
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Multiplier per element: 0 for dropped positions, 1/(1-rate) for survivors.
#[derive(Clone, Debug)]
pub struct DropoutMask {
    scale: Vec<f64>,
    shape: [usize; 4],
}

/// Inverted dropout. Training mode zeroes each element with probability
/// `rate` and rescales survivors so the expected value is unchanged; eval
/// mode is the identity (mask of all ones).
pub fn dropout_forward(
    x: &Tensor4,
    rate: f64,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor4, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Argument(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok((
            x.clone(),
            DropoutMask {
                scale: vec![1.0; x.len()],
                shape: x.shape(),
            },
        ));
    }
    let keep = 1.0 - rate;
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
        .collect();
    let data = x.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
    Ok((
        Tensor4::from_vec(data, x.shape())?,
        DropoutMask {
            scale,
            shape: x.shape(),
        },
    ))
}

/// Seeded convenience wrapper around [`dropout_forward`].
pub fn dropout_forward_seeded(
    x: &Tensor4,
    rate: f64,
    training: bool,
    rng_seed: u64,
) -> Result<(Tensor4, DropoutMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    dropout_forward(x, rate, training, &mut rng)
}

pub fn dropout_backward(dy: &Tensor4, mask: &DropoutMask) -> Result<Tensor4> {
    if dy.shape() != mask.shape {
        return Err(Error::Shape(format!(
            "upstream gradient shape {:?}, mask shape {:?}",
            dy.shape(),
            mask.shape
        )));
    }
    let data = dy.data().iter().zip(&mask.scale).map(|(g, s)| g * s).collect();
    Tensor4::from_vec(data, dy.shape())
}

/// Fully connected layer: y = W x + b with W of shape [out, in].
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut layer = Self::zeros(dim, dim);
        for i in 0..dim {
            layer.weight[i * dim + i] = 1.0;
        }
        layer
    }
}

/// Single-vector forward: W x + b.
pub fn dense_forward(x: &[f64], layer: &DenseLayer) -> Result<Vec<f64>> {
    if x.len() != layer.in_dim {
        return Err(Error::Shape(format!(
            "dense input length {} but layer expects {}",
            x.len(),
            layer.in_dim
        )));
    }
    let mut y = layer.bias.clone();
    for (o, out) in y.iter_mut().enumerate() {
        let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
        *out += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    Ok(y)
}

/// Batched forward on a [B, in, 1, 1] tensor, producing [B, out, 1, 1].
pub fn dense_forward_batch(x: &Tensor4, layer: &DenseLayer) -> Result<Tensor4> {
    let features = x.channels() * x.height() * x.width();
    if features != layer.in_dim {
        return Err(Error::Shape(format!(
            "dense input has {features} features but layer expects {}",
            layer.in_dim
        )));
    }
    let mut y = Tensor4::zeros([x.batch(), layer.out_dim, 1, 1]);
    for b in 0..x.batch() {
        let out = dense_forward(x.row(b), layer)?;
        y.row_mut(b).copy_from_slice(&out);
    }
    Ok(y)
}

/// Returns (d input, d weight, d bias), gradients summed over the batch.
pub fn dense_backward_batch(
    x: &Tensor4,
    layer: &DenseLayer,
    dy: &Tensor4,
) -> Result<(Tensor4, Vec<f64>, Vec<f64>)> {
    let features = x.channels() * x.height() * x.width();
    if features != layer.in_dim || dy.channels() * dy.height() * dy.width() != layer.out_dim {
        return Err(Error::Shape("dense backward shape mismatch".into()));
    }
    if x.batch() != dy.batch() {
        return Err(Error::Shape("dense backward batch mismatch".into()));
    }
    let mut dx = Tensor4::zeros(x.shape());
    let mut dw = vec![0.0; layer.weight.len()];
    let mut db = vec![0.0; layer.bias.len()];
    for b in 0..x.batch() {
        let xin = x.row(b);
        let g = dy.row(b);
        let dxr = dx.row_mut(b);
        for o in 0..layer.out_dim {
            db[o] += g[o];
            let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
            for i in 0..layer.in_dim {
                dw[o * layer.in_dim + i] += g[o] * xin[i];
                dxr[i] += g[o] * row[i];
            }
        }
    }
    Ok((dx, dw, db))
}

//! Per-channel batch normalization over [batch, height, width] with a
//! learnable affine and running statistics for evaluation mode.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor4;

#[derive(Clone, Debug)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Forward-pass intermediates needed by the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    x_hat: Tensor4,
    inv_std: Vec<f64>,
    training: bool,
}

/// Normalize per channel. Training mode uses batch statistics (biased
/// variance, guarded by epsilon so a zero-variance or single-sample batch
/// stays finite) and updates the running statistics in place; eval mode
/// normalizes with the running statistics and leaves them untouched.
pub fn batchnorm_forward(
    x: &Tensor4,
    state: &mut BatchNormState,
    training: bool,
) -> Result<(Tensor4, BatchNormCache)> {
    let channels = x.channels();
    if channels != state.channels() {
        return Err(Error::Shape(format!(
            "input has {channels} channels, state has {}",
            state.channels()
        )));
    }
    let per_channel = (x.batch() * x.height() * x.width()) as f64;

    let (mean, var) = if training {
        let mut mean = vec![0.0; channels];
        let mut var = vec![0.0; channels];
        for c in 0..channels {
            let mut sum = 0.0;
            for b in 0..x.batch() {
                for h in 0..x.height() {
                    for w in 0..x.width() {
                        sum += x.at(b, c, h, w);
                    }
                }
            }
            mean[c] = sum / per_channel;
            let mut sq = 0.0;
            for b in 0..x.batch() {
                for h in 0..x.height() {
                    for w in 0..x.width() {
                        let d = x.at(b, c, h, w) - mean[c];
                        sq += d * d;
                    }
                }
            }
            var[c] = sq / per_channel;
        }
        for c in 0..channels {
            state.running_mean[c] =
                (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
            state.running_var[c] =
                (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c];
        }
        (mean, var)
    } else {
        (state.running_mean.clone(), state.running_var.clone())
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.epsilon).sqrt()).collect();
    let mut x_hat = Tensor4::zeros(x.shape());
    let mut y = Tensor4::zeros(x.shape());
    for b in 0..x.batch() {
        for c in 0..channels {
            for h in 0..x.height() {
                for w in 0..x.width() {
                    let xh = (x.at(b, c, h, w) - mean[c]) * inv_std[c];
                    *x_hat.at_mut(b, c, h, w) = xh;
                    *y.at_mut(b, c, h, w) = state.gamma[c] * xh + state.beta[c];
                }
            }
        }
    }
    Ok((
        y,
        BatchNormCache {
            x_hat,
            inv_std,
            training,
        },
    ))
}

/// Returns (d input, d gamma, d beta).
pub fn batchnorm_backward(
    dy: &Tensor4,
    cache: &BatchNormCache,
    state: &BatchNormState,
) -> Result<(Tensor4, Vec<f64>, Vec<f64>)> {
    if dy.shape() != cache.x_hat.shape() {
        return Err(Error::Shape(format!(
            "upstream gradient shape {:?} does not match cached shape {:?}",
            dy.shape(),
            cache.x_hat.shape()
        )));
    }
    let channels = dy.channels();
    let per_channel = (dy.batch() * dy.height() * dy.width()) as f64;

    let mut d_gamma = vec![0.0; channels];
    let mut d_beta = vec![0.0; channels];
    for b in 0..dy.batch() {
        for c in 0..channels {
            for h in 0..dy.height() {
                for w in 0..dy.width() {
                    let g = dy.at(b, c, h, w);
                    d_beta[c] += g;
                    d_gamma[c] += g * cache.x_hat.at(b, c, h, w);
                }
            }
        }
    }

    let mut dx = Tensor4::zeros(dy.shape());
    if cache.training {
        // Batch statistics depend on every sample, so the gradient carries
        // the mean-subtraction and variance terms.
        for b in 0..dy.batch() {
            for c in 0..channels {
                let scale = state.gamma[c] * cache.inv_std[c];
                for h in 0..dy.height() {
                    for w in 0..dy.width() {
                        let g = dy.at(b, c, h, w);
                        let term = g
                            - d_beta[c] / per_channel
                            - cache.x_hat.at(b, c, h, w) * d_gamma[c] / per_channel;
                        *dx.at_mut(b, c, h, w) = scale * term;
                    }
                }
            }
        }
    } else {
        for b in 0..dy.batch() {
            for c in 0..channels {
                let scale = state.gamma[c] * cache.inv_std[c];
                for h in 0..dy.height() {
                    for w in 0..dy.width() {
                        *dx.at_mut(b, c, h, w) = scale * dy.at(b, c, h, w);
                    }
                }
            }
        }
    }
    Ok((dx, d_gamma, d_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
        let data = (0..shape.iter().product::<usize>())
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        Tensor4::from_vec(data, shape).unwrap()
    }

    #[test]
    fn zero_variance_batch_maps_to_zero() {
        let x = Tensor4::from_vec(vec![3.0; 8], [4, 2, 1, 1]).unwrap();
        let mut state = BatchNormState::new(2);
        let (y, _) = batchnorm_forward(&x, &mut state, true).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn affine_rescales_standardized_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_tensor([64, 2, 1, 3], &mut rng);
        let mut state = BatchNormState::new(2);
        state.gamma = vec![2.0; 2];
        state.beta = vec![1.0; 2];
        let (y, _) = batchnorm_forward(&x, &mut state, true).unwrap();
        for c in 0..2 {
            let mut vals = Vec::new();
            for b in 0..y.batch() {
                for w in 0..y.width() {
                    vals.push(y.at(b, c, 0, w));
                }
            }
            let n = vals.len() as f64;
            let mean: f64 = vals.iter().sum::<f64>() / n;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!((mean - 1.0).abs() < 1e-6);
            assert!((var.sqrt() - 2.0).abs() < 1e-3);
        }
    }

    #[test]
    fn eval_mode_with_unit_running_stats_is_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor([2, 3, 1, 4], &mut rng);
        let mut state = BatchNormState::new(3);
        let (y, _) = batchnorm_forward(&x, &mut state, false).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            // epsilon shrinks values by a factor of 1/sqrt(1 + 1e-5)
            assert!((a - b).abs() < 1e-5 * a.abs().max(1.0));
        }
    }

    #[test]
    fn training_mode_standardizes_pre_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_tensor([8, 4, 1, 5], &mut rng);
        let mut state = BatchNormState::new(4);
        let (y, _) = batchnorm_forward(&x, &mut state, true).unwrap();
        for c in 0..4 {
            let mut vals = Vec::new();
            for b in 0..8 {
                for w in 0..5 {
                    vals.push(y.at(b, c, 0, w));
                }
            }
            let n = vals.len() as f64;
            let mean: f64 = vals.iter().sum::<f64>() / n;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn single_sample_batch_stays_finite() {
        let x = Tensor4::from_vec(vec![5.0, -3.0], [1, 2, 1, 1]).unwrap();
        let mut state = BatchNormState::new(2);
        let (y, _) = batchnorm_forward(&x, &mut state, true).unwrap();
        assert!(y.all_finite());
        assert!(y.data().iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let x = Tensor4::from_vec(vec![10.0; 4], [4, 1, 1, 1]).unwrap();
        let mut state = BatchNormState::new(1);
        batchnorm_forward(&x, &mut state, true).unwrap();
        assert!((state.running_mean[0] - 1.0).abs() < 1e-12); // 0.9*0 + 0.1*10
        batchnorm_forward(&x, &mut state, false).unwrap();
        assert!((state.running_mean[0] - 1.0).abs() < 1e-12); // eval leaves stats alone
    }

    #[test]
    fn backward_matches_finite_differences() {
        for training in [true, false] {
            let mut rng = ChaCha8Rng::seed_from_u64(20);
            let x = random_tensor([6, 2, 1, 3], &mut rng);
            let dy = random_tensor([6, 2, 1, 3], &mut rng);
            let mut state = BatchNormState::new(2);
            state.gamma = vec![1.3, 0.7];
            state.beta = vec![0.2, -0.4];
            state.running_mean = vec![0.1, -0.2];
            state.running_var = vec![1.5, 0.8];

            let loss = |x: &Tensor4, state: &BatchNormState| -> f64 {
                let mut s = state.clone();
                let (y, _) = batchnorm_forward(x, &mut s, training).unwrap();
                y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
            };

            let (_, cache) = batchnorm_forward(&x, &mut state.clone(), training).unwrap();
            let (dx, d_gamma, d_beta) = batchnorm_backward(&dy, &cache, &state).unwrap();

            let h = 1e-6;
            for i in (0..x.len()).step_by(5) {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let fd = (loss(&xp, &state) - loss(&xm, &state)) / (2.0 * h);
                assert!(
                    (dx.data()[i] - fd).abs() < 1e-5 * fd.abs().max(1.0),
                    "training={training} dx[{i}] = {} vs fd {fd}",
                    dx.data()[i]
                );
            }
            for c in 0..2 {
                let mut sp = state.clone();
                sp.gamma[c] += h;
                let mut sm = state.clone();
                sm.gamma[c] -= h;
                let fd = (loss(&x, &sp) - loss(&x, &sm)) / (2.0 * h);
                assert!((d_gamma[c] - fd).abs() < 1e-5 * fd.abs().max(1.0));

                let mut sp = state.clone();
                sp.beta[c] += h;
                let mut sm = state.clone();
                sm.beta[c] -= h;
                let fd = (loss(&x, &sp) - loss(&x, &sm)) / (2.0 * h);
                assert!((d_beta[c] - fd).abs() < 1e-5 * fd.abs().max(1.0));
            }
        }
    }
}

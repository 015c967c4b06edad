//! Softmax and the two training losses, with analytic gradients.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor4;

/// Probability floor used when taking logs of predicted probabilities.
pub const PROB_EPSILON: f64 = 1e-12;

/// Numerically safe softmax: exp(v - max) / sum.
pub fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax on a [B, K, 1, 1] tensor.
pub fn softmax_batch(logits: &Tensor4) -> Tensor4 {
    let mut out = Tensor4::zeros(logits.shape());
    for b in 0..logits.batch() {
        let probs = softmax_vec(logits.row(b));
        out.row_mut(b).copy_from_slice(&probs);
    }
    out
}

/// Jacobian-vector product of softmax given its own output:
/// dz_j = p_j (g_j - sum_k g_k p_k), applied row-wise.
pub fn softmax_backward(probs: &Tensor4, dy: &Tensor4) -> Result<Tensor4> {
    if probs.shape() != dy.shape() {
        return Err(Error::Shape(format!(
            "softmax backward probs {:?} vs upstream {:?}",
            probs.shape(),
            dy.shape()
        )));
    }
    let mut dz = Tensor4::zeros(probs.shape());
    for b in 0..probs.batch() {
        let p = probs.row(b);
        let g = dy.row(b);
        let dot: f64 = p.iter().zip(g).map(|(a, c)| a * c).sum();
        let row = dz.row_mut(b);
        for j in 0..p.len() {
            row[j] = p[j] * (g[j] - dot);
        }
    }
    Ok(dz)
}

/// Mean negative log-likelihood over the batch, plus the combined
/// softmax+cross-entropy gradient with respect to the logits:
/// (p - onehot) / batch.
pub fn cross_entropy_loss(probs: &Tensor4, labels: &[u16]) -> Result<(f64, Tensor4)> {
    let batch = probs.batch();
    let classes = probs.channels() * probs.height() * probs.width();
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::Argument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut loss = 0.0;
    let mut dlogits = Tensor4::zeros(probs.shape());
    for b in 0..batch {
        let p = probs.row(b);
        let label = labels[b] as usize;
        loss -= p[label].max(PROB_EPSILON).ln();
        let row = dlogits.row_mut(b);
        for (j, &pj) in p.iter().enumerate() {
            row[j] = (pj - if j == label { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    Ok((loss / batch as f64, dlogits))
}

/// Gradient of the cross-entropy loss with respect to the probabilities
/// themselves: -onehot / (batch * p). Used when backpropagating through an
/// explicit softmax layer; composing it with the softmax Jacobian reproduces
/// the (p - onehot)/batch logit gradient.
pub fn cross_entropy_grad_probs(probs: &Tensor4, labels: &[u16]) -> Result<Tensor4> {
    let batch = probs.batch();
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let mut dprobs = Tensor4::zeros(probs.shape());
    for b in 0..batch {
        let label = labels[b] as usize;
        let p = probs.row(b)[label].max(PROB_EPSILON);
        dprobs.row_mut(b)[label] = -1.0 / (p * batch as f64);
    }
    Ok(dprobs)
}

/// Mean squared error over all elements: (1/N) sum (pred - target)^2,
/// with gradient 2 (pred - target) / N.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor4::zeros(pred.shape());
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let r = p - t;
        loss += r * r;
        grad.data_mut()[i] = 2.0 * r / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_spec_points() {
        assert_eq!(softmax_vec(&[0.0, 0.0]), vec![0.5, 0.5]);

        let big = softmax_vec(&[1000.0, 1000.0]);
        assert!(big.iter().all(|p| p.is_finite()));
        assert!((big[0] - 0.5).abs() < 1e-12);

        let logs = softmax_vec(&[1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()]);
        assert!((logs[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((logs[1] - 2.0 / 6.0).abs() < 1e-12);
        assert!((logs[2] - 3.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_spec_points() {
        // perfect prediction
        let perfect = Tensor4::from_vec(vec![1.0, 0.0], [1, 2, 1, 1]).unwrap();
        let (loss, _) = cross_entropy_loss(&perfect, &[0]).unwrap();
        assert!(loss.abs() < 1e-12);

        // uniform over 4 classes
        let uniform = Tensor4::from_vec(vec![0.25; 4], [1, 4, 1, 1]).unwrap();
        let (loss, _) = cross_entropy_loss(&uniform, &[2]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);

        assert!(cross_entropy_loss(&uniform, &[4]).is_err());
    }

    #[test]
    fn cross_entropy_logit_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let logits =
            Tensor4::from_vec((0..12).map(|_| rng.gen_range(-2.0..2.0)).collect(), [3, 4, 1, 1])
                .unwrap();
        let labels = [1u16, 3, 0];

        let probs = softmax_batch(&logits);
        let (_, dlogits) = cross_entropy_loss(&probs, &labels).unwrap();

        let loss_of = |z: &Tensor4| -> f64 {
            let p = softmax_batch(z);
            cross_entropy_loss(&p, &labels).unwrap().0
        };
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut zp = logits.clone();
            zp.data_mut()[i] += h;
            let mut zm = logits.clone();
            zm.data_mut()[i] -= h;
            let fd = (loss_of(&zp) - loss_of(&zm)) / (2.0 * h);
            assert!(
                (dlogits.data()[i] - fd).abs() < 1e-6,
                "dlogits[{i}] = {} vs fd {fd}",
                dlogits.data()[i]
            );
        }
    }

    #[test]
    fn prob_gradient_route_equals_logit_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let logits =
            Tensor4::from_vec((0..10).map(|_| rng.gen_range(-3.0..3.0)).collect(), [2, 5, 1, 1])
                .unwrap();
        let labels = [4u16, 0];
        let probs = softmax_batch(&logits);

        let (_, direct) = cross_entropy_loss(&probs, &labels).unwrap();
        let dprobs = cross_entropy_grad_probs(&probs, &labels).unwrap();
        let composed = softmax_backward(&probs, &dprobs).unwrap();
        for (a, b) in direct.data().iter().zip(composed.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_spec_points() {
        let a = Tensor4::from_vec(vec![1.0, 1.0], [1, 2, 1, 1]).unwrap();
        let zero = Tensor4::zeros([1, 2, 1, 1]);
        let (same, _) = mse_loss(&a, &a).unwrap();
        assert_eq!(same, 0.0);

        let (loss, grad) = mse_loss(&a, &zero).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad.data(), &[1.0, 1.0]);

        // doubling the residuals quadruples the loss
        let b = Tensor4::from_vec(vec![2.0, 2.0], [1, 2, 1, 1]).unwrap();
        let (loss2, _) = mse_loss(&b, &zero).unwrap();
        assert_eq!(loss2, 4.0 * loss);

        assert!(mse_loss(&a, &Tensor4::zeros([1, 3, 1, 1])).is_err());
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pred =
            Tensor4::from_vec((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(), [2, 3, 1, 1])
                .unwrap();
        let target =
            Tensor4::from_vec((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(), [2, 3, 1, 1])
                .unwrap();
        let (_, grad) = mse_loss(&pred, &target).unwrap();
        let h = 1e-7;
        for i in 0..pred.len() {
            let mut pp = pred.clone();
            pp.data_mut()[i] += h;
            let mut pm = pred.clone();
            pm.data_mut()[i] -= h;
            let fd = (mse_loss(&pp, &target).unwrap().0 - mse_loss(&pm, &target).unwrap().0)
                / (2.0 * h);
            assert!((grad.data()[i] - fd).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn prop_softmax_is_a_shift_invariant_distribution(
            v in proptest::collection::vec(-50.0f64..50.0, 1..8),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax_vec(&v);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = softmax_vec(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

//! Variational quantum circuit: RY angle encoding, alternating trainable-RY +
//! ring-CNOT layers, per-qubit ⟨Z⟩ readout, and parameter-shift gradients.
//!
//! The circuit is evaluated with exact statevector expectations (no shot
//! sampling), so identical inputs always produce bit-identical outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::statevec::StateVector;

/// Circuit topology: register width and number of variational layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqcConfig {
    pub n_qubits: usize,
    pub n_layers: usize,
}

impl VqcConfig {
    pub fn new(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Config("n_qubits must be >= 1".into()));
        }
        if n_layers == 0 {
            return Err(Error::Config("n_layers must be >= 1".into()));
        }
        Ok(VqcConfig { n_qubits, n_layers })
    }

    /// Total trainable angles: one per qubit per layer.
    pub fn param_count(&self) -> usize {
        self.n_qubits * self.n_layers
    }
}

/// Trainable rotation angles, stored row-major as [layer][qubit].
#[derive(Clone, Debug, PartialEq)]
pub struct VqcParams {
    weights: Vec<f64>,
    n_layers: usize,
    n_qubits: usize,
}

impl VqcParams {
    pub fn zeros(config: &VqcConfig) -> Self {
        VqcParams {
            weights: vec![0.0; config.param_count()],
            n_layers: config.n_layers,
            n_qubits: config.n_qubits,
        }
    }

    /// Small-angle start: uniform in [-pi/50, pi/50] keeps the circuit near
    /// identity so early gradients are informative.
    pub fn init_small(config: &VqcConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = PI / 50.0;
        let weights = (0..config.param_count())
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        VqcParams {
            weights,
            n_layers: config.n_layers,
            n_qubits: config.n_qubits,
        }
    }

    pub fn from_weights(config: &VqcConfig, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != config.param_count() {
            return Err(Error::Shape(format!(
                "expected {} weights for {} layers x {} qubits, got {}",
                config.param_count(),
                config.n_layers,
                config.n_qubits,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Argument("weights contain non-finite entries".into()));
        }
        Ok(VqcParams {
            weights,
            n_layers: config.n_layers,
            n_qubits: config.n_qubits,
        })
    }

    pub fn get(&self, layer: usize, qubit: usize) -> f64 {
        self.weights[layer * self.n_qubits + qubit]
    }

    pub fn set(&mut self, layer: usize, qubit: usize, value: f64) {
        self.weights[layer * self.n_qubits + qubit] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Owned-vector view, for code that walks parameter tensors uniformly.
    pub fn weights_vec(&self) -> &Vec<f64> {
        &self.weights
    }

    pub fn weights_vec_mut(&mut self) -> &mut Vec<f64> {
        &mut self.weights
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
}

/// Gradient of a scalar loss with respect to the circuit's angles.
#[derive(Clone, Debug)]
pub struct VqcGradient {
    /// d loss / d w, row-major [layer][qubit].
    pub d_weights: Vec<f64>,
    /// d loss / d encoded feature, one per qubit.
    pub d_inputs: Vec<f64>,
}

/// Close the entangling loop: CNOT(q_i, q_(i+1 mod n)) for i = 0..n, in
/// ascending order, exactly once each. A single qubit has no partner to
/// entangle with, so n = 1 is a no-op.
pub fn ring_entangle(state: &mut StateVector) {
    let n = state.n_qubits();
    if n < 2 {
        return;
    }
    for i in 0..n {
        state
            .apply_cnot(i, (i + 1) % n)
            .expect("ring indices are always in range and distinct");
    }
}

fn check_features(features: &[f64], config: &VqcConfig) -> Result<()> {
    if features.len() != config.n_qubits {
        return Err(Error::Shape(format!(
            "expected {} features, got {}",
            config.n_qubits,
            features.len()
        )));
    }
    if features.iter().any(|f| !f.is_finite()) {
        return Err(Error::Argument("features contain non-finite entries".into()));
    }
    Ok(())
}

fn check_params(params: &VqcParams, config: &VqcConfig) -> Result<()> {
    if params.n_qubits != config.n_qubits || params.n_layers != config.n_layers {
        return Err(Error::Shape(format!(
            "params are [{} x {}] but config is [{} x {}]",
            params.n_layers, params.n_qubits, config.n_layers, config.n_qubits
        )));
    }
    Ok(())
}

/// Run the circuit: encode each feature as an RY angle on its qubit, apply
/// the variational layers (rotations first, then the CNOT ring), and read
/// out (⟨Z_0⟩, ..., ⟨Z_(n-1)⟩). Encoding happens once, before all layers.
pub fn vqc_forward(features: &[f64], params: &VqcParams, config: &VqcConfig) -> Result<Vec<f64>> {
    check_features(features, config)?;
    check_params(params, config)?;

    let mut state = StateVector::zero(config.n_qubits)?;
    for (qubit, &angle) in features.iter().enumerate() {
        state.apply_ry(qubit, angle)?;
    }
    for layer in 0..config.n_layers {
        for qubit in 0..config.n_qubits {
            state.apply_ry(qubit, params.get(layer, qubit))?;
        }
        ring_entangle(&mut state);
    }

    (0..config.n_qubits)
        .map(|qubit| state.expectation_z(qubit))
        .collect()
}

/// Parameter-shift gradients for every angle in the circuit.
///
/// Each RY angle `a` satisfies d⟨Z_j⟩/da = (⟨Z_j⟩(a + pi/2) - ⟨Z_j⟩(a - pi/2)) / 2
/// exactly. The result is chained with `upstream` (d loss / d ⟨Z_j⟩), covering
/// both the trainable weights and the encoded input features so gradients can
/// flow back into the classical embedding.
pub fn vqc_param_shift_grad(
    features: &[f64],
    params: &VqcParams,
    config: &VqcConfig,
    upstream: &[f64],
) -> Result<VqcGradient> {
    check_features(features, config)?;
    check_params(params, config)?;
    if upstream.len() != config.n_qubits {
        return Err(Error::Shape(format!(
            "expected {} upstream values, got {}",
            config.n_qubits,
            upstream.len()
        )));
    }

    let chain = |plus: &[f64], minus: &[f64]| -> f64 {
        upstream
            .iter()
            .zip(plus.iter().zip(minus))
            .map(|(u, (p, m))| u * (p - m) / 2.0)
            .sum()
    };

    let mut d_weights = vec![0.0; config.param_count()];
    for idx in 0..config.param_count() {
        let mut shifted = params.clone();
        shifted.weights[idx] += FRAC_PI_2;
        let plus = vqc_forward(features, &shifted, config)?;
        shifted.weights[idx] -= PI;
        let minus = vqc_forward(features, &shifted, config)?;
        d_weights[idx] = chain(&plus, &minus);
    }

    let mut d_inputs = vec![0.0; config.n_qubits];
    let mut shifted = features.to_vec();
    for idx in 0..config.n_qubits {
        let original = shifted[idx];
        shifted[idx] = original + FRAC_PI_2;
        let plus = vqc_forward(&shifted, params, config)?;
        shifted[idx] = original - FRAC_PI_2;
        let minus = vqc_forward(&shifted, params, config)?;
        shifted[idx] = original;
        d_inputs[idx] = chain(&plus, &minus);
    }

    Ok(VqcGradient {
        d_weights,
        d_inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::dense;
    use crate::statevec::dense_oracle_apply;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::Rng;

    /// Independent route for ⟨Z_j⟩: multiply full-dimension gate matrices in
    /// application order and contract ⟨psi|Z_j|psi⟩ directly.
    fn dense_forward(features: &[f64], params: &VqcParams, config: &VqcConfig) -> Vec<f64> {
        let n = config.n_qubits;
        let mut circuit = dense::DenseMatrix::identity(1 << n);
        for (qubit, &angle) in features.iter().enumerate() {
            circuit = dense::single_qubit_full(n, qubit, &dense::ry(angle)).matmul(&circuit);
        }
        for layer in 0..config.n_layers {
            for qubit in 0..n {
                let gate = dense::ry(params.get(layer, qubit));
                circuit = dense::single_qubit_full(n, qubit, &gate).matmul(&circuit);
            }
            if n >= 2 {
                for i in 0..n {
                    circuit = dense::cnot_full(n, i, (i + 1) % n).matmul(&circuit);
                }
            }
        }
        let psi = dense_oracle_apply(&StateVector::zero(n).unwrap(), &circuit).unwrap();
        (0..n)
            .map(|q| {
                let z_psi = dense::pauli_z_full(n, q).mul_vec(psi.amplitudes());
                let e: Complex64 = psi
                    .amplitudes()
                    .iter()
                    .zip(&z_psi)
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                e.re
            })
            .collect()
    }

    /// Central finite differences of the upstream-weighted output.
    fn fd_grad(
        features: &[f64],
        params: &VqcParams,
        config: &VqcConfig,
        upstream: &[f64],
        h: f64,
    ) -> VqcGradient {
        let scalar = |f: &[f64], p: &VqcParams| -> f64 {
            vqc_forward(f, p, config)
                .unwrap()
                .iter()
                .zip(upstream)
                .map(|(o, u)| o * u)
                .sum()
        };
        let mut d_weights = vec![0.0; config.param_count()];
        for idx in 0..config.param_count() {
            let mut p = params.clone();
            p.as_mut_slice()[idx] += h;
            let plus = scalar(features, &p);
            p.as_mut_slice()[idx] -= 2.0 * h;
            let minus = scalar(features, &p);
            d_weights[idx] = (plus - minus) / (2.0 * h);
        }
        let mut d_inputs = vec![0.0; config.n_qubits];
        let mut f = features.to_vec();
        for idx in 0..config.n_qubits {
            f[idx] += h;
            let plus = scalar(&f, params);
            f[idx] -= 2.0 * h;
            let minus = scalar(&f, params);
            f[idx] += h;
            d_inputs[idx] = (plus - minus) / (2.0 * h);
        }
        VqcGradient {
            d_weights,
            d_inputs,
        }
    }

    #[test]
    fn identity_circuit_reads_plus_one() {
        let config = VqcConfig::new(1, 1).unwrap();
        let params = VqcParams::zeros(&config);
        let out = vqc_forward(&[0.0], &params, &config).unwrap();
        assert_eq!(out, vec![1.0]);
    }

    #[test]
    fn pi_encoding_flips_single_qubit() {
        let config = VqcConfig::new(1, 1).unwrap();
        let params = VqcParams::zeros(&config);
        let out = vqc_forward(&[PI], &params, &config).unwrap();
        assert!((out[0] + 1.0).abs() < 1e-12);
        let oracle = dense_forward(&[PI], &params, &config);
        assert!((out[0] - oracle[0]).abs() < 1e-12);
    }

    #[test]
    fn ring_walks_basis_state_through_all_three_cnots() {
        // q0=1 (index 1): CNOT(0,1) sets q1, CNOT(1,2) sets q2, CNOT(2,0)
        // clears q0, landing on q1=q2=1 (index 6).
        let mut state = StateVector::basis(3, 1).unwrap();
        ring_entangle(&mut state);
        assert_eq!(state.amplitudes()[6], Complex64::new(1.0, 0.0));

        // Same walk through the dense permutation oracle.
        let mut perm = dense::DenseMatrix::identity(8);
        for i in 0..3 {
            perm = dense::cnot_full(3, i, (i + 1) % 3).matmul(&perm);
        }
        let oracle = dense_oracle_apply(&StateVector::basis(3, 1).unwrap(), &perm).unwrap();
        for (a, b) in state.amplitudes().iter().zip(oracle.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn ring_on_two_qubits() {
        let mut state = StateVector::zero(2).unwrap();
        ring_entangle(&mut state);
        assert_eq!(state.amplitudes()[0], Complex64::new(1.0, 0.0));

        // |01> (q0=1): CNOT(0,1) -> |11>, CNOT(1,0) -> |10> (q1=1, index 2).
        let mut state = StateVector::basis(2, 1).unwrap();
        ring_entangle(&mut state);
        assert_eq!(state.amplitudes()[2], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn ring_is_noop_on_one_qubit() {
        let mut state = StateVector::zero(1).unwrap();
        state.apply_ry(0, 1.1).unwrap();
        let before = state.amplitudes().to_vec();
        ring_entangle(&mut state);
        assert_eq!(state.amplitudes(), &before[..]);
    }

    #[test]
    fn ring_maps_every_basis_state_to_a_basis_state() {
        for n in 2..=4 {
            for index in 0..(1 << n) {
                let mut state = StateVector::basis(n, index).unwrap();
                ring_entangle(&mut state);
                let ones = state
                    .amplitudes()
                    .iter()
                    .filter(|a| a.norm() > 1e-12)
                    .count();
                assert_eq!(ones, 1, "ring produced a superposition from a basis state");
            }
        }
    }

    #[test]
    fn forward_matches_dense_oracle_on_random_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let n = rng.gen_range(1..=4);
            let layers = rng.gen_range(1..=3);
            let config = VqcConfig::new(n, layers).unwrap();
            let weights = (0..config.param_count())
                .map(|_| rng.gen_range(-PI..PI))
                .collect();
            let params = VqcParams::from_weights(&config, weights).unwrap();
            let features: Vec<f64> = (0..n).map(|_| rng.gen_range(-PI..PI)).collect();

            let fast = vqc_forward(&features, &params, &config).unwrap();
            let oracle = dense_forward(&features, &params, &config);
            for (a, b) in fast.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10, "fast {a} vs dense {b}");
            }
        }
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let config = VqcConfig::new(2, 1).unwrap();
        let params = VqcParams::zeros(&config);
        assert!(matches!(
            vqc_forward(&[0.0], &params, &config),
            Err(Error::Shape(_))
        ));
        let other = VqcParams::zeros(&VqcConfig::new(3, 1).unwrap());
        assert!(matches!(
            vqc_forward(&[0.0, 0.0], &other, &config),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn encoding_gradient_at_zero_and_half_pi() {
        // Single qubit, no effective variational weight: <Z> = cos(theta),
        // so the gradient is 0 at theta = 0 and -1 at theta = pi/2. Checked
        // against the finite-difference oracle with h = 1e-4.
        let config = VqcConfig::new(1, 1).unwrap();
        let params = VqcParams::zeros(&config);
        let upstream = [1.0];

        let g0 = vqc_param_shift_grad(&[0.0], &params, &config, &upstream).unwrap();
        let fd0 = fd_grad(&[0.0], &params, &config, &upstream, 1e-4);
        assert!(g0.d_inputs[0].abs() < 1e-12);
        assert!((g0.d_inputs[0] - fd0.d_inputs[0]).abs() < 1e-6);

        let g1 = vqc_param_shift_grad(&[FRAC_PI_2], &params, &config, &upstream).unwrap();
        let fd1 = fd_grad(&[FRAC_PI_2], &params, &config, &upstream, 1e-4);
        assert!((g1.d_inputs[0] + 1.0).abs() < 1e-6);
        assert!((g1.d_inputs[0] - fd1.d_inputs[0]).abs() < 1e-6);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let config = VqcConfig::new(3, 2).unwrap();
        let params = VqcParams::init_small(&config, 5);
        let features = [0.4, -0.2, 1.0];
        let grad = vqc_param_shift_grad(&features, &params, &config, &[0.0; 3]).unwrap();
        assert!(grad.d_weights.iter().all(|g| *g == 0.0));
        assert!(grad.d_inputs.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn param_shift_matches_finite_differences_on_random_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..25 {
            let n = rng.gen_range(1..=4);
            let layers = rng.gen_range(1..=3);
            let config = VqcConfig::new(n, layers).unwrap();
            let weights = (0..config.param_count())
                .map(|_| rng.gen_range(-PI..PI))
                .collect();
            let params = VqcParams::from_weights(&config, weights).unwrap();
            let features: Vec<f64> = (0..n).map(|_| rng.gen_range(-PI..PI)).collect();
            let upstream: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let exact = vqc_param_shift_grad(&features, &params, &config, &upstream).unwrap();
            let approx = fd_grad(&features, &params, &config, &upstream, 1e-4);
            for (a, b) in exact.d_weights.iter().zip(&approx.d_weights) {
                assert!((a - b).abs() < 1e-6, "weight grad {a} vs fd {b}");
            }
            for (a, b) in exact.d_inputs.iter().zip(&approx.d_inputs) {
                assert!((a - b).abs() < 1e-6, "input grad {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn layer_order_matters() {
        // Swapping two distinct weights across layers must change the output;
        // guards against an implementation that accidentally commutes layers.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut observed_sensitive = 0;
        for _ in 0..20 {
            let n = rng.gen_range(2..=4);
            let config = VqcConfig::new(n, 2).unwrap();
            let weights: Vec<f64> = (0..config.param_count())
                .map(|_| rng.gen_range(-PI..PI))
                .collect();
            let params = VqcParams::from_weights(&config, weights).unwrap();
            let features: Vec<f64> = (0..n).map(|_| rng.gen_range(-PI..PI)).collect();

            let mut swapped = params.clone();
            let q = rng.gen_range(0..n);
            let a = swapped.get(0, q);
            let b = swapped.get(1, q);
            swapped.set(0, q, b);
            swapped.set(1, q, a);

            let base = vqc_forward(&features, &params, &config).unwrap();
            let other = vqc_forward(&features, &swapped, &config).unwrap();
            let diff: f64 = base
                .iter()
                .zip(&other)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if (a - b).abs() > 1e-6 {
                assert!(diff > 1e-9, "swapping distinct layer weights had no effect");
                observed_sensitive += 1;
            }
        }
        assert!(observed_sensitive > 0);
    }

    #[test]
    fn forward_is_deterministic() {
        let config = VqcConfig::new(4, 2).unwrap();
        let params = VqcParams::init_small(&config, 123);
        let features = [0.3, -1.2, 0.8, 2.1];
        let a = vqc_forward(&features, &params, &config).unwrap();
        let b = vqc_forward(&features, &params, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_small_stays_in_bound_and_is_seeded() {
        let config = VqcConfig::new(4, 2).unwrap();
        let a = VqcParams::init_small(&config, 7);
        let b = VqcParams::init_small(&config, 7);
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|w| w.abs() <= PI / 50.0));
    }

    proptest! {
        #[test]
        fn prop_outputs_stay_in_range(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=4);
            let layers = rng.gen_range(1..=3);
            let config = VqcConfig::new(n, layers).unwrap();
            let weights = (0..config.param_count()).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let params = VqcParams::from_weights(&config, weights).unwrap();
            let features: Vec<f64> = (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let out = vqc_forward(&features, &params, &config).unwrap();
            for o in out {
                prop_assert!((-1.0..=1.0).contains(&o));
            }
        }
    }
}

//! Minimal statevector simulator.
//!
//! Supports exactly what the circuit layer needs: |0...0⟩ preparation, RY and
//! CNOT gates, and Pauli-Z expectations. Gate kernels update strided amplitude
//! pairs in place, so a single-qubit gate costs O(2^n) instead of the O(4^n)
//! a full matrix product would. The [`dense`] submodule builds full-dimension
//! gate matrices via Kronecker products; it exists to cross-check the fast
//! kernels and is only exercised by tests.
//!
//! Convention: qubit `i` corresponds to bit `i` of the basis-state index
//! (little-endian), so |q1 q0⟩ = |10⟩ is index 2.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest simulable register; 2^16 amplitudes keeps the worst case at 1 MiB.
pub const MAX_QUBITS: usize = 16;

/// Normalized complex amplitude vector over the 2^n computational basis states.
#[derive(Clone, Debug)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    n_qubits: usize,
}

impl StateVector {
    /// Prepare |0...0⟩ on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            amplitudes,
            n_qubits,
        })
    }

    /// Prepare the computational basis state with the given index.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut state = Self::zero(n_qubits)?;
        if index >= state.amplitudes.len() {
            return Err(Error::Index(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        state.amplitudes[0] = Complex64::new(0.0, 0.0);
        state.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(state)
    }

    /// Build a state from raw amplitudes. The length must be a power of two
    /// and the vector must be normalized within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Argument(format!(
                "amplitude vector length {len} is not a power of two"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Argument(format!(
                "amplitudes are not normalized: |psi|^2 = {norm}"
            )));
        }
        Ok(StateVector {
            amplitudes,
            n_qubits,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Sum of squared amplitude magnitudes; 1 for a valid state.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::Index(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Apply R_Y(theta) = [[cos(t/2), -sin(t/2)], [sin(t/2), cos(t/2)]] to one qubit.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        if !theta.is_finite() {
            return Err(Error::Argument(format!("non-finite angle {theta}")));
        }
        let cos = (theta / 2.0).cos();
        let sin = (theta / 2.0).sin();
        let step = 1 << qubit;
        for block in (0..self.amplitudes.len()).step_by(2 * step) {
            for offset in 0..step {
                let j = block + offset;
                let k = j | step;
                let a = self.amplitudes[j];
                let b = self.amplitudes[k];
                self.amplitudes[j] = cos * a - sin * b;
                self.amplitudes[k] = sin * a + cos * b;
            }
        }
        Ok(())
    }

    /// Flip the target bit on every basis state whose control bit is 1.
    /// A pure amplitude permutation, so it is exact.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Argument(format!(
                "cnot control and target must differ, both are {control}"
            )));
        }
        let cmask = 1 << control;
        let tmask = 1 << target;
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
        Ok(())
    }

    /// ⟨Z⟩ on one qubit: Σ_k (±1)|a_k|² with the sign given by the qubit's bit.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1 << qubit;
        let mut expectation = 0.0;
        for (i, amp) in self.amplitudes.iter().enumerate() {
            let p = amp.norm_sqr();
            if i & mask == 0 {
                expectation += p;
            } else {
                expectation -= p;
            }
        }
        Ok(expectation)
    }
}

/// The standard 2x2 Pauli matrices.
#[derive(Clone, Debug)]
pub struct PauliMatrices {
    pub sigma_x: [[Complex64; 2]; 2],
    pub sigma_y: [[Complex64; 2]; 2],
    pub sigma_z: [[Complex64; 2]; 2],
}

impl PauliMatrices {
    pub fn standard() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        PauliMatrices {
            sigma_x: [[zero, one], [one, zero]],
            sigma_y: [[zero, -i], [i, zero]],
            sigma_z: [[one, zero], [zero, -one]],
        }
    }
}

/// Apply a full-dimension unitary to a state by plain matrix-vector product.
///
/// This is the oracle route: no strided kernels, no shortcuts. The matrix must
/// be unitary within 1e-10 and match the state dimension.
pub fn dense_oracle_apply(state: &StateVector, unitary: &dense::DenseMatrix) -> Result<StateVector> {
    let dim = state.amplitudes.len();
    if unitary.dim() != dim {
        return Err(Error::Argument(format!(
            "matrix dimension {} does not match state dimension {dim}",
            unitary.dim()
        )));
    }
    if !unitary.is_unitary(1e-10) {
        return Err(Error::Argument("matrix is not unitary within 1e-10".into()));
    }
    let amplitudes = unitary.mul_vec(state.amplitudes());
    Ok(StateVector {
        amplitudes,
        n_qubits: state.n_qubits,
    })
}

pub mod dense {
    //! Dense complex matrices and full-dimension gate constructors.
    //!
    //! Everything here is O(4^n) by design: the point is an independent,
    //! obviously-correct route for validating the strided gate kernels.

    use super::PauliMatrices;
    use num_complex::Complex64;

    /// Row-major square complex matrix.
    #[derive(Clone, Debug)]
    pub struct DenseMatrix {
        dim: usize,
        data: Vec<Complex64>,
    }

    impl DenseMatrix {
        pub fn zeros(dim: usize) -> Self {
            DenseMatrix {
                dim,
                data: vec![Complex64::new(0.0, 0.0); dim * dim],
            }
        }

        pub fn identity(dim: usize) -> Self {
            let mut m = Self::zeros(dim);
            for i in 0..dim {
                m.set(i, i, Complex64::new(1.0, 0.0));
            }
            m
        }

        pub fn from_2x2(g: [[Complex64; 2]; 2]) -> Self {
            let mut m = Self::zeros(2);
            for (r, row) in g.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    m.set(r, c, v);
                }
            }
            m
        }

        pub fn dim(&self) -> usize {
            self.dim
        }

        pub fn get(&self, row: usize, col: usize) -> Complex64 {
            self.data[row * self.dim + col]
        }

        pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
            self.data[row * self.dim + col] = value;
        }

        /// Kronecker product; `self` acts on the high-order index bits.
        pub fn kron(&self, other: &DenseMatrix) -> DenseMatrix {
            let dim = self.dim * other.dim;
            let mut out = DenseMatrix::zeros(dim);
            for ra in 0..self.dim {
                for ca in 0..self.dim {
                    let a = self.get(ra, ca);
                    for rb in 0..other.dim {
                        for cb in 0..other.dim {
                            out.set(
                                ra * other.dim + rb,
                                ca * other.dim + cb,
                                a * other.get(rb, cb),
                            );
                        }
                    }
                }
            }
            out
        }

        pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
            assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
            let mut out = DenseMatrix::zeros(self.dim);
            for r in 0..self.dim {
                for k in 0..self.dim {
                    let a = self.get(r, k);
                    if a == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for c in 0..self.dim {
                        let v = out.get(r, c) + a * rhs.get(k, c);
                        out.set(r, c, v);
                    }
                }
            }
            out
        }

        /// Conjugate transpose.
        pub fn dagger(&self) -> DenseMatrix {
            let mut out = DenseMatrix::zeros(self.dim);
            for r in 0..self.dim {
                for c in 0..self.dim {
                    out.set(c, r, self.get(r, c).conj());
                }
            }
            out
        }

        /// True when U†U = I within `tol` entrywise.
        pub fn is_unitary(&self, tol: f64) -> bool {
            let product = self.dagger().matmul(self);
            for r in 0..self.dim {
                for c in 0..self.dim {
                    let expected = if r == c { 1.0 } else { 0.0 };
                    let d = product.get(r, c) - Complex64::new(expected, 0.0);
                    if d.norm() > tol {
                        return false;
                    }
                }
            }
            true
        }

        pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
            assert_eq!(self.dim, v.len(), "matrix-vector dimension mismatch");
            let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
            for r in 0..self.dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..self.dim {
                    acc += self.get(r, c) * v[c];
                }
                out[r] = acc;
            }
            out
        }
    }

    /// The 2x2 R_Y(theta) rotation.
    pub fn ry(theta: f64) -> DenseMatrix {
        let cos = Complex64::new((theta / 2.0).cos(), 0.0);
        let sin = Complex64::new((theta / 2.0).sin(), 0.0);
        let mut m = DenseMatrix::zeros(2);
        m.set(0, 0, cos);
        m.set(0, 1, -sin);
        m.set(1, 0, sin);
        m.set(1, 1, cos);
        m
    }

    /// Embed a 2x2 gate on one qubit of an n-qubit register.
    ///
    /// With qubit 0 on the least-significant bit the full operator is
    /// I_(high) ⊗ gate ⊗ I_(low), where `low` spans `qubit` bits.
    pub fn single_qubit_full(n_qubits: usize, qubit: usize, gate: &DenseMatrix) -> DenseMatrix {
        assert!(qubit < n_qubits);
        let low = DenseMatrix::identity(1 << qubit);
        let high = DenseMatrix::identity(1 << (n_qubits - 1 - qubit));
        high.kron(&gate.kron(&low))
    }

    /// Full-dimension CNOT as an explicit permutation matrix.
    pub fn cnot_full(n_qubits: usize, control: usize, target: usize) -> DenseMatrix {
        assert!(control < n_qubits && target < n_qubits && control != target);
        let dim = 1 << n_qubits;
        let mut m = DenseMatrix::zeros(dim);
        for col in 0..dim {
            let row = if col & (1 << control) != 0 {
                col ^ (1 << target)
            } else {
                col
            };
            m.set(row, col, Complex64::new(1.0, 0.0));
        }
        m
    }

    /// Full-dimension Pauli-Z on one qubit (diagonal ±1).
    pub fn pauli_z_full(n_qubits: usize, qubit: usize) -> DenseMatrix {
        let z = DenseMatrix::from_2x2(PauliMatrices::standard().sigma_z);
        single_qubit_full(n_qubits, qubit, &z)
    }
}

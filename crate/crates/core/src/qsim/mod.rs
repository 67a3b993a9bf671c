//! Dense statevector simulation of the variational quantum circuit.
//!
//! Conventions, fixed crate-wide:
//! * qubit 0 is the MOST significant bit of a basis index, matching the
//!   Kronecker-product order of the tensor product encoding (the first
//!   factor varies slowest);
//! * rotations follow `R_A(theta) = exp(-i * theta * A / 2)`;
//! * the per-layer circuit is a CNOT chain (wire k controls k+1) followed by
//!   `R_X(alpha) R_Y(beta) R_Z(gamma)` on every wire, applied in that order.

mod grad;

pub use grad::{vqc_backward, vqc_grad_adjoint, vqc_grad_param_shift};

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QsimError {
    #[error("wire {wire} out of range for {num_qubits} qubits")]
    WireOutOfRange { wire: usize, num_qubits: usize },
    #[error("control and target wires must differ (both {0})")]
    EqualWires(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("feature {index} = {value} outside [0, 1] with squashing disabled")]
    FeatureOutOfDomain { index: usize, value: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Logistic squashing function used at the classical-to-quantum interface.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid`] expressed through its output value.
pub fn sigmoid_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Pauli rotation axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];
}

/// How classical features are mapped onto qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingSpec {
    pub num_qubits: usize,
    /// Apply the sigmoid before the angle mapping. With squashing disabled
    /// the features must already lie in `[0, 1]`.
    pub squash: bool,
}

impl EncodingSpec {
    pub fn new(num_qubits: usize, squash: bool) -> Self {
        Self { num_qubits, squash }
    }
}

/// Per-layer, per-qubit rotation angles of the parametric circuit, stored
/// row-major as `(layer, wire, axis)` with axis order `(alpha, beta, gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PqcParams {
    pub num_qubits: usize,
    pub depth: usize,
    /// Close the CNOT chain into a ring (last wire controls wire 0).
    pub ring_closure: bool,
    pub angles: Vec<f64>,
}

impl PqcParams {
    pub fn zeros(num_qubits: usize, depth: usize) -> Self {
        Self {
            num_qubits,
            depth,
            ring_closure: false,
            angles: vec![0.0; depth * num_qubits * 3],
        }
    }

    /// Uniform initialization in `(-pi/4, pi/4)`; small angles keep the
    /// initial expectations away from saturation.
    pub fn random<R: Rng>(num_qubits: usize, depth: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(num_qubits, depth);
        for a in &mut p.angles {
            *a = rng.random_range(-std::f64::consts::FRAC_PI_4..std::f64::consts::FRAC_PI_4);
        }
        p
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    #[inline]
    pub fn angle_index(&self, layer: usize, wire: usize, axis: usize) -> usize {
        (layer * self.num_qubits + wire) * 3 + axis
    }

    pub fn angle(&self, layer: usize, wire: usize, axis: usize) -> f64 {
        self.angles[self.angle_index(layer, wire, axis)]
    }
}

/// The 2^U complex amplitudes of a U-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The computational basis state |0..0>.
    pub fn zero_state(num_qubits: usize) -> Self {
        assert!(num_qubits >= 1, "need at least one qubit");
        let mut amps = vec![Complex64::ZERO; 1 << num_qubits];
        amps[0] = Complex64::ONE;
        Self { num_qubits, amps }
    }

    /// Build from explicit amplitudes; enforces the unit-norm invariant.
    pub fn from_amplitudes(num_qubits: usize, amps: Vec<Complex64>) -> Result<Self, QsimError> {
        if amps.len() != 1 << num_qubits {
            return Err(QsimError::InvalidState(format!(
                "{} amplitudes for {} qubits (need {})",
                amps.len(),
                num_qubits,
                1usize << num_qubits
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(QsimError::InvalidState(format!(
                "squared norm {norm} deviates from 1 beyond 1e-12"
            )));
        }
        Ok(Self { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub(crate) fn raw(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn from_raw(num_qubits: usize, amps: Vec<Complex64>) -> Self {
        Self { num_qubits, amps }
    }

    #[inline]
    fn wire_mask(&self, wire: usize) -> Result<usize, QsimError> {
        if wire >= self.num_qubits {
            return Err(QsimError::WireOutOfRange {
                wire,
                num_qubits: self.num_qubits,
            });
        }
        Ok(1usize << (self.num_qubits - 1 - wire))
    }

    /// Apply a single-qubit unitary given by its 2x2 matrix rows.
    fn apply_single(&mut self, wire: usize, m: [[Complex64; 2]; 2]) -> Result<(), QsimError> {
        let mask = self.wire_mask(wire)?;
        let n = self.amps.len();
        let mut base = 0;
        while base < n {
            for off in 0..mask {
                let i0 = base + off;
                let i1 = i0 + mask;
                let a0 = self.amps[i0];
                let a1 = self.amps[i1];
                self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += mask << 1;
        }
        Ok(())
    }

    /// In-place Pauli rotation `R_A(angle)` on one wire.
    pub fn apply_rotation(
        &mut self,
        axis: PauliAxis,
        wire: usize,
        angle: f64,
    ) -> Result<(), QsimError> {
        let c = Complex64::new((angle / 2.0).cos(), 0.0);
        let s = (angle / 2.0).sin();
        let m = match axis {
            PauliAxis::X => [
                [c, Complex64::new(0.0, -s)],
                [Complex64::new(0.0, -s), c],
            ],
            PauliAxis::Y => [
                [c, Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), c],
            ],
            PauliAxis::Z => [
                [Complex64::new(c.re, -s), Complex64::ZERO],
                [Complex64::ZERO, Complex64::new(c.re, s)],
            ],
        };
        self.apply_single(wire, m)
    }

    /// In-place bare Pauli gate (used by the gradient engine and the
    /// depolarizing hook).
    pub fn apply_pauli(&mut self, axis: PauliAxis, wire: usize) -> Result<(), QsimError> {
        let i = Complex64::I;
        let m = match axis {
            PauliAxis::X => [[Complex64::ZERO, Complex64::ONE], [Complex64::ONE, Complex64::ZERO]],
            PauliAxis::Y => [[Complex64::ZERO, -i], [i, Complex64::ZERO]],
            PauliAxis::Z => [[Complex64::ONE, Complex64::ZERO], [Complex64::ZERO, -Complex64::ONE]],
        };
        self.apply_single(wire, m)
    }

    /// In-place CNOT; swaps amplitude pairs where the control bit is 1.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<(), QsimError> {
        if control == target {
            return Err(QsimError::EqualWires(control));
        }
        let cmask = self.wire_mask(control)?;
        let tmask = self.wire_mask(target)?;
        for idx in 0..self.amps.len() {
            if idx & cmask != 0 && idx & tmask == 0 {
                self.amps.swap(idx, idx | tmask);
            }
        }
        Ok(())
    }

    /// Depolarizing hook for ablations: with probability `prob` applies a
    /// uniformly random Pauli to the wire. `prob = 0` is a no-op.
    pub fn apply_depolarizing<R: Rng>(
        &mut self,
        wire: usize,
        prob: f64,
        rng: &mut R,
    ) -> Result<(), QsimError> {
        if prob > 0.0 && rng.random_range(0.0..1.0) < prob {
            let axis = PauliAxis::ALL[rng.random_range(0..3)];
            self.apply_pauli(axis, wire)?;
        }
        Ok(())
    }
}

/// Tensor product encoding: each feature drives one qubit, producing the
/// product state with per-qubit amplitudes
/// `[cos(pi/2 * v_i), sin(pi/2 * v_i)]` where `v_i` is the (optionally
/// sigmoid-squashed) feature.
pub fn encode_tpe(features: &[f64], spec: &EncodingSpec) -> Result<StateVector, QsimError> {
    if features.len() != spec.num_qubits {
        return Err(QsimError::DimensionMismatch(format!(
            "{} features for {} qubits",
            features.len(),
            spec.num_qubits
        )));
    }
    let mut amps = vec![Complex64::ONE];
    for (i, &x) in features.iter().enumerate() {
        let v = if spec.squash {
            sigmoid(x)
        } else {
            if !(0.0..=1.0).contains(&x) {
                return Err(QsimError::FeatureOutOfDomain { index: i, value: x });
            }
            x
        };
        let (c, s) = ((FRAC_PI_2 * v).cos(), (FRAC_PI_2 * v).sin());
        // Earlier factors vary slowest: qubit 0 ends up the most significant
        // bit, so each new qubit appends the fastest-varying bit.
        let mut next = vec![Complex64::ZERO; amps.len() * 2];
        for (p, &a) in amps.iter().enumerate() {
            next[p << 1] = a * c;
            next[(p << 1) | 1] = a * s;
        }
        amps = next;
    }
    StateVector::from_amplitudes(spec.num_qubits, amps)
}

/// One pass of the parametric circuit: per layer, the CNOT chain followed by
/// the three rotations on every wire.
pub fn pqc_forward(state: &StateVector, params: &PqcParams) -> Result<StateVector, QsimError> {
    if state.num_qubits() != params.num_qubits {
        return Err(QsimError::DimensionMismatch(format!(
            "state has {} qubits, params expect {}",
            state.num_qubits(),
            params.num_qubits
        )));
    }
    let mut out = state.clone();
    for layer in 0..params.depth {
        apply_pqc_layer(&mut out, params, layer)?;
    }
    Ok(out)
}

pub(crate) fn apply_pqc_layer(
    state: &mut StateVector,
    params: &PqcParams,
    layer: usize,
) -> Result<(), QsimError> {
    let u = params.num_qubits;
    if u > 1 {
        for k in 0..u - 1 {
            state.apply_cnot(k, k + 1)?;
        }
        if params.ring_closure {
            state.apply_cnot(u - 1, 0)?;
        }
    }
    for wire in 0..u {
        for (axis_idx, axis) in PauliAxis::ALL.iter().enumerate() {
            state.apply_rotation(*axis, wire, params.angle(layer, wire, axis_idx))?;
        }
    }
    Ok(())
}

/// Pauli-Z expectation per qubit: component `j` is
/// `sum_b |amp_b|^2 * (1 - 2 * bit_j(b))`.
pub fn measure_z(state: &StateVector) -> Vec<f64> {
    let u = state.num_qubits();
    let mut out = vec![0.0; u];
    for (b, amp) in state.amplitudes().iter().enumerate() {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            let bit = (b >> (u - 1 - j)) & 1;
            *o += p * (1.0 - 2.0 * bit as f64);
        }
    }
    out
}

/// Forward evaluation of the whole VQC: encoding, parametric layers, and
/// Pauli-Z readout. The final state is kept so the adjoint gradient engine
/// can walk the circuit backwards without re-simulating.
#[derive(Debug, Clone)]
pub struct VqcForward {
    pub state: StateVector,
    pub expectations: Vec<f64>,
}

pub fn vqc_forward(
    features: &[f64],
    spec: &EncodingSpec,
    params: &PqcParams,
) -> Result<VqcForward, QsimError> {
    if spec.num_qubits != params.num_qubits {
        return Err(QsimError::DimensionMismatch(format!(
            "encoding uses {} qubits, params expect {}",
            spec.num_qubits, params.num_qubits
        )));
    }
    let mut state = encode_tpe(features, spec)?;
    for layer in 0..params.depth {
        apply_pqc_layer(&mut state, params, layer)?;
    }
    let expectations = measure_z(&state);
    Ok(VqcForward {
        state,
        expectations,
    })
}

/// Noisy variant of [`vqc_forward`] for ablations: applies the depolarizing
/// hook to every wire after each parametric layer. With `prob = 0` it is
/// exactly [`vqc_forward`].
pub fn vqc_forward_noisy<R: Rng>(
    features: &[f64],
    spec: &EncodingSpec,
    params: &PqcParams,
    prob: f64,
    rng: &mut R,
) -> Result<VqcForward, QsimError> {
    let mut state = encode_tpe(features, spec)?;
    for layer in 0..params.depth {
        apply_pqc_layer(&mut state, params, layer)?;
        for wire in 0..params.num_qubits {
            state.apply_depolarizing(wire, prob, rng)?;
        }
    }
    let expectations = measure_z(&state);
    Ok(VqcForward {
        state,
        expectations,
    })
}

//! Two independent gradient engines for the VQC.
//!
//! * `vqc_grad_adjoint` — reverse-mode differentiation on the simulator:
//!   one forward pass, then a single backward sweep that un-applies each
//!   gate while accumulating `dE/dtheta = Im(<lambda| A |ket>)` for a
//!   rotation with generator `A` (from `dR_A/dtheta = -i A/2 * R_A`).
//! * `vqc_grad_param_shift` — the hardware-style rule: for every rotation
//!   angle, `dE/dtheta = (E(theta + pi/2) - E(theta - pi/2)) / 2`, exact for
//!   involutory generators.
//!
//! Both differentiate `E = sum_j upstream_j * <sigma_z^(j)>`.

use super::{
    sigmoid_prime, vqc_forward, EncodingSpec, PauliAxis, PqcParams, QsimError, StateVector,
};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

enum CircuitGate {
    Cnot {
        control: usize,
        target: usize,
    },
    Rot {
        axis: PauliAxis,
        wire: usize,
        angle: f64,
        param_index: usize,
    },
}

fn circuit_gates(params: &PqcParams) -> Vec<CircuitGate> {
    let u = params.num_qubits;
    let mut gates = Vec::new();
    for layer in 0..params.depth {
        if u > 1 {
            for k in 0..u - 1 {
                gates.push(CircuitGate::Cnot {
                    control: k,
                    target: k + 1,
                });
            }
            if params.ring_closure {
                gates.push(CircuitGate::Cnot {
                    control: u - 1,
                    target: 0,
                });
            }
        }
        for wire in 0..u {
            for (axis_idx, axis) in PauliAxis::ALL.iter().enumerate() {
                gates.push(CircuitGate::Rot {
                    axis: *axis,
                    wire,
                    angle: params.angle(layer, wire, axis_idx),
                    param_index: params.angle_index(layer, wire, axis_idx),
                });
            }
        }
    }
    gates
}

/// `Im(<lambda| A_wire |ket>)` for a single-wire Pauli `A`, without
/// materializing `A |ket>`.
fn pauli_bilinear_im(
    lambda: &StateVector,
    ket: &StateVector,
    axis: PauliAxis,
    wire: usize,
) -> f64 {
    let u = ket.num_qubits();
    let mask = 1usize << (u - 1 - wire);
    let l = lambda.raw();
    let k = ket.raw();
    let mut acc = Complex64::ZERO;
    let n = k.len();
    let mut base = 0;
    while base < n {
        for off in 0..mask {
            let i0 = base + off;
            let i1 = i0 + mask;
            acc += match axis {
                PauliAxis::X => l[i0].conj() * k[i1] + l[i1].conj() * k[i0],
                PauliAxis::Y => {
                    Complex64::I * (l[i1].conj() * k[i0] - l[i0].conj() * k[i1])
                }
                PauliAxis::Z => l[i0].conj() * k[i0] - l[i1].conj() * k[i1],
            };
        }
        base += mask << 1;
    }
    acc.im
}

fn check_dims(
    features: &[f64],
    spec: &EncodingSpec,
    params: &PqcParams,
    upstream: &[f64],
) -> Result<(), QsimError> {
    if features.len() != spec.num_qubits
        || spec.num_qubits != params.num_qubits
        || upstream.len() != params.num_qubits
    {
        return Err(QsimError::DimensionMismatch(format!(
            "features {}, encoding {}, params {}, upstream {}",
            features.len(),
            spec.num_qubits,
            params.num_qubits,
            upstream.len()
        )));
    }
    Ok(())
}

/// Backward sweep from an already-computed final state. Returns
/// `(grad_angles, grad_features)`; the feature gradient includes the chain
/// through the encoding (and through the sigmoid when squashing is on).
pub fn vqc_backward(
    final_state: &StateVector,
    features: &[f64],
    spec: &EncodingSpec,
    params: &PqcParams,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), QsimError> {
    check_dims(features, spec, params, upstream)?;
    let u = params.num_qubits;

    // lambda = H |psi> with the diagonal observable H = sum_j u_j Z_j.
    let lambda_amps: Vec<Complex64> = final_state
        .raw()
        .iter()
        .enumerate()
        .map(|(b, a)| {
            let mut w = 0.0;
            for (j, &uj) in upstream.iter().enumerate() {
                let bit = (b >> (u - 1 - j)) & 1;
                w += uj * (1.0 - 2.0 * bit as f64);
            }
            a * w
        })
        .collect();
    let mut lambda = StateVector::from_raw(u, lambda_amps);
    let mut ket = final_state.clone();

    let mut grad_angles = vec![0.0; params.num_angles()];
    for gate in circuit_gates(params).iter().rev() {
        match *gate {
            CircuitGate::Rot {
                axis,
                wire,
                angle,
                param_index,
            } => {
                grad_angles[param_index] = pauli_bilinear_im(&lambda, &ket, axis, wire);
                ket.apply_rotation(axis, wire, -angle)?;
                lambda.apply_rotation(axis, wire, -angle)?;
            }
            CircuitGate::Cnot { control, target } => {
                ket.apply_cnot(control, target)?;
                lambda.apply_cnot(control, target)?;
            }
        }
    }

    // `ket` is now the encoded product state; each feature enters as
    // R_Y(pi * v_i) on its wire.
    let mut grad_features = vec![0.0; u];
    for wire in 0..u {
        let g_v = PI * pauli_bilinear_im(&lambda, &ket, PauliAxis::Y, wire);
        grad_features[wire] = if spec.squash {
            g_v * sigmoid_prime(features[wire])
        } else {
            g_v
        };
    }
    Ok((grad_angles, grad_features))
}

/// Adjoint-mode gradients of `E = sum_j upstream_j <sigma_z^(j)>` with
/// respect to every rotation angle and every input feature.
pub fn vqc_grad_adjoint(
    features: &[f64],
    spec: &EncodingSpec,
    params: &PqcParams,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), QsimError> {
    check_dims(features, spec, params, upstream)?;
    let fwd = vqc_forward(features, spec, params)?;
    vqc_backward(&fwd.state, features, spec, params, upstream)
}

/// Parameter-shift gradients of the same objective, angles only.
pub fn vqc_grad_param_shift(
    features: &[f64],
    spec: &EncodingSpec,
    params: &PqcParams,
    upstream: &[f64],
) -> Result<Vec<f64>, QsimError> {
    check_dims(features, spec, params, upstream)?;
    let mut grads = vec![0.0; params.num_angles()];
    let mut shifted = params.clone();
    for idx in 0..params.num_angles() {
        let orig = params.angles[idx];
        shifted.angles[idx] = orig + FRAC_PI_2;
        let plus = vqc_forward(features, spec, &shifted)?.expectations;
        shifted.angles[idx] = orig - FRAC_PI_2;
        let minus = vqc_forward(features, spec, &shifted)?.expectations;
        shifted.angles[idx] = orig;
        grads[idx] = upstream
            .iter()
            .zip(plus.iter().zip(&minus))
            .map(|(u, (p, m))| u * (p - m) / 2.0)
            .sum();
    }
    Ok(grads)
}

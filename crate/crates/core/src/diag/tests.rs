//! Oracle tests: exhaustive sign enumeration, closed-form suprema, and
//! hand-computed loss differences.

use super::*;
use crate::seed::rng_from;
use crate::tt::{TtLayer, TtShape};
use approx::assert_abs_diff_eq;
use rand::Rng;

fn unit_inputs(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nrm = linalg::norm2(&v);
            for x in &mut v {
                *x /= nrm;
            }
            v
        })
        .collect()
}

#[test]
fn zero_family_is_exactly_zero() {
    let sample = unit_inputs(6, 3, 1);
    let est = rademacher_estimate(&FunctionFamily::Zero, &sample, 50, 2).unwrap();
    assert_eq!(est.estimate, 0.0);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn sign_constant_on_single_point_is_one() {
    let sample = unit_inputs(1, 3, 3);
    let est = rademacher_estimate(&FunctionFamily::SignConstant, &sample, 64, 4).unwrap();
    assert_eq!(est.estimate, 1.0);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn linear_ball_matches_exhaustive_enumeration() {
    let sample = unit_inputs(4, 3, 5);
    // Exhaustive oracle over all 2^4 sign vectors with the closed-form sup.
    let mut exact = 0.0;
    for bits in 0..16u32 {
        let signs: Vec<f64> = (0..4)
            .map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        let mut acc = vec![0.0; 3];
        for (x, s) in sample.iter().zip(&signs) {
            for (a, xi) in acc.iter_mut().zip(x) {
                *a += s * xi;
            }
        }
        exact += linalg::norm2(&acc) / 4.0;
    }
    exact /= 16.0;

    let family = FunctionFamily::LinearBall { radius: 1.0 };
    let est = rademacher_estimate(&family, &sample, 4000, 6).unwrap();
    let margin = (3.0 * est.std_error).max(0.02);
    assert!(
        (est.estimate - exact).abs() <= margin,
        "estimate {} vs exact {exact} (margin {margin})",
        est.estimate
    );
    assert!(est.estimate >= 0.0);
}

#[test]
fn head_on_frozen_ascent_reaches_closed_form() {
    // For an affine family over the identity representation the supremum has
    // the closed form radius * |mean signed augmented input|.
    let sample = unit_inputs(5, 3, 7);
    let radius = 2.0;
    let family = FunctionFamily::head_on_frozen(Box::new(IdentityRep { dim: 3 }), radius);
    let mut rng = rng_from(8);
    let signs: Vec<f64> = (0..5)
        .map(|_| if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 })
        .collect();
    let mut u = vec![0.0; 4];
    for (x, &s) in sample.iter().zip(&signs) {
        for (k, xk) in x.iter().enumerate() {
            u[k] += s * xk;
        }
        u[3] += s;
    }
    for v in &mut u {
        *v /= 5.0;
    }
    let closed_form = radius * linalg::norm2(&u);
    let got = family.sup_correlation(&sample, &signs, 9);
    assert_abs_diff_eq!(got, closed_form, epsilon = 1e-6);
}

#[test]
fn estimates_are_deterministic_given_seed() {
    let sample = unit_inputs(6, 4, 10);
    let family = FunctionFamily::LinearBall { radius: 1.5 };
    let a = rademacher_estimate(&family, &sample, 200, 11).unwrap();
    let b = rademacher_estimate(&family, &sample, 200, 11).unwrap();
    assert_eq!(a, b);
    let c = rademacher_estimate(&family, &sample, 200, 12).unwrap();
    assert_ne!(a.estimate, c.estimate);
}

// ---------------------------------------------------------------------

fn labeled_toy(n_per: usize, seed: u64) -> Vec<LabeledGrid> {
    let mut rng = rng_from(seed);
    let mut out = Vec::new();
    for label in 0..2u16 {
        for _ in 0..n_per {
            let base = if label == 0 { 0.25 } else { 0.75 };
            let pixels: Vec<f32> = (0..4)
                .map(|_| (base + rng.random_range(-0.15..0.15)) as f32)
                .collect();
            out.push(LabeledGrid::new(2, 2, pixels, label).unwrap());
        }
    }
    out
}

#[test]
fn representation_difference_vanishes_for_same_representation() {
    let data = labeled_toy(20, 13);
    let family = HeadFamily::new(2);
    let h = IdentityRep { dim: 4 };
    // Reference head trained by the family's own protocol.
    let features: Vec<Vec<f64>> = data.iter().map(|g| g.pixels_f64()).collect();
    let labels: Vec<u16> = data.iter().map(|g| g.label).collect();
    let (ref_head, _) = train_head(&features, &labels, &family, 14).unwrap();
    let d = representation_difference(&h, &h, &family, &ref_head, &data, 15).unwrap();
    assert!(d <= 1e-3, "difference {d} above optimizer tolerance");
}

#[test]
fn zero_representation_pays_a_positive_difference() {
    let data = labeled_toy(20, 16);
    let family = HeadFamily::new(2);
    let h_ref = IdentityRep { dim: 4 };
    let h_new = ZeroRep { dim: 4 };
    let features: Vec<Vec<f64>> = data.iter().map(|g| g.pixels_f64()).collect();
    let labels: Vec<u16> = data.iter().map(|g| g.label).collect();
    let (ref_head, _) = train_head(&features, &labels, &family, 17).unwrap();
    let d = representation_difference(&h_new, &h_ref, &family, &ref_head, &data, 18).unwrap();
    assert!(d > 0.1, "degenerate representation scored {d}");
}

#[test]
fn scalar_rescaling_is_absorbed_by_the_affine_family() {
    let data = labeled_toy(20, 19);
    let family = HeadFamily::new(2);
    let h_ref = IdentityRep { dim: 4 };
    let h_new = ScaledRep {
        inner: IdentityRep { dim: 4 },
        scale: 3.0,
    };
    let features: Vec<Vec<f64>> = data.iter().map(|g| g.pixels_f64()).collect();
    let labels: Vec<u16> = data.iter().map(|g| g.label).collect();
    let (ref_head, _) = train_head(&features, &labels, &family, 20).unwrap();
    let d = representation_difference(&h_new, &h_ref, &family, &ref_head, &data, 21).unwrap();
    assert!(d.abs() <= 1e-3, "rescaling changed the difference: {d}");
}

#[test]
fn worst_case_difference_properties() {
    let data = labeled_toy(16, 22);
    let family = HeadFamily::new(2);
    let h = IdentityRep { dim: 4 };
    // Same representation on both sides: every probe recovers itself.
    let same = worst_case_difference(&h, &h, &family, &data, 4, 23).unwrap();
    assert!(same.value.abs() <= 1e-3, "got {}", same.value);
    assert_eq!(same.probes, 4);

    // Monotone in the probe count under a shared seed stream prefix.
    let h_new = ZeroRep { dim: 4 };
    let few = worst_case_difference(&h_new, &h, &family, &data, 4, 24).unwrap();
    let many = worst_case_difference(&h_new, &h, &family, &data, 16, 24).unwrap();
    assert!(many.value >= few.value - 1e-12);
    // Degenerate new representation: strictly positive.
    assert!(few.value > 0.1, "got {}", few.value);
}

// ---------------------------------------------------------------------

/// Constant-logit assemblies with hand-computable CE.
fn constant_model(bias: Vec<f64>) -> ModelAssembly {
    let shape = TtShape::new(vec![4], vec![2], vec![1, 1]).unwrap();
    let ttn = TtLayer::zeros(shape); // features are sigmoid(0) = 0.5
    let head = crate::learn::DenseHead {
        classes: 2,
        in_dim: 2,
        weight: vec![0.0; 4],
        bias,
    };
    ModelAssembly::ttn_head(ttn, head)
}

#[test]
fn transfer_risk_proxy_of_identical_models_is_zero() {
    let data = labeled_toy(4, 25);
    let m = constant_model(vec![0.4, -0.3]);
    let d = transfer_risk_proxy(&m, &m, &data).unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn transfer_risk_proxy_matches_hand_computed_difference() {
    // Four samples, two constant-logit models; CE difference by hand.
    let grids: Vec<LabeledGrid> = [0u16, 1, 0, 1]
        .iter()
        .map(|&l| LabeledGrid::new(2, 2, vec![0.5; 4], l).unwrap())
        .collect();
    let trained = constant_model(vec![1.0, 0.0]);
    let reference = constant_model(vec![0.0, 0.0]);
    let d = transfer_risk_proxy(&trained, &reference, &grids).unwrap();
    // Trained: logits (1, 0): CE = ln(1+e^-1) for label 0, ln(1+e) for 1.
    let ce_trained =
        ((1.0 + (-1.0f64).exp()).ln() * 2.0 + (1.0 + 1.0f64.exp()).ln() * 2.0) / 4.0;
    let ce_ref = std::f64::consts::LN_2;
    assert_abs_diff_eq!(d, ce_trained - ce_ref, epsilon = 1e-12);
}

#[test]
fn transfer_risk_proxy_with_perfect_reference_is_trained_ce() {
    // Single-class data lets a saturated constant model be perfect.
    let grids: Vec<LabeledGrid> = (0..4)
        .map(|_| LabeledGrid::new(2, 2, vec![0.5; 4], 0).unwrap())
        .collect();
    let trained = constant_model(vec![0.0, 0.0]);
    let reference = constant_model(vec![60.0, -60.0]);
    let d = transfer_risk_proxy(&trained, &reference, &grids).unwrap();
    assert_abs_diff_eq!(d, std::f64::consts::LN_2, epsilon = 1e-12);
}

// ---------------------------------------------------------------------

fn base_inputs() -> BoundInputs {
    BoundInputs {
        loss_bound: 10.0,
        lipschitz: 1.0,
        delta: 0.05,
        nu: 1.0,
        complexity_ttn: 0.0,
        complexity_head: 0.0,
        complexity_vqc: 0.0,
        n_source: 10_000,
        n_target: 1_200,
    }
}

#[test]
fn bound_rhs_zero_complexities_give_zero_leading_order() {
    let v = bound_rhs(&base_inputs()).unwrap();
    assert_eq!(v.leading_order, 0.0);
    assert!(v.constant_explicit > 0.0); // confidence terms remain
}

#[test]
fn bound_rhs_matches_arithmetic_oracle() {
    let inputs = BoundInputs {
        complexity_ttn: 60.0,
        complexity_head: 40.0,
        complexity_vqc: 48.0,
        ..base_inputs()
    };
    let v = bound_rhs(&inputs).unwrap();
    // sqrt(100/10000) + sqrt(48/1200) = 0.1 + 0.2.
    assert_abs_diff_eq!(v.leading_order, 0.3, epsilon = 1e-12);
}

#[test]
fn bound_rhs_scales_with_inverse_sqrt_of_data() {
    let inputs = BoundInputs {
        complexity_ttn: 60.0,
        complexity_head: 40.0,
        complexity_vqc: 48.0,
        ..base_inputs()
    };
    let v1 = bound_rhs(&inputs).unwrap();
    let doubled = BoundInputs {
        n_source: inputs.n_source * 2,
        n_target: inputs.n_target * 2,
        ..inputs
    };
    let v2 = bound_rhs(&doubled).unwrap();
    assert_abs_diff_eq!(
        v2.leading_order,
        v1.leading_order / 2.0f64.sqrt(),
        epsilon = 1e-12
    );
}

#[test]
fn bound_rhs_is_monotone_in_data_and_nu() {
    let mut prev = f64::INFINITY;
    for n0 in [1_000, 4_000, 16_000] {
        let v = bound_rhs(&BoundInputs {
            complexity_ttn: 100.0,
            complexity_vqc: 48.0,
            n_source: n0,
            ..base_inputs()
        })
        .unwrap();
        assert!(v.leading_order <= prev);
        assert!(v.constant_explicit > 0.0);
        prev = v.leading_order;
    }
    let lo_nu = bound_rhs(&BoundInputs {
        complexity_ttn: 100.0,
        nu: 0.5,
        ..base_inputs()
    })
    .unwrap();
    let hi_nu = bound_rhs(&BoundInputs {
        complexity_ttn: 100.0,
        nu: 2.0,
        ..base_inputs()
    })
    .unwrap();
    assert!(hi_nu.leading_order <= lo_nu.leading_order);
}

#[test]
fn bound_rhs_rejects_bad_inputs() {
    assert!(bound_rhs(&BoundInputs {
        n_source: 0,
        ..base_inputs()
    })
    .is_err());
    assert!(bound_rhs(&BoundInputs {
        delta: 1.5,
        ..base_inputs()
    })
    .is_err());
    assert!(bound_rhs(&BoundInputs {
        nu: 0.0,
        ..base_inputs()
    })
    .is_err());
}

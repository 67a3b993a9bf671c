//! Empirical capacity diagnostics: Monte-Carlo Rademacher complexity,
//! representation differences, a transfer-risk proxy, and a numeric
//! evaluator for the risk upper bound.
//!
//! These estimators quantify the quantities the two-stage protocol is built
//! around; they report settings (trial, restart, and step counts) so every
//! approximation is auditable.

use crate::data::LabeledGrid;
use crate::learn::{
    evaluate, softmax_ce, Adam, AdamHyper, DenseHead, LearnError, ModelAssembly, Pca,
};
use crate::linalg;
use crate::qsim::sigmoid;
use crate::seed;
use crate::tt::TtLayer;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("empty sample")]
    EmptySample,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

// ---------------------------------------------------------------------
// Representations.

/// A frozen feature map used by the difference estimators and the
/// head-on-frozen function family.
pub trait Representation: Sync {
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

/// The identity on fixed-dimension inputs.
pub struct IdentityRep {
    pub dim: usize,
}

impl Representation for IdentityRep {
    fn out_dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// Maps every input to the zero vector (a degenerate representation).
pub struct ZeroRep {
    pub dim: usize,
}

impl Representation for ZeroRep {
    fn out_dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// Scales another representation by a constant.
pub struct ScaledRep<R: Representation> {
    pub inner: R,
    pub scale: f64,
}

impl<R: Representation> Representation for ScaledRep<R> {
    fn out_dim(&self) -> usize {
        self.inner.out_dim()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.inner.apply(x).into_iter().map(|v| v * self.scale).collect()
    }
}

/// The trained feature extractor: sigmoid of the TT layer output.
pub struct TtnSigmoidRep {
    pub ttn: TtLayer,
}

impl Representation for TtnSigmoidRep {
    fn out_dim(&self) -> usize {
        self.ttn.shape().output_len()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.ttn
            .forward(x)
            .expect("representation applied to matching input")
            .into_iter()
            .map(sigmoid)
            .collect()
    }
}

/// PCA projection as a representation.
pub struct PcaRep {
    pub pca: Pca,
}

impl Representation for PcaRep {
    fn out_dim(&self) -> usize {
        self.pca.num_components
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        crate::learn::pca_project(x, &self.pca).expect("matching input dimension")
    }
}

// ---------------------------------------------------------------------
// Function families for Rademacher complexity.

/// A scalar-output function family with an evaluatable supremum of the
/// sign correlation `sup_f (1/n) sum_i sigma_i f(x_i)`.
pub enum FunctionFamily {
    /// The single zero function.
    Zero,
    /// The two constant functions {+1, -1}.
    SignConstant,
    /// Linear functionals of norm at most `radius`.
    LinearBall { radius: f64 },
    /// Affine heads of bounded norm on top of a frozen representation; the
    /// supremum is approximated by seeded multi-restart gradient ascent.
    HeadOnFrozen {
        rep: Box<dyn Representation + Send>,
        radius: f64,
        restarts: usize,
        steps: usize,
    },
}

impl FunctionFamily {
    pub fn head_on_frozen(rep: Box<dyn Representation + Send>, radius: f64) -> Self {
        FunctionFamily::HeadOnFrozen {
            rep,
            radius,
            restarts: 8,
            steps: 200,
        }
    }

    /// Human-readable settings string for reports.
    pub fn describe(&self) -> String {
        match self {
            FunctionFamily::Zero => "zero".into(),
            FunctionFamily::SignConstant => "sign-constant".into(),
            FunctionFamily::LinearBall { radius } => format!("linear-ball radius={radius}"),
            FunctionFamily::HeadOnFrozen {
                radius,
                restarts,
                steps,
                ..
            } => format!("head-on-frozen radius={radius} restarts={restarts} steps={steps}"),
        }
    }

    /// `sup_f (1/n) sum_i sigma_i f(x_i)` for one sign draw.
    fn sup_correlation(&self, sample: &[Vec<f64>], signs: &[f64], sup_seed: u64) -> f64 {
        let n = sample.len() as f64;
        match self {
            FunctionFamily::Zero => 0.0,
            FunctionFamily::SignConstant => {
                let s: f64 = signs.iter().sum();
                s.abs() / n
            }
            FunctionFamily::LinearBall { radius } => {
                // sup over the ball is radius * |mean signed input|.
                let d = sample[0].len();
                let mut acc = vec![0.0; d];
                for (x, &s) in sample.iter().zip(signs) {
                    for (a, xi) in acc.iter_mut().zip(x) {
                        *a += s * xi;
                    }
                }
                radius * linalg::norm2(&acc) / n
            }
            FunctionFamily::HeadOnFrozen {
                rep,
                radius,
                restarts,
                steps,
            } => {
                // Objective g(w) = w . u with u = mean of signed augmented
                // features; ascent projected onto the norm ball.
                let d = rep.out_dim() + 1;
                let mut u = vec![0.0; d];
                for (x, &s) in sample.iter().zip(signs) {
                    let h = rep.apply(x);
                    for (k, hk) in h.iter().enumerate() {
                        u[k] += s * hk;
                    }
                    u[d - 1] += s;
                }
                for v in &mut u {
                    *v /= n;
                }
                let mut best = f64::NEG_INFINITY;
                for r in 0..*restarts {
                    let mut rng = seed::rng_from(seed::derive_indexed(sup_seed, "ascent", r as u64));
                    let mut w: Vec<f64> =
                        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    project_ball(&mut w, *radius);
                    let lr = 0.1 * radius.max(1e-12);
                    for _ in 0..*steps {
                        for (wk, uk) in w.iter_mut().zip(&u) {
                            *wk += lr * uk;
                        }
                        project_ball(&mut w, *radius);
                    }
                    let val: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
                    best = best.max(val);
                }
                best
            }
        }
    }
}

fn project_ball(w: &mut [f64], radius: f64) {
    let nrm = linalg::norm2(w);
    if nrm > radius {
        let s = radius / nrm;
        for v in w {
            *v *= s;
        }
    }
}

/// Seeded sample of unit-norm vectors, the standard input set for the
/// Rademacher estimators.
pub fn unit_sample(count: usize, dim: usize, sample_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng_from(sample_seed);
    (0..count)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = linalg::norm2(&v).max(f64::MIN_POSITIVE);
            for x in &mut v {
                *x /= n;
            }
            v
        })
        .collect()
}

/// Monte-Carlo estimate of the empirical Rademacher complexity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RademacherEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Average over `trials` sign draws of the family's supremum correlation.
/// Trials run concurrently with per-trial derived seeds and aggregate in
/// trial-index order.
pub fn rademacher_estimate(
    family: &FunctionFamily,
    sample: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> Result<RademacherEstimate, DiagError> {
    if sample.is_empty() {
        return Err(DiagError::EmptySample);
    }
    if trials == 0 {
        return Err(DiagError::InvalidInput("trials must be >= 1".into()));
    }
    let sups: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = seed::derive_indexed(seed, "rademacher-trial", t as u64);
            let mut rng = seed::rng_from(trial_seed);
            let signs: Vec<f64> = (0..sample.len())
                .map(|_| if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 })
                .collect();
            family.sup_correlation(sample, &signs, trial_seed)
        })
        .collect();
    let mean: f64 = sups.iter().sum::<f64>() / trials as f64;
    let std_error = if trials > 1 {
        let var: f64 =
            sups.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        estimate: mean,
        std_error,
        trials,
    })
}

// ---------------------------------------------------------------------
// Representation differences.

/// The affine head family used for the inner infimum, with its convergence
/// protocol: full-batch Adam until the gradient norm falls below `grad_tol`
/// or `max_steps` is hit, multi-restart, minimum taken.
#[derive(Debug, Clone)]
pub struct HeadFamily {
    pub classes: usize,
    pub restarts: usize,
    pub max_steps: usize,
    pub grad_tol: f64,
    pub learning_rate: f64,
}

impl HeadFamily {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            restarts: 4,
            max_steps: 5000,
            grad_tol: 1e-6,
            learning_rate: 0.05,
        }
    }
}

fn mean_ce_of_head(
    head: &DenseHead,
    features: &[Vec<f64>],
    labels: &[u16],
) -> Result<f64, DiagError> {
    let mut total = 0.0;
    for (f, &l) in features.iter().zip(labels) {
        let logits = head.logits(f).map_err(DiagError::Learn)?;
        total += softmax_ce(&logits, usize::from(l)).map_err(DiagError::Learn)?.0;
    }
    Ok(total / features.len() as f64)
}

/// Full-batch training of one head from a seeded init; returns the head and
/// its final mean CE.
fn train_head(
    features: &[Vec<f64>],
    labels: &[u16],
    family: &HeadFamily,
    init_seed: u64,
) -> Result<(DenseHead, f64), DiagError> {
    let in_dim = features[0].len();
    let mut rng = seed::rng_from(init_seed);
    let mut head = DenseHead::random(family.classes, in_dim, &mut rng);
    let mut adam = Adam::new(
        AdamHyper::with_lr(family.learning_rate),
        head.param_count(),
    );
    let n = features.len() as f64;
    for _ in 0..family.max_steps {
        let mut gw = vec![0.0; head.weight.len()];
        let mut gb = vec![0.0; head.bias.len()];
        for (f, &l) in features.iter().zip(labels) {
            let logits = head.logits(f).map_err(DiagError::Learn)?;
            let (_, dlogits) =
                softmax_ce(&logits, usize::from(l)).map_err(DiagError::Learn)?;
            let g = head.backward(f, &dlogits).map_err(DiagError::Learn)?;
            for (a, v) in gw.iter_mut().zip(&g.weight) {
                *a += v / n;
            }
            for (a, v) in gb.iter_mut().zip(&g.bias) {
                *a += v / n;
            }
        }
        let grad_norm =
            (gw.iter().chain(&gb).map(|g| g * g).sum::<f64>()).sqrt();
        if grad_norm < family.grad_tol {
            break;
        }
        let mut flat = Vec::with_capacity(head.param_count());
        head.append_params(&mut flat);
        let mut grads = gw;
        grads.extend_from_slice(&gb);
        adam.step(&mut flat, &grads).map_err(DiagError::Learn)?;
        head.load_params(&flat);
    }
    let ce = mean_ce_of_head(&head, features, labels)?;
    Ok((head, ce))
}

fn features_of(rep: &dyn Representation, data: &[LabeledGrid]) -> Vec<Vec<f64>> {
    data.iter().map(|g| rep.apply(&g.pixels_f64())).collect()
}

fn labels_of(data: &[LabeledGrid]) -> Vec<u16> {
    data.iter().map(|g| g.label).collect()
}

/// Best achievable mean CE of the head family on a representation
/// (multi-restart approximation of the infimum).
fn inf_ce(
    rep: &dyn Representation,
    data: &[LabeledGrid],
    family: &HeadFamily,
    seed_base: u64,
) -> Result<f64, DiagError> {
    let features = features_of(rep, data);
    let labels = labels_of(data);
    let mut best = f64::INFINITY;
    for r in 0..family.restarts {
        let (_, ce) = train_head(
            &features,
            &labels,
            family,
            seed::derive_indexed(seed_base, "inf-restart", r as u64),
        )?;
        best = best.min(ce);
    }
    Ok(best)
}

/// Difference between the best head loss on a new representation and the
/// loss of a given reference head on the reference representation.
pub fn representation_difference(
    h_new: &dyn Representation,
    h_ref: &dyn Representation,
    head_family: &HeadFamily,
    ref_head: &DenseHead,
    data: &[LabeledGrid],
    seed: u64,
) -> Result<f64, DiagError> {
    if data.is_empty() {
        return Err(DiagError::EmptySample);
    }
    if ref_head.in_dim != h_ref.out_dim() {
        return Err(DiagError::DimensionMismatch(format!(
            "reference head takes {} features, representation emits {}",
            ref_head.in_dim,
            h_ref.out_dim()
        )));
    }
    let best_new = inf_ce(h_new, data, head_family, seed)?;
    let ref_features = features_of(h_ref, data);
    let ref_ce = mean_ce_of_head(ref_head, &ref_features, &labels_of(data))?;
    Ok(best_new - ref_ce)
}

/// Worst-case variant: the reference head is replaced by the worst of
/// `probe_heads` seeded, independently trained reference heads (a lower
/// bound on the true supremum, reported with the probe count).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseDifference {
    pub value: f64,
    pub probes: usize,
}

pub fn worst_case_difference(
    h_new: &dyn Representation,
    h_ref: &dyn Representation,
    head_family: &HeadFamily,
    data: &[LabeledGrid],
    probe_heads: usize,
    seed: u64,
) -> Result<WorstCaseDifference, DiagError> {
    if data.is_empty() {
        return Err(DiagError::EmptySample);
    }
    if probe_heads == 0 {
        return Err(DiagError::InvalidInput("probe_heads must be >= 1".into()));
    }
    let best_new = inf_ce(h_new, data, head_family, seed)?;
    let ref_features = features_of(h_ref, data);
    let labels = labels_of(data);
    let mut worst = f64::NEG_INFINITY;
    for p in 0..probe_heads {
        let (_, probe_ce) = train_head(
            &ref_features,
            &labels,
            head_family,
            seed::derive_indexed(seed, "probe-head", p as u64),
        )?;
        worst = worst.max(best_new - probe_ce);
    }
    Ok(WorstCaseDifference {
        value: worst,
        probes: probe_heads,
    })
}

// ---------------------------------------------------------------------
// Transfer-risk proxy.

/// Mean test CE of the trained model minus mean test CE of the reference
/// model. The true optimum is unobservable, so the reference is pluggable
/// and the output is a proxy, labelled as such in reports.
pub fn transfer_risk_proxy(
    model_trained: &ModelAssembly,
    model_reference: &ModelAssembly,
    test_data: &[LabeledGrid],
) -> Result<f64, DiagError> {
    if test_data.is_empty() {
        return Err(DiagError::EmptySample);
    }
    let trained = evaluate(model_trained, test_data).map_err(DiagError::Learn)?;
    let reference = evaluate(model_reference, test_data).map_err(DiagError::Learn)?;
    Ok(trained.mean_ce - reference.mean_ce)
}

// ---------------------------------------------------------------------
// Risk-bound evaluator.

/// Inputs to the bound evaluator. Complexity values default to trainable
/// parameter counts upstream; `nu` has no estimation procedure and must be
/// supplied (default 1.0 at the call sites that surface it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Loss bound B.
    pub loss_bound: f64,
    /// Loss Lipschitz constant L.
    pub lipschitz: f64,
    /// Confidence level delta in (0, 1).
    pub delta: f64,
    /// Task-diversity constant nu > 0.
    pub nu: f64,
    pub complexity_ttn: f64,
    pub complexity_head: f64,
    pub complexity_vqc: f64,
    pub n_source: usize,
    pub n_target: usize,
}

/// Both figures the bound evaluator reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    /// `(1/nu) sqrt((C_ttn + C_head)/n0) + sqrt(C_vqc/nT)`.
    pub leading_order: f64,
    /// Constant-explicit form, adding `16 L sqrt(.)` factors and the
    /// `8 B sqrt(log(2/delta)/n)` terms of both stages.
    pub constant_explicit: f64,
}

pub fn bound_rhs(inputs: &BoundInputs) -> Result<BoundValue, DiagError> {
    let BoundInputs {
        loss_bound,
        lipschitz,
        delta,
        nu,
        complexity_ttn,
        complexity_head,
        complexity_vqc,
        n_source,
        n_target,
    } = *inputs;
    if n_source == 0 || n_target == 0 {
        return Err(DiagError::InvalidInput(
            "sample sizes must be positive".into(),
        ));
    }
    if !(loss_bound > 0.0 && lipschitz > 0.0 && nu > 0.0) {
        return Err(DiagError::InvalidInput(
            "B, L, and nu must be positive".into(),
        ));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(DiagError::InvalidInput(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    if complexity_ttn < 0.0 || complexity_head < 0.0 || complexity_vqc < 0.0 {
        return Err(DiagError::InvalidInput(
            "complexity values must be non-negative".into(),
        ));
    }
    let n0 = n_source as f64;
    let nt = n_target as f64;
    let source_cap = ((complexity_ttn + complexity_head) / n0).sqrt();
    let target_cap = (complexity_vqc / nt).sqrt();
    let leading_order = source_cap / nu + target_cap;

    let conf = (2.0 / delta).ln();
    let constant_explicit = (16.0 * lipschitz * source_cap + 8.0 * loss_bound * (conf / n0).sqrt())
        / nu
        + 16.0 * lipschitz * target_cap
        + 8.0 * loss_bound * (conf / nt).sqrt();
    Ok(BoundValue {
        leading_order,
        constant_explicit,
    })
}

#[cfg(test)]
mod tests;

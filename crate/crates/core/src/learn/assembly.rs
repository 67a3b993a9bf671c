//! Composed pipelines: a feature extractor (TT layer or PCA), an optional
//! quantum stage, and a readout to class logits.

use super::{loss, DenseHead, LearnError, Pca};
use crate::data::LabeledGrid;
use crate::learn::pca_project;
use crate::qsim::{self, EncodingSpec, PqcParams};
use crate::tt::TtLayer;
use rayon::prelude::*;

/// Fixed scale applied to expectation values when they are used directly as
/// logits; lets the softmax approach saturation despite `<Z>` in [-1, 1].
pub const DEFAULT_READOUT_GAIN: f64 = 5.0;

/// Which composed pipeline an assembly realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// TT layer, sigmoid, dense head (the classical pre-training model).
    TtnHead,
    /// TT layer feeding the VQC.
    TtnVqc,
    /// PCA projection feeding the VQC.
    PcaVqc,
}

/// Mapping from the U expectation values to C logits.
#[derive(Debug, Clone, PartialEq)]
pub enum Readout {
    /// Logit `c` is `gain * <Z_c>`; no trainable parameters.
    FixedGain { gain: f64, classes: usize },
    /// Trainable affine map (off for protocol-matching runs).
    Affine(DenseHead),
}

impl Readout {
    pub fn fixed(classes: usize) -> Self {
        Readout::FixedGain {
            gain: DEFAULT_READOUT_GAIN,
            classes,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Readout::FixedGain { classes, .. } => *classes,
            Readout::Affine(head) => head.classes,
        }
    }

    pub fn trainable_param_count(&self) -> usize {
        match self {
            Readout::FixedGain { .. } => 0,
            Readout::Affine(head) => head.param_count(),
        }
    }

    pub fn logits(&self, expectations: &[f64]) -> Result<Vec<f64>, LearnError> {
        match self {
            Readout::FixedGain { gain, classes } => {
                if *classes > expectations.len() {
                    return Err(LearnError::DimensionMismatch(format!(
                        "{classes} classes but only {} expectations",
                        expectations.len()
                    )));
                }
                Ok(expectations[..*classes].iter().map(|e| gain * e).collect())
            }
            Readout::Affine(head) => head.logits(expectations),
        }
    }

    /// Gradients w.r.t. the expectations and (for the affine form) the
    /// readout parameters packed `[weight, bias]`.
    pub fn backward(
        &self,
        expectations: &[f64],
        grad_logits: &[f64],
    ) -> Result<(Vec<f64>, Option<Vec<f64>>), LearnError> {
        match self {
            Readout::FixedGain { gain, classes } => {
                let mut grad = vec![0.0; expectations.len()];
                for c in 0..*classes {
                    grad[c] = gain * grad_logits[c];
                }
                Ok((grad, None))
            }
            Readout::Affine(head) => {
                let g = head.backward(expectations, grad_logits)?;
                let mut flat = g.weight;
                flat.extend_from_slice(&g.bias);
                Ok((g.input, Some(flat)))
            }
        }
    }
}

/// A composed model with per-stage freeze flags, evaluable on labelled grids.
#[derive(Debug, Clone)]
pub struct ModelAssembly {
    pub variant: ModelVariant,
    pub ttn: Option<TtLayer>,
    pub head: Option<DenseHead>,
    pub pqc: Option<PqcParams>,
    pub pca: Option<Pca>,
    pub freeze_ttn: bool,
    pub readout: Readout,
}

impl ModelAssembly {
    pub fn ttn_head(ttn: TtLayer, head: DenseHead) -> Self {
        let classes = head.classes;
        Self {
            variant: ModelVariant::TtnHead,
            ttn: Some(ttn),
            head: Some(head),
            pqc: None,
            pca: None,
            freeze_ttn: false,
            readout: Readout::fixed(classes),
        }
    }

    pub fn ttn_vqc(ttn: TtLayer, pqc: PqcParams, readout: Readout, freeze_ttn: bool) -> Self {
        Self {
            variant: ModelVariant::TtnVqc,
            ttn: Some(ttn),
            head: None,
            pqc: Some(pqc),
            pca: None,
            freeze_ttn,
            readout,
        }
    }

    pub fn pca_vqc(pca: Pca, pqc: PqcParams, readout: Readout) -> Self {
        Self {
            variant: ModelVariant::PcaVqc,
            ttn: None,
            head: None,
            pqc: Some(pqc),
            pca: Some(pca),
            freeze_ttn: false,
            readout,
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(LearnError::InvalidConfig(format!(
                    "{:?} assembly missing {what}",
                    self.variant
                )))
            }
        };
        match self.variant {
            ModelVariant::TtnHead => {
                need(self.ttn.is_some(), "ttn")?;
                need(self.head.is_some(), "head")?;
            }
            ModelVariant::TtnVqc => {
                need(self.ttn.is_some(), "ttn")?;
                need(self.pqc.is_some(), "pqc")?;
            }
            ModelVariant::PcaVqc => {
                need(self.pca.is_some(), "pca")?;
                need(self.pqc.is_some(), "pqc")?;
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        match self.variant {
            ModelVariant::TtnHead => self.head.as_ref().map_or(0, |h| h.classes),
            _ => self.readout.classes(),
        }
    }

    /// Scalars that training would update; frozen stages excluded.
    pub fn trainable_param_count(&self) -> usize {
        let mut n = 0;
        if let Some(ttn) = &self.ttn {
            if !self.freeze_ttn {
                n += ttn.param_count();
            }
        }
        if let Some(head) = &self.head {
            n += head.param_count();
        }
        if let Some(pqc) = &self.pqc {
            n += pqc.num_angles();
        }
        if matches!(self.variant, ModelVariant::TtnVqc | ModelVariant::PcaVqc) {
            n += self.readout.trainable_param_count();
        }
        n
    }

    /// All scalars the deployed model carries, frozen stages included.
    pub fn total_param_count(&self) -> usize {
        let mut n = 0;
        if let Some(ttn) = &self.ttn {
            n += ttn.param_count();
        }
        if let Some(head) = &self.head {
            n += head.param_count();
        }
        if let Some(pqc) = &self.pqc {
            n += pqc.num_angles();
        }
        if let Some(pca) = &self.pca {
            n += pca.param_count();
        }
        if matches!(self.variant, ModelVariant::TtnVqc | ModelVariant::PcaVqc) {
            n += self.readout.trainable_param_count();
        }
        n
    }

    /// Class logits for one input grid.
    pub fn logits(&self, pixels: &[f64]) -> Result<Vec<f64>, LearnError> {
        self.validate()?;
        match self.variant {
            ModelVariant::TtnHead => {
                let ttn = self.ttn.as_ref().expect("validated");
                let head = self.head.as_ref().expect("validated");
                let t = ttn.forward(pixels)?;
                let s: Vec<f64> = t.iter().map(|&v| qsim::sigmoid(v)).collect();
                head.logits(&s)
            }
            ModelVariant::TtnVqc => {
                let ttn = self.ttn.as_ref().expect("validated");
                let pqc = self.pqc.as_ref().expect("validated");
                let t = ttn.forward(pixels)?;
                let spec = EncodingSpec::new(pqc.num_qubits, true);
                let fwd = qsim::vqc_forward(&t, &spec, pqc)?;
                self.readout.logits(&fwd.expectations)
            }
            ModelVariant::PcaVqc => {
                let pca = self.pca.as_ref().expect("validated");
                let pqc = self.pqc.as_ref().expect("validated");
                let p = pca_project(pixels, pca)?;
                let spec = EncodingSpec::new(pqc.num_qubits, true);
                let fwd = qsim::vqc_forward(&p, &spec, pqc)?;
                self.readout.logits(&fwd.expectations)
            }
        }
    }
}

/// Mean cross-entropy and argmax accuracy over a labelled dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub mean_ce: f64,
    pub accuracy: f64,
}

/// Evaluate any per-sample logit function. Argmax ties break toward the
/// lower class index; reduction runs in fixed sample order.
pub fn evaluate_with<F>(logit_fn: F, data: &[LabeledGrid]) -> Result<EvalMetrics, LearnError>
where
    F: Fn(&LabeledGrid) -> Result<Vec<f64>, LearnError> + Sync,
{
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let per: Vec<(f64, bool)> = data
        .par_iter()
        .map(|g| {
            let logits = logit_fn(g)?;
            let (ce, _) = loss::softmax_ce(&logits, usize::from(g.label))?;
            Ok::<(f64, bool), LearnError>((ce, argmax(&logits) == usize::from(g.label)))
        })
        .collect::<Result<_, _>>()?;
    let mut ce_sum = 0.0;
    let mut correct = 0usize;
    for (ce, ok) in per {
        ce_sum += ce;
        correct += usize::from(ok);
    }
    Ok(EvalMetrics {
        mean_ce: ce_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Evaluate a composed model on a labelled dataset.
pub fn evaluate(model: &ModelAssembly, data: &[LabeledGrid]) -> Result<EvalMetrics, LearnError> {
    evaluate_with(|g| model.logits(&g.pixels_f64()), data)
}

/// First index of the maximum value (ties toward the lower class).
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

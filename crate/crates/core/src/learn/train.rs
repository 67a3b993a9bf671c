//! The training pipelines.
//!
//! * `pretrain_stage1` — classical pre-training of the TT layer plus dense
//!   head on the source split; returns the trajectory-best checkpoint by
//!   training cross-entropy.
//! * `finetune_stage2` — frozen-feature fine-tuning: only the circuit angles
//!   (and, if enabled, an affine readout) move; the TT layer is asserted
//!   byte-identical before and after.
//! * `train_e2e` — the end-to-end baseline, gradients flowing through the
//!   circuit into the TT cores.
//! * `train_pca_vqc` — the PCA baseline: fixed projection, trainable circuit.
//!
//! Minibatch gradients are averaged in fixed sample order (parallel map,
//! ordered reduce), so a run is bit-reproducible for a given seed at any
//! thread count.

use super::assembly::evaluate_with;
use super::{Adam, AdamHyper, DenseHead, LearnError, Pca, Readout, TrainConfig};
use crate::data::LabeledGrid;
use crate::learn::{pca_project, softmax_ce};
use crate::qsim::{self, EncodingSpec, PqcParams};
use crate::seed;
use crate::tt::TtLayer;
use rand::seq::SliceRandom;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
}

impl SplitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Test => "test",
        }
    }
}

/// One metric row of a training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub split: SplitKind,
    pub ce: f64,
    pub accuracy: f64,
}

/// Loss, hit flag, and flat gradient of one sample.
#[derive(Debug, Clone)]
pub struct SampleGrads {
    pub loss: f64,
    pub correct: bool,
    pub flat: Vec<f64>,
}

trait TrainableModel: Sync {
    fn flat_len(&self) -> usize;
    fn pack(&self, out: &mut Vec<f64>);
    fn unpack(&mut self, flat: &[f64]);
    fn sample_grads(&self, grid: &LabeledGrid) -> Result<SampleGrads, LearnError>;
    fn sample_logits(&self, grid: &LabeledGrid) -> Result<Vec<f64>, LearnError>;
}

/// Shared minibatch engine. `on_epoch` sees the model and the epoch's mean
/// training CE after each epoch (used for trajectory-best checkpoints).
fn train_loop<M: TrainableModel>(
    model: &mut M,
    data: &[LabeledGrid],
    cfg: &TrainConfig,
    eval_data: Option<&[LabeledGrid]>,
    shuffle_label: &str,
    mut on_epoch: impl FnMut(&M, usize, f64),
) -> Result<Vec<EpochRow>, LearnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let n = data.len();
    let mut adam = Adam::new(AdamHyper::with_lr(cfg.learning_rate), model.flat_len());
    let mut trace = Vec::new();
    let mut flat = vec![0.0; model.flat_len()];
    for epoch in 0..cfg.epochs {
        let mut idxs: Vec<usize> = (0..n).collect();
        let mut rng = seed::rng_from(seed::derive_indexed(cfg.seed, shuffle_label, epoch as u64));
        idxs.shuffle(&mut rng);

        let mut ce_sum = 0.0;
        let mut correct = 0usize;
        for batch in idxs.chunks(cfg.batch_size) {
            let per: Vec<SampleGrads> = batch
                .par_iter()
                .map(|&i| model.sample_grads(&data[i]))
                .collect::<Result<_, _>>()?;
            let mut grads = vec![0.0; model.flat_len()];
            for sg in &per {
                ce_sum += sg.loss;
                correct += usize::from(sg.correct);
                for (a, g) in grads.iter_mut().zip(&sg.flat) {
                    *a += g;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= inv;
            }
            flat.clear();
            model.pack(&mut flat);
            adam.step(&mut flat, &grads)?;
            model.unpack(&flat);
        }

        let train_ce = ce_sum / n as f64;
        trace.push(EpochRow {
            epoch,
            split: SplitKind::Train,
            ce: train_ce,
            accuracy: correct as f64 / n as f64,
        });
        if let Some(ev) = eval_data {
            let m = evaluate_with(|g| model.sample_logits(g), ev)?;
            trace.push(EpochRow {
                epoch,
                split: SplitKind::Test,
                ce: m.mean_ce,
                accuracy: m.accuracy,
            });
        }
        on_epoch(model, epoch, train_ce);
    }
    Ok(trace)
}

fn check_labels(data: &[LabeledGrid], classes: usize) -> Result<(), LearnError> {
    if let Some(bad) = data.iter().find(|g| usize::from(g.label) >= classes) {
        return Err(LearnError::LabelOutOfRange {
            label: usize::from(bad.label),
            classes,
        });
    }
    Ok(())
}

fn layer_bytes(ttn: &TtLayer) -> Vec<u8> {
    ttn.cores()
        .iter()
        .flat_map(|c| c.data.iter().flat_map(|v| v.to_le_bytes()))
        .collect()
}

// ---------------------------------------------------------------------
// Stage 1: classical pre-training of TTN + head.

struct Stage1Model {
    ttn: TtLayer,
    head: DenseHead,
}

impl Stage1Model {
    fn forward(&self, pixels: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), LearnError> {
        let t = self.ttn.forward(pixels)?;
        let s: Vec<f64> = t.iter().map(|&v| qsim::sigmoid(v)).collect();
        let logits = self.head.logits(&s)?;
        Ok((t, s, logits))
    }
}

impl TrainableModel for Stage1Model {
    fn flat_len(&self) -> usize {
        self.ttn.param_count() + self.head.param_count()
    }

    fn pack(&self, out: &mut Vec<f64>) {
        for core in self.ttn.cores() {
            out.extend_from_slice(&core.data);
        }
        self.head.append_params(out);
    }

    fn unpack(&mut self, flat: &[f64]) {
        let mut at = 0;
        for core in self.ttn.cores_mut() {
            let n = core.len();
            core.data.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        self.head.load_params(&flat[at..]);
    }

    fn sample_grads(&self, grid: &LabeledGrid) -> Result<SampleGrads, LearnError> {
        let pixels = grid.pixels_f64();
        let (_t, s, logits) = self.forward(&pixels)?;
        let label = usize::from(grid.label);
        let (loss, dlogits) = softmax_ce(&logits, label)?;
        let hg = self.head.backward(&s, &dlogits)?;
        // Chain through the sigmoid: ds/dt = s (1 - s).
        let dt: Vec<f64> = hg
            .input
            .iter()
            .zip(&s)
            .map(|(g, si)| g * si * (1.0 - si))
            .collect();
        let tb = self.ttn.backward(&pixels, &dt)?;
        let mut flat = Vec::with_capacity(self.flat_len());
        for gc in &tb.grad_cores {
            flat.extend_from_slice(gc);
        }
        flat.extend_from_slice(&hg.weight);
        flat.extend_from_slice(&hg.bias);
        Ok(SampleGrads {
            loss,
            correct: super::assembly::argmax(&logits) == label,
            flat,
        })
    }

    fn sample_logits(&self, grid: &LabeledGrid) -> Result<Vec<f64>, LearnError> {
        Ok(self.forward(&grid.pixels_f64())?.2)
    }
}

/// Result of stage-1 pre-training: the trajectory-best parameters (by
/// training CE) plus the full metric trace.
#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub ttn: TtLayer,
    pub head: DenseHead,
    pub trace: Vec<EpochRow>,
    pub best_epoch: Option<usize>,
    pub best_train_ce: f64,
}

pub fn pretrain_stage1(
    source: &[LabeledGrid],
    ttn: TtLayer,
    head: DenseHead,
    cfg: &TrainConfig,
    eval_data: Option<&[LabeledGrid]>,
) -> Result<Stage1Result, LearnError> {
    if let Some(g) = source.first() {
        if g.num_pixels() != ttn.shape().input_len() {
            return Err(LearnError::DimensionMismatch(format!(
                "{} pixels but TT layer expects {}",
                g.num_pixels(),
                ttn.shape().input_len()
            )));
        }
    }
    if head.in_dim != ttn.shape().output_len() {
        return Err(LearnError::DimensionMismatch(format!(
            "head takes {} features but TT layer emits {}",
            head.in_dim,
            ttn.shape().output_len()
        )));
    }
    check_labels(source, head.classes)?;
    if cfg.epochs == 0 {
        return Ok(Stage1Result {
            ttn,
            head,
            trace: Vec::new(),
            best_epoch: None,
            best_train_ce: f64::INFINITY,
        });
    }
    let mut model = Stage1Model { ttn, head };
    let mut best: Option<(usize, f64, TtLayer, DenseHead)> = None;
    let trace = train_loop(
        &mut model,
        source,
        cfg,
        eval_data,
        "stage1-shuffle",
        |m, epoch, ce| {
            if best.as_ref().is_none_or(|(_, b, _, _)| ce < *b) {
                best = Some((epoch, ce, m.ttn.clone(), m.head.clone()));
            }
        },
    )?;
    let (best_epoch, best_train_ce, ttn, head) = best.expect("at least one epoch ran");
    Ok(Stage1Result {
        ttn,
        head,
        trace,
        best_epoch: Some(best_epoch),
        best_train_ce,
    })
}

// ---------------------------------------------------------------------
// VQC training over a frozen representation (stage 2 and the PCA baseline).

enum FrozenRep<'a> {
    Ttn(&'a TtLayer),
    Pca(&'a Pca),
}

impl FrozenRep<'_> {
    fn apply(&self, pixels: &[f64]) -> Result<Vec<f64>, LearnError> {
        match self {
            FrozenRep::Ttn(t) => Ok(t.forward(pixels)?),
            FrozenRep::Pca(p) => pca_project(pixels, p),
        }
    }
}

struct VqcHeadModel<'a> {
    rep: FrozenRep<'a>,
    pqc: PqcParams,
    readout: Readout,
    spec: EncodingSpec,
}

impl VqcHeadModel<'_> {
    fn readout_params(readout: &Readout, out: &mut Vec<f64>) {
        if let Readout::Affine(head) = readout {
            head.append_params(out);
        }
    }
}

impl TrainableModel for VqcHeadModel<'_> {
    fn flat_len(&self) -> usize {
        self.pqc.num_angles() + self.readout.trainable_param_count()
    }

    fn pack(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.pqc.angles);
        Self::readout_params(&self.readout, out);
    }

    fn unpack(&mut self, flat: &[f64]) {
        let n = self.pqc.num_angles();
        self.pqc.angles.copy_from_slice(&flat[..n]);
        if let Readout::Affine(head) = &mut self.readout {
            head.load_params(&flat[n..]);
        }
    }

    fn sample_grads(&self, grid: &LabeledGrid) -> Result<SampleGrads, LearnError> {
        let features = self.rep.apply(&grid.pixels_f64())?;
        let fwd = qsim::vqc_forward(&features, &self.spec, &self.pqc)?;
        let logits = self.readout.logits(&fwd.expectations)?;
        let label = usize::from(grid.label);
        let (loss, dlogits) = softmax_ce(&logits, label)?;
        let (dexp, dreadout) = self.readout.backward(&fwd.expectations, &dlogits)?;
        let (dangles, _dfeatures) =
            qsim::vqc_backward(&fwd.state, &features, &self.spec, &self.pqc, &dexp)?;
        let mut flat = dangles;
        if let Some(dr) = dreadout {
            flat.extend_from_slice(&dr);
        }
        Ok(SampleGrads {
            loss,
            correct: super::assembly::argmax(&logits) == label,
            flat,
        })
    }

    fn sample_logits(&self, grid: &LabeledGrid) -> Result<Vec<f64>, LearnError> {
        let features = self.rep.apply(&grid.pixels_f64())?;
        let fwd = qsim::vqc_forward(&features, &self.spec, &self.pqc)?;
        self.readout.logits(&fwd.expectations)
    }
}

/// Trained circuit (and TT layer for the end-to-end pipeline) plus trace.
#[derive(Debug, Clone)]
pub struct VqcTrainResult {
    /// Present only for the end-to-end pipeline.
    pub ttn: Option<TtLayer>,
    pub pqc: PqcParams,
    pub readout: Readout,
    pub trace: Vec<EpochRow>,
}

fn check_vqc_setup(
    rep_dim: usize,
    pqc: &PqcParams,
    readout: &Readout,
    data: &[LabeledGrid],
) -> Result<(), LearnError> {
    if rep_dim != pqc.num_qubits {
        return Err(LearnError::DimensionMismatch(format!(
            "representation emits {rep_dim} features but the circuit has {} qubits",
            pqc.num_qubits
        )));
    }
    if readout.classes() > pqc.num_qubits {
        if let Readout::FixedGain { .. } = readout {
            return Err(LearnError::DimensionMismatch(format!(
                "fixed readout needs {} expectations but only {} qubits",
                readout.classes(),
                pqc.num_qubits
            )));
        }
    }
    check_labels(data, readout.classes())
}

/// Stage-2 fine-tuning: circuit angles only, TT layer frozen.
pub fn finetune_stage2(
    target: &[LabeledGrid],
    ttn_frozen: &TtLayer,
    pqc: PqcParams,
    readout: Readout,
    cfg: &TrainConfig,
    eval_data: Option<&[LabeledGrid]>,
) -> Result<VqcTrainResult, LearnError> {
    check_vqc_setup(ttn_frozen.shape().output_len(), &pqc, &readout, target)?;
    let frozen_before = layer_bytes(ttn_frozen);
    let spec = EncodingSpec::new(pqc.num_qubits, true);
    let mut model = VqcHeadModel {
        rep: FrozenRep::Ttn(ttn_frozen),
        pqc,
        readout,
        spec,
    };
    let trace = train_loop(&mut model, target, cfg, eval_data, "stage2-shuffle", |_, _, _| {})?;
    if layer_bytes(ttn_frozen) != frozen_before {
        return Err(LearnError::FrozenParamMutation);
    }
    Ok(VqcTrainResult {
        ttn: None,
        pqc: model.pqc,
        readout: model.readout,
        trace,
    })
}

/// The PCA baseline: fixed projection, trainable circuit.
pub fn train_pca_vqc(
    data: &[LabeledGrid],
    pca: &Pca,
    pqc: PqcParams,
    readout: Readout,
    cfg: &TrainConfig,
    eval_data: Option<&[LabeledGrid]>,
) -> Result<VqcTrainResult, LearnError> {
    check_vqc_setup(pca.num_components, &pqc, &readout, data)?;
    let spec = EncodingSpec::new(pqc.num_qubits, true);
    let mut model = VqcHeadModel {
        rep: FrozenRep::Pca(pca),
        pqc,
        readout,
        spec,
    };
    let trace = train_loop(&mut model, data, cfg, eval_data, "pca-vqc-shuffle", |_, _, _| {})?;
    Ok(VqcTrainResult {
        ttn: None,
        pqc: model.pqc,
        readout: model.readout,
        trace,
    })
}

// ---------------------------------------------------------------------
// End-to-end: gradients flow into the TT cores as well.

struct E2eModel {
    ttn: TtLayer,
    pqc: PqcParams,
    readout: Readout,
    spec: EncodingSpec,
}

impl TrainableModel for E2eModel {
    fn flat_len(&self) -> usize {
        self.ttn.param_count() + self.pqc.num_angles() + self.readout.trainable_param_count()
    }

    fn pack(&self, out: &mut Vec<f64>) {
        for core in self.ttn.cores() {
            out.extend_from_slice(&core.data);
        }
        out.extend_from_slice(&self.pqc.angles);
        VqcHeadModel::readout_params(&self.readout, out);
    }

    fn unpack(&mut self, flat: &[f64]) {
        let mut at = 0;
        for core in self.ttn.cores_mut() {
            let n = core.len();
            core.data.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        let n = self.pqc.num_angles();
        self.pqc.angles.copy_from_slice(&flat[at..at + n]);
        if let Readout::Affine(head) = &mut self.readout {
            head.load_params(&flat[at + n..]);
        }
    }

    fn sample_grads(&self, grid: &LabeledGrid) -> Result<SampleGrads, LearnError> {
        let pixels = grid.pixels_f64();
        let features = self.ttn.forward(&pixels)?;
        let fwd = qsim::vqc_forward(&features, &self.spec, &self.pqc)?;
        let logits = self.readout.logits(&fwd.expectations)?;
        let label = usize::from(grid.label);
        let (loss, dlogits) = softmax_ce(&logits, label)?;
        let (dexp, dreadout) = self.readout.backward(&fwd.expectations, &dlogits)?;
        let (dangles, dfeatures) =
            qsim::vqc_backward(&fwd.state, &features, &self.spec, &self.pqc, &dexp)?;
        let tb = self.ttn.backward(&pixels, &dfeatures)?;
        let mut flat = Vec::with_capacity(self.flat_len());
        for gc in &tb.grad_cores {
            flat.extend_from_slice(gc);
        }
        flat.extend_from_slice(&dangles);
        if let Some(dr) = dreadout {
            flat.extend_from_slice(&dr);
        }
        Ok(SampleGrads {
            loss,
            correct: super::assembly::argmax(&logits) == label,
            flat,
        })
    }

    fn sample_logits(&self, grid: &LabeledGrid) -> Result<Vec<f64>, LearnError> {
        let features = self.ttn.forward(&grid.pixels_f64())?;
        let fwd = qsim::vqc_forward(&features, &self.spec, &self.pqc)?;
        self.readout.logits(&fwd.expectations)
    }
}

/// End-to-end training of the TT layer and circuit together.
pub fn train_e2e(
    data: &[LabeledGrid],
    ttn: TtLayer,
    pqc: PqcParams,
    readout: Readout,
    cfg: &TrainConfig,
    eval_data: Option<&[LabeledGrid]>,
) -> Result<VqcTrainResult, LearnError> {
    check_vqc_setup(ttn.shape().output_len(), &pqc, &readout, data)?;
    let spec = EncodingSpec::new(pqc.num_qubits, true);
    let mut model = E2eModel {
        ttn,
        pqc,
        readout,
        spec,
    };
    let trace = train_loop(&mut model, data, cfg, eval_data, "e2e-shuffle", |_, _, _| {})?;
    Ok(VqcTrainResult {
        ttn: Some(model.ttn),
        pqc: model.pqc,
        readout: model.readout,
        trace,
    })
}

// ---------------------------------------------------------------------
// Single-sample objective helpers (gradient-check surface).

/// Training loss of one sample under the composed TTN + VQC + readout path.
pub fn ttn_vqc_sample_loss(
    ttn: &TtLayer,
    pqc: &PqcParams,
    readout: &Readout,
    grid: &LabeledGrid,
) -> Result<f64, LearnError> {
    let features = ttn.forward(&grid.pixels_f64())?;
    let spec = EncodingSpec::new(pqc.num_qubits, true);
    let fwd = qsim::vqc_forward(&features, &spec, pqc)?;
    let logits = readout.logits(&fwd.expectations)?;
    Ok(softmax_ce(&logits, usize::from(grid.label))?.0)
}

/// Loss and flat gradient `[cores..., angles, readout...]` of one sample;
/// with `train_ttn` unset the core block is omitted.
pub fn ttn_vqc_sample_grads(
    ttn: &TtLayer,
    pqc: &PqcParams,
    readout: &Readout,
    grid: &LabeledGrid,
    train_ttn: bool,
) -> Result<SampleGrads, LearnError> {
    let spec = EncodingSpec::new(pqc.num_qubits, true);
    if train_ttn {
        let model = E2eModel {
            ttn: ttn.clone(),
            pqc: pqc.clone(),
            readout: readout.clone(),
            spec,
        };
        model.sample_grads(grid)
    } else {
        let model = VqcHeadModel {
            rep: FrozenRep::Ttn(ttn),
            pqc: pqc.clone(),
            readout: readout.clone(),
            spec,
        };
        model.sample_grads(grid)
    }
}

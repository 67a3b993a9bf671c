//! Pipeline orchestration: loads or generates data, builds models, trains,
//! and writes the run artifacts.
//!
//! A run directory receives:
//! * `config.resolved` — every config key the run consumed;
//! * `metrics.csv` — per-epoch rows `(epoch, split, ce, accuracy)`, byte
//!   identical under a rerun with the same config and seed;
//! * `metrics_stage1.csv` — the pre-training trace, when a run pre-trains;
//! * `summary.csv` — one row for the comparison table;
//! * `timings.csv` — wall-clock seconds per stage (kept out of metrics.csv
//!   so the determinism contract holds);
//! * checkpoints (`stage1.ckpt`, `final.ckpt`) in the named-block format.

use crate::checkpoint;
use crate::config::{DataSource, ExperimentConfig, Pipeline, Protocol};
use crate::metrics::{fmt_f64, metrics_csv};
use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use ttq_core::data::{
    build_splits, gen_charge_diagrams, gen_digits, load_dataset, load_idx, save_dataset,
    stratified_split, DigitGenConfig, DotGenConfig, LabeledGrid, SplitSpec,
};
use ttq_core::diag::{bound_rhs, rademacher_estimate, unit_sample, BoundInputs, FunctionFamily};
use ttq_core::learn::{
    evaluate, finetune_stage2, pretrain_stage1, train_e2e, train_pca_vqc, DenseHead, EpochRow,
    ModelAssembly, Readout, TrainConfig,
};
use ttq_core::qsim::PqcParams;
use ttq_core::seed;
use ttq_core::tt::{TtLayer, TtShape};

/// Exclusive ownership of a run directory for the duration of a run.
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!(
                    "run directory {} is locked by another process (remove {} if stale)",
                    dir.display(),
                    path.display()
                )
            }
            Err(e) => Err(e).with_context(|| format!("creating lock in {}", dir.display())),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Row written to `summary.csv`, consumed by `report`.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub model: String,
    pub trainable_params: usize,
    pub total_params: usize,
    pub eval_split: String,
    pub ce: f64,
    pub accuracy: f64,
}

pub const SUMMARY_HEADER: &str = "model,trainable_params,total_params,eval_split,ce,accuracy";

fn write_summary(dir: &Path, row: &SummaryRow) -> Result<()> {
    let text = format!(
        "{SUMMARY_HEADER}\n{},{},{},{},{},{}\n",
        row.model,
        row.trainable_params,
        row.total_params,
        row.eval_split,
        fmt_f64(row.ce),
        fmt_f64(row.accuracy)
    );
    std::fs::write(dir.join("summary.csv"), text).context("writing summary.csv")
}

fn write_metrics_file(dir: &Path, name: &str, rows: &[EpochRow]) -> Result<()> {
    std::fs::write(dir.join(name), metrics_csv(rows)).with_context(|| format!("writing {name}"))
}

fn write_timings(dir: &Path, stages: &[(String, f64)]) -> Result<()> {
    let mut text = String::from("stage,wall_seconds\n");
    for (stage, secs) in stages {
        let _ = writeln!(text, "{stage},{secs:.3}");
    }
    std::fs::write(dir.join("timings.csv"), text).context("writing timings.csv")
}

// ---------------------------------------------------------------------
// Data assembly.

struct Pools {
    train: Vec<LabeledGrid>,
    test: Vec<LabeledGrid>,
}

fn load_pools(cfg: &ExperimentConfig) -> Result<Pools> {
    match cfg.data_source {
        DataSource::SyntheticDigits => {
            let mut classes: Vec<u16> = cfg
                .source_classes
                .iter()
                .chain(&cfg.target_classes)
                .copied()
                .collect();
            classes.sort_unstable();
            classes.dedup();
            let train = gen_digits(&DigitGenConfig {
                classes: classes.clone(),
                count_per_class: cfg.digit_pool_per_class,
                distortion: cfg.digit_distortion,
                seed: cfg.digit_seed,
                ..DigitGenConfig::default()
            })?;
            let test = gen_digits(&DigitGenConfig {
                classes,
                count_per_class: cfg.digit_test_per_class,
                distortion: cfg.digit_distortion,
                seed: seed::derive(cfg.digit_seed, "test-pool"),
                ..DigitGenConfig::default()
            })?;
            Ok(Pools { train, test })
        }
        DataSource::Idx => {
            let dir = Path::new(&cfg.mnist_dir);
            let train = load_idx(
                dir.join("train-images-idx3-ubyte"),
                dir.join("train-labels-idx1-ubyte"),
            )?;
            let test = load_idx(
                dir.join("t10k-images-idx3-ubyte"),
                dir.join("t10k-labels-idx1-ubyte"),
            )?;
            Ok(Pools { train, test })
        }
        DataSource::Ttqd => {
            if cfg.ttqd_train.is_empty() {
                bail!("data_source=ttqd requires ttqd_train");
            }
            let all = load_dataset(&cfg.ttqd_train)?;
            if cfg.ttqd_test.is_empty() {
                let (train, test) = stratified_split(&all, cfg.test_fraction, cfg.seed)?;
                Ok(Pools { train, test })
            } else {
                Ok(Pools {
                    train: all,
                    test: load_dataset(&cfg.ttqd_test)?,
                })
            }
        }
        DataSource::Dots => {
            let all = gen_charge_diagrams(&dot_gen_config(cfg))?;
            let (train, test) = stratified_split(&all, cfg.test_fraction, cfg.dot_seed)?;
            Ok(Pools { train, test })
        }
    }
}

fn dot_gen_config(cfg: &ExperimentConfig) -> DotGenConfig {
    DotGenConfig {
        grid_size: cfg.dot_grid_size,
        lines_range_single: cfg.dot_lines_single,
        lines_range_double: cfg.dot_lines_double,
        noise_sigma: cfg.dot_noise_sigma,
        count_per_class: cfg.dot_count_per_class,
        seed: cfg.dot_seed,
    }
}

/// Per-stage datasets with contiguous labels.
///
/// Two label spaces are in play. The fine-tuned model is a target-class
/// classifier, while the single-stage baselines train on the source and
/// target subsets jointly and therefore live in the source class space;
/// each gets the test set expressed in its own space.
struct TaskData {
    /// Source split for pre-training (all source classes).
    stage1: Vec<LabeledGrid>,
    stage1_classes: usize,
    /// Target split for fine-tuning (target-class label space).
    stage2: Vec<LabeledGrid>,
    /// Source + target items together, in the source class space, for the
    /// baselines that train on both subsets jointly.
    joint: Vec<LabeledGrid>,
    joint_classes: usize,
    target_classes: usize,
    /// Test items in the target label space.
    test: Vec<LabeledGrid>,
    /// The same test items in the joint (source) label space.
    test_joint: Vec<LabeledGrid>,
}

fn build_task(cfg: &ExperimentConfig, pools: &Pools) -> Result<TaskData> {
    match cfg.protocol {
        Protocol::Transfer => {
            let spec = SplitSpec {
                source_classes: cfg.source_classes.clone(),
                source_count: cfg.source_count,
                target_classes: cfg.target_classes.clone(),
                target_count: cfg.target_count,
                seed: cfg.seed,
            };
            let splits = build_splits(&pools.train, &spec, &pools.test)?;
            // Map a target-space label to its source-space id.
            let to_source = |target_label: u16| -> Result<u16> {
                let original = splits.target_class_map[usize::from(target_label)];
                match splits.source_class_map.iter().position(|&c| c == original) {
                    Some(p) => Ok(p as u16),
                    None => bail!(
                        "joint training needs target classes within the source classes;                          class {original} is not a source class"
                    ),
                }
            };
            let mut joint = splits.source.clone();
            for g in &splits.target {
                let mut g = g.clone();
                g.label = to_source(g.label)?;
                joint.push(g);
            }
            let mut test_joint = Vec::with_capacity(splits.test.len());
            for g in &splits.test {
                let mut g = g.clone();
                g.label = to_source(g.label)?;
                test_joint.push(g);
            }
            Ok(TaskData {
                stage1: splits.source,
                stage1_classes: splits.source_class_map.len(),
                stage2: splits.target,
                joint,
                joint_classes: splits.source_class_map.len(),
                target_classes: splits.target_class_map.len(),
                test: splits.test,
                test_joint,
            })
        }
        Protocol::Single => {
            let classes = pools
                .train
                .iter()
                .chain(&pools.test)
                .map(|g| usize::from(g.label) + 1)
                .max()
                .unwrap_or(0);
            if classes == 0 {
                bail!("empty training pool");
            }
            Ok(TaskData {
                stage1: pools.train.clone(),
                stage1_classes: classes,
                stage2: pools.train.clone(),
                joint: pools.train.clone(),
                joint_classes: classes,
                target_classes: classes,
                test: pools.test.clone(),
                test_joint: pools.test.clone(),
            })
        }
    }
}

// ---------------------------------------------------------------------
// Model construction.

fn build_ttn(cfg: &ExperimentConfig) -> Result<TtLayer> {
    let shape = TtShape::new(
        cfg.tt_input_dims.clone(),
        cfg.tt_output_dims.clone(),
        cfg.tt_ranks.clone(),
    )?;
    let mut rng = seed::rng_from(seed::derive(cfg.seed, "ttn-init"));
    Ok(TtLayer::random(shape, &mut rng))
}

fn build_pqc(cfg: &ExperimentConfig) -> PqcParams {
    let mut rng = seed::rng_from(seed::derive(cfg.seed, "pqc-init"));
    let mut pqc = PqcParams::random(cfg.qubits, cfg.depth, &mut rng);
    pqc.ring_closure = cfg.pqc_ring;
    pqc
}

fn build_readout(cfg: &ExperimentConfig, classes: usize) -> Readout {
    if cfg.readout_trainable {
        let mut rng = seed::rng_from(seed::derive(cfg.seed, "readout-init"));
        Readout::Affine(DenseHead::random(classes, cfg.qubits, &mut rng))
    } else {
        Readout::FixedGain {
            gain: cfg.readout_gain,
            classes,
        }
    }
}

fn build_head(cfg: &ExperimentConfig, classes: usize) -> DenseHead {
    let mut rng = seed::rng_from(seed::derive(cfg.seed, "head-init"));
    DenseHead::random(classes, cfg.qubits, &mut rng)
}

/// Stage-1 training data; for the diagram task this can be the clean
/// rendering of the same underlying diagrams (shared geometry streams make
/// the clean and noisy datasets item-for-item corresponding).
fn stage1_data(cfg: &ExperimentConfig, task: &TaskData) -> Result<Vec<LabeledGrid>> {
    if cfg.dot_stage1_clean
        && cfg.data_source == DataSource::Dots
        && cfg.dot_noise_sigma > 0.0
    {
        let clean = ExperimentConfig {
            dot_noise_sigma: 0.0,
            ..cfg.clone()
        };
        let pools = load_pools(&clean)?;
        Ok(build_task(&clean, &pools)?.stage1)
    } else {
        Ok(task.stage1.clone())
    }
}

fn train_config(cfg: &ExperimentConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        epochs,
        seed: cfg.seed,
        ..TrainConfig::default()
    }
}

fn eval_data<'a>(cfg: &ExperimentConfig, test: &'a [LabeledGrid]) -> Option<&'a [LabeledGrid]> {
    if cfg.eval_every == 0 || test.is_empty() {
        None
    } else {
        Some(test)
    }
}

fn summarize(
    dir: &Path,
    model_name: &str,
    assembly: &ModelAssembly,
    task: &TaskData,
) -> Result<SummaryRow> {
    let classes = assembly.num_classes();
    let (split, data) = if !task.test.is_empty() && classes == task.target_classes {
        ("test", &task.test)
    } else if !task.test_joint.is_empty() && classes == task.joint_classes {
        ("test", &task.test_joint)
    } else {
        ("train", &task.stage1)
    };
    let m = evaluate(assembly, data)?;
    let row = SummaryRow {
        model: model_name.to_string(),
        trainable_params: assembly.trainable_param_count(),
        total_params: assembly.total_param_count(),
        eval_split: split.to_string(),
        ce: m.mean_ce,
        accuracy: m.accuracy,
    };
    write_summary(dir, &row)?;
    Ok(row)
}

// ---------------------------------------------------------------------
// Pipelines.

/// Execute a resolved configuration; returns the summary row when the
/// pipeline produces one.
pub fn execute(cfg: &ExperimentConfig) -> Result<Option<SummaryRow>> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let _lock = RunLock::acquire(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.resolved"), cfg.to_resolved_string())
        .context("writing config.resolved")?;

    let mut timings: Vec<(String, f64)> = Vec::new();
    let started = Instant::now();
    let outcome = match cfg.pipeline {
        Pipeline::Pretrain => run_pretrain(cfg, &mut timings),
        Pipeline::Finetune => run_finetune(cfg, &mut timings),
        Pipeline::E2e => run_e2e(cfg, &mut timings),
        Pipeline::VqcPca => run_vqc_pca(cfg, &mut timings),
        Pipeline::GenDots => run_gen_dots(cfg).map(|()| None),
        Pipeline::Diagnose => run_diagnose(cfg).map(|()| None),
        Pipeline::Eval => run_eval(cfg),
    };
    timings.push(("total".into(), started.elapsed().as_secs_f64()));
    write_timings(&cfg.out_dir, &timings)?;
    outcome
}

fn run_pretrain(
    cfg: &ExperimentConfig,
    timings: &mut Vec<(String, f64)>,
) -> Result<Option<SummaryRow>> {
    let pools = load_pools(cfg)?;
    let task = build_task(cfg, &pools)?;
    let t0 = Instant::now();
    let eval = if task.stage1_classes == task.target_classes {
        eval_data(cfg, &task.test)
    } else {
        None
    };
    let stage1 = stage1_data(cfg, &task)?;
    let out = pretrain_stage1(
        &stage1,
        build_ttn(cfg)?,
        build_head(cfg, task.stage1_classes),
        &train_config(cfg, cfg.stage1_epochs),
        eval,
    )?;
    timings.push(("pretrain".into(), t0.elapsed().as_secs_f64()));
    write_metrics_file(&cfg.out_dir, "metrics.csv", &out.trace)?;
    let assembly = ModelAssembly::ttn_head(out.ttn, out.head);
    checkpoint::save_assembly(&cfg.out_dir.join("stage1.ckpt"), &assembly)?;
    Ok(Some(summarize(&cfg.out_dir, "TTN-Head", &assembly, &task)?))
}

fn run_finetune(
    cfg: &ExperimentConfig,
    timings: &mut Vec<(String, f64)>,
) -> Result<Option<SummaryRow>> {
    let pools = load_pools(cfg)?;
    let task = build_task(cfg, &pools)?;

    let ttn = if cfg.init_checkpoint.is_empty() {
        let t0 = Instant::now();
        let stage1 = stage1_data(cfg, &task)?;
        let out = pretrain_stage1(
            &stage1,
            build_ttn(cfg)?,
            build_head(cfg, task.stage1_classes),
            &train_config(cfg, cfg.stage1_epochs),
            None,
        )?;
        timings.push(("pretrain".into(), t0.elapsed().as_secs_f64()));
        write_metrics_file(&cfg.out_dir, "metrics_stage1.csv", &out.trace)?;
        let stage1 = ModelAssembly::ttn_head(out.ttn.clone(), out.head);
        checkpoint::save_assembly(&cfg.out_dir.join("stage1.ckpt"), &stage1)?;
        out.ttn
    } else {
        let loaded = checkpoint::load_assembly(Path::new(&cfg.init_checkpoint))?;
        loaded
            .ttn
            .with_context(|| format!("checkpoint {} holds no TT layer", cfg.init_checkpoint))?
    };

    let t0 = Instant::now();
    let out = finetune_stage2(
        &task.stage2,
        &ttn,
        build_pqc(cfg),
        build_readout(cfg, task.target_classes),
        &train_config(cfg, cfg.epochs),
        eval_data(cfg, &task.test),
    )?;
    timings.push(("finetune".into(), t0.elapsed().as_secs_f64()));
    write_metrics_file(&cfg.out_dir, "metrics.csv", &out.trace)?;
    let assembly = ModelAssembly::ttn_vqc(ttn, out.pqc, out.readout, true);
    checkpoint::save_assembly(&cfg.out_dir.join("final.ckpt"), &assembly)?;
    Ok(Some(summarize(
        &cfg.out_dir,
        "Pre+TTN-VQC",
        &assembly,
        &task,
    )?))
}

fn run_e2e(
    cfg: &ExperimentConfig,
    timings: &mut Vec<(String, f64)>,
) -> Result<Option<SummaryRow>> {
    let pools = load_pools(cfg)?;
    let task = build_task(cfg, &pools)?;
    let t0 = Instant::now();
    let out = train_e2e(
        &task.joint,
        build_ttn(cfg)?,
        build_pqc(cfg),
        build_readout(cfg, task.joint_classes),
        &train_config(cfg, cfg.epochs),
        eval_data(cfg, &task.test_joint),
    )?;
    timings.push(("e2e".into(), t0.elapsed().as_secs_f64()));
    write_metrics_file(&cfg.out_dir, "metrics.csv", &out.trace)?;
    let assembly = ModelAssembly::ttn_vqc(
        out.ttn.expect("e2e returns the trained layer"),
        out.pqc,
        out.readout,
        false,
    );
    checkpoint::save_assembly(&cfg.out_dir.join("final.ckpt"), &assembly)?;
    Ok(Some(summarize(&cfg.out_dir, "TTN-VQC", &assembly, &task)?))
}

fn run_vqc_pca(
    cfg: &ExperimentConfig,
    timings: &mut Vec<(String, f64)>,
) -> Result<Option<SummaryRow>> {
    let pools = load_pools(cfg)?;
    let task = build_task(cfg, &pools)?;
    let t0 = Instant::now();
    let rows: Vec<Vec<f64>> = task.joint.iter().map(|g| g.pixels_f64()).collect();
    let pca = ttq_core::learn::pca_fit(&rows, cfg.qubits)?;
    timings.push(("pca-fit".into(), t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let out = train_pca_vqc(
        &task.joint,
        &pca,
        build_pqc(cfg),
        build_readout(cfg, task.joint_classes),
        &train_config(cfg, cfg.epochs),
        eval_data(cfg, &task.test_joint),
    )?;
    timings.push(("vqc-train".into(), t0.elapsed().as_secs_f64()));
    write_metrics_file(&cfg.out_dir, "metrics.csv", &out.trace)?;
    let assembly = ModelAssembly::pca_vqc(pca, out.pqc, out.readout);
    checkpoint::save_assembly(&cfg.out_dir.join("final.ckpt"), &assembly)?;
    Ok(Some(summarize(&cfg.out_dir, "PCA+VQC", &assembly, &task)?))
}

fn run_gen_dots(cfg: &ExperimentConfig) -> Result<()> {
    let grids = gen_charge_diagrams(&dot_gen_config(cfg))?;
    let path = cfg.out_dir.join("dataset.ttqd");
    save_dataset(&path, &grids)?;
    Ok(())
}

fn run_eval(cfg: &ExperimentConfig) -> Result<Option<SummaryRow>> {
    if cfg.checkpoint.is_empty() {
        bail!("pipeline=eval requires 'checkpoint'");
    }
    let assembly = checkpoint::load_assembly(Path::new(&cfg.checkpoint))?;
    let pools = load_pools(cfg)?;
    let task = build_task(cfg, &pools)?;
    let data = match cfg.eval_split.as_str() {
        "test" if assembly.num_classes() == task.target_classes => &task.test,
        "test" => &task.test_joint,
        "train" => &task.joint,
        other => bail!("eval_split '{other}' (test|train)"),
    };
    let m = evaluate(&assembly, data)?;
    let rows = vec![EpochRow {
        epoch: 0,
        split: if cfg.eval_split == "test" {
            ttq_core::learn::SplitKind::Test
        } else {
            ttq_core::learn::SplitKind::Train
        },
        ce: m.mean_ce,
        accuracy: m.accuracy,
    }];
    write_metrics_file(&cfg.out_dir, "metrics.csv", &rows)?;
    let row = SummaryRow {
        model: "eval".into(),
        trainable_params: assembly.trainable_param_count(),
        total_params: assembly.total_param_count(),
        eval_split: cfg.eval_split.clone(),
        ce: m.mean_ce,
        accuracy: m.accuracy,
    };
    write_summary(&cfg.out_dir, &row)?;
    Ok(Some(row))
}

fn run_diagnose(cfg: &ExperimentConfig) -> Result<()> {
    let sample = unit_sample(
        cfg.diag_sample_size,
        cfg.diag_dim,
        seed::derive(cfg.seed, "diag-sample"),
    );

    let mut text = String::from("quantity,value,std_error,settings\n");
    for (name, family) in [
        ("rademacher_zero", FunctionFamily::Zero),
        ("rademacher_sign_constant", FunctionFamily::SignConstant),
        ("rademacher_linear_ball", FunctionFamily::LinearBall { radius: 1.0 }),
    ] {
        let est = rademacher_estimate(&family, &sample, cfg.diag_trials, cfg.seed)?;
        let _ = writeln!(
            text,
            "{name},{},{},trials={};n={};{}",
            fmt_f64(est.estimate),
            fmt_f64(est.std_error),
            est.trials,
            sample.len(),
            family.describe()
        );
    }

    // Risk-bound grid: 3 source sizes x 3 target sizes x 3 diversity
    // constants, both reported figures per combination.
    for n_source in [1_000usize, 4_000, 16_000] {
        for n_target in [500usize, 2_000, 8_000] {
            for nu in [0.5, 1.0, 2.0] {
                let v = bound_rhs(&BoundInputs {
                    loss_bound: cfg.diag_loss_bound,
                    lipschitz: cfg.diag_lipschitz,
                    delta: cfg.diag_delta,
                    nu,
                    complexity_ttn: 372.0,
                    complexity_head: 0.0,
                    complexity_vqc: (cfg.depth * cfg.qubits * 3) as f64,
                    n_source,
                    n_target,
                })?;
                let settings = format!(
                    "n0={n_source};nt={n_target};nu={nu};B={};L={};delta={}",
                    cfg.diag_loss_bound, cfg.diag_lipschitz, cfg.diag_delta
                );
                let _ = writeln!(
                    text,
                    "bound_leading,{},,{settings}",
                    fmt_f64(v.leading_order)
                );
                let _ = writeln!(
                    text,
                    "bound_constant_explicit,{},,{settings}",
                    fmt_f64(v.constant_explicit)
                );
            }
        }
    }
    std::fs::write(cfg.out_dir.join("diagnostics.csv"), text).context("writing diagnostics.csv")
}

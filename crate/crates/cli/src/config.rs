//! Flat `key = value` experiment configuration.
//!
//! Files are UTF-8 lines of `key = value` with `#` comments; command-line
//! overrides are `--key value` pairs applied last-wins. The resolved
//! snapshot written into every run directory materializes all keys the run
//! consumed, so re-running from the snapshot reproduces the run.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Pretrain,
    Finetune,
    E2e,
    VqcPca,
    GenDots,
    Diagnose,
    Eval,
}

impl Pipeline {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "pretrain" => Pipeline::Pretrain,
            "finetune" => Pipeline::Finetune,
            "e2e" => Pipeline::E2e,
            "vqc_pca" => Pipeline::VqcPca,
            "gen_dots" => Pipeline::GenDots,
            "diagnose" => Pipeline::Diagnose,
            "eval" => Pipeline::Eval,
            other => bail!("unknown pipeline '{other}'"),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::Pretrain => "pretrain",
            Pipeline::Finetune => "finetune",
            Pipeline::E2e => "e2e",
            Pipeline::VqcPca => "vqc_pca",
            Pipeline::GenDots => "gen_dots",
            Pipeline::Diagnose => "diagnose",
            Pipeline::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    SyntheticDigits,
    Idx,
    Ttqd,
    Dots,
}

impl DataSource {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "synthetic_digits" => DataSource::SyntheticDigits,
            "idx" => DataSource::Idx,
            "ttqd" => DataSource::Ttqd,
            "dots" => DataSource::Dots,
            other => bail!("unknown data_source '{other}'"),
        })
    }

    fn as_str(&self) -> &'static str {
        match self {
            DataSource::SyntheticDigits => "synthetic_digits",
            DataSource::Idx => "idx",
            DataSource::Ttqd => "ttqd",
            DataSource::Dots => "dots",
        }
    }
}

/// Whether the run follows the two-split transfer protocol or trains every
/// stage on the single training pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Transfer,
    Single,
}

impl Protocol {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "transfer" => Protocol::Transfer,
            "single" => Protocol::Single,
            other => bail!("unknown protocol '{other}' (transfer|single)"),
        })
    }

    fn as_str(&self) -> &'static str {
        match self {
            Protocol::Transfer => "transfer",
            Protocol::Single => "single",
        }
    }
}

/// Raw key/value map with provenance for error messages.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (n, raw_line) in text.lines().enumerate() {
            let line = match raw_line.split_once('#') {
                Some((head, _)) => head,
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected 'key = value', got '{raw_line}'", path.display(), n + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Apply `--key value` overrides, last wins.
    pub fn apply_overrides(&mut self, pairs: &[(String, String)]) {
        for (k, v) in pairs {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn str_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().with_context(|| format!("key '{key}': bad integer '{v}'")),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().with_context(|| format!("key '{key}': bad integer '{v}'")),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().with_context(|| format!("key '{key}': bad float '{v}'")),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(v) => bail!("key '{key}': bad boolean '{v}' (true|false)"),
        }
    }

    fn list_u16_or(&self, key: &str, default: &[u16]) -> Result<Vec<u16>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some("") => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .with_context(|| format!("key '{key}': bad class id '{t}'"))
                })
                .collect(),
        }
    }

    fn list_usize_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .with_context(|| format!("key '{key}': bad dimension '{t}'"))
                })
                .collect(),
        }
    }
}

/// Fully resolved experiment configuration; every field is serialized into
/// the run's `config.resolved`.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,

    pub data_source: DataSource,
    pub mnist_dir: String,
    pub ttqd_train: String,
    pub ttqd_test: String,
    pub digit_pool_per_class: usize,
    pub digit_test_per_class: usize,
    pub digit_distortion: f64,
    pub digit_seed: u64,
    pub dot_grid_size: usize,
    pub dot_count_per_class: usize,
    pub dot_noise_sigma: f64,
    pub dot_lines_single: (usize, usize),
    pub dot_lines_double: (usize, usize),
    pub dot_seed: u64,
    /// Pre-train the representation on the clean renderings of the same
    /// diagrams (geometry is shared between clean and noisy renderings).
    pub dot_stage1_clean: bool,
    pub test_fraction: f64,

    pub protocol: Protocol,
    pub source_classes: Vec<u16>,
    pub source_count: usize,
    pub target_classes: Vec<u16>,
    pub target_count: usize,

    pub qubits: usize,
    pub depth: usize,
    pub tt_input_dims: Vec<usize>,
    pub tt_output_dims: Vec<usize>,
    pub tt_ranks: Vec<usize>,
    pub readout_gain: f64,
    pub readout_trainable: bool,
    pub pqc_ring: bool,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub stage1_epochs: usize,
    pub init_checkpoint: String,
    pub eval_every: usize,

    pub checkpoint: String,
    pub eval_split: String,

    pub diag_trials: usize,
    pub diag_sample_size: usize,
    pub diag_dim: usize,
    pub diag_nu: f64,
    pub diag_loss_bound: f64,
    pub diag_lipschitz: f64,
    pub diag_delta: f64,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let pipeline = match raw.get("pipeline") {
            Some(p) => Pipeline::parse(p)?,
            None => bail!("missing required key 'pipeline'"),
        };
        let out_dir = match raw.get("out_dir") {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => bail!("missing required key 'out_dir' (use --out)"),
        };
        let cfg = Self {
            pipeline,
            seed: raw.u64_or("seed", 1)?,
            out_dir,
            threads: raw.usize_or("threads", 0)?,

            data_source: DataSource::parse(&raw.str_or("data_source", "synthetic_digits"))?,
            mnist_dir: raw.str_or("mnist_dir", "data/mnist"),
            ttqd_train: raw.str_or("ttqd_train", ""),
            ttqd_test: raw.str_or("ttqd_test", ""),
            digit_pool_per_class: raw.usize_or("digit_pool_per_class", 3200)?,
            digit_test_per_class: raw.usize_or("digit_test_per_class", 500)?,
            digit_distortion: raw.f64_or("digit_distortion", 1.0)?,
            digit_seed: raw.u64_or("digit_seed", 900)?,
            dot_grid_size: raw.usize_or("dot_grid_size", 28)?,
            dot_count_per_class: raw.usize_or("dot_count_per_class", 400)?,
            dot_noise_sigma: raw.f64_or("dot_noise_sigma", 0.0)?,
            dot_lines_single: pair(&raw.list_usize_or("dot_lines_single", &[2, 3])?)?,
            dot_lines_double: pair(&raw.list_usize_or("dot_lines_double", &[5, 7])?)?,
            dot_seed: raw.u64_or("dot_seed", 700)?,
            dot_stage1_clean: raw.bool_or("dot_stage1_clean", false)?,
            test_fraction: raw.f64_or("test_fraction", 0.2)?,

            protocol: Protocol::parse(&raw.str_or("protocol", "transfer"))?,
            source_classes: raw.list_u16_or("source_classes", &[1, 2, 3, 4, 5, 6])?,
            source_count: raw.usize_or("source_count", 6000)?,
            target_classes: raw.list_u16_or("target_classes", &[2, 5])?,
            target_count: raw.usize_or("target_count", 2000)?,

            qubits: raw.usize_or("qubits", 8)?,
            depth: raw.usize_or("depth", 2)?,
            tt_input_dims: raw.list_usize_or("tt_input_dims", &[7, 16, 7])?,
            tt_output_dims: raw.list_usize_or("tt_output_dims", &[2, 2, 2])?,
            tt_ranks: raw.list_usize_or("tt_ranks", &[1, 3, 3, 1])?,
            readout_gain: raw.f64_or("readout_gain", 5.0)?,
            readout_trainable: raw.bool_or("readout_trainable", false)?,
            pqc_ring: raw.bool_or("pqc_ring", false)?,

            batch_size: raw.usize_or("batch_size", 50)?,
            learning_rate: raw.f64_or("learning_rate", 0.001)?,
            epochs: raw.usize_or("epochs", 30)?,
            stage1_epochs: raw.usize_or("stage1_epochs", 30)?,
            init_checkpoint: raw.str_or("init_checkpoint", ""),
            eval_every: raw.usize_or("eval_every", 1)?,

            checkpoint: raw.str_or("checkpoint", ""),
            eval_split: raw.str_or("eval_split", "test"),

            diag_trials: raw.usize_or("diag_trials", 10_000)?,
            diag_sample_size: raw.usize_or("diag_sample_size", 64)?,
            diag_dim: raw.usize_or("diag_dim", 8)?,
            diag_nu: raw.f64_or("diag_nu", 1.0)?,
            diag_loss_bound: raw.f64_or("diag_loss_bound", 10.0)?,
            diag_lipschitz: raw.f64_or("diag_lipschitz", 1.0)?,
            diag_delta: raw.f64_or("diag_delta", 0.05)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            bail!("batch_size must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            bail!("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            bail!("test_fraction {} outside [0, 1)", self.test_fraction);
        }
        let uses_ttn = matches!(
            self.pipeline,
            Pipeline::Pretrain | Pipeline::Finetune | Pipeline::E2e
        );
        if uses_ttn {
            let out: usize = self.tt_output_dims.iter().product();
            if out != self.qubits {
                bail!(
                    "qubits ({}) must equal the product of tt_output_dims ({:?} -> {})",
                    self.qubits,
                    self.tt_output_dims,
                    out
                );
            }
            if self.tt_input_dims.len() != self.tt_output_dims.len()
                || self.tt_ranks.len() != self.tt_input_dims.len() + 1
            {
                bail!(
                    "TT dims/ranks inconsistent: {} input dims, {} output dims, {} ranks",
                    self.tt_input_dims.len(),
                    self.tt_output_dims.len(),
                    self.tt_ranks.len()
                );
            }
        }
        Ok(())
    }

    /// All fields as sorted `key = value` lines.
    pub fn to_resolved_string(&self) -> String {
        let mut kv: BTreeMap<&'static str, String> = BTreeMap::new();
        kv.insert("pipeline", self.pipeline.as_str().into());
        kv.insert("seed", self.seed.to_string());
        kv.insert("out_dir", self.out_dir.display().to_string());
        kv.insert("threads", self.threads.to_string());
        kv.insert("data_source", self.data_source.as_str().into());
        kv.insert("mnist_dir", self.mnist_dir.clone());
        kv.insert("ttqd_train", self.ttqd_train.clone());
        kv.insert("ttqd_test", self.ttqd_test.clone());
        kv.insert(
            "digit_pool_per_class",
            self.digit_pool_per_class.to_string(),
        );
        kv.insert(
            "digit_test_per_class",
            self.digit_test_per_class.to_string(),
        );
        kv.insert("digit_distortion", self.digit_distortion.to_string());
        kv.insert("digit_seed", self.digit_seed.to_string());
        kv.insert("dot_grid_size", self.dot_grid_size.to_string());
        kv.insert("dot_count_per_class", self.dot_count_per_class.to_string());
        kv.insert("dot_noise_sigma", self.dot_noise_sigma.to_string());
        kv.insert(
            "dot_lines_single",
            format!("{},{}", self.dot_lines_single.0, self.dot_lines_single.1),
        );
        kv.insert(
            "dot_lines_double",
            format!("{},{}", self.dot_lines_double.0, self.dot_lines_double.1),
        );
        kv.insert("dot_seed", self.dot_seed.to_string());
        kv.insert("dot_stage1_clean", self.dot_stage1_clean.to_string());
        kv.insert("test_fraction", self.test_fraction.to_string());
        kv.insert("protocol", self.protocol.as_str().into());
        kv.insert("source_classes", join(&self.source_classes));
        kv.insert("source_count", self.source_count.to_string());
        kv.insert("target_classes", join(&self.target_classes));
        kv.insert("target_count", self.target_count.to_string());
        kv.insert("qubits", self.qubits.to_string());
        kv.insert("depth", self.depth.to_string());
        kv.insert("tt_input_dims", join(&self.tt_input_dims));
        kv.insert("tt_output_dims", join(&self.tt_output_dims));
        kv.insert("tt_ranks", join(&self.tt_ranks));
        kv.insert("readout_gain", self.readout_gain.to_string());
        kv.insert("readout_trainable", self.readout_trainable.to_string());
        kv.insert("pqc_ring", self.pqc_ring.to_string());
        kv.insert("batch_size", self.batch_size.to_string());
        kv.insert("learning_rate", self.learning_rate.to_string());
        kv.insert("epochs", self.epochs.to_string());
        kv.insert("stage1_epochs", self.stage1_epochs.to_string());
        kv.insert("init_checkpoint", self.init_checkpoint.clone());
        kv.insert("eval_every", self.eval_every.to_string());
        kv.insert("checkpoint", self.checkpoint.clone());
        kv.insert("eval_split", self.eval_split.clone());
        kv.insert("diag_trials", self.diag_trials.to_string());
        kv.insert("diag_sample_size", self.diag_sample_size.to_string());
        kv.insert("diag_dim", self.diag_dim.to_string());
        kv.insert("diag_nu", self.diag_nu.to_string());
        kv.insert("diag_loss_bound", self.diag_loss_bound.to_string());
        kv.insert("diag_lipschitz", self.diag_lipschitz.to_string());
        kv.insert("diag_delta", self.diag_delta.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn pair(v: &[usize]) -> Result<(usize, usize)> {
    match v {
        [a, b] => Ok((*a, *b)),
        other => bail!("expected 'lo,hi' pair, got {other:?}"),
    }
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

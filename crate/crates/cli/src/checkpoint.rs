//! Checkpoint format: little-endian binary with named parameter blocks and a
//! whole-file checksum.
//!
//! ```text
//! magic  "TTQC"          4 bytes
//! version u32            currently 1
//! blocks  u32
//! per block:
//!   name_len u32, name bytes (UTF-8)
//!   ndim u32, extents u32 x ndim
//!   data f64 LE x prod(extents)
//! trailer: SHA-256 of all preceding bytes (32 bytes)
//! ```
//!
//! Assemblies are stored as blocks named `ttn.core<k>`, `head.weight`,
//! `head.bias`, `pqc.angles`, `pca.mean`, `pca.basis`, `pca.variance`, and
//! scalar metadata blocks (`readout.gain`, `pqc.ring`, ...); the variant is
//! inferred from which blocks are present.

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use ttq_core::learn::{DenseHead, ModelAssembly, ModelVariant, Pca, Readout};
use ttq_core::qsim::PqcParams;
use ttq_core::tt::{TtCore, TtLayer, TtShape};

const MAGIC: &[u8; 4] = b"TTQC";
const VERSION: u32 = 1;

/// One named parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub extents: Vec<usize>,
    pub data: Vec<f64>,
}

impl Block {
    pub fn scalar(v: f64) -> Self {
        Block {
            extents: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Block {
            extents: vec![data.len()],
            data,
        }
    }

    pub fn shaped(extents: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(extents.iter().product::<usize>(), data.len());
        Block { extents, data }
    }
}

pub fn save_blocks(path: &Path, blocks: &BTreeMap<String, Block>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, block) in blocks {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(block.extents.len() as u32).to_le_bytes());
        for &e in &block.extents {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in &block.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    std::fs::write(path, buf).with_context(|| format!("writing checkpoint {}", path.display()))
}

pub fn load_blocks(path: &Path) -> Result<BTreeMap<String, Block>> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    if bytes.len() < 4 + 4 + 4 + 32 {
        bail!("{}: truncated checkpoint", path.display());
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        bail!("{}: checksum mismatch", path.display());
    }
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
        if *at + n > body.len() {
            bail!("{}: truncated at byte {}", path.display(), *at);
        }
        let s = &body[*at..*at + n];
        *at += n;
        Ok(s)
    };
    let read_u32 = |at: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(at, 4)?.try_into().expect("4 bytes")))
    };

    if take(&mut at, 4)? != MAGIC {
        bail!("{}: bad magic", path.display());
    }
    let version = read_u32(&mut at)?;
    if version != VERSION {
        bail!("{}: unsupported version {version}", path.display());
    }
    let count = read_u32(&mut at)? as usize;
    let mut blocks = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut at)? as usize;
        let name = String::from_utf8(take(&mut at, name_len)?.to_vec())
            .with_context(|| format!("{}: block name not UTF-8", path.display()))?;
        let ndim = read_u32(&mut at)? as usize;
        let mut extents = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            extents.push(read_u32(&mut at)? as usize);
        }
        let len: usize = extents.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let raw = take(&mut at, 8)?;
            data.push(f64::from_le_bytes(raw.try_into().expect("8 bytes")));
        }
        blocks.insert(name, Block { extents, data });
    }
    Ok(blocks)
}

// ---------------------------------------------------------------------
// Assembly serialization.

pub fn assembly_to_blocks(model: &ModelAssembly) -> BTreeMap<String, Block> {
    let mut blocks = BTreeMap::new();
    if let Some(ttn) = &model.ttn {
        for (k, core) in ttn.cores().iter().enumerate() {
            blocks.insert(
                format!("ttn.core{k}"),
                Block::shaped(
                    vec![core.left_rank, core.input_dim, core.output_dim, core.right_rank],
                    core.data.clone(),
                ),
            );
        }
    }
    if let Some(head) = &model.head {
        blocks.insert(
            "head.weight".into(),
            Block::shaped(vec![head.classes, head.in_dim], head.weight.clone()),
        );
        blocks.insert("head.bias".into(), Block::vector(head.bias.clone()));
    }
    if let Some(pqc) = &model.pqc {
        blocks.insert(
            "pqc.angles".into(),
            Block::shaped(vec![pqc.depth, pqc.num_qubits, 3], pqc.angles.clone()),
        );
        blocks.insert(
            "pqc.ring".into(),
            Block::scalar(f64::from(u8::from(pqc.ring_closure))),
        );
    }
    if let Some(pca) = &model.pca {
        blocks.insert("pca.mean".into(), Block::vector(pca.mean.clone()));
        blocks.insert(
            "pca.basis".into(),
            Block::shaped(vec![pca.in_dim, pca.num_components], pca.basis.clone()),
        );
        blocks.insert(
            "pca.variance".into(),
            Block::vector(pca.explained_variance.clone()),
        );
        blocks.insert(
            "pca.degenerate".into(),
            Block::scalar(f64::from(u8::from(pca.degenerate))),
        );
    }
    match &model.readout {
        Readout::FixedGain { gain, classes } => {
            blocks.insert("readout.gain".into(), Block::scalar(*gain));
            blocks.insert("readout.classes".into(), Block::scalar(*classes as f64));
        }
        Readout::Affine(head) => {
            blocks.insert(
                "readout.weight".into(),
                Block::shaped(vec![head.classes, head.in_dim], head.weight.clone()),
            );
            blocks.insert("readout.bias".into(), Block::vector(head.bias.clone()));
        }
    }
    blocks.insert(
        "meta.freeze_ttn".into(),
        Block::scalar(f64::from(u8::from(model.freeze_ttn))),
    );
    blocks
}

fn block<'a>(blocks: &'a BTreeMap<String, Block>, name: &str, path: &Path) -> Result<&'a Block> {
    blocks
        .get(name)
        .with_context(|| format!("{}: missing block '{name}'", path.display()))
}

fn ttn_from_blocks(blocks: &BTreeMap<String, Block>, path: &Path) -> Result<Option<TtLayer>> {
    let mut cores = Vec::new();
    for k in 0.. {
        let Some(b) = blocks.get(&format!("ttn.core{k}")) else {
            break;
        };
        let [r, i, j, r2] = b.extents[..] else {
            bail!("{}: ttn.core{k} is not 4-way", path.display());
        };
        let mut core = TtCore::zeros(r, i, j, r2);
        core.data = b.data.clone();
        cores.push(core);
    }
    if cores.is_empty() {
        return Ok(None);
    }
    let shape = TtShape::new(
        cores.iter().map(|c| c.input_dim).collect(),
        cores.iter().map(|c| c.output_dim).collect(),
        cores
            .iter()
            .map(|c| c.left_rank)
            .chain(std::iter::once(cores.last().expect("non-empty").right_rank))
            .collect(),
    )?;
    Ok(Some(TtLayer::new(shape, cores)?))
}

pub fn assembly_from_blocks(
    blocks: &BTreeMap<String, Block>,
    path: &Path,
) -> Result<ModelAssembly> {
    let ttn = ttn_from_blocks(blocks, path)?;
    let head = match (blocks.get("head.weight"), blocks.get("head.bias")) {
        (Some(w), Some(b)) => {
            let [classes, in_dim] = w.extents[..] else {
                bail!("{}: head.weight is not 2-way", path.display());
            };
            Some(DenseHead {
                classes,
                in_dim,
                weight: w.data.clone(),
                bias: b.data.clone(),
            })
        }
        _ => None,
    };
    let pqc = match blocks.get("pqc.angles") {
        Some(a) => {
            let [depth, qubits, three] = a.extents[..] else {
                bail!("{}: pqc.angles is not 3-way", path.display());
            };
            if three != 3 {
                bail!("{}: pqc.angles last extent must be 3", path.display());
            }
            let ring = block(blocks, "pqc.ring", path)?.data[0] != 0.0;
            let mut p = PqcParams::zeros(qubits, depth);
            p.ring_closure = ring;
            p.angles = a.data.clone();
            Some(p)
        }
        None => None,
    };
    let pca = match blocks.get("pca.basis") {
        Some(b) => {
            let [in_dim, num_components] = b.extents[..] else {
                bail!("{}: pca.basis is not 2-way", path.display());
            };
            Some(Pca {
                in_dim,
                num_components,
                mean: block(blocks, "pca.mean", path)?.data.clone(),
                basis: b.data.clone(),
                explained_variance: block(blocks, "pca.variance", path)?.data.clone(),
                degenerate: block(blocks, "pca.degenerate", path)?.data[0] != 0.0,
            })
        }
        None => None,
    };
    let readout = if let Some(w) = blocks.get("readout.weight") {
        let [classes, in_dim] = w.extents[..] else {
            bail!("{}: readout.weight is not 2-way", path.display());
        };
        Readout::Affine(DenseHead {
            classes,
            in_dim,
            weight: w.data.clone(),
            bias: block(blocks, "readout.bias", path)?.data.clone(),
        })
    } else {
        Readout::FixedGain {
            gain: block(blocks, "readout.gain", path)?.data[0],
            classes: block(blocks, "readout.classes", path)?.data[0] as usize,
        }
    };
    let freeze_ttn = block(blocks, "meta.freeze_ttn", path)?.data[0] != 0.0;

    let variant = match (&ttn, &pqc, &pca, &head) {
        (Some(_), Some(_), None, None) => ModelVariant::TtnVqc,
        (None, Some(_), Some(_), None) => ModelVariant::PcaVqc,
        (Some(_), None, None, Some(_)) => ModelVariant::TtnHead,
        _ => bail!(
            "{}: block set does not match any assembly variant",
            path.display()
        ),
    };
    let model = ModelAssembly {
        variant,
        ttn,
        head,
        pqc,
        pca,
        freeze_ttn,
        readout,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_assembly(path: &Path, model: &ModelAssembly) -> Result<()> {
    save_blocks(path, &assembly_to_blocks(model))
}

pub fn load_assembly(path: &Path) -> Result<ModelAssembly> {
    assembly_from_blocks(&load_blocks(path)?, path)
}

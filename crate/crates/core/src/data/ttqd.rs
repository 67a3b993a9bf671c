//! The canonical on-disk dataset format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "TTQD"           4 bytes
//! version u32             currently 1
//! count   u32
//! height  u32
//! width   u32
//! classes u32
//! pixels  count * height * width  f32 LE
//! labels  count                   u16 LE
//! ```
//!
//! Write-then-read is the identity on the stored grids.

use super::{DataError, LabeledGrid};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"TTQD";
const VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_dataset(path: impl AsRef<Path>, grids: &[LabeledGrid]) -> Result<(), DataError> {
    let path = path.as_ref();
    let (height, width) = grids
        .first()
        .map(|g| (g.height, g.width))
        .unwrap_or((0, 0));
    if grids.iter().any(|g| g.height != height || g.width != width) {
        return Err(DataError::InvalidConfig(
            "all grids in a dataset file must share one extent".into(),
        ));
    }
    let classes = grids.iter().map(|g| u32::from(g.label) + 1).max().unwrap_or(0);

    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io_err(path, e));
    write(MAGIC)?;
    write(&VERSION.to_le_bytes())?;
    write(&(grids.len() as u32).to_le_bytes())?;
    write(&(height as u32).to_le_bytes())?;
    write(&(width as u32).to_le_bytes())?;
    write(&classes.to_le_bytes())?;
    for g in grids {
        for &p in &g.pixels {
            write(&p.to_le_bytes())?;
        }
    }
    for g in grids {
        write(&g.label.to_le_bytes())?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledGrid>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;
    let mut take = |buf: &mut [u8]| -> Result<(), DataError> {
        r.read_exact(buf).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            offset,
            message: format!("truncated read of {} bytes: {e}", buf.len()),
        })?;
        offset += buf.len() as u64;
        Ok(())
    };

    let mut magic = [0u8; 4];
    take(&mut magic)?;
    if &magic != MAGIC {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            offset: 0,
            message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |take: &mut dyn FnMut(&mut [u8]) -> Result<(), DataError>| {
        take(&mut u32buf)?;
        Ok::<u32, DataError>(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut take)?;
    if version != VERSION {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            offset: 4,
            message: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let count = read_u32(&mut take)? as usize;
    let height = read_u32(&mut take)? as usize;
    let width = read_u32(&mut take)? as usize;
    let classes = read_u32(&mut take)? as u16;

    let per = height * width;
    let mut all_pixels = vec![0.0f32; count * per];
    let mut f32buf = [0u8; 4];
    for p in &mut all_pixels {
        take(&mut f32buf)?;
        *p = f32::from_le_bytes(f32buf);
    }
    let mut labels = vec![0u16; count];
    let mut u16buf = [0u8; 2];
    for l in &mut labels {
        take(&mut u16buf)?;
        *l = u16::from_le_bytes(u16buf);
    }

    (0..count)
        .map(|n| {
            if labels[n] >= classes {
                return Err(DataError::CountMismatch(format!(
                    "label {} at item {n} exceeds declared class count {classes}",
                    labels[n]
                )));
            }
            LabeledGrid::new(
                height,
                width,
                all_pixels[n * per..(n + 1) * per].to_vec(),
                labels[n],
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = rng_from(5);
        let grids: Vec<LabeledGrid> = (0..3)
            .map(|k| {
                let pixels: Vec<f32> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
                LabeledGrid::new(3, 4, pixels, k as u16).unwrap()
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.ttqd");
        save_dataset(&path, &grids).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(grids, back);
    }

    #[test]
    fn empty_dataset_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ttqd");
        save_dataset(&path, &[]).unwrap();
        assert!(load_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn corrupted_magic_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ttqd");
        save_dataset(&path, &[LabeledGrid::new(1, 1, vec![0.5], 0).unwrap()]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(matches!(err, DataError::Parse { offset: 0, .. }), "{err}");
    }
}

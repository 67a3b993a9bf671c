//! IDX file ingestion (the MNIST container format): big-endian headers with
//! magic 2051 for images and 2049 for labels. Pixel bytes are scaled to
//! `[0, 1]` by division by 255.

use super::{DataError, LabeledGrid};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

struct Cursor<R> {
    reader: R,
    path: String,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), DataError> {
        self.reader
            .read_exact(buf)
            .map_err(|e| DataError::Parse {
                path: self.path.clone(),
                offset: self.offset,
                message: format!("truncated read of {} bytes: {e}", buf.len()),
            })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32_be(&mut self) -> Result<u32, DataError> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_be_bytes(b))
    }

    fn expect_magic(&mut self, expected: u32) -> Result<(), DataError> {
        let at = self.offset;
        let magic = self.read_u32_be()?;
        if magic != expected {
            return Err(DataError::Parse {
                path: self.path.clone(),
                offset: at,
                message: format!("bad magic {magic}, expected {expected}"),
            });
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<Cursor<BufReader<File>>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(Cursor {
        reader: BufReader::new(file),
        path: path.display().to_string(),
        offset: 0,
    })
}

/// Load an IDX image/label file pair into labelled grids.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Vec<LabeledGrid>, DataError> {
    let mut img = open(images_path.as_ref())?;
    img.expect_magic(IMAGE_MAGIC)?;
    let count = img.read_u32_be()? as usize;
    let rows = img.read_u32_be()? as usize;
    let cols = img.read_u32_be()? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    img.read_exact(&mut pixels)?;

    let mut lab = open(labels_path.as_ref())?;
    lab.expect_magic(LABEL_MAGIC)?;
    let label_count = lab.read_u32_be()? as usize;
    if label_count != count {
        return Err(DataError::CountMismatch(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let mut labels = vec![0u8; count];
    lab.read_exact(&mut labels)?;

    let per_image = rows * cols;
    (0..count)
        .map(|n| {
            let grid: Vec<f32> = pixels[n * per_image..(n + 1) * per_image]
                .iter()
                .map(|&b| f32::from(b) / 255.0)
                .collect();
            LabeledGrid::new(rows, cols, grid, u16::from(labels[n]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Hand-built two-image IDX fixture, authored byte by byte.
    fn write_fixture(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let images = dir.join("imgs-idx3-ubyte");
        let labels = dir.join("labs-idx1-ubyte");
        let mut f = File::create(&images).unwrap();
        f.write_all(&2051u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap(); // count
        f.write_all(&2u32.to_be_bytes()).unwrap(); // rows
        f.write_all(&3u32.to_be_bytes()).unwrap(); // cols
        f.write_all(&[0, 51, 102, 153, 204, 255]).unwrap(); // image 0
        f.write_all(&[255, 204, 153, 102, 51, 0]).unwrap(); // image 1
        let mut f = File::create(&labels).unwrap();
        f.write_all(&2049u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&[7, 3]).unwrap();
        (images, labels)
    }

    #[test]
    fn fixture_round_trips_exact_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_fixture(dir.path());
        let grids = load_idx(&images, &labels).unwrap();
        assert_eq!(grids.len(), 2);
        assert_eq!(grids[0].height, 2);
        assert_eq!(grids[0].width, 3);
        assert_eq!(grids[0].label, 7);
        assert_eq!(grids[1].label, 3);
        let expect: Vec<f32> = [0u8, 51, 102, 153, 204, 255]
            .iter()
            .map(|&b| f32::from(b) / 255.0)
            .collect();
        assert_eq!(grids[0].pixels, expect);
        assert_eq!(grids[1].pixels[5], 0.0);
    }

    #[test]
    fn truncated_header_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short");
        std::fs::write(&path, 2051u32.to_be_bytes()).unwrap();
        let err = load_idx(&path, &path).unwrap_err();
        assert!(matches!(err, DataError::Parse { offset: 4, .. }), "{err}");
    }

    #[test]
    fn bad_magic_is_rejected_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_fixture(dir.path());
        // Labels file used where images are expected: magic mismatch at 0.
        let err = load_idx(&labels, &images).unwrap_err();
        match err {
            DataError::Parse {
                offset, message, ..
            } => {
                assert_eq!(offset, 0);
                assert!(message.contains("2051"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (images, _) = write_fixture(dir.path());
        let labels = dir.path().join("labs-short");
        let mut f = File::create(&labels).unwrap();
        f.write_all(&2049u32.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        f.write_all(&[7]).unwrap();
        let err = load_idx(&images, &labels).unwrap_err();
        assert!(matches!(err, DataError::CountMismatch(_)), "{err}");
    }
}

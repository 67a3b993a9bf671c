//! Dataset types, split construction, and deterministic generators.
//!
//! Every sampling or generation routine is a pure function of its inputs and
//! an explicit seed; per-item seeds are derived from the item index so
//! generation can shard across workers without changing the output.

mod digits;
mod dots;
mod idx;
mod ttqd;

pub use digits::{gen_digits, DigitGenConfig};
pub use dots::{gen_charge_diagrams, DotGenConfig};
pub use idx::load_idx;
pub use ttqd::{load_dataset, save_dataset};

use crate::seed;
use rand::seq::SliceRandom;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte {offset} in {path}: {message}")]
    Parse {
        path: String,
        offset: u64,
        message: String,
    },
    #[error("count mismatch: {0}")]
    CountMismatch(String),
    #[error("insufficient items: {0}")]
    Insufficient(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("pixel {value} outside [0, 1] at index {index}")]
    PixelRange { index: usize, value: f32 },
}

/// A labelled H x W image with pixels in `[0, 1]`.
///
/// Pixels are stored as `f32` so that the on-disk dataset format round-trips
/// bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGrid {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
    pub label: u16,
}

impl LabeledGrid {
    pub fn new(
        height: usize,
        width: usize,
        pixels: Vec<f32>,
        label: u16,
    ) -> Result<Self, DataError> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(DataError::InvalidConfig(format!(
                "{} pixels for a {height}x{width} grid",
                pixels.len()
            )));
        }
        for (index, &value) in pixels.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(DataError::PixelRange { index, value });
            }
        }
        Ok(Self {
            height,
            width,
            pixels,
            label,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }
}

/// How the source / target / test splits are drawn from the pools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    /// Classes included in the source split (original label ids).
    pub source_classes: Vec<u16>,
    /// Total source items, divided equally across the source classes.
    pub source_count: usize,
    /// Classes included in the target split; also selects the test items.
    pub target_classes: Vec<u16>,
    /// Total target items, divided equally across the target classes.
    pub target_count: usize,
    pub seed: u64,
}

/// The three disjoint datasets used by the two-stage protocol. Labels in
/// every split are remapped to contiguous `0..C-1` by ascending original
/// class id; the maps record which original class each new label stands for.
#[derive(Debug, Clone)]
pub struct Splits {
    pub source: Vec<LabeledGrid>,
    pub target: Vec<LabeledGrid>,
    pub test: Vec<LabeledGrid>,
    /// Indices into the training pool backing `source` / `target`.
    pub source_indices: Vec<usize>,
    pub target_indices: Vec<usize>,
    /// `source_class_map[new_label] = original class id`.
    pub source_class_map: Vec<u16>,
    pub target_class_map: Vec<u16>,
}

/// Draw the source and target splits (without replacement, seeded, balanced
/// per class) from `train_pool`, and collect every `test_pool` item whose
/// label is a target class.
pub fn build_splits(
    train_pool: &[LabeledGrid],
    spec: &SplitSpec,
    test_pool: &[LabeledGrid],
) -> Result<Splits, DataError> {
    let source_classes = sorted_unique(&spec.source_classes);
    let target_classes = sorted_unique(&spec.target_classes);
    if source_classes.is_empty() && spec.source_count > 0 {
        return Err(DataError::InvalidConfig(
            "source_count > 0 with no source classes".into(),
        ));
    }
    if target_classes.is_empty() && spec.target_count > 0 {
        return Err(DataError::InvalidConfig(
            "target_count > 0 with no target classes".into(),
        ));
    }

    let per_source = per_class_count(spec.source_count, source_classes.len(), "source")?;
    let per_target = per_class_count(spec.target_count, target_classes.len(), "target")?;

    let mut used = vec![false; train_pool.len()];
    let mut source_indices = Vec::with_capacity(spec.source_count);
    let mut rng = seed::rng_from(seed::derive(spec.seed, "split-source"));
    for &class in &source_classes {
        let mut candidates: Vec<usize> = train_pool
            .iter()
            .enumerate()
            .filter(|(_, g)| g.label == class)
            .map(|(i, _)| i)
            .collect();
        if candidates.len() < per_source {
            return Err(DataError::Insufficient(format!(
                "source class {class}: need {per_source}, pool has {} (deficit {})",
                candidates.len(),
                per_source - candidates.len()
            )));
        }
        candidates.shuffle(&mut rng);
        for &i in &candidates[..per_source] {
            used[i] = true;
            source_indices.push(i);
        }
    }

    let mut target_indices = Vec::with_capacity(spec.target_count);
    let mut rng = seed::rng_from(seed::derive(spec.seed, "split-target"));
    for &class in &target_classes {
        let mut candidates: Vec<usize> = train_pool
            .iter()
            .enumerate()
            .filter(|(i, g)| g.label == class && !used[*i])
            .map(|(i, _)| i)
            .collect();
        if candidates.len() < per_target {
            return Err(DataError::Insufficient(format!(
                "target class {class}: need {per_target}, {} remain after source sampling (deficit {})",
                candidates.len(),
                per_target - candidates.len()
            )));
        }
        candidates.shuffle(&mut rng);
        for &i in &candidates[..per_target] {
            used[i] = true;
            target_indices.push(i);
        }
    }

    let source = relabel(train_pool, &source_indices, &source_classes);
    let target = relabel(train_pool, &target_indices, &target_classes);
    let test: Vec<LabeledGrid> = test_pool
        .iter()
        .filter(|g| target_classes.contains(&g.label))
        .map(|g| {
            let mut g = g.clone();
            g.label = new_label(&target_classes, g.label);
            g
        })
        .collect();

    Ok(Splits {
        source,
        target,
        test,
        source_indices,
        target_indices,
        source_class_map: source_classes,
        target_class_map: target_classes,
    })
}

fn sorted_unique(classes: &[u16]) -> Vec<u16> {
    let mut out = classes.to_vec();
    out.sort_unstable();
    out.dedup();
    out
}

fn per_class_count(total: usize, classes: usize, what: &str) -> Result<usize, DataError> {
    if total == 0 {
        return Ok(0);
    }
    if total % classes != 0 {
        return Err(DataError::InvalidConfig(format!(
            "{what}_count {total} not divisible by {classes} classes"
        )));
    }
    Ok(total / classes)
}

fn new_label(classes: &[u16], original: u16) -> u16 {
    classes
        .iter()
        .position(|&c| c == original)
        .expect("label drawn from the class set") as u16
}

/// Seeded stratified train/test partition: per class, a `test_fraction`
/// share (rounded down, at least one item when the class has two or more)
/// goes to the test side.
pub fn stratified_split(
    items: &[LabeledGrid],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledGrid>, Vec<LabeledGrid>), DataError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(DataError::InvalidConfig(format!(
            "test_fraction {test_fraction} outside [0, 1)"
        )));
    }
    let mut classes: Vec<u16> = items.iter().map(|g| g.label).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = seed::rng_from(seed::derive(seed, "stratified-split"));
    let mut is_test = vec![false; items.len()];
    for &class in &classes {
        let mut idxs: Vec<usize> = items
            .iter()
            .enumerate()
            .filter(|(_, g)| g.label == class)
            .map(|(i, _)| i)
            .collect();
        idxs.shuffle(&mut rng);
        let mut n_test = (idxs.len() as f64 * test_fraction).floor() as usize;
        if n_test == 0 && idxs.len() >= 2 && test_fraction > 0.0 {
            n_test = 1;
        }
        for &i in &idxs[..n_test] {
            is_test[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, g) in items.iter().enumerate() {
        if is_test[i] {
            test.push(g.clone());
        } else {
            train.push(g.clone());
        }
    }
    Ok((train, test))
}

fn relabel(pool: &[LabeledGrid], indices: &[usize], classes: &[u16]) -> Vec<LabeledGrid> {
    indices
        .iter()
        .map(|&i| {
            let mut g = pool[i].clone();
            g.label = new_label(classes, g.label);
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(class_counts: &[(u16, usize)]) -> Vec<LabeledGrid> {
        let mut out = Vec::new();
        for &(class, count) in class_counts {
            for k in 0..count {
                let v = (k % 7) as f32 / 10.0;
                out.push(LabeledGrid::new(2, 2, vec![v; 4], class).unwrap());
            }
        }
        out
    }

    #[test]
    fn splits_are_disjoint_and_balanced() {
        let train = pool(&[(1, 30), (2, 30), (3, 30), (5, 30)]);
        let test = pool(&[(2, 8), (5, 8), (7, 4)]);
        let spec = SplitSpec {
            source_classes: vec![1, 2, 3],
            source_count: 30,
            target_classes: vec![2, 5],
            target_count: 10,
            seed: 9,
        };
        let s = build_splits(&train, &spec, &test).unwrap();
        assert_eq!(s.source.len(), 30);
        assert_eq!(s.target.len(), 10);
        assert_eq!(s.test.len(), 16); // class 7 excluded
        let mut all = s.source_indices.clone();
        all.extend(&s.target_indices);
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n, "source and target share a pool index");
        // Remapped labels are contiguous from 0 by ascending original id.
        assert!(s.source.iter().all(|g| g.label < 3));
        assert!(s.target.iter().all(|g| g.label < 2));
        assert_eq!(s.target_class_map, vec![2, 5]);
        // Balanced counts per class.
        let twos = s.target.iter().filter(|g| g.label == 0).count();
        assert_eq!(twos, 5);
    }

    #[test]
    fn zero_target_count_is_valid() {
        let train = pool(&[(0, 4), (1, 4)]);
        let spec = SplitSpec {
            source_classes: vec![0, 1],
            source_count: 4,
            target_classes: vec![1],
            target_count: 0,
            seed: 1,
        };
        let s = build_splits(&train, &spec, &[]).unwrap();
        assert!(s.target.is_empty());
        assert!(s.test.is_empty());
    }

    #[test]
    fn same_seed_reproduces_index_sets() {
        let train = pool(&[(1, 40), (2, 40)]);
        let spec = SplitSpec {
            source_classes: vec![1, 2],
            source_count: 20,
            target_classes: vec![2],
            target_count: 5,
            seed: 77,
        };
        let a = build_splits(&train, &spec, &[]).unwrap();
        let b = build_splits(&train, &spec, &[]).unwrap();
        assert_eq!(a.source_indices, b.source_indices);
        assert_eq!(a.target_indices, b.target_indices);

        let other = SplitSpec { seed: 78, ..spec };
        let c = build_splits(&train, &other, &[]).unwrap();
        assert_ne!(a.source_indices, c.source_indices);
    }

    #[test]
    fn deficit_is_reported() {
        let train = pool(&[(1, 3)]);
        let spec = SplitSpec {
            source_classes: vec![1],
            source_count: 5,
            target_classes: vec![],
            target_count: 0,
            seed: 0,
        };
        let err = build_splits(&train, &spec, &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("deficit 2"), "got: {msg}");
    }

    #[test]
    fn stratified_split_is_seeded_and_balanced() {
        let items = pool(&[(0, 50), (1, 30)]);
        let (train, test) = stratified_split(&items, 0.2, 5).unwrap();
        assert_eq!(train.len() + test.len(), 80);
        assert_eq!(test.iter().filter(|g| g.label == 0).count(), 10);
        assert_eq!(test.iter().filter(|g| g.label == 1).count(), 6);
        let (train2, test2) = stratified_split(&items, 0.2, 5).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn pixel_range_is_enforced() {
        let err = LabeledGrid::new(1, 2, vec![0.5, 1.5], 0).unwrap_err();
        assert!(matches!(err, DataError::PixelRange { index: 1, .. }));
    }
}

//! Dense datasets and the loaders for the formats used in the experiments.

mod idx;
mod libsvm;
mod schema;

pub use idx::parse_idx;
pub use libsvm::parse_libsvm;
pub use schema::{parse_csv, CsvSchema, Feature, Filter, FilterOp};

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Row-norm statistics, computed once when the dataset is built.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub sum_norm: f64,
    pub sum_norm_sq: f64,
    pub min_norm: f64,
    pub max_norm: f64,
}

impl DatasetStats {
    fn compute(norms: &[f64]) -> Self {
        let mut s = DatasetStats { sum_norm: 0.0, sum_norm_sq: 0.0, min_norm: f64::INFINITY, max_norm: 0.0 };
        for &r in norms {
            s.sum_norm += r;
            s.sum_norm_sq += r * r;
            s.min_norm = s.min_norm.min(r);
            s.max_norm = s.max_norm.max(r);
        }
        if norms.is_empty() {
            s.min_norm = 0.0;
        }
        s
    }
}

/// Row-major feature matrix with labels and an optional binary group flag.
/// `groups[i] == true` marks membership in the protected group `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    groups: Option<Vec<bool>>,
    norms: Vec<f64>,
    stats: DatasetStats,
}

impl Dataset {
    pub fn new(d: usize, features: Vec<f64>, labels: Vec<f64>, groups: Option<Vec<bool>>) -> Result<Self> {
        let n = labels.len();
        if features.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: features.len() });
        }
        if let Some(g) = &groups {
            if g.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: g.len() });
            }
        }
        if !linalg::all_finite(&features) || !linalg::all_finite(&labels) {
            return Err(Error::NonFinite("dataset entries".into()));
        }
        let norms: Vec<f64> = if d == 0 {
            vec![0.0; n]
        } else {
            features.chunks(d).map(linalg::norm).collect()
        };
        let stats = DatasetStats::compute(&norms);
        Ok(Self { d, features, labels, groups, norms, stats })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn groups(&self) -> Option<&[bool]> {
        self.groups.as_deref()
    }

    #[inline]
    pub fn row_norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    pub fn mean_norm(&self) -> f64 {
        self.stats.sum_norm / self.len().max(1) as f64
    }

    pub fn mean_norm_sq(&self) -> f64 {
        self.stats.sum_norm_sq / self.len().max(1) as f64
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.d);
        let mut labels = Vec::with_capacity(idx.len());
        let mut norms = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            norms.push(self.norms[i]);
        }
        let groups = self.groups.as_ref().map(|g| idx.iter().map(|&i| g[i]).collect());
        let stats = DatasetStats::compute(&norms);
        Dataset { d: self.d, features, labels, groups, norms, stats }
    }

    /// Rows whose label equals `label`.
    pub fn with_label(&self, label: f64) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        self.subset(&idx)
    }

    /// Marks rows where feature `col` (0-based) is nonzero as group `p`.
    pub fn with_group_from_feature(mut self, col: usize) -> Result<Self> {
        if col >= self.d {
            return Err(Error::IndexOutOfRange { index: col, m: self.d });
        }
        self.groups = Some((0..self.len()).map(|i| self.row(i)[col] != 0.0).collect());
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Augment {
    /// +1 for group `p`, -1 for group `u`.
    GroupSign,
    /// +1 for every row.
    Ones,
}

/// Prepends one coordinate to every row.
pub fn augment_first_coordinate(ds: &Dataset, mode: Augment) -> Result<Dataset> {
    let groups = ds.groups();
    if mode == Augment::GroupSign && groups.is_none() {
        return Err(Error::param("group-sign augmentation needs group labels"));
    }
    let d = ds.dim() + 1;
    let mut features = Vec::with_capacity(ds.len() * d);
    for i in 0..ds.len() {
        let lead = match mode {
            Augment::Ones => 1.0,
            Augment::GroupSign => {
                if groups.unwrap()[i] {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        features.push(lead);
        features.extend_from_slice(ds.row(i));
    }
    Dataset::new(d, features, ds.labels.clone(), ds.groups.clone())
}

/// Training part and the two group parts of the held-out share.
#[derive(Clone, Debug)]
pub struct Split {
    pub main: Dataset,
    pub p: Dataset,
    pub u: Dataset,
}

/// Seeded 2:1 split. The larger share is the training set; the smaller one
/// is partitioned by group.
pub fn split_and_partition(ds: &Dataset, seed: u64) -> Result<Split> {
    let groups = ds.groups().ok_or_else(|| Error::param("split needs group labels"))?;
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, rng::STREAM_AUX);
    idx.shuffle(&mut r);
    let n_main = (2 * n).div_ceil(3);
    let (main_idx, rest) = idx.split_at(n_main);
    let mut p_idx: Vec<usize> = rest.iter().copied().filter(|&i| groups[i]).collect();
    let mut u_idx: Vec<usize> = rest.iter().copied().filter(|&i| !groups[i]).collect();
    p_idx.sort_unstable();
    u_idx.sort_unstable();
    let mut main_idx = main_idx.to_vec();
    main_idx.sort_unstable();
    if main_idx.is_empty() {
        return Err(Error::param("training share is empty"));
    }
    if p_idx.is_empty() {
        return Err(Error::param("protected group is empty in the held-out share"));
    }
    if u_idx.is_empty() {
        return Err(Error::param("unprotected group is empty in the held-out share"));
    }
    Ok(Split { main: ds.subset(&main_idx), p: ds.subset(&p_idx), u: ds.subset(&u_idx) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let features: Vec<f64> = (0..n).flat_map(|i| [i as f64, 1.0]).collect();
        let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let groups = (0..n).map(|i| i % 3 == 0).collect();
        Dataset::new(2, features, labels, Some(groups)).unwrap()
    }

    #[test]
    fn stats_are_cached() {
        let ds = Dataset::new(2, vec![3.0, 4.0, 0.0, 1.0], vec![1.0, -1.0], None).unwrap();
        assert_eq!(ds.stats().sum_norm, 6.0);
        assert_eq!(ds.stats().sum_norm_sq, 26.0);
        assert_eq!(ds.stats().min_norm, 1.0);
        assert_eq!(ds.stats().max_norm, 5.0);
    }

    #[test]
    fn split_of_nine_is_six_and_three() {
        let s = split_and_partition(&toy(9), 3).unwrap();
        assert_eq!(s.main.len(), 6);
        assert_eq!(s.p.len() + s.u.len(), 3);
        assert!(s.p.groups().unwrap().iter().all(|&g| g));
        assert!(s.u.groups().unwrap().iter().all(|&g| !g));
    }

    #[test]
    fn split_is_seeded() {
        let a = split_and_partition(&toy(30), 5).unwrap();
        let b = split_and_partition(&toy(30), 5).unwrap();
        assert_eq!(a.main, b.main);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn empty_protected_group_is_an_error() {
        let ds = Dataset::new(1, vec![1.0; 6], vec![1.0; 6], Some(vec![false; 6])).unwrap();
        assert!(split_and_partition(&ds, 0).is_err());
    }

    #[test]
    fn augmentation_prepends_group_sign() {
        let ds = Dataset::new(1, vec![5.0, 6.0], vec![1.0, -1.0], Some(vec![true, false])).unwrap();
        let a = augment_first_coordinate(&ds, Augment::GroupSign).unwrap();
        assert_eq!(a.row(0), &[1.0, 5.0]);
        assert_eq!(a.row(1), &[-1.0, 6.0]);
        let b = augment_first_coordinate(&ds, Augment::Ones).unwrap();
        assert_eq!(b.row(1), &[1.0, 6.0]);
    }
}

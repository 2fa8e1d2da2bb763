//! Embedded datasets and the row-level primitives shared by every other module.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four (label class, non-essential feature) categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryTag {
    pub essential_class: u8,
    pub nonessential_feature: u8,
}

impl CategoryTag {
    pub const ALL: [CategoryTag; 4] = [
        CategoryTag { essential_class: 0, nonessential_feature: 0 },
        CategoryTag { essential_class: 0, nonessential_feature: 1 },
        CategoryTag { essential_class: 1, nonessential_feature: 0 },
        CategoryTag { essential_class: 1, nonessential_feature: 1 },
    ];

    pub fn new(essential_class: u8, nonessential_feature: u8) -> Result<Self> {
        if essential_class > 1 || nonessential_feature > 1 {
            return Err(Error::InvalidArgument(format!("category tag components must be 0 or 1, got ({essential_class}, {nonessential_feature})")));
        }
        Ok(Self { essential_class, nonessential_feature })
    }

    /// Position in [`CategoryTag::ALL`].
    pub fn index(self) -> usize {
        (self.essential_class as usize) * 2 + self.nonessential_feature as usize
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }
}

impl std::fmt::Display for CategoryTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(class {}, feature {})", self.essential_class, self.nonessential_feature)
    }
}

/// `n` labelled points in a `d`-dimensional embedding space.
///
/// Immutable once built; every manipulation returns a new dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDataset {
    features: DMatrix<f64>,
    labels: Vec<u8>,
    tags: Option<Vec<CategoryTag>>,
}

impl EmbeddedDataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<u8>, tags: Option<Vec<CategoryTag>>) -> Result<Self> {
        let n = features.nrows();
        if features.ncols() == 0 {
            return Err(Error::InvalidDataset("embedding dimension must be at least 1".into()));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch { context: "labels vs feature rows", left: labels.len(), right: n });
        }
        if let Some(t) = &tags {
            if t.len() != n {
                return Err(Error::DimensionMismatch { context: "tags vs feature rows", left: t.len(), right: n });
            }
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(Error::InvalidDataset(format!("non-finite feature at row {}, column {}", pos % n, pos / n)));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidDataset(format!("label {} at row {i} is not in {{0,1}}", labels[i])));
        }
        Ok(Self { features, labels, tags })
    }

    /// Builds a dataset from row slices.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>, tags: Option<Vec<CategoryTag>>) -> Result<Self> {
        let d = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidDataset("cannot infer dimension from zero rows; use EmbeddedDataset::empty".into()))?;
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { context: "ragged rows", left: d, right: bad.len() });
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(features, labels, tags)
    }

    pub fn empty(d: usize) -> Self {
        assert!(d >= 1, "embedding dimension must be at least 1");
        Self { features: DMatrix::zeros(0, d), labels: Vec::new(), tags: None }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn tags(&self) -> Option<&[CategoryTag]> {
        self.tags.as_deref()
    }

    pub fn require_tags(&self) -> Result<&[CategoryTag]> {
        self.tags().ok_or(Error::MissingTags)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    /// Same rows with a replaced label vector.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        Self::new(self.features.clone(), labels, self.tags.clone())
    }

    /// Appends a constant-one column so a bias term lives inside the weight vector.
    pub fn with_bias_column(&self) -> Self {
        let n = self.len();
        let d = self.dim();
        let features = self.features.clone().insert_column(d, 1.0);
        debug_assert_eq!(features.nrows(), n);
        Self { features, labels: self.labels.clone(), tags: self.tags.clone() }
    }

    /// Rows of `self` followed by rows of `other`.
    ///
    /// Tags survive only when both sides carry them (an empty side is neutral).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { context: "concat embedding dimensions", left: self.dim(), right: other.dim() });
        }
        let (n1, n2, d) = (self.len(), other.len(), self.dim());
        let mut features = DMatrix::zeros(n1 + n2, d);
        features.rows_mut(0, n1).copy_from(&self.features);
        features.rows_mut(n1, n2).copy_from(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let tags = match (&self.tags, &other.tags) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, Some(b)) if n1 == 0 => Some(b.clone()),
            (Some(a), None) if n2 == 0 => Some(a.clone()),
            _ => None,
        };
        Ok(Self { features, labels, tags })
    }

    /// Rows at `keep`, in ascending original order.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        for &i in keep {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if seen[i] {
                return Err(Error::DuplicateIndex(i));
            }
            seen[i] = true;
        }
        let rows: Vec<usize> = (0..n).filter(|&i| seen[i]).collect();
        Ok(self.gather(&rows))
    }

    /// `counts[i]` consecutive copies of row `i`, rows in original order.
    pub fn replicate(&self, counts: &[usize]) -> Result<Self> {
        if counts.len() != self.len() {
            return Err(Error::DimensionMismatch { context: "replicate counts vs rows", left: counts.len(), right: self.len() });
        }
        let rows: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
        Ok(self.gather(&rows))
    }

    /// Rows in the given order, repetition allowed. Indices must be in range.
    pub(crate) fn gather(&self, rows: &[usize]) -> Self {
        let d = self.dim();
        let features = DMatrix::from_fn(rows.len(), d, |r, j| self.features[(rows[r], j)]);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        let tags = self.tags.as_ref().map(|t| rows.iter().map(|&i| t[i]).collect());
        Self { features, labels, tags }
    }

    /// Number of rows in each of the four categories, in [`CategoryTag::ALL`] order.
    pub fn category_counts(&self) -> Result<[usize; 4]> {
        let mut counts = [0usize; 4];
        for t in self.require_tags()? {
            counts[t.index()] += 1;
        }
        Ok(counts)
    }
}

/// A (training, test) dataset pair, with known mutual information when generated.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub d: EmbeddedDataset,
    pub t: EmbeddedDataset,
    /// Ground-truth I(D, T) in bits, when known.
    pub truth_bits: Option<f64>,
}

impl DatasetPair {
    pub fn new(d: EmbeddedDataset, t: EmbeddedDataset, truth_bits: Option<f64>) -> Result<Self> {
        if d.dim() != t.dim() {
            return Err(Error::DimensionMismatch { context: "pair embedding dimensions", left: d.dim(), right: t.dim() });
        }
        if let Some(b) = truth_bits {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("ground-truth MI must be finite and >= 0, got {b}")));
            }
        }
        Ok(Self { d, t, truth_bits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(rows: &[[f64; 3]], labels: &[u8]) -> EmbeddedDataset {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        EmbeddedDataset::from_rows(&rows, labels.to_vec(), None).unwrap()
    }

    fn sample() -> EmbeddedDataset {
        ds(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]], &[0, 1, 1])
    }

    #[test]
    fn rejects_bad_contents() {
        let f = DMatrix::from_element(2, 2, 0.0);
        assert!(EmbeddedDataset::new(f.clone(), vec![0, 2], None).is_err());
        assert!(EmbeddedDataset::new(f.clone(), vec![0], None).is_err());
        let mut g = f.clone();
        g[(1, 0)] = f64::NAN;
        let err = EmbeddedDataset::new(g, vec![0, 1], None).unwrap_err();
        assert!(err.to_string().contains("row 1, column 0"), "{err}");
        assert!(EmbeddedDataset::new(DMatrix::zeros(2, 0), vec![0, 1], None).is_err());
    }

    #[test]
    fn concat_identity_cases() {
        let x = sample();
        let e = EmbeddedDataset::empty(3);
        assert_eq!(e.concat(&x).unwrap(), x);
        assert_eq!(x.concat(&e).unwrap(), x);
    }

    #[test]
    fn concat_orders_rows() {
        let a = ds(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], &[0, 1]);
        let b = ds(&[[3.0, 0.0, 0.0]], &[1]);
        let c = a.concat(&b).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.row(0)[0], 1.0);
        assert_eq!(c.row(2)[0], 3.0);
        assert_eq!(c.labels(), &[0, 1, 1]);
    }

    #[test]
    fn concat_dimension_mismatch_names_both() {
        let a = EmbeddedDataset::empty(3);
        let b = EmbeddedDataset::empty(4);
        let msg = a.concat(&b).unwrap_err().to_string();
        assert!(msg.contains('3') && msg.contains('4'), "{msg}");
    }

    #[test]
    fn subset_cases() {
        let x = sample();
        assert_eq!(x.subset(&[0, 1, 2]).unwrap(), x);
        let none = x.subset(&[]).unwrap();
        assert_eq!((none.len(), none.dim()), (0, 3));
        let s = x.subset(&[2, 0]).unwrap();
        assert_eq!(s.row(0), x.row(0));
        assert_eq!(s.row(1), x.row(2));
        assert_eq!(x.subset(&[3]).unwrap_err(), Error::IndexOutOfRange { index: 3, len: 3 });
        assert_eq!(x.subset(&[1, 1]).unwrap_err(), Error::DuplicateIndex(1));
    }

    #[test]
    fn replicate_cases() {
        let x = sample();
        assert_eq!(x.replicate(&[1, 1, 1]).unwrap(), x);
        assert!(x.replicate(&[0, 0, 0]).unwrap().is_empty());
        let two = ds(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], &[0, 1]);
        let r = two.replicate(&[2, 0]).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.row(0), two.row(0));
        assert_eq!(r.row(1), two.row(0));
        assert!(x.replicate(&[1, 1]).is_err());
    }

    #[test]
    fn tags_carried_and_counted() {
        let tags = vec![CategoryTag::ALL[0], CategoryTag::ALL[3], CategoryTag::ALL[3]];
        let x = EmbeddedDataset::new(sample().features().clone(), vec![0, 1, 1], Some(tags)).unwrap();
        assert_eq!(x.category_counts().unwrap(), [1, 0, 0, 2]);
        assert_eq!(x.subset(&[0]).unwrap().category_counts().unwrap(), [1, 0, 0, 0]);
        assert_eq!(sample().category_counts().unwrap_err(), Error::MissingTags);
        // mixed tagging drops tags
        assert!(x.concat(&sample()).unwrap().tags().is_none());
    }

    #[test]
    fn bias_column_appends_ones() {
        let b = sample().with_bias_column();
        assert_eq!(b.dim(), 4);
        assert!(b.features().column(3).iter().all(|&v| v == 1.0));
    }

    fn arb_dataset(d: usize) -> impl Strategy<Value = EmbeddedDataset> {
        prop::collection::vec((prop::collection::vec(-5.0f64..5.0, d), 0u8..2), 0..6).prop_map(move |rows| {
            let feats: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let labels = rows.iter().map(|r| r.1).collect();
            if feats.is_empty() {
                EmbeddedDataset::empty(d)
            } else {
                EmbeddedDataset::from_rows(&feats, labels, None).unwrap()
            }
        })
    }

    proptest! {
        #[test]
        fn concat_is_associative(a in arb_dataset(2), b in arb_dataset(2), c in arb_dataset(2)) {
            let left = a.concat(&b).unwrap().concat(&c).unwrap();
            let right = a.concat(&b.concat(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn concat_labels_concatenate(a in arb_dataset(2), b in arb_dataset(2)) {
            let c = a.concat(&b).unwrap();
            let expected: Vec<u8> = a.labels().iter().chain(b.labels()).copied().collect();
            prop_assert_eq!(c.labels(), &expected[..]);
        }

        #[test]
        fn subset_of_concat_splits_by_block(a in arb_dataset(2), b in arb_dataset(2), mask in prop::collection::vec(any::<bool>(), 12)) {
            let c = a.concat(&b).unwrap();
            let keep_a: Vec<usize> = (0..a.len()).filter(|&i| mask[i]).collect();
            let keep_b: Vec<usize> = (0..b.len()).filter(|&i| mask[6 + i]).collect();
            let keep_c: Vec<usize> = keep_a.iter().copied().chain(keep_b.iter().map(|&i| a.len() + i)).collect();
            let lhs = c.subset(&keep_c).unwrap();
            let rhs = a.subset(&keep_a).unwrap().concat(&b.subset(&keep_b).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn replicate_then_identity(a in arb_dataset(2), counts in prop::collection::vec(0usize..4, 6)) {
            let counts = &counts[..a.len()];
            let r = a.replicate(counts).unwrap();
            prop_assert_eq!(r.len(), counts.iter().sum::<usize>());
            let ones = vec![1; r.len()];
            prop_assert_eq!(r.replicate(&ones).unwrap(), r);
        }
    }
}

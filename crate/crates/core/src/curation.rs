//! Curation methods applied to a tagged training set.
//!
//! `Denoise` removes rows whose labels were flipped by [`flip_labels`]. The two
//! ratio-matching methods look only at category tags of the training and test
//! sets and resample rows of the training set; they never touch features or
//! labels.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryTag, EmbeddedDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurationMethod {
    Identity,
    /// Drop rows whose labels were flipped.
    Denoise,
    /// Flip the recorded labels back instead of dropping rows.
    DenoiseRestore,
    DuplicateToMatch,
    RemoveToMatch,
}

impl CurationMethod {
    pub const ALL: [CurationMethod; 5] = [
        CurationMethod::Identity,
        CurationMethod::Denoise,
        CurationMethod::DenoiseRestore,
        CurationMethod::DuplicateToMatch,
        CurationMethod::RemoveToMatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CurationMethod::Identity => "identity",
            CurationMethod::Denoise => "denoise",
            CurationMethod::DenoiseRestore => "denoise-restore",
            CurationMethod::DuplicateToMatch => "duplicate-to-match",
            CurationMethod::RemoveToMatch => "remove-to-match",
        }
    }

    pub fn requires_tags(self) -> bool {
        matches!(self, CurationMethod::DuplicateToMatch | CurationMethod::RemoveToMatch)
    }

    pub fn requires_flip_record(self) -> bool {
        matches!(self, CurationMethod::Denoise | CurationMethod::DenoiseRestore)
    }
}

impl std::fmt::Display for CurationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CurationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown curation method '{s}' (expected one of identity, denoise, denoise-restore, duplicate-to-match, remove-to-match)"
            ))
        })
    }
}

/// Row indices whose labels were inverted, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub flipped_indices: Vec<usize>,
}

/// Inverts `round(fraction * n)` uniformly chosen labels.
pub fn flip_labels<R: Rng + ?Sized>(x: &EmbeddedDataset, fraction: f64, rng: &mut R) -> Result<(EmbeddedDataset, FlipRecord)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("flip fraction must lie in [0, 1], got {fraction}")));
    }
    let n = x.len();
    let count = ((fraction * n as f64).round() as usize).min(n);
    let mut idx = sample_indices(rng, n, count).into_vec();
    idx.sort_unstable();
    let record = FlipRecord { flipped_indices: idx };
    Ok((flip_at(x, &record)?, record))
}

fn flip_at(x: &EmbeddedDataset, record: &FlipRecord) -> Result<EmbeddedDataset> {
    let mut labels = x.labels().to_vec();
    for &i in &record.flipped_indices {
        let y = labels.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, len: x.len() })?;
        *y ^= 1;
    }
    x.with_labels(labels)
}

/// Removes the recorded rows.
pub fn denoise(x: &EmbeddedDataset, record: &FlipRecord) -> Result<EmbeddedDataset> {
    let mut drop = vec![false; x.len()];
    for &i in &record.flipped_indices {
        *drop.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, len: x.len() })? = true;
    }
    let keep: Vec<usize> = (0..x.len()).filter(|&i| !drop[i]).collect();
    x.subset(&keep)
}

/// Flips the recorded labels back.
pub fn denoise_restore(x: &EmbeddedDataset, record: &FlipRecord) -> Result<EmbeddedDataset> {
    flip_at(x, record)
}

/// Largest-remainder apportionment of `total` seats by weights `weights / sum`.
/// Ties go to the lower category index.
pub fn apportion(total: usize, weights: [usize; 4]) -> [usize; 4] {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return [0; 4];
    }
    let mut seats = [0usize; 4];
    let mut rem = [0usize; 4];
    for k in 0..4 {
        let q = total * weights[k];
        seats[k] = q / sum;
        rem[k] = q % sum;
    }
    let mut left = total - seats.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
    for k in order {
        if left == 0 {
            break;
        }
        if rem[k] > 0 {
            seats[k] += 1;
            left -= 1;
        }
    }
    seats
}

fn category_rows(x: &EmbeddedDataset) -> Result<[Vec<usize>; 4]> {
    let tags = x.require_tags()?;
    let mut rows: [Vec<usize>; 4] = Default::default();
    for (i, t) in tags.iter().enumerate() {
        rows[t.index()].push(i);
    }
    Ok(rows)
}

fn check_coverage(have: &[usize; 4], want: &[usize; 4]) -> Result<()> {
    if let Some(k) = (0..4).find(|&k| want[k] > 0 && have[k] == 0) {
        return Err(Error::MissingCategory(CategoryTag::from_index(k).to_string()));
    }
    Ok(())
}

/// Category counts after duplication: the smallest total whose apportionment
/// by the test proportions keeps every training row.
pub fn duplicate_targets(train: [usize; 4], test: [usize; 4]) -> Result<[usize; 4]> {
    check_coverage(&train, &test)?;
    if let Some(k) = (0..4).find(|&k| train[k] > 0 && test[k] == 0) {
        return Err(Error::InvalidArgument(format!(
            "category {} is absent from the test set; duplication alone cannot match its proportion",
            CategoryTag::from_index(k)
        )));
    }
    let m: usize = test.iter().sum();
    if m == 0 {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let total = (0..4).filter(|&k| test[k] > 0).map(|k| (train[k] * m).div_ceil(test[k])).max().unwrap_or(0);
    let targets = apportion(total, test);
    debug_assert!((0..4).all(|k| targets[k] >= train[k]));
    Ok(targets)
}

/// Category counts after removal: the largest total whose apportionment by the
/// test proportions fits inside the training set.
pub fn remove_targets(train: [usize; 4], test: [usize; 4]) -> Result<[usize; 4]> {
    check_coverage(&train, &test)?;
    let m: usize = test.iter().sum();
    if m == 0 {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let total = (0..4).filter(|&k| test[k] > 0).map(|k| train[k] * m / test[k]).min().unwrap_or(0);
    let targets = apportion(total, test);
    debug_assert!((0..4).all(|k| targets[k] <= train[k]));
    Ok(targets)
}

/// Duplicates training rows until the category proportions match the test set.
pub fn match_ratio_duplicate<R: Rng + ?Sized>(d: &EmbeddedDataset, t: &EmbeddedDataset, rng: &mut R) -> Result<EmbeddedDataset> {
    let rows = category_rows(d)?;
    let targets = duplicate_targets(d.category_counts()?, t.category_counts()?)?;
    let mut counts = vec![1usize; d.len()];
    for k in 0..4 {
        let members = &rows[k];
        if members.is_empty() {
            continue;
        }
        let extra = targets[k] - members.len();
        let full = extra / members.len();
        let partial = extra % members.len();
        for &i in members {
            counts[i] += full;
        }
        for j in sample_indices(rng, members.len(), partial) {
            counts[members[j]] += 1;
        }
    }
    d.replicate(&counts)
}

/// Removes training rows until the category proportions match the test set.
pub fn match_ratio_remove<R: Rng + ?Sized>(d: &EmbeddedDataset, t: &EmbeddedDataset, rng: &mut R) -> Result<EmbeddedDataset> {
    let rows = category_rows(d)?;
    let targets = remove_targets(d.category_counts()?, t.category_counts()?)?;
    let mut keep = Vec::with_capacity(targets.iter().sum());
    for k in 0..4 {
        let members = &rows[k];
        if targets[k] == members.len() {
            keep.extend_from_slice(members);
        } else {
            keep.extend(sample_indices(rng, members.len(), targets[k]).into_iter().map(|j| members[j]));
        }
    }
    d.subset(&keep)
}

/// Applies `method` to the training set `d` of a pair.
pub fn apply<R: Rng + ?Sized>(
    method: CurationMethod,
    d: &EmbeddedDataset,
    t: &EmbeddedDataset,
    flips: Option<&FlipRecord>,
    rng: &mut R,
) -> Result<EmbeddedDataset> {
    let record = || flips.ok_or_else(|| Error::InvalidArgument(format!("method {method} needs a flip record")));
    match method {
        CurationMethod::Identity => Ok(d.clone()),
        CurationMethod::Denoise => denoise(d, record()?),
        CurationMethod::DenoiseRestore => denoise_restore(d, record()?),
        CurationMethod::DuplicateToMatch => match_ratio_duplicate(d, t, rng),
        CurationMethod::RemoveToMatch => match_ratio_remove(d, t, rng),
    }
}

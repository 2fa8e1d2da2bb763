//! Dataset pairs with known mutual information.
//!
//! The label proportions `(r_D, r_T)` are drawn from a 2x2 table
//!
//! ```text
//!              r_D = a_D   r_D = b_D
//! r_T = a_T      rho        1/2 - rho
//! r_T = b_T    1/2 - rho      rho
//! ```
//!
//! whose mutual information is set by `rho`. Each dataset's label vector gets its
//! last bit overwritten so the XOR of all labels reveals which proportion was
//! drawn; the dataset then determines its proportion, and `I(D, T)` equals the
//! table's mutual information.

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryTag, DatasetPair, EmbeddedDataset};
use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};

const RHO_MIN: f64 = 0.25;
const RHO_MAX: f64 = 0.5;

/// Mutual information (bits) of the 2x2 table with diagonal mass `rho` per cell.
pub fn table_mi(rho: f64) -> Result<f64> {
    if !(RHO_MIN..=RHO_MAX).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0.25, 0.5], got {rho}")));
    }
    let xlog2 = |p: f64, q: f64| if p == 0.0 { 0.0 } else { p * q.log2() };
    Ok(xlog2(2.0 * rho, 4.0 * rho) + xlog2(1.0 - 2.0 * rho, 2.0 * (1.0 - 2.0 * rho)))
}

/// Bisection for the `rho` with `table_mi(rho) = target_bits`.
pub fn solve_rho(target_bits: f64, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !(0.0..=1.0).contains(&target_bits) {
        return Err(Error::InvalidArgument(format!("target MI must lie in [0, 1] bits, got {target_bits}")));
    }
    if target_bits == 0.0 {
        return Ok(RHO_MIN);
    }
    if target_bits == 1.0 {
        return Ok(RHO_MAX);
    }
    let (mut lo, mut hi) = (RHO_MIN, RHO_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = table_mi(mid)?;
        if (v - target_bits).abs() <= tol {
            return Ok(mid);
        }
        if v < target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The joint distribution of `(r_D, r_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub a_d: f64,
    pub b_d: f64,
    pub a_t: f64,
    pub b_t: f64,
    pub rho: f64,
}

const LOW_GRID: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
const HIGH_GRID: [f64; 4] = [0.6, 0.7, 0.8, 0.9];

impl JointTable {
    pub fn new(a_d: f64, b_d: f64, a_t: f64, b_t: f64, rho: f64) -> Result<Self> {
        for (name, v) in [("a_d", a_d), ("a_t", a_t)] {
            if !(v > 0.0 && v < 0.5) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 0.5), got {v}")));
            }
        }
        for (name, v) in [("b_d", b_d), ("b_t", b_t)] {
            if !(v > 0.5 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0.5, 1), got {v}")));
            }
        }
        table_mi(rho)?;
        Ok(Self { a_d, b_d, a_t, b_t, rho })
    }

    /// Draws `a_*` from {0.1,..,0.4} and `b_*` from {0.6,..,0.9} independently.
    pub fn draw<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> Result<Self> {
        let a_d = *LOW_GRID.choose(rng).expect("non-empty");
        let a_t = *LOW_GRID.choose(rng).expect("non-empty");
        let b_d = *HIGH_GRID.choose(rng).expect("non-empty");
        let b_t = *HIGH_GRID.choose(rng).expect("non-empty");
        Self::new(a_d, b_d, a_t, b_t, rho)
    }

    /// Cell probabilities `[(a_D,a_T), (b_D,a_T), (a_D,b_T), (b_D,b_T)]`.
    pub fn cells(&self) -> [f64; 4] {
        [self.rho, 0.5 - self.rho, 0.5 - self.rho, self.rho]
    }

    /// One `(r_D, r_T)` draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = rng.random();
        let cells = self.cells();
        if u < cells[0] {
            (self.a_d, self.a_t)
        } else if u < cells[0] + cells[1] {
            (self.b_d, self.a_t)
        } else if u < cells[0] + cells[1] + cells[2] {
            (self.a_d, self.b_t)
        } else {
            (self.b_d, self.b_t)
        }
    }
}

/// When the table's `(a, b)` proportions are drawn.
///
/// `PerLevel` draws one grid for the whole level. `PerPair` draws a fresh grid for
/// every pair from the `benchmark/grid` stream; the true mutual information is
/// unchanged because the parity bit only reveals which side of 1/2 was drawn,
/// but pair-to-pair variation in the proportions no longer differs between levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridDraw {
    #[default]
    PerLevel,
    PerPair,
}

/// One benchmark level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub target_bits: f64,
    pub table: JointTable,
    pub k: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub seed: u64,
    #[serde(default)]
    pub grid: GridDraw,
}

pub const RHO_TOL: f64 = 1e-12;

impl BenchmarkSpec {
    /// Solves `rho` for `target_bits` and draws the table grid from the `benchmark/table` stream.
    pub fn new(target_bits: f64, k: usize, size_min: usize, size_max: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("pair count k must be at least 1".into()));
        }
        if size_min < 2 || size_max < size_min {
            return Err(Error::InvalidArgument(format!("dataset sizes need 2 <= size_min <= size_max, got {size_min}..{size_max}")));
        }
        let rho = solve_rho(target_bits, RHO_TOL)?;
        let table = JointTable::draw(rho, &mut substream(seed, "benchmark/table", 0))?;
        Ok(Self { target_bits, table, k, size_min, size_max, seed, grid: GridDraw::PerLevel })
    }

    pub fn with_grid(mut self, grid: GridDraw) -> Self {
        self.grid = grid;
        self
    }

    /// The table used for pair `pair_index`.
    pub fn table_for(&self, pair_index: u64) -> JointTable {
        match self.grid {
            GridDraw::PerLevel => self.table,
            GridDraw::PerPair => JointTable::draw(self.table.rho, &mut substream(self.seed, "benchmark/grid", pair_index)).expect("validated rho"),
        }
    }

    pub fn truth_bits(&self) -> f64 {
        table_mi(self.table.rho).expect("validated rho")
    }

    /// Everything needed to regenerate the level's pairs. Grid values are omitted
    /// under [`GridDraw::PerPair`], where each pair draws its own.
    pub fn manifest(&self) -> BenchmarkManifest {
        let grid = (self.grid == GridDraw::PerLevel).then_some(self.table);
        BenchmarkManifest {
            target_bits: self.target_bits,
            rho: self.table.rho,
            a_d: grid.map(|t| t.a_d),
            b_d: grid.map(|t| t.b_d),
            a_t: grid.map(|t| t.a_t),
            b_t: grid.map(|t| t.b_t),
            k: self.k,
            size_min: self.size_min,
            size_max: self.size_max,
            seed: self.seed,
            grid: self.grid,
        }
    }
}

/// Serialized form of a [`BenchmarkSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub target_bits: f64,
    pub rho: f64,
    pub a_d: Option<f64>,
    pub b_d: Option<f64>,
    pub a_t: Option<f64>,
    pub b_t: Option<f64>,
    pub k: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub seed: u64,
    pub grid: GridDraw,
}

/// Labels with `P(label = 0) = r` on the first `n - 1` slots; the last slot makes
/// the XOR of all labels equal `1(r < 0.5)`.
pub fn sample_label_vector<R: Rng + ?Sized>(r: f64, n: usize, rng: &mut R) -> Result<Vec<u8>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("label vector needs n >= 2 for the parity slot, got {n}")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("label proportion must lie in (0, 1), got {r}")));
    }
    let mut labels: Vec<u8> = (0..n - 1).map(|_| (rng.random::<f64>() >= r) as u8).collect();
    let parity = labels.iter().fold(0u8, |acc, &b| acc ^ b) ^ (r < 0.5) as u8;
    labels.push(parity);
    Ok(labels)
}

/// Per-class pools of embedded points.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPool {
    classes: [DMatrix<f64>; 2],
}

impl CorpusPool {
    pub fn new(class0: DMatrix<f64>, class1: DMatrix<f64>) -> Result<Self> {
        if class0.nrows() == 0 || class1.nrows() == 0 {
            return Err(Error::InvalidArgument("both corpus classes must be non-empty".into()));
        }
        if class0.ncols() != class1.ncols() {
            return Err(Error::DimensionMismatch { context: "corpus class dimensions", left: class0.ncols(), right: class1.ncols() });
        }
        Ok(Self { classes: [class0, class1] })
    }

    /// Splits a labelled dataset into class pools.
    pub fn from_dataset(x: &EmbeddedDataset) -> Result<Self> {
        let pick = |c: u8| {
            let idx: Vec<usize> = (0..x.len()).filter(|&i| x.labels()[i] == c).collect();
            DMatrix::from_fn(idx.len(), x.dim(), |r, j| x.features()[(idx[r], j)])
        };
        Self::new(pick(0), pick(1))
    }

    pub fn dim(&self) -> usize {
        self.classes[0].ncols()
    }

    pub fn class(&self, c: u8) -> &DMatrix<f64> {
        &self.classes[c as usize]
    }

    /// Materialises labels with pool points drawn uniformly with replacement.
    pub fn materialize<R: Rng + ?Sized>(&self, labels: Vec<u8>, rng: &mut R) -> Result<EmbeddedDataset> {
        let d = self.dim();
        let mut features = DMatrix::zeros(labels.len(), d);
        for (i, &y) in labels.iter().enumerate() {
            let pool = &self.classes[y as usize];
            let r = rng.random_range(0..pool.nrows());
            features.row_mut(i).copy_from(&pool.row(r));
        }
        EmbeddedDataset::new(features, labels, None)
    }
}

/// Pair `pair_index` of a benchmark level; a pure function of `(spec, pool, pair_index)`.
pub fn generate_pair(spec: &BenchmarkSpec, pool: &CorpusPool, pair_index: u64) -> Result<DatasetPair> {
    let mut rng = substream(spec.seed, "benchmark/pair", pair_index);
    let (r_d, r_t) = spec.table_for(pair_index).sample(&mut rng);
    let n_d = rng.random_range(spec.size_min..=spec.size_max);
    let n_t = rng.random_range(spec.size_min..=spec.size_max);
    let labels_d = sample_label_vector(r_d, n_d, &mut rng)?;
    let labels_t = sample_label_vector(r_t, n_t, &mut rng)?;
    let d = pool.materialize(labels_d, &mut rng)?;
    let t = pool.materialize(labels_t, &mut rng)?;
    DatasetPair::new(d, t, Some(spec.truth_bits()))
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn gaussian_cloud<R: Rng + ?Sized>(count: usize, center: &DVector<f64>, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(count, center.len(), |_, j| center[j] + rng.sample::<f64, _>(StandardNormal))
}

/// Synthetic two-class corpus: class `c` ~ `N((2c - 1) (separation / 2) u, I)`.
pub fn synth_corpus<R: Rng + ?Sized>(d: usize, per_class: usize, separation: f64, rng: &mut R) -> Result<CorpusPool> {
    if d == 0 || per_class == 0 || separation.is_nan() || separation < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "synth_corpus needs d >= 1, per_class >= 1, separation >= 0 (got {d}, {per_class}, {separation})"
        )));
    }
    let u = random_unit(d, rng);
    let c0 = gaussian_cloud(per_class, &(&u * (-separation / 2.0)), rng);
    let c1 = gaussian_cloud(per_class, &(&u * (separation / 2.0)), rng);
    CorpusPool::new(c0, c1)
}

/// Four-category pools for curation experiments, indexed like [`CategoryTag::ALL`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedPool {
    categories: [DMatrix<f64>; 4],
}

impl TaggedPool {
    pub fn from_dataset(x: &EmbeddedDataset) -> Result<Self> {
        let tags = x.require_tags()?;
        let categories = std::array::from_fn(|k| {
            let idx: Vec<usize> = (0..x.len()).filter(|&i| tags[i].index() == k).collect();
            DMatrix::from_fn(idx.len(), x.dim(), |r, j| x.features()[(idx[r], j)])
        });
        let pool = Self { categories };
        if let Some(k) = (0..4).find(|&k| pool.categories[k].nrows() == 0) {
            return Err(Error::MissingCategory(CategoryTag::from_index(k).to_string()));
        }
        Ok(pool)
    }

    pub fn dim(&self) -> usize {
        self.categories[0].ncols()
    }

    /// `counts[k]` points of category `k`, drawn with replacement, in category order.
    pub fn sample<R: Rng + ?Sized>(&self, counts: [usize; 4], rng: &mut R) -> Result<EmbeddedDataset> {
        let n: usize = counts.iter().sum();
        let mut features = DMatrix::zeros(n, self.dim());
        let mut labels = Vec::with_capacity(n);
        let mut tags = Vec::with_capacity(n);
        let mut row = 0;
        for (k, &count) in counts.iter().enumerate() {
            let pool = &self.categories[k];
            let tag = CategoryTag::from_index(k);
            for _ in 0..count {
                let r = rng.random_range(0..pool.nrows());
                features.row_mut(row).copy_from(&pool.row(r));
                labels.push(tag.essential_class);
                tags.push(tag);
                row += 1;
            }
        }
        EmbeddedDataset::new(features, labels, Some(tags))
    }
}

/// Synthetic four-category corpus.
///
/// The label direction `u` carries `essential_separation`; an orthogonal
/// direction `v` carries the non-essential feature with `nonessential_separation`.
/// Category `(y, z)` is centred at `(2y - 1) s_e / 2 u + (2z - 1) s_n / 2 v`.
pub fn synth_tagged_corpus<R: Rng + ?Sized>(
    d: usize,
    per_category: usize,
    essential_separation: f64,
    nonessential_separation: f64,
    rng: &mut R,
) -> Result<TaggedPool> {
    if d < 2 || per_category == 0 {
        return Err(Error::InvalidArgument(format!("synth_tagged_corpus needs d >= 2 and per_category >= 1 (got {d}, {per_category})")));
    }
    let u = random_unit(d, rng);
    let mut v = random_unit(d, rng);
    v -= &u * u.dot(&v);
    let v = v.normalize();
    let categories = std::array::from_fn(|k| {
        let tag = CategoryTag::from_index(k);
        let sy = 2.0 * tag.essential_class as f64 - 1.0;
        let sz = 2.0 * tag.nonessential_feature as f64 - 1.0;
        let center = &u * (sy * essential_separation / 2.0) + &v * (sz * nonessential_separation / 2.0);
        gaussian_cloud(per_category, &center, rng)
    });
    Ok(TaggedPool { categories })
}

/// Helper for callers that only hold a master seed.
pub fn corpus_rng(seed: u64) -> StreamRng {
    substream(seed, "corpus", 0)
}

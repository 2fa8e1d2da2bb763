//! Experiment orchestration: the scoring algorithm over pair collections,
//! curation scoring, rank evaluation and convergence studies.
//!
//! Per-pair work runs in parallel when the `parallel` feature is on. Every
//! pair draws from its own named substream and results are reduced in pair
//! order, so reports do not depend on the worker count.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::benchmark::{generate_pair, BenchmarkSpec, CorpusPool, GridDraw, TaggedPool};
use crate::conjugate::ConjugateModel;
use crate::curation::{self, flip_labels, CurationMethod, FlipRecord};
use crate::dataset::{DatasetPair, EmbeddedDataset};
use crate::error::{Error, Result};
use crate::gaussian::GaussianDist;
use crate::laplace::{laplace_fit, sigmoid, FitSettings, PriorSpec};
use crate::pmi::{pmi_at_eta, pmi_gaussian, pmi_monte_carlo_with, PmiPath};
use crate::rng::{child_seed, substream};

/// Logistic model configuration shared by every fit in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Prior variance `C` of `N(0, C I)`.
    pub prior_c: f64,
    /// Append a constant-one feature before fitting.
    pub append_bias: bool,
    #[serde(default)]
    pub fit: FitSettings,
}

impl ModelSpec {
    pub fn new(prior_c: f64, append_bias: bool) -> Self {
        Self { prior_c, append_bias, fit: FitSettings::default() }
    }

    pub fn prepare(&self, x: &EmbeddedDataset) -> EmbeddedDataset {
        if self.append_bias {
            x.with_bias_column()
        } else {
            x.clone()
        }
    }

    /// Prior over weights for raw feature dimension `data_dim`.
    pub fn prior(&self, data_dim: usize) -> Result<PriorSpec> {
        PriorSpec::new(self.prior_c, data_dim + self.append_bias as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        PriorSpec::new(self.prior_c, 1).map(|_| ())
    }

    /// Laplace posterior for `x` under this model.
    pub fn fit(&self, x: &EmbeddedDataset) -> Result<GaussianDist> {
        laplace_fit(&self.prepare(x), &self.prior(x.dim())?, &self.fit)
    }
}

/// PMI route and its tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmiOptions {
    pub path: PmiPath,
    /// Draws per expectation on the Monte-Carlo route.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Extra evaluation points on the eta route, drawn from the union posterior;
    /// their spread is reported as a diagnostic.
    #[serde(default = "default_eta_probes")]
    pub eta_probes: usize,
}

fn default_mc_samples() -> usize {
    4000
}

fn default_eta_probes() -> usize {
    4
}

impl Default for PmiOptions {
    fn default() -> Self {
        Self { path: PmiPath::GaussianClosedForm, mc_samples: default_mc_samples(), eta_probes: default_eta_probes() }
    }
}

impl PmiOptions {
    pub fn with_path(path: PmiPath) -> Self {
        Self { path, ..Self::default() }
    }
}

/// What to do when one pair fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorPolicy {
    #[default]
    FailFast,
    SkipAndCount,
}

/// A pair plus the noise record that `denoise` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub pair: DatasetPair,
    pub flips: Option<FlipRecord>,
}

impl From<DatasetPair> for EvalPair {
    fn from(pair: DatasetPair) -> Self {
        Self { pair, flips: None }
    }
}

/// Mean PMI over a pair collection, in nats and bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub mean_nats: f64,
    pub mean_bits: f64,
    /// Sample standard deviation of the per-pair values (nats).
    pub std: f64,
    pub k: usize,
    pub skipped: usize,
    pub path: PmiPath,
    /// Fits whose precision needed a diagonal jitter.
    pub jittered_fits: usize,
    /// Largest per-pair spread of the eta route across its probe points.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_spread_max: Option<f64>,
    #[serde(skip)]
    pub per_pair: Vec<f64>,
}

impl MiEstimate {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.k as f64).sqrt()
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 { 0.0 } else { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
        Self { mean, std }
    }
}

pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct PairScore {
    pmi: f64,
    eta_spread: Option<f64>,
    jittered: usize,
}

fn score_fitted(
    d_hat: &EmbeddedDataset,
    t: &EmbeddedDataset,
    post_d: &GaussianDist,
    post_t: &GaussianDist,
    model: &ModelSpec,
    opts: &PmiOptions,
    pair_seed: (u64, u64),
) -> Result<PairScore> {
    let prior = model.prior(t.dim())?.to_gaussian();
    let mut jittered = post_d.jittered() as usize + post_t.jittered() as usize;
    match opts.path {
        PmiPath::GaussianClosedForm => Ok(PairScore { pmi: pmi_gaussian(post_d, post_t, &prior)?.value, eta_spread: None, jittered }),
        PmiPath::EtaPoint => {
            let union = model.fit(&d_hat.concat(t)?)?;
            jittered += union.jittered() as usize;
            let value = pmi_at_eta(post_d, post_t, &union, &prior, union.mean())?.value;
            let mut lo = value;
            let mut hi = value;
            if opts.eta_probes > 0 {
                let probes = union.sample(&mut substream(pair_seed.0, "eta", pair_seed.1), opts.eta_probes);
                for r in 0..probes.nrows() {
                    let eta: DVector<f64> = probes.row(r).transpose();
                    let v = pmi_at_eta(post_d, post_t, &union, &prior, &eta)?.value;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            Ok(PairScore { pmi: value, eta_spread: Some(hi - lo), jittered })
        }
        PmiPath::MonteCarlo => {
            if t.is_empty() {
                return Ok(PairScore { pmi: 0.0, eta_spread: None, jittered });
            }
            let t_prep = model.prepare(t);
            let mut rng = substream(pair_seed.0, "mc", pair_seed.1);
            let pmi = pmi_monte_carlo_with(post_d, &prior, opts.mc_samples, &mut rng, |w| crate::laplace::log_likelihood(&t_prep, w))?;
            Ok(PairScore { pmi, eta_spread: None, jittered })
        }
    }
}

fn curate(method: CurationMethod, pair: &EvalPair, seed: u64, index: usize) -> Result<EmbeddedDataset> {
    let mut rng = substream(seed, "curation/method", index as u64);
    curation::apply(method, &pair.pair.d, &pair.pair.t, pair.flips.as_ref(), &mut rng)
}

fn check_uniform(pairs: &[EvalPair]) -> Result<usize> {
    let first = pairs.first().ok_or_else(|| Error::InvalidArgument("at least one pair is required".into()))?;
    let d = first.pair.d.dim();
    for (i, p) in pairs.iter().enumerate() {
        if p.pair.d.dim() != d {
            return Err(Error::Pair {
                index: i,
                source: Box::new(Error::DimensionMismatch { context: "pair dimensions", left: d, right: p.pair.d.dim() }),
            });
        }
    }
    Ok(d)
}

fn collect_policy<T>(results: Vec<Result<T>>, policy: ErrorPolicy) -> Result<(Vec<T>, usize)> {
    let mut ok = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) if policy == ErrorPolicy::FailFast => return Err(Error::Pair { index, source: Box::new(e) }),
            Err(_) => skipped += 1,
        }
    }
    if ok.is_empty() {
        return Err(Error::InvalidArgument(format!("all {skipped} pairs failed")));
    }
    Ok((ok, skipped))
}

/// Applies `method` to every training set, fits both posteriors, and averages PMI.
pub fn run_alg1(
    pairs: &[EvalPair],
    method: CurationMethod,
    model: &ModelSpec,
    opts: &PmiOptions,
    policy: ErrorPolicy,
    seed: u64,
) -> Result<MiEstimate> {
    check_uniform(pairs)?;
    model.validate()?;
    let results = map_indexed(pairs.len(), |i| -> Result<PairScore> {
        let p = &pairs[i];
        let d_hat = curate(method, p, seed, i)?;
        let post_d = model.fit(&d_hat)?;
        let post_t = model.fit(&p.pair.t)?;
        score_fitted(&d_hat, &p.pair.t, &post_d, &post_t, model, opts, (seed, i as u64))
    });
    let (scores, skipped) = collect_policy(results, policy)?;
    let per_pair: Vec<f64> = scores.iter().map(|s| s.pmi).collect();
    let stats = MeanStd::of(&per_pair);
    let eta_spread_max = scores.iter().filter_map(|s| s.eta_spread).reduce(f64::max);
    Ok(MiEstimate {
        mean_nats: stats.mean,
        mean_bits: stats.mean / std::f64::consts::LN_2,
        std: stats.std,
        k: per_pair.len(),
        skipped,
        path: opts.path,
        jittered_fits: scores.iter().map(|s| s.jittered).sum(),
        eta_spread_max,
        per_pair,
    })
}

/// Fraction of `t` classified correctly by thresholding `sigmoid(mu . x)` at 1/2.
pub fn accuracy(post: &GaussianDist, t: &EmbeddedDataset, model: &ModelSpec) -> f64 {
    if t.is_empty() {
        return f64::NAN;
    }
    let x = model.prepare(t);
    let z = x.features() * post.mean();
    let correct = z.iter().zip(x.labels()).filter(|(&z, &y)| (sigmoid(z) >= 0.5) as u8 == y).count();
    correct as f64 / t.len() as f64
}

/// Mean test accuracy of MAP models trained on the curated training sets.
pub fn score_test_accuracy(pairs: &[EvalPair], method: CurationMethod, model: &ModelSpec, policy: ErrorPolicy, seed: u64) -> Result<MeanStd> {
    check_uniform(pairs)?;
    model.validate()?;
    let results = map_indexed(pairs.len(), |i| -> Result<f64> {
        let p = &pairs[i];
        let d_hat = curate(method, p, seed, i)?;
        Ok(accuracy(&model.fit(&d_hat)?, &p.pair.t, model))
    });
    let (acc, _) = collect_policy(results, policy)?;
    Ok(MeanStd::of(&acc))
}

/// Spearman rank correlation, `1 - 6 sum d_i^2 / (m (m^2 - 1))` on average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { context: "spearman inputs", left: xs.len(), right: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!("spearman needs at least 2 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input"));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let m = xs.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - 6.0 * d2 / (m * (m * m - 1.0)))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Level-independent settings of a benchmark sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTemplate {
    pub k: usize,
    pub size_min: usize,
    pub size_max: usize,
    #[serde(default)]
    pub grid: GridDraw,
}

impl LevelTemplate {
    /// The spec for `target_bits`; its seed depends on the target value, not the
    /// level's position, so reordering levels changes nothing.
    pub fn spec(&self, target_bits: f64, seed: u64) -> Result<BenchmarkSpec> {
        let level_seed = child_seed(seed, "benchmark/level", target_bits.to_bits());
        Ok(BenchmarkSpec::new(target_bits, self.k, self.size_min, self.size_max, level_seed)?.with_grid(self.grid))
    }
}

/// Generates the first `k` pairs of a level.
pub fn benchmark_pairs(spec: &BenchmarkSpec, pool: &CorpusPool, k: usize) -> Result<Vec<EvalPair>> {
    map_indexed(k, |i| generate_pair(spec, pool, i as u64).map(EvalPair::from)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub spec: BenchmarkSpec,
    pub truth_bits: f64,
    pub estimate: MiEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub spearman_rho: f64,
    /// Sorted by target, strictly increasing.
    pub levels: Vec<LevelReport>,
}

/// Estimates every level with the identity method and ranks the estimates against the targets.
pub fn benchmark_experiment(
    levels: &[f64],
    template: &LevelTemplate,
    pool: &CorpusPool,
    model: &ModelSpec,
    opts: &PmiOptions,
    policy: ErrorPolicy,
    seed: u64,
) -> Result<RankReport> {
    let mut targets = levels.to_vec();
    targets.sort_by(f64::total_cmp);
    if targets.len() < 2 {
        return Err(Error::InvalidArgument("a rank report needs at least 2 levels".into()));
    }
    if targets.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("benchmark levels must be distinct".into()));
    }
    let mut reports = Vec::with_capacity(targets.len());
    for &target in &targets {
        let spec = template.spec(target, seed)?;
        let pairs = benchmark_pairs(&spec, pool, spec.k)?;
        let estimate = run_alg1(&pairs, CurationMethod::Identity, model, opts, policy, spec.seed)?;
        reports.push(LevelReport { truth_bits: spec.truth_bits(), spec, estimate });
    }
    let truth: Vec<f64> = reports.iter().map(|r| r.truth_bits).collect();
    let est: Vec<f64> = reports.iter().map(|r| r.estimate.mean_bits).collect();
    Ok(RankReport { spearman_rho: spearman(&truth, &est)?, levels: reports })
}

/// Category counts and noise level of a curation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationSetup {
    pub train_counts: [usize; 4],
    pub test_counts: [usize; 4],
    pub noise_fraction: f64,
}

impl Default for CurationSetup {
    fn default() -> Self {
        Self { train_counts: [30; 4], test_counts: [20, 40, 40, 20], noise_fraction: 0.1 }
    }
}

/// Pair `index`: tagged training and test sets sampled from the pool, with
/// label noise applied to the training set.
pub fn generate_curation_pair(setup: &CurationSetup, pool: &TaggedPool, seed: u64, index: u64) -> Result<EvalPair> {
    let mut rng = substream(seed, "curation/pair", index);
    let clean = pool.sample(setup.train_counts, &mut rng)?;
    let t = pool.sample(setup.test_counts, &mut rng)?;
    let (d, flips) = flip_labels(&clean, setup.noise_fraction, &mut rng)?;
    Ok(EvalPair { pair: DatasetPair::new(d, t, None)?, flips: Some(flips) })
}

/// Change of PMI (nats) and test accuracy (percentage points) relative to the identity method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationOutcome {
    pub method: CurationMethod,
    pub prior_c: f64,
    pub delta_pmi: MeanStd,
    pub delta_accuracy_pct: MeanStd,
    /// Pairs per outer group.
    pub k: usize,
    pub n_outer: usize,
    /// Per-pair PMI deltas in pair order.
    #[serde(skip)]
    pub per_pair_delta_pmi: Vec<f64>,
    /// Per-pair accuracy deltas (fractions) in pair order.
    #[serde(skip)]
    pub per_pair_delta_accuracy: Vec<f64>,
}

/// Scores each method against the identity method on the same pairs.
///
/// Pairs are split into `n_outer` groups of `k_inner`; the deltas are averaged
/// within each group and the reported std is taken across group means. The test
/// posterior of each pair is fitted once and shared by all methods.
#[allow(clippy::too_many_arguments)]
pub fn curation_experiment(
    setup: &CurationSetup,
    pool: &TaggedPool,
    methods: &[CurationMethod],
    model: &ModelSpec,
    opts: &PmiOptions,
    k_inner: usize,
    n_outer: usize,
    seed: u64,
) -> Result<Vec<CurationOutcome>> {
    if k_inner == 0 || n_outer == 0 {
        return Err(Error::InvalidArgument("k_inner and n_outer must be at least 1".into()));
    }
    model.validate()?;
    let mut all = vec![CurationMethod::Identity];
    all.extend(methods.iter().copied().filter(|&m| m != CurationMethod::Identity));
    let total = k_inner * n_outer;
    let results = map_indexed(total, |i| -> Result<Vec<(f64, f64)>> {
        let pair = generate_curation_pair(setup, pool, seed, i as u64)?;
        let t = &pair.pair.t;
        let post_t = model.fit(t)?;
        all.iter()
            .map(|&m| {
                let d_hat = curate(m, &pair, seed, i)?;
                let post_d = model.fit(&d_hat)?;
                let s = score_fitted(&d_hat, t, &post_d, &post_t, model, opts, (seed, i as u64))?;
                Ok((s.pmi, accuracy(&post_d, t, model)))
            })
            .collect()
    });
    let (scores, _) = collect_policy(results, ErrorPolicy::FailFast)?;
    let outcomes = methods
        .iter()
        .map(|&m| {
            let j = all.iter().position(|&a| a == m).expect("method listed");
            let per_pair_delta_pmi: Vec<f64> = scores.iter().map(|s| s[j].0 - s[0].0).collect();
            let per_pair_delta_accuracy: Vec<f64> = scores.iter().map(|s| s[j].1 - s[0].1).collect();
            let pct: Vec<f64> = per_pair_delta_accuracy.iter().map(|a| 100.0 * a).collect();
            CurationOutcome {
                method: m,
                prior_c: model.prior_c,
                delta_pmi: group_means(&per_pair_delta_pmi, k_inner),
                delta_accuracy_pct: group_means(&pct, k_inner),
                k: k_inner,
                n_outer,
                per_pair_delta_pmi,
                per_pair_delta_accuracy,
            }
        })
        .collect();
    Ok(outcomes)
}

/// Mean and std of the means of consecutive groups of `k` values.
fn group_means(values: &[f64], k: usize) -> MeanStd {
    let means: Vec<f64> = values.chunks(k).map(|g| g.iter().sum::<f64>() / k as f64).collect();
    MeanStd::of(&means)
}

/// Mean squared error of the estimator at one pair count, with a normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub k: usize,
    pub mse: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Replicates `estimate(k, replication)` (bits) and reports its squared error against `truth_bits`.
pub fn convergence_study<F>(k_grid: &[usize], replications: usize, truth_bits: f64, estimate: F) -> Result<Vec<ConvergencePoint>>
where
    F: Fn(usize, usize) -> Result<f64>,
{
    if k_grid.is_empty() || k_grid.windows(2).any(|w| w[0] >= w[1]) || k_grid[0] == 0 {
        return Err(Error::InvalidArgument("k_grid must be non-empty, positive and strictly ascending".into()));
    }
    if replications < 2 {
        return Err(Error::InvalidArgument("convergence needs at least 2 replications".into()));
    }
    k_grid
        .iter()
        .map(|&k| {
            let sq: Vec<f64> = (0..replications).map(|r| estimate(k, r).map(|e| (e - truth_bits).powi(2))).collect::<Result<_>>()?;
            let s = MeanStd::of(&sq);
            let half = 1.96 * s.std / (replications as f64).sqrt();
            Ok(ConvergencePoint { k, mse: s.mean, ci_lo: (s.mean - half).max(0.0), ci_hi: s.mean + half })
        })
        .collect()
}

/// Convergence of the benchmark estimator at one level. Replication `r` uses
/// its own level seed; smaller `k` use a prefix of the same pairs.
#[allow(clippy::too_many_arguments)]
pub fn benchmark_convergence(
    target_bits: f64,
    template: &LevelTemplate,
    pool: &CorpusPool,
    model: &ModelSpec,
    opts: &PmiOptions,
    k_grid: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<ConvergencePoint>> {
    let truth = template.spec(target_bits, seed)?.truth_bits();
    convergence_study(k_grid, replications, truth, |k, r| {
        let spec = template.spec(target_bits, child_seed(seed, "convergence/rep", r as u64))?;
        let pairs = benchmark_pairs(&spec, pool, k)?;
        Ok(run_alg1(&pairs, CurationMethod::Identity, model, opts, ErrorPolicy::FailFast, spec.seed)?.mean_bits)
    })
}

/// Exact-posterior PMI values (nats) of `k` pairs from a conjugate model.
pub fn conjugate_pmi_values(model: &ConjugateModel, n_d: usize, n_t: usize, k: usize, seed: u64) -> Result<Vec<f64>> {
    map_indexed(k, |i| {
        let (d, t) = model.sample_pair(n_d, n_t, &mut substream(seed, "conjugate/pair", i as u64));
        let post_d = model.posterior(&d)?;
        let post_t = model.posterior(&t)?;
        Ok(pmi_gaussian(&post_d, &post_t, model.prior())?.value)
    })
    .into_iter()
    .collect()
}

/// Convergence of the mean exact PMI on a conjugate model.
pub fn conjugate_convergence(
    model: &ConjugateModel,
    n_d: usize,
    n_t: usize,
    k_grid: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<ConvergencePoint>> {
    let truth = model.mutual_information(n_d, n_t) / std::f64::consts::LN_2;
    let k_max = *k_grid.last().unwrap_or(&0);
    convergence_study(k_grid, replications, truth, |k, r| {
        let values = conjugate_pmi_values(model, n_d, n_t, k_max, child_seed(seed, "convergence/rep", r as u64))?;
        Ok(values[..k].iter().sum::<f64>() / k as f64 / std::f64::consts::LN_2)
    })
}

//! Run configuration: one JSON document, with command-line flags taking precedence.

use std::path::{Path, PathBuf};

use pmi_curation::benchmark::GridDraw;
use pmi_curation::curation::CurationMethod;
use pmi_curation::harness::{ErrorPolicy, PmiOptions};
use pmi_curation::FitSettings;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Prior variances `C`; every result is reported per value.
    #[serde(default = "default_c_values")]
    pub c_values: Vec<f64>,
    /// Append a constant-one feature to every dataset before fitting.
    #[serde(default = "default_true")]
    pub append_bias: bool,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default)]
    pub pmi: PmiOptions,
    #[serde(default)]
    pub error_policy: ErrorPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curate: Option<CurateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
}

fn default_c_values() -> Vec<f64> {
    vec![1.0]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_size_min")]
    pub size_min: usize,
    #[serde(default = "default_size_max")]
    pub size_max: usize,
    #[serde(default = "default_grid")]
    pub grid: GridDraw,
    pub corpus: CorpusSource,
    /// Also write every generated pair as `pairs/level_<j>/pair_<i>_{d,t}.emb`.
    #[serde(default)]
    pub write_pairs: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
}

fn default_levels() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn default_k() -> usize {
    500
}

fn default_size_min() -> usize {
    50
}

fn default_size_max() -> usize {
    100
}

fn default_grid() -> GridDraw {
    GridDraw::PerPair
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorpusSource {
    Synthetic { dim: usize, per_class: usize, separation: f64 },
    Emb { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default = "default_convergence_target")]
    pub target_bits: f64,
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Defaults to the first entry of `c_values`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_c: Option<f64>,
}

fn default_convergence_target() -> f64 {
    0.5
}

fn default_k_grid() -> Vec<usize> {
    vec![25, 50, 100, 200, 400]
}

fn default_replications() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurateConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<CurationMethod>,
    #[serde(default = "default_train_counts")]
    pub train_counts: [usize; 4],
    #[serde(default = "default_test_counts")]
    pub test_counts: [usize; 4],
    #[serde(default = "default_noise")]
    pub noise_fraction: f64,
    #[serde(default = "default_k_inner")]
    pub k_inner: usize,
    #[serde(default = "default_n_outer")]
    pub n_outer: usize,
    pub corpus: TaggedCorpusSource,
}

fn default_methods() -> Vec<CurationMethod> {
    vec![CurationMethod::Denoise, CurationMethod::DuplicateToMatch, CurationMethod::RemoveToMatch]
}

fn default_train_counts() -> [usize; 4] {
    [30; 4]
}

fn default_test_counts() -> [usize; 4] {
    [20, 40, 40, 20]
}

fn default_noise() -> f64 {
    0.1
}

fn default_k_inner() -> usize {
    1000
}

fn default_n_outer() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaggedCorpusSource {
    Synthetic { dim: usize, per_category: usize, essential_separation: f64, nonessential_separation: f64 },
    Emb { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub pairs: Vec<PairPaths>,
    #[serde(default = "default_method")]
    pub method: CurationMethod,
    /// Also evaluate the closed-form and eta routes and report both means.
    #[serde(default)]
    pub cross_check: bool,
}

fn default_method() -> CurationMethod {
    CurationMethod::Identity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairPaths {
    pub d: PathBuf,
    pub t: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Input files named by the config, in the order they are read.
    pub fn input_files(&self) -> Vec<&Path> {
        let mut out = Vec::new();
        if let Some(CorpusSource::Emb { path }) = self.benchmark.as_ref().map(|b| &b.corpus) {
            out.push(path.as_path());
        }
        if let Some(TaggedCorpusSource::Emb { path }) = self.curate.as_ref().map(|c| &c.corpus) {
            out.push(path.as_path());
        }
        if let Some(e) = &self.estimate {
            for p in &e.pairs {
                out.push(p.d.as_path());
                out.push(p.t.as_path());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.c_values.is_empty() {
            return Err("c_values must not be empty".into());
        }
        if let Some(c) = self.c_values.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(format!("every C must be finite and positive, got {c}"));
        }
        if self.pmi.mc_samples < 2 {
            return Err("pmi.mc_samples must be at least 2".into());
        }
        self.fit.validate().map_err(|e| e.to_string())?;
        if let Some(b) = &self.benchmark {
            if b.levels.len() < 2 {
                return Err("benchmark.levels needs at least 2 entries".into());
            }
            if let Some(c) = &b.convergence {
                if c.k_grid.is_empty() || c.k_grid[0] == 0 || c.k_grid.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("benchmark.convergence.k_grid must be positive and strictly ascending".into());
                }
            }
        }
        if let Some(c) = &self.curate {
            if c.methods.is_empty() {
                return Err("curate.methods must not be empty".into());
            }
            if c.k_inner == 0 || c.n_outer == 0 {
                return Err("curate.k_inner and curate.n_outer must be at least 1".into());
            }
        }
        if let Some(e) = &self.estimate {
            if e.pairs.is_empty() {
                return Err("estimate.pairs must list at least one pair".into());
            }
        }
        Ok(())
    }
}

/// Resolves `path` against the directory holding the config file.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

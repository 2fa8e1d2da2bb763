//! The three subcommands.

use std::path::{Path, PathBuf};

use anyhow::Context;
use pmi_curation::benchmark::{corpus_rng, generate_pair, synth_corpus, synth_tagged_corpus, BenchmarkManifest, CorpusPool, TaggedPool};
use pmi_curation::emb;
use pmi_curation::harness::{
    benchmark_convergence, benchmark_experiment, curation_experiment, run_alg1, ConvergencePoint, CurationOutcome, CurationSetup, EvalPair,
    LevelTemplate, MiEstimate, ModelSpec, PmiOptions, RankReport,
};
use pmi_curation::{DatasetPair, EmbeddedDataset, PmiPath};
use serde::Serialize;

use crate::config::{resolve, CorpusSource, RunConfig, TaggedCorpusSource};
use crate::output::{OutDir, Report, TOOL};
use crate::Failure;

pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    pub base: &'a Path,
    pub out: &'a OutDir,
}

fn core<T>(what: &str, r: pmi_curation::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let input = e.is_input_error();
        let err = anyhow::Error::new(e).context(what.to_string());
        if input {
            Failure::Validation(err)
        } else {
            Failure::Runtime(err)
        }
    })
}

fn runtime<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn read_emb(base: &Path, path: &Path) -> Result<EmbeddedDataset, Failure> {
    let full = resolve(base, path);
    emb::read_file(&full).map_err(|e| match e {
        emb::ReadError::Format(f) => Failure::Validation(anyhow::Error::new(f).context(format!("reading {}", full.display()))),
        emb::ReadError::Io(io) => Failure::Runtime(anyhow::Error::new(io).context(format!("reading {}", full.display()))),
    })
}

fn model(config: &RunConfig, c: f64) -> ModelSpec {
    ModelSpec { prior_c: c, append_bias: config.append_bias, fit: config.fit }
}

fn write_report<T: Serialize>(ctx: &RunContext, file: &str, command: &str, result: T) -> Result<PathBuf, Failure> {
    let r = Report { tool: &TOOL, command, seed: ctx.config.seed, config: ctx.config, result };
    runtime(ctx.out.write_json(file, &r))
}

#[derive(Serialize)]
struct RankRun {
    prior_c: f64,
    #[serde(flatten)]
    report: RankReport,
}

#[derive(Serialize)]
struct BenchmarkPmiRow {
    prior_c: f64,
    target_bits: f64,
    pair: usize,
    pmi_nats: f64,
}

pub fn benchmark(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let b = config.benchmark.as_ref().ok_or_else(|| Failure::validation("config has no \"benchmark\" section"))?;
    let pool = match &b.corpus {
        CorpusSource::Synthetic { dim, per_class, separation } => {
            core("building synthetic corpus", synth_corpus(*dim, *per_class, *separation, &mut corpus_rng(config.seed)))?
        }
        CorpusSource::Emb { path } => core("splitting corpus by label", CorpusPool::from_dataset(&read_emb(ctx.base, path)?))?,
    };
    let template = LevelTemplate { k: b.k, size_min: b.size_min, size_max: b.size_max, grid: b.grid };
    let mut targets = b.levels.clone();
    targets.sort_by(f64::total_cmp);
    let manifests: Vec<BenchmarkManifest> = targets
        .iter()
        .map(|&t| template.spec(t, config.seed).map(|s| s.manifest()))
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Validation(e.into()))?;
    write_report(ctx, "manifest.json", "benchmark", &manifests)?;
    if b.write_pairs {
        for (j, &t) in targets.iter().enumerate() {
            let spec = core("building level", template.spec(t, config.seed))?;
            for i in 0..spec.k {
                let pair = core("generating pair", generate_pair(&spec, &pool, i as u64))?;
                runtime(ctx.out.write_bytes(&format!("pairs/level_{j}/pair_{i}_d.emb"), &emb::encode(&pair.d)))?;
                runtime(ctx.out.write_bytes(&format!("pairs/level_{j}/pair_{i}_t.emb"), &emb::encode(&pair.t)))?;
            }
        }
    }
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &c in &config.c_values {
        let r = core(
            "benchmark experiment",
            benchmark_experiment(&targets, &template, &pool, &model(config, c), &config.pmi, config.error_policy, config.seed),
        )?;
        for level in &r.levels {
            rows.extend(level.estimate.per_pair.iter().enumerate().map(|(pair, &pmi_nats)| BenchmarkPmiRow {
                prior_c: c,
                target_bits: level.spec.target_bits,
                pair,
                pmi_nats,
            }));
        }
        eprintln!("C={c}: Spearman rho {:.4} over {} levels", r.spearman_rho, r.levels.len());
        runs.push(RankRun { prior_c: c, report: r });
    }
    runtime(ctx.out.write_csv("pmi_values.csv", rows))?;
    write_report(ctx, "rank_report.json", "benchmark", &runs)?;
    if let Some(cv) = &b.convergence {
        let c = cv.prior_c.unwrap_or(config.c_values[0]);
        let points: Vec<ConvergencePoint> = core(
            "convergence study",
            benchmark_convergence(cv.target_bits, &template, &pool, &model(config, c), &config.pmi, &cv.k_grid, cv.replications, config.seed),
        )?;
        runtime(ctx.out.write_csv("convergence.csv", points))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CurationPmiRow {
    prior_c: f64,
    method: &'static str,
    pair: usize,
    delta_pmi_nats: f64,
    delta_accuracy: f64,
}

pub fn curate(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let c = config.curate.as_ref().ok_or_else(|| Failure::validation("config has no \"curate\" section"))?;
    let pool = match &c.corpus {
        TaggedCorpusSource::Synthetic { dim, per_category, essential_separation, nonessential_separation } => core(
            "building synthetic tagged corpus",
            synth_tagged_corpus(*dim, *per_category, *essential_separation, *nonessential_separation, &mut corpus_rng(config.seed)),
        )?,
        TaggedCorpusSource::Emb { path } => core("splitting corpus by category", TaggedPool::from_dataset(&read_emb(ctx.base, path)?))?,
    };
    let setup = CurationSetup { train_counts: c.train_counts, test_counts: c.test_counts, noise_fraction: c.noise_fraction };
    let mut outcomes: Vec<CurationOutcome> = Vec::new();
    for &prior_c in &config.c_values {
        outcomes.extend(core(
            "curation experiment",
            curation_experiment(&setup, &pool, &c.methods, &model(config, prior_c), &config.pmi, c.k_inner, c.n_outer, config.seed),
        )?);
    }
    let rows = outcomes.iter().flat_map(|o| {
        o.per_pair_delta_pmi.iter().zip(&o.per_pair_delta_accuracy).enumerate().map(|(pair, (&p, &a))| CurationPmiRow {
            prior_c: o.prior_c,
            method: o.method.name(),
            pair,
            delta_pmi_nats: p,
            delta_accuracy: a,
        })
    });
    runtime(ctx.out.write_csv("pmi_values.csv", rows))?;
    for o in &outcomes {
        eprintln!(
            "C={} {:>20}: dPMI {:+.4} +- {:.4}  dAcc {:+.3}% +- {:.3}",
            o.prior_c,
            o.method.name(),
            o.delta_pmi.mean,
            o.delta_pmi.std,
            o.delta_accuracy_pct.mean,
            o.delta_accuracy_pct.std
        );
    }
    write_report(ctx, "curation_outcomes.json", "curate", &outcomes)?;
    Ok(())
}

#[derive(Serialize)]
struct CrossCheck {
    gaussian_closed_form_nats: f64,
    eta_point_nats: f64,
    eta_spread_max: Option<f64>,
}

#[derive(Serialize)]
struct EstimateRun {
    prior_c: f64,
    estimate: MiEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_check: Option<CrossCheck>,
}

#[derive(Serialize)]
struct EstimatePmiRow {
    prior_c: f64,
    pair: usize,
    pmi_nats: f64,
}

pub fn estimate(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let e = config.estimate.as_ref().ok_or_else(|| Failure::validation("config has no \"estimate\" section"))?;
    let mut pairs = Vec::with_capacity(e.pairs.len());
    for (i, p) in e.pairs.iter().enumerate() {
        let d = read_emb(ctx.base, &p.d)?;
        let t = read_emb(ctx.base, &p.t)?;
        let pair = DatasetPair::new(d, t, None).with_context(|| format!("pair {i}")).map_err(Failure::Validation)?;
        pairs.push(EvalPair::from(pair));
    }
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &c in &config.c_values {
        let m = model(config, c);
        let est = core("estimating", run_alg1(&pairs, e.method, &m, &config.pmi, config.error_policy, config.seed))?;
        let cross_check = if e.cross_check {
            let closed = core(
                "closed-form cross-check",
                run_alg1(&pairs, e.method, &m, &PmiOptions { path: PmiPath::GaussianClosedForm, ..config.pmi }, config.error_policy, config.seed),
            )?;
            let eta = core(
                "eta cross-check",
                run_alg1(&pairs, e.method, &m, &PmiOptions { path: PmiPath::EtaPoint, ..config.pmi }, config.error_policy, config.seed),
            )?;
            Some(CrossCheck { gaussian_closed_form_nats: closed.mean_nats, eta_point_nats: eta.mean_nats, eta_spread_max: eta.eta_spread_max })
        } else {
            None
        };
        rows.extend(est.per_pair.iter().enumerate().map(|(pair, &pmi_nats)| EstimatePmiRow { prior_c: c, pair, pmi_nats }));
        eprintln!("C={c}: mean PMI {:.6} nats ({:.6} bits) over {} pairs", est.mean_nats, est.mean_bits, est.k);
        runs.push(EstimateRun { prior_c: c, estimate: est, cross_check });
    }
    runtime(ctx.out.write_csv("pmi_values.csv", rows))?;
    write_report(ctx, "mi_estimate.json", "estimate", &runs)?;
    Ok(())
}

//! Browser bindings for three small operations of the scoring library.
//!
//! Every export returns a JSON string. The plain Rust functions behind them are
//! public so they can be exercised natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pmi_curation::benchmark::{corpus_rng, solve_rho, synth_tagged_corpus, table_mi};
use pmi_curation::conjugate::ConjugateModel;
use pmi_curation::curation::{self, CurationMethod};
use pmi_curation::harness::{accuracy, generate_curation_pair, CurationSetup, ModelSpec};
use pmi_curation::rng::substream;
use pmi_curation::{decompose, joint_posterior, pmi_gaussian, EmbeddedDataset, GaussianDist, PmiDecomposition};

type DemoResult<T> = Result<T, String>;

fn err(e: pmi_curation::Error) -> String {
    e.to_string()
}

#[derive(Debug, Serialize)]
pub struct TableCurve {
    /// `(rho, bits)` samples over the admissible range of `rho`.
    pub curve: Vec<(f64, f64)>,
    pub target_bits: f64,
    pub rho: f64,
    /// The four cell probabilities `[p00, p01, p10, p11]`.
    pub cells: [f64; 4],
}

/// The label-table MI curve and the `rho` hitting `target_bits`.
pub fn table_curve(target_bits: f64, samples: usize) -> DemoResult<TableCurve> {
    let samples = samples.max(2);
    let curve = (0..samples)
        .map(|i| {
            let rho = 0.25 + 0.25 * i as f64 / (samples - 1) as f64;
            table_mi(rho).map(|b| (rho, b))
        })
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let rho = solve_rho(target_bits, 1e-10).map_err(err)?;
    Ok(TableCurve { curve, target_bits, rho, cells: [rho, 0.5 - rho, 0.5 - rho, rho] })
}

#[derive(Debug, Serialize)]
pub struct Normal1 {
    pub mean: f64,
    pub var: f64,
}

impl From<&GaussianDist> for Normal1 {
    fn from(g: &GaussianDist) -> Self {
        Self { mean: g.mean()[0], var: 1.0 / g.precision()[(0, 0)] }
    }
}

#[derive(Debug, Serialize)]
pub struct ConjugateReport {
    pub d: Vec<f64>,
    pub t: Vec<f64>,
    pub prior: Normal1,
    pub post_d: Normal1,
    pub post_t: Normal1,
    pub joint: Normal1,
    pub pmi_nats: f64,
    pub decomposition: PmiDecomposition,
    /// Exact `I(D; T)` of the model at these sizes.
    pub mutual_information_nats: f64,
}

/// Draws one `(d, t)` pair from the 1-D Gaussian-mean model and scores it.
pub fn conjugate_pair(prior_mean: f64, prior_var: f64, noise_var: f64, n_d: usize, n_t: usize, seed: u64) -> DemoResult<ConjugateReport> {
    let model = ConjugateModel::new(prior_mean, prior_var, noise_var).map_err(err)?;
    let (d, t) = model.sample_pair(n_d, n_t, &mut substream(seed, "conjugate/pair", 0));
    let post_d = model.posterior(&d).map_err(err)?;
    let post_t = model.posterior(&t).map_err(err)?;
    let prior = model.prior();
    let joint = joint_posterior(&post_d, &post_t, prior).map_err(err)?;
    Ok(ConjugateReport {
        pmi_nats: pmi_gaussian(&post_d, &post_t, prior).map_err(err)?.value,
        decomposition: decompose(&post_d, &post_t, prior).map_err(err)?,
        mutual_information_nats: model.mutual_information(n_d, n_t),
        prior: prior.into(),
        post_d: (&post_d).into(),
        post_t: (&post_t).into(),
        joint: (&joint).into(),
        d,
        t,
    })
}

#[derive(Debug, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub label: u8,
    pub category: usize,
}

#[derive(Debug, Serialize)]
pub struct Fit {
    /// `[w_x, w_y, bias]` of the MAP classifier.
    pub weights: Vec<f64>,
    pub pmi_nats: f64,
    pub accuracy: f64,
    pub category_counts: [usize; 4],
}

#[derive(Debug, Serialize)]
pub struct CurationDemo {
    pub method: CurationMethod,
    pub train: Vec<Point>,
    pub curated: Vec<Point>,
    pub test: Vec<Point>,
    pub before: Fit,
    pub after: Fit,
}

fn points(x: &EmbeddedDataset) -> DemoResult<Vec<Point>> {
    let tags = x.require_tags().map_err(err)?;
    Ok((0..x.len())
        .map(|i| {
            let row = x.row(i);
            Point { x: row[0], y: row[1], label: x.labels()[i], category: tags[i].index() }
        })
        .collect())
}

fn score(d: &EmbeddedDataset, t: &EmbeddedDataset, post_t: &GaussianDist, model: &ModelSpec) -> DemoResult<Fit> {
    let post_d = model.fit(d).map_err(err)?;
    let prior = model.prior(d.dim()).map_err(err)?.to_gaussian();
    Ok(Fit {
        weights: post_d.mean().iter().copied().collect(),
        pmi_nats: pmi_gaussian(&post_d, post_t, &prior).map_err(err)?.value,
        accuracy: accuracy(&post_d, t, model),
        category_counts: d.category_counts().map_err(err)?,
    })
}

/// One noisy 2-D training set and a 1:2:2:1 test set, scored before and after `method`.
pub fn curation_pair(method: &str, noise_fraction: f64, separation: f64, prior_c: f64, seed: u64) -> DemoResult<CurationDemo> {
    let method: CurationMethod = method.parse().map_err(err)?;
    let pool = synth_tagged_corpus(2, 200, separation, separation, &mut corpus_rng(seed)).map_err(err)?;
    let setup = CurationSetup { noise_fraction, ..CurationSetup::default() };
    let pair = generate_curation_pair(&setup, &pool, seed, 0).map_err(err)?;
    let (d, t) = (&pair.pair.d, &pair.pair.t);
    let curated = curation::apply(method, d, t, pair.flips.as_ref(), &mut substream(seed, "curation/method", 0)).map_err(err)?;
    let model = ModelSpec::new(prior_c, true);
    let post_t = model.fit(t).map_err(err)?;
    Ok(CurationDemo {
        method,
        train: points(d)?,
        curated: points(&curated)?,
        test: points(t)?,
        before: score(d, t, &post_t, &model)?,
        after: score(&curated, t, &post_t, &model)?,
    })
}

fn to_js<T: Serialize>(r: DemoResult<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = tableCurve)]
pub fn table_curve_js(target_bits: f64, samples: usize) -> Result<String, JsError> {
    to_js(table_curve(target_bits, samples))
}

#[wasm_bindgen(js_name = conjugatePair)]
pub fn conjugate_pair_js(prior_mean: f64, prior_var: f64, noise_var: f64, n_d: usize, n_t: usize, seed: u32) -> Result<String, JsError> {
    to_js(conjugate_pair(prior_mean, prior_var, noise_var, n_d, n_t, seed.into()))
}

#[wasm_bindgen(js_name = curationPair)]
pub fn curation_pair_js(method: &str, noise_fraction: f64, separation: f64, prior_c: f64, seed: u32) -> Result<String, JsError> {
    to_js(curation_pair(method, noise_fraction, separation, prior_c, seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_curve_hits_target() {
        let c = table_curve(0.5, 11).unwrap();
        assert_eq!(c.curve.len(), 11);
        assert_eq!(c.curve[0], (0.25, 0.0));
        assert!((c.curve[10].1 - 1.0).abs() < 1e-12);
        assert!((table_mi(c.rho).unwrap() - 0.5).abs() < 1e-9);
        assert!((c.cells.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(table_curve(1.5, 11).is_err());
    }

    #[test]
    fn conjugate_report_is_consistent() {
        let r = conjugate_pair(0.0, 1.0, 2.0, 10, 5, 3).unwrap();
        assert_eq!((r.d.len(), r.t.len()), (10, 5));
        assert!((r.decomposition.kl_form() - r.pmi_nats).abs() < 1e-10);
        // precisions add: joint = post_d + post_t - prior
        let prec = |n: &Normal1| 1.0 / n.var;
        assert!((prec(&r.joint) - (prec(&r.post_d) + prec(&r.post_t) - prec(&r.prior))).abs() < 1e-10);
        assert!(r.mutual_information_nats > 0.0);
        assert!(conjugate_pair(0.0, -1.0, 1.0, 1, 1, 0).is_err());
    }

    #[test]
    fn curation_demo_runs_every_method() {
        for m in CurationMethod::ALL {
            let r = curation_pair(m.name(), 0.1, 3.0, 1.0, 4).unwrap();
            assert_eq!(r.before.weights.len(), 3);
            assert_eq!(r.train.len(), 120);
            assert_eq!(r.test.len(), 120);
            if m == CurationMethod::Identity {
                assert_eq!(r.before.pmi_nats, r.after.pmi_nats);
            }
        }
        let dup = curation_pair("duplicate-to-match", 0.1, 3.0, 1.0, 4).unwrap();
        assert_eq!(dup.after.category_counts, [30, 60, 60, 30]);
        let e = curation_pair("shuffle", 0.1, 3.0, 1.0, 4).unwrap_err();
        assert!(e.contains("denoise"), "{e}");
    }

    #[test]
    fn js_wrappers_emit_json() {
        let s = table_curve_js(0.2, 5).map_err(|_| ()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["curve"].as_array().unwrap().len(), 5);
    }
}

//! Browser demo: nucleus filtering on a hand-edited distribution, and
//! p sweeps with a small trigram model trained in the page.
//!
//! Every export returns JSON text so the page needs no generated typings.
//! The plain-Rust functions behind them are tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use narrative_core::corpus::{preprocess, read_jsonl, ExampleFormat, LengthClass};
use narrative_core::decode::{apply_temperature, nucleus_filter};
use narrative_core::lm::{train_ngram, NGramLM, TokenDistribution};
use narrative_core::metrics::corpus_dist_n;
use narrative_core::sweep::{group_by_grid, run_p_sweep, token_space_cdf, SweepOptions, SweepSpec};
use narrative_core::tokenizer::WhitespaceTokenizer;

/// Fifty prompt/response pairs from Moby-Dick, shipped inside the module.
pub const BUILTIN_PAIRS: &str = include_str!("../../core/tests/fixtures/pairs50.jsonl");

/// Default smoothing for the in-page model. Fifty pairs are nearly
/// memorized by a trigram, so this is larger than a full corpus would want;
/// it leaves enough tail mass for the sampled space to grow with p.
pub const DEMO_ALPHA: f64 = 1e-3;

#[derive(Debug, Serialize)]
pub struct NucleusView {
    /// Distribution after temperature, by token id.
    pub probs: Vec<f64>,
    /// Ids in descending probability (ties by id).
    pub ranked: Vec<u32>,
    /// Running total along `ranked`.
    pub cumulative: Vec<f64>,
    /// Ascending ids that survive the filter.
    pub kept: Vec<u32>,
    /// Renormalized distribution; zero outside `kept`.
    pub renormalized: Vec<f64>,
}

pub fn nucleus_view_of(scores: Vec<f64>, p: f64, temperature: f64) -> Result<NucleusView, String> {
    let dist = TokenDistribution::from_scores(scores).map_err(|e| e.to_string())?;
    let dist = apply_temperature(&dist, temperature).map_err(|e| e.to_string())?;
    let filtered = nucleus_filter(&dist, p).map_err(|e| e.to_string())?;
    let probs = dist.probs();
    let mut ranked: Vec<u32> = (0..probs.len() as u32).collect();
    ranked.sort_by(|&a, &b| probs[b as usize].total_cmp(&probs[a as usize]).then(a.cmp(&b)));
    let cumulative = ranked
        .iter()
        .scan(0.0, |acc, &t| {
            *acc += probs[t as usize];
            Some(*acc)
        })
        .collect();
    Ok(NucleusView { probs, ranked, cumulative, kept: filtered.kept, renormalized: filtered.dist.probs() })
}

#[derive(Debug, Serialize)]
pub struct PointSummary {
    pub p: f64,
    pub median_space: usize,
    /// Distinct sampled-space sizes, ascending, and the fraction of steps at
    /// or below each.
    pub sizes: Vec<usize>,
    pub fractions: Vec<f64>,
    pub dist1: f64,
    pub dist2: f64,
    /// Response to the first prompt.
    pub example: String,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub vocab_size: usize,
    pub prompts: usize,
    pub points: Vec<PointSummary>,
}

/// Trigram model plus the prompts it was trained alongside.
pub struct DemoModel {
    model: NGramLM,
    prompts: Vec<String>,
}

impl DemoModel {
    /// Trains on JSON-lines prompt/response pairs; responses are cut to the
    /// small length class so a full sweep runs in a second or two.
    pub fn train(pairs_jsonl: &str, alpha: f64) -> Result<Self, String> {
        let pairs = read_jsonl(pairs_jsonl.as_bytes()).map_err(|e| e.to_string())?;
        let examples = preprocess(pairs, LengthClass::Small, &WhitespaceTokenizer, &ExampleFormat::default())
            .map_err(|e| e.to_string())?;
        let model = train_ngram(&examples, 3, alpha).map_err(|e| e.to_string())?;
        let format = ExampleFormat::default();
        let prompts = examples
            .iter()
            .map(|ex| format.parse(&ex.text).map(|(prompt, _)| prompt))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        Ok(Self { model, prompts })
    }

    pub fn vocab_size(&self) -> usize {
        self.model.vocab().len()
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn sweep(&self, p_grid: Vec<f64>, seed: u64, prompts: usize) -> Result<SweepSummary, String> {
        let spec = SweepSpec {
            prompts: self.prompts.iter().take(prompts.max(1)).cloned().collect(),
            p_grid,
            base_seed: seed,
            length_class: LengthClass::Small,
            ..SweepSpec::default()
        };
        let outcome = run_p_sweep(&spec, &self.model, &self.model, &self.model, &SweepOptions::default())
            .map_err(|e| e.to_string())?;
        if let Some(f) = outcome.failures.first() {
            return Err(f.error.clone());
        }
        let mut points = Vec::new();
        for (p, group) in group_by_grid(&outcome.records) {
            let cdf = token_space_cdf(&group).map_err(|e| e.to_string())?.remove(0);
            points.push(PointSummary {
                p,
                median_space: cdf.median(),
                sizes: cdf.sorted_sizes,
                fractions: cdf.cumulative_fraction,
                dist1: corpus_dist_n(&group, 1).map_err(|e| e.to_string())?,
                dist2: corpus_dist_n(&group, 2).map_err(|e| e.to_string())?,
                example: group[0].response.clone(),
            });
        }
        Ok(SweepSummary { vocab_size: self.vocab_size(), prompts: spec.prompts.len(), points })
    }
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Nucleus filter over `scores` (unnormalized log-probabilities).
#[wasm_bindgen]
pub fn nucleus_view(scores: Vec<f64>, p: f64, temperature: f64) -> Result<String, JsError> {
    to_js(nucleus_view_of(scores, p, temperature))
}

#[wasm_bindgen]
pub struct Demo {
    inner: DemoModel,
}

#[wasm_bindgen]
impl Demo {
    /// Trains on the built-in pairs with add-`alpha` smoothing.
    #[wasm_bindgen(constructor)]
    pub fn new(alpha: f64) -> Result<Demo, JsError> {
        Demo::from_pairs(BUILTIN_PAIRS, alpha)
    }

    /// Trains on JSON-lines pairs supplied by the page.
    pub fn from_pairs(pairs_jsonl: &str, alpha: f64) -> Result<Demo, JsError> {
        DemoModel::train(pairs_jsonl, alpha).map(|inner| Demo { inner }).map_err(|e| JsError::new(&e))
    }

    pub fn default_alpha() -> f64 {
        DEMO_ALPHA
    }

    pub fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    pub fn prompt_count(&self) -> usize {
        self.inner.prompts().len()
    }

    /// Sampled-space CDF and dist-1/dist-2 for each p, over the first
    /// `prompts` prompts.
    pub fn sweep(&self, p_grid: Vec<f64>, seed: u64, prompts: usize) -> Result<String, JsError> {
        to_js(self.inner.sweep(p_grid, seed, prompts))
    }
}

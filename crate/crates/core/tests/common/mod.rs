//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use narrative_core::corpus::{preprocess, read_jsonl, ExampleFormat, LengthClass, ProcessedExample, RawPair};
use narrative_core::decode::SampleRng;
use narrative_core::lm::{TokenDistribution, TokenId};
use narrative_core::tokenizer::WhitespaceTokenizer;

pub fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn load_pairs(rel: &str) -> Vec<RawPair> {
    read_jsonl(BufReader::new(File::open(data_path(rel)).unwrap())).unwrap()
}

pub fn fixture_pairs() -> Vec<RawPair> {
    load_pairs("tests/fixtures/pairs50.jsonl")
}

pub fn corpus_pairs() -> Vec<RawPair> {
    load_pairs("data/moby_dick_pairs.jsonl")
}

pub fn processed(pairs: Vec<RawPair>, class: LengthClass) -> Vec<ProcessedExample> {
    preprocess(pairs, class, &WhitespaceTokenizer, &ExampleFormat::default()).unwrap()
}

/// Random distribution over 2..=max_len tokens. About a quarter of them
/// repeat logits so tie-breaking gets exercised, and some carry
/// zero-probability tokens.
pub fn random_distribution(rng: &mut SampleRng, max_len: usize) -> TokenDistribution {
    let len = 2 + (rng.next_u64() % (max_len as u64 - 1)) as usize;
    let scale = 0.5 + 6.0 * rng.next_unit();
    let mut scores: Vec<f64> = (0..len).map(|_| scale * (rng.next_unit() * 2.0 - 1.0)).collect();
    if rng.next_unit() < 0.25 {
        let levels = 1 + (rng.next_u64() % 4) as usize;
        for s in scores.iter_mut() {
            *s = ((*s * levels as f64).round()) / levels as f64;
        }
    }
    if rng.next_unit() < 0.1 {
        let i = (rng.next_u64() % len as u64) as usize;
        scores[i] = f64::NEG_INFINITY;
        if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
            scores[0] = 0.0;
        }
    }
    TokenDistribution::from_scores(scores).unwrap()
}

/// Same as [`random_distribution`] but with a strict unique maximum.
pub fn unique_argmax_distribution(rng: &mut SampleRng, max_len: usize) -> TokenDistribution {
    loop {
        let d = random_distribution(rng, max_len);
        let lp = d.logprobs();
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lp.iter().filter(|&&x| x == max).count() == 1 {
            return d;
        }
    }
}

/// Brute-force nucleus: full sort by (probability desc, id asc), then
/// accumulate until the running sum reaches `p`.
pub fn brute_force_nucleus(dist: &TokenDistribution, p: f64) -> Vec<TokenId> {
    let lp = dist.logprobs();
    let mut ids: Vec<TokenId> = (0..lp.len() as TokenId).filter(|&i| lp[i as usize] > f64::NEG_INFINITY).collect();
    if p >= 1.0 {
        return ids;
    }
    ids.sort_by(|&a, &b| lp[b as usize].partial_cmp(&lp[a as usize]).unwrap().then(a.cmp(&b)));
    let mut cum = 0.0;
    let mut kept = Vec::new();
    for id in ids {
        kept.push(id);
        cum += lp[id as usize].exp();
        if cum >= p {
            break;
        }
    }
    kept.sort_unstable();
    kept
}

/// Standard normal draws by Box–Muller.
pub fn gaussian(rng: &mut SampleRng, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u1 = 1.0 - rng.next_unit();
            let u2 = rng.next_unit();
            mean + sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

pub fn shuffle<T>(rng: &mut SampleRng, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        v.swap(i, j);
    }
}

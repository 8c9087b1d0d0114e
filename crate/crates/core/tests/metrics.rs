mod common;

use std::collections::BTreeSet;

use narrative_core::decode::{DecoderConfig, SampleRng, StepTrace, Termination};
use narrative_core::metrics::{
    corpus_dist_n, dist_n, fleiss_kappa, likert_mean, paired_t_test, pooled_dist_n, rating_matrices, read_ratings,
    sent_diversity_texts, welch_t_test, ConfigKey, Embedder, HashEmbedder, MetricReport, RatingMatrix,
};
use narrative_core::{GenerationRecord, Strategy, TokenId};

fn record(tokens: &[TokenId], response: &str) -> GenerationRecord {
    GenerationRecord {
        schema_version: narrative_core::SCHEMA_VERSION,
        prompt: "prompt".into(),
        response: response.into(),
        config: DecoderConfig::default(),
        steps: tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| StepTrace { step_index: i, chosen_token: t, sampled_space_size: 3, chosen_logprob: -1.0 })
            .collect(),
        terminated_by: Termination::MaxTokens,
    }
}

#[test]
fn dist2_on_thirty_token_fixture_matches_set_recount() {
    let text = std::fs::read_to_string(common::data_path("tests/fixtures/tokens30.txt")).unwrap();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(tokens.len(), 30);
    let mut bigrams = BTreeSet::new();
    for i in 0..tokens.len() - 1 {
        bigrams.insert(format!("{} {}", tokens[i], tokens[i + 1]));
    }
    let want = bigrams.len() as f64 / 29.0;
    assert_eq!(dist_n(&tokens, 2).unwrap(), want);
    let distinct: BTreeSet<&str> = tokens.iter().copied().collect();
    assert_eq!(dist_n(&tokens, 1).unwrap(), distinct.len() as f64 / 30.0);
    assert_eq!(dist_n(&["a", "b", "c", "d"], 3).unwrap(), 1.0);
}

#[test]
fn corpus_dist_n_on_hundred_records_matches_recount() {
    let mut rng = SampleRng::new(9);
    let records: Vec<GenerationRecord> = (0..100)
        .map(|_| {
            let len = 1 + (rng.next_u64() % 30) as usize;
            let toks: Vec<TokenId> = (0..len).map(|_| (rng.next_u64() % 12) as TokenId).collect();
            record(&toks, "")
        })
        .collect();
    for n in 1..=3 {
        // Spreadsheet-style: one ratio per row, then the column mean.
        let mut ratios = Vec::new();
        let (mut all_grams, mut all_total) = (BTreeSet::new(), 0usize);
        for r in &records {
            let toks: Vec<TokenId> = r.steps.iter().map(|s| s.chosen_token).collect();
            if toks.len() < n {
                ratios.push(0.0);
                continue;
            }
            let mut grams: Vec<Vec<TokenId>> = toks.windows(n).map(<[TokenId]>::to_vec).collect();
            all_total += grams.len();
            let total = grams.len() as f64;
            all_grams.extend(grams.iter().cloned());
            grams.sort();
            grams.dedup();
            ratios.push(grams.len() as f64 / total);
        }
        let want = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((corpus_dist_n(&records, n).unwrap() - want).abs() < 1e-12);
        let pooled = all_grams.len() as f64 / all_total as f64;
        assert!((pooled_dist_n(&records, n).unwrap() - pooled).abs() < 1e-12);
    }
    let two = [record(&[1, 1, 1, 1, 2], ""), record(&[1, 2, 3, 3, 3], "")];
    assert!((corpus_dist_n(&two, 1).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(corpus_dist_n(&two[..1], 1).unwrap(), dist_n(&[1, 1, 1, 1, 2], 1).unwrap());
}

#[test]
fn sent_diversity_matches_pairwise_recomputation() {
    let pairs = common::fixture_pairs();
    let texts: Vec<&str> = pairs.iter().take(10).map(|p| p.response.as_str()).collect();
    let e = HashEmbedder::default();
    let vecs: Vec<Vec<f64>> = texts.iter().map(|t| e.embed(t).unwrap()).collect();
    let mut sum = 0.0;
    for (i, a) in vecs.iter().enumerate() {
        for (j, b) in vecs.iter().enumerate() {
            if i != j {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                sum += 1.0 - dot / (norm(a) * norm(b));
            }
        }
    }
    let want = sum / 90.0;
    let got = sent_diversity_texts(&texts, &e).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    assert!(got > 0.0);
}

#[test]
fn embedding_is_deterministic_and_dimensioned() {
    let e = HashEmbedder::new(16, 3);
    let a = e.embed("a").unwrap();
    assert_eq!(a, e.embed("a").unwrap());
    assert_eq!(a.len(), 16);
    assert!(a.iter().all(|x| x.is_finite()));
}

#[test]
fn likert_mean_matches_flat_list() {
    let scores = vec![vec![1, 2, 5], vec![3, 3, 4], vec![5, 5, 1], vec![2, 4, 4]];
    let flat: Vec<u32> = scores.iter().flatten().copied().collect();
    let want = flat.iter().sum::<u32>() as f64 / flat.len() as f64;
    let m = RatingMatrix::from_scores(&scores, 5).unwrap();
    assert!((likert_mean(&m) - want).abs() < 1e-12);
    assert_eq!(likert_mean(&RatingMatrix::from_scores(&[vec![4, 4], vec![4, 4]], 5).unwrap()), 4.0);
    assert_eq!(likert_mean(&RatingMatrix::from_scores(&[vec![1, 3], vec![3, 1]], 5).unwrap()), 2.0);
}

#[test]
fn kappa_from_ratings_csv() {
    let csv = "item_id,metric,annotator_id,score\n\
               s1,coherence,a,2\ns1,coherence,b,2\ns1,coherence,c,2\n\
               s2,coherence,a,4\ns2,coherence,b,4\ns2,coherence,c,4\n\
               s1,interest,a,1\ns1,interest,b,3\ns1,interest,c,5\n\
               s2,interest,a,5\ns2,interest,b,1\ns2,interest,c,3\n";
    let ratings = read_ratings(csv.as_bytes()).unwrap();
    let ms = rating_matrices(&ratings, 5).unwrap();
    assert_eq!(fleiss_kappa(&ms["coherence"]).unwrap(), 1.0);
    assert!(fleiss_kappa(&ms["interest"]).unwrap() < 0.0);
    assert!(read_ratings("item_id,metric,annotator_id,score\nx,m,a,0\n".as_bytes()).is_err());
}

#[test]
fn welch_limits() {
    let a = [1.0, 2.0, 3.5, 4.0];
    let same = welch_t_test(&a, &a).unwrap();
    assert_eq!(same.t, 0.0);
    assert!((same.p - 1.0).abs() < 1e-12);
    let z = [0.0, 1e-3, -1e-3, 2e-3];
    let o = [1.0, 1.0 + 1e-3, 1.0 - 1e-3, 1.0 + 2e-3];
    assert!(welch_t_test(&z, &o).unwrap().p < 0.001);
    assert!(paired_t_test(&z, &o).unwrap().p < 0.001);
}

#[test]
fn report_from_records() {
    let records = vec![record(&[1, 2, 3], "the white whale"), record(&[1, 1, 1], "the the the")];
    let key = ConfigKey {
        model: "ngram".into(),
        strategy: Strategy::Nucleus,
        p: 0.7,
        lambda: 0.0,
        length_class: narrative_core::corpus::LengthClass::Medium,
    };
    let r = MetricReport::from_records(key.clone(), &records, &HashEmbedder::default()).unwrap();
    assert_eq!(r.records, 2);
    assert!((r.dist1 - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    assert!((r.dist2 - 0.75).abs() < 1e-12);
    assert!(r.sent_div.unwrap() > 0.0);
    assert!(MetricReport::from_records(key, &records[..1], &HashEmbedder::default()).unwrap().sent_div.is_none());
}

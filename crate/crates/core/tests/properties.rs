//! Property tests for the invariants of each module.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use narrative_core::corpus::{
    corpus_stats, filter_wp, format_example, parse_example, truncate_response, LengthClass, ProcessedExample, RawPair,
};
use narrative_core::decode::{
    generate, mmi_adjust, nucleus_filter, step_filter, top_k_filter, DecoderConfig, SampleRng, StepTrace, Termination,
};
use narrative_core::lm::{logsumexp, perplexity, rank_order, train_ngram_texts, LanguageModel, PerplexityScope, TokenDistribution, TokenId};
use narrative_core::metrics::{
    corpus_dist_n, dist_n, fleiss_kappa, sent_diversity_texts, spearman, welch_t_test, HashEmbedder, RatingMatrix,
};
use narrative_core::sweep::CdfSeries;
use narrative_core::tokenizer::{Tokenizer, WhitespaceTokenizer};
use narrative_core::GenerationRecord;

fn distribution() -> impl Strategy<Value = TokenDistribution> {
    prop::collection::vec(prop_oneof![8 => -8.0f64..8.0, 1 => Just(0.0), 1 => Just(f64::NEG_INFINITY)], 2..120)
        .prop_filter("needs a finite score", |s| s.iter().any(|x| x.is_finite()))
        .prop_map(|s| TokenDistribution::from_scores(s).unwrap())
}

fn mass(dist: &TokenDistribution, kept: &[TokenId]) -> f64 {
    kept.iter().map(|&t| dist.prob(t)).sum()
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["the", "sea", "whale", "ship", ",", ".", "Ahab", "and", "of", "white"]).prop_map(String::from)
}

fn text(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec((word(), prop::sample::select(vec![" ", " ", " ", "\n", "\n\n", "  "])), 1..max_words)
        .prop_map(|ws| ws.into_iter().map(|(w, s)| format!("{w}{s}")).collect::<String>())
}

fn record(tokens: &[TokenId]) -> GenerationRecord {
    GenerationRecord {
        schema_version: narrative_core::SCHEMA_VERSION,
        prompt: "p".into(),
        response: String::new(),
        config: DecoderConfig::default(),
        steps: tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| StepTrace { step_index: i, chosen_token: t, sampled_space_size: 1, chosen_logprob: 0.0 })
            .collect(),
        terminated_by: Termination::MaxTokens,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn filter_wp_is_idempotent(tags in prop::collection::vec(prop::sample::select(vec!["WP", "[ wp ]", "[WP]", "EU", "[ CW ]", "wp"]), 0..30)) {
        let pairs: Vec<RawPair> = tags.iter().map(|t| RawPair::new(*t, "a prompt", "a response")).collect();
        let once = filter_wp(pairs);
        prop_assert_eq!(filter_wp(once.clone()), once);
    }

    #[test]
    fn truncation_respects_caps_and_nests(response in text(1500)) {
        let tok = WhitespaceTokenizer;
        let cut: Vec<String> = [LengthClass::Small, LengthClass::Medium, LengthClass::Large]
            .iter()
            .map(|&c| {
                let r = truncate_response(&response, c, &tok).unwrap();
                assert!(tok.count(&r).unwrap() <= c.token_cap());
                r
            })
            .collect();
        prop_assert!(cut[1].starts_with(&cut[0]));
        prop_assert!(cut[2].starts_with(&cut[1]));
    }

    #[test]
    fn format_round_trips(prompt in text(20), response in text(60)) {
        let (prompt, response) = (prompt.trim().to_string(), response.trim().to_string());
        let formatted = format_example(&prompt, &response).unwrap();
        prop_assert_eq!(parse_example(&formatted).unwrap(), (prompt, response));
    }

    #[test]
    fn corpus_stats_total_matches_recount(counts in prop::collection::vec((1usize..50, 1usize..300), 1..40)) {
        let examples: Vec<ProcessedExample> = counts
            .iter()
            .map(|&(p, r)| ProcessedExample {
                text: String::new(),
                length_class: LengthClass::Large,
                prompt_token_count: p,
                response_token_count: r,
            })
            .collect();
        let stats = corpus_stats(&examples).unwrap();
        prop_assert_eq!(stats.total_tokens, counts.iter().map(|(p, r)| p + r).sum::<usize>());
        prop_assert!(stats.total_tokens >= stats.example_count);
        prop_assert!(stats.std_tokens_per_example >= 0.0);
    }

    #[test]
    fn nucleus_kept_set_is_smallest(d in distribution(), p in 0.0f64..=1.0) {
        let f = nucleus_filter(&d, p).unwrap();
        let lse = logsumexp(&f.kept.iter().map(|&t| f.dist.logprob(t)).collect::<Vec<_>>());
        prop_assert!(lse.abs() < 1e-9);
        if p > 0.0 && p < 1.0 && f.kept.len() > 1 {
            let lp = d.logprobs();
            let weakest = *f.kept.iter().max_by(|&&a, &&b| rank_order(lp, a, b)).unwrap();
            let rest: Vec<TokenId> = f.kept.iter().copied().filter(|&t| t != weakest).collect();
            prop_assert!(mass(&d, &rest) < p);
        }
        // Every kept token is at least as probable as every dropped one.
        let kept: BTreeSet<TokenId> = f.kept.iter().copied().collect();
        let min_kept = f.kept.iter().map(|&t| d.logprob(t)).fold(f64::INFINITY, f64::min);
        prop_assert!(d.support().iter().filter(|t| !kept.contains(t)).all(|&t| d.logprob(t) <= min_kept));
    }

    #[test]
    fn kept_size_is_monotone(d in distribution(), mut ps in prop::collection::vec(0.0f64..=1.0, 2..8)) {
        ps.sort_by(f64::total_cmp);
        let sizes: Vec<usize> = ps.iter().map(|&p| nucleus_filter(&d, p).unwrap().size()).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        let ks: Vec<usize> = (1..=d.len()).map(|k| top_k_filter(&d, k).unwrap().size()).collect();
        prop_assert!(ks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn greedy_matches_p0_and_k1(seed in any::<u64>()) {
        let mut rng = SampleRng::new(seed);
        let d = common::unique_argmax_distribution(&mut rng, 200);
        let u = rng.next_unit();
        let pick = |c: DecoderConfig| step_filter(&d, None, &c).unwrap().sample(u);
        let g = pick(DecoderConfig::greedy());
        prop_assert_eq!(g, d.argmax());
        prop_assert_eq!(pick(DecoderConfig::nucleus(0.0)), g);
        prop_assert_eq!(pick(DecoderConfig::top_k(1)), g);
    }

    #[test]
    fn mmi_argmax_ignores_constant_shift(
        pairs in prop::collection::vec((-6.0f64..0.0, -6.0f64..0.0), 2..60),
        shift in -5.0f64..5.0,
        lambda in 0.0f64..1.0,
    ) {
        let cond: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let uncond = TokenDistribution::from_scores(pairs.iter().map(|p| p.1).collect()).unwrap();
        let c1 = TokenDistribution::from_scores(cond.clone()).unwrap();
        let a = mmi_adjust(&c1, &uncond, lambda).unwrap();
        // from_scores renormalizes, so a shifted copy must give the same argmax.
        let c2 = TokenDistribution::from_scores(cond.iter().map(|x| x + shift).collect()).unwrap();
        prop_assert_eq!(mmi_adjust(&c2, &uncond, lambda).unwrap().argmax(), a.argmax());
        prop_assert_eq!(mmi_adjust(&c1, &uncond, 0.0).unwrap().argmax(), c1.argmax());
        prop_assert!(logsumexp(a.logprobs()).abs() < 1e-9);
    }

    #[test]
    fn dist_n_bounds(tokens in prop::collection::vec(0u8..6, 0..40), n in 1usize..4) {
        let v = dist_n(&tokens, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        if tokens.len() >= n {
            let grams: BTreeSet<&[u8]> = tokens.windows(n).collect();
            prop_assert_eq!(v == 1.0, grams.len() == tokens.len() + 1 - n);
        }
    }

    #[test]
    fn corpus_dist_n_is_permutation_invariant(
        responses in prop::collection::vec(prop::collection::vec(0u32..8, 1..20), 1..12),
        seed in any::<u64>(),
    ) {
        let mut records: Vec<GenerationRecord> = responses.iter().map(|r| record(r)).collect();
        let before = corpus_dist_n(&records, 2).unwrap();
        common::shuffle(&mut SampleRng::new(seed), &mut records);
        prop_assert!((corpus_dist_n(&records, 2).unwrap() - before).abs() < 1e-12);
    }

    #[test]
    fn sent_diversity_is_symmetric(texts in prop::collection::vec(text(12), 2..8), seed in any::<u64>()) {
        let e = HashEmbedder::default();
        let before = sent_diversity_texts(&texts, &e).unwrap();
        prop_assert!((0.0..=2.0).contains(&before));
        let mut shuffled = texts.clone();
        common::shuffle(&mut SampleRng::new(seed), &mut shuffled);
        prop_assert!((sent_diversity_texts(&shuffled, &e).unwrap() - before).abs() < 1e-12);
        let same = vec![texts[0].clone(); texts.len()];
        prop_assert!(sent_diversity_texts(&same, &e).unwrap().abs() < 1e-12);
    }

    #[test]
    fn fleiss_kappa_ignores_category_labels(
        items in prop::collection::vec(prop::collection::vec(1u32..=4, 4), 3..30),
        seed in any::<u64>(),
    ) {
        let m = RatingMatrix::from_scores(&items, 4).unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        common::shuffle(&mut SampleRng::new(seed), &mut order);
        let relabeled: Vec<Vec<u32>> = m.counts().iter().map(|row| order.iter().map(|&j| row[j]).collect()).collect();
        let m2 = RatingMatrix::new(relabeled).unwrap();
        match (fleiss_kappa(&m), fleiss_kappa(&m2)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        xy in prop::collection::vec((-50i32..50, -50i32..50), 3..30),
    ) {
        let x: Vec<f64> = xy.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = xy.iter().map(|p| f64::from(p.1)).collect();
        prop_assume!(x.iter().any(|&v| v != x[0]) && y.iter().any(|&v| v != y[0]));
        let base = spearman(&x, &y).unwrap();
        let fx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp()).collect();
        let fy: Vec<f64> = y.iter().map(|v| v.powi(3) - 7.0).collect();
        prop_assert_eq!(spearman(&fx, &y).unwrap().rho, base.rho);
        prop_assert_eq!(spearman(&x, &fy).unwrap().rho, base.rho);
    }

    #[test]
    fn welch_is_antisymmetric(
        a in prop::collection::vec(-100.0f64..100.0, 2..30),
        b in prop::collection::vec(-100.0f64..100.0, 2..30),
    ) {
        if let (Ok(ab), Ok(ba)) = (welch_t_test(&a, &b), welch_t_test(&b, &a)) {
            prop_assert_eq!(ab.t, -ba.t);
            prop_assert_eq!(ab.p, ba.p);
        }
    }

    #[test]
    fn cdf_is_well_formed(sizes in prop::collection::vec(1usize..500, 1..200)) {
        let c = CdfSeries::from_sizes(0.7, sizes).unwrap();
        prop_assert!(c.sorted_sizes.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.cumulative_fraction.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*c.cumulative_fraction.last().unwrap(), 1.0);
    }
}

/// Generation is slower, so fewer cases.
mod generation {
    use super::*;
    use std::sync::OnceLock;

    use narrative_core::lm::NGramLM;

    fn model() -> &'static NGramLM {
        static MODEL: OnceLock<NGramLM> = OnceLock::new();
        MODEL.get_or_init(|| {
            let examples = common::processed(common::fixture_pairs(), LengthClass::Small);
            let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
            train_ngram_texts(&texts, 3, 0.05, &Default::default()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generation_is_deterministic_and_bounded(seed in any::<u64>(), p in 0.0f64..=1.0, max in 1usize..60, lambda in 0.0f64..0.6) {
            let m = model();
            let config = DecoderConfig::nucleus(p).with_seed(seed).with_max_tokens(max).with_lambda(lambda);
            let a = generate(m, m, m, "the white whale", &config).unwrap();
            let b = generate(m, m, m, "the white whale", &config).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.steps.len() <= max);
            prop_assert!(a.steps.iter().all(|s| s.sampled_space_size >= 1 && s.sampled_space_size <= m.vocab_size()));
        }

        #[test]
        fn greedy_steps_record_size_one(max in 1usize..40) {
            let m = model();
            let r = generate(m, m, m, "the sea", &DecoderConfig::greedy().with_max_tokens(max)).unwrap();
            prop_assert!(r.sampled_space_sizes().all(|s| s == 1));
        }

        #[test]
        fn distributions_normalize(context in prop::collection::vec(0u32..200, 0..6)) {
            let m = model();
            let ctx: Vec<TokenId> = context.iter().map(|&c| c % m.vocab_size() as u32).collect();
            let d = m.next_distribution(&ctx).unwrap();
            prop_assert!(logsumexp(d.logprobs()).abs() < 1e-9);
            prop_assert!(d.logprobs().iter().all(|x| !x.is_nan() && *x <= 1e-9));
            prop_assert_eq!(d, m.next_distribution(&ctx).unwrap());
        }

        #[test]
        fn full_sequence_perplexity_ignores_order(seed in any::<u64>()) {
            let m = model();
            let mut examples = common::processed(common::fixture_pairs(), LengthClass::Small);
            examples.truncate(12);
            let before = perplexity(m, m, &examples, PerplexityScope::FullSequence).unwrap();
            common::shuffle(&mut SampleRng::new(seed), &mut examples);
            let after = perplexity(m, m, &examples, PerplexityScope::FullSequence).unwrap();
            prop_assert!((after - before).abs() <= 1e-9 * before);
        }
    }
}

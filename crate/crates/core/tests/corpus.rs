mod common;

use narrative_core::corpus::{
    corpus_stats, filter_wp, parse_example, preprocess, read_paired, truncate_response, ExampleFormat, LengthClass,
    RawPair,
};
use narrative_core::tokenizer::WhitespaceTokenizer;

#[test]
fn mixed_separator_fixture_splits_into_blocks() {
    let text = std::fs::read_to_string(common::data_path("tests/fixtures/mixed_breaks.txt")).unwrap();
    let tok = WhitespaceTokenizer;
    // Any run of newlines is one break, so the blocks are the non-empty lines.
    let blocks: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()).collect();
    assert_eq!(blocks[0], "First line of the story .");
    let small = truncate_response(&text, LengthClass::Small, &tok).unwrap();
    assert_eq!(small, "First line of the story .");
    let medium = truncate_response(&text, LengthClass::Medium, &tok).unwrap();
    let words: Vec<&str> = medium.split_whitespace().collect();
    let expected: Vec<&str> = blocks[..3].iter().flat_map(|b| b.split_whitespace()).collect();
    assert_eq!(words, expected);
    assert!(medium.ends_with("Third line after a blank line ."));
    let large = truncate_response(&text, LengthClass::Large, &tok).unwrap();
    assert_eq!(large, text.trim());
}

#[test]
fn short_two_block_response_survives_medium() {
    let tok = WhitespaceTokenizer;
    assert_eq!(truncate_response("A\n\nB", LengthClass::Medium, &tok).unwrap(), "A\n\nB");
    assert_eq!(truncate_response("A\n\nB\n\nC\n\nD", LengthClass::Small, &tok).unwrap(), "A");
    let long: Vec<String> = (0..120).map(|i| format!("w{i}")).collect();
    let cut = truncate_response(&long.join(" "), LengthClass::Small, &tok).unwrap();
    assert_eq!(cut, long[..100].join(" "));
}

#[test]
fn tag_filter_normalizes_spacing_and_case() {
    let pairs = vec![
        RawPair::new("[ WP ]", "a", "b"),
        RawPair::new("[ EU ]", "a", "b"),
        RawPair::new("[wp]", "a", "b"),
        RawPair::new("[ Wp ]", "a", "b"),
        RawPair::new("[ IP ]", "a", "b"),
    ];
    let kept: Vec<String> = filter_wp(pairs).into_iter().map(|p| p.tag).collect();
    assert_eq!(kept, ["[ WP ]", "[wp]", "[ Wp ]"]);
    assert!(filter_wp(Vec::new()).is_empty());
}

#[test]
fn stats_match_independent_recount() {
    let examples = common::processed(common::fixture_pairs(), LengthClass::Medium);
    let stats = corpus_stats(&examples).unwrap();
    // Recount from the formatted text alone.
    let counts: Vec<f64> = examples
        .iter()
        .map(|e| {
            let (p, r) = parse_example(&e.text).unwrap();
            (p.split_whitespace().count() + r.split_whitespace().count()) as f64
        })
        .collect();
    let n = counts.len() as f64;
    let total: f64 = counts.iter().sum();
    let mean = total / n;
    let std = (counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n).sqrt();
    assert_eq!(stats.example_count, counts.len());
    assert_eq!(stats.total_tokens as f64, total);
    assert!((stats.mean_tokens_per_example - mean).abs() < 1e-9);
    assert!((stats.std_tokens_per_example - std).abs() < 1e-9);
}

#[test]
fn processed_examples_have_one_marker_each_in_order() {
    let fmt = ExampleFormat::default();
    for class in LengthClass::ALL {
        for ex in common::processed(common::fixture_pairs(), class) {
            assert!(ex.text.starts_with(&fmt.start) && ex.text.ends_with(&fmt.end));
            assert_eq!(ex.text.matches(&fmt.prompt_marker).count(), 1);
            assert_eq!(ex.text.matches(&fmt.response_marker).count(), 1);
            assert!(ex.text.find(&fmt.prompt_marker) < ex.text.find(&fmt.response_marker));
            assert!(ex.response_token_count <= class.token_cap());
        }
    }
}

#[test]
fn paired_layout_matches_jsonl_layout() {
    let source = "[ WP ] You wake up .\n[ EU ] Other .\n";
    let target = "I woke . <newline> <newline> Then slept .\nSomething .\n";
    let pairs = read_paired(source.as_bytes(), target.as_bytes()).unwrap();
    let out = preprocess(pairs, LengthClass::Small, &WhitespaceTokenizer, &ExampleFormat::default()).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(parse_example(&out[0].text).unwrap(), ("You wake up .".into(), "I woke .".into()));
}

use std::path::PathBuf;

use serde_json::json;

use narrative_core::corpus::{corpus_stats, preprocess as run_preprocess, read_jsonl, read_paired, ExampleFormat, ProcessedExample};
use narrative_core::lm::{perplexity, train_ngram, PerplexityScope};
use narrative_core::sweep::write_atomic;
use narrative_core::tokenizer::{Tokenizer, WhitespaceTokenizer};

use super::{open, read_json_lines, write_json_lines};
use crate::engine::bridge_tokenizer;
use crate::error::CliError;
use crate::manifest::{file_digest, ManifestBuilder};
use crate::{InputFormat, PreprocessArgs, TokenizerKind, TrainArgs};

pub fn preprocess(a: PreprocessArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start();
    let (pairs, inputs) = match a.format {
        InputFormat::Jsonl => (read_jsonl(open(&a.input)?)?, vec![a.input.clone()]),
        InputFormat::Paired => {
            let target = a.input.with_extension("wp_target");
            (read_paired(open(&a.input)?, open(&target)?)?, vec![a.input.clone(), target])
        }
    };
    let tokenizer: Box<dyn Tokenizer> = match a.tokenizer {
        TokenizerKind::Whitespace => Box::new(WhitespaceTokenizer),
        TokenizerKind::Bridge => bridge_tokenizer(&a.bridge)?,
    };
    let total = pairs.len();
    let examples = run_preprocess(pairs, a.class, tokenizer.as_ref(), &ExampleFormat::default())?;
    if examples.is_empty() {
        return Err(CliError::Data(format!("no WP pairs survived preprocessing out of {total}")));
    }
    write_json_lines(&a.out, &examples)?;
    eprintln!("kept {} of {total} pairs", examples.len());
    if a.stats {
        println!("{}", serde_json::to_string_pretty(&corpus_stats(&examples)?)?);
    }
    let digests = inputs.iter().map(|p| file_digest(p)).collect::<Result<Vec<_>, _>>()?;
    let config = json!({
        "command": "preprocess",
        "input_sha256": digests,
        "format": format!("{:?}", a.format).to_lowercase(),
        "length_class": a.class,
        "tokenizer": format!("{:?}", a.tokenizer).to_lowercase(),
    });
    manifest.finish(config, None, vec![a.out], None)?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start();
    let examples: Vec<ProcessedExample> = read_json_lines(&a.input)?;
    let model = train_ngram(&examples, a.order, a.alpha)?;
    let mut buf = Vec::new();
    model.save(&mut buf)?;
    write_atomic(&a.out, &buf).map_err(CliError::file(&a.out))?;
    eprintln!("trained order-{} model, {} tokens in vocabulary", a.order, model.vocab().len());
    let mut config = json!({
        "command": "train",
        "input_sha256": file_digest(&a.input)?,
        "order": a.order,
        "alpha": a.alpha,
    });
    if let Some(path) = &a.heldout {
        let heldout: Vec<ProcessedExample> = read_json_lines(path)?;
        let scope = PerplexityScope::from(a.scope);
        let ppl = perplexity(&model, &model, &heldout, scope)?;
        println!("{}", json!({ "perplexity": ppl, "examples": heldout.len(), "scope": scope }));
        config["heldout_sha256"] = file_digest(path)?.into();
        config["scope"] = serde_json::to_value(scope)?;
    }
    let outputs: Vec<PathBuf> = vec![a.out];
    manifest.finish(config, None, outputs, None)?;
    Ok(())
}

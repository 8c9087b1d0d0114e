//! Decoding and evaluation toolkit for prompt-conditioned story generation.
//!
//! The crate is organised around the data flow of a decoding experiment:
//!
//! * [`corpus`] turns WritingPrompts-style prompt/response pairs into the
//!   small/medium/large training strings.
//! * [`lm`] defines the [`lm::LanguageModel`] interface plus the desk-scale
//!   models (uniform, lookup table, add-α n-gram) and perplexity.
//! * [`decode`] holds greedy/top-k/nucleus/random sampling, temperature and the
//!   anti-LM mutual-information adjustment, and the generation loop.
//! * [`metrics`] computes dist-n, embedding diversity, Fleiss' κ, Spearman's ρ
//!   and t-tests.
//! * [`sweep`] runs the p and λ grids and the sampled-space CDF.
//! * [`bridge`] is the client side of the line-delimited JSON protocol used to
//!   attach a real model process.
//!
//! ```
//! use std::fs::File;
//! use std::io::BufReader;
//!
//! use narrative_core::corpus::{preprocess, read_jsonl, ExampleFormat, LengthClass};
//! use narrative_core::lm::train_ngram;
//! use narrative_core::tokenizer::WhitespaceTokenizer;
//! use narrative_core::{generate, DecoderConfig};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! # let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/pairs50.jsonl");
//! let pairs = read_jsonl(BufReader::new(File::open(path)?))?;
//! let examples = preprocess(pairs, LengthClass::Medium, &WhitespaceTokenizer, &ExampleFormat::default())?;
//! let model = train_ngram(&examples, 3, 3e-5)?;
//!
//! let config = DecoderConfig::nucleus(0.7).with_seed(42).with_max_tokens(40);
//! let record = generate(&model, &model, &model, "The whale surfaces at dawn .", &config)?;
//! assert!(record.steps.len() <= 40);
//! println!("{}", record.response);
//! # Ok(())
//! # }
//! ```

pub mod bridge;
pub mod corpus;
pub mod decode;
pub mod lm;
pub mod metrics;
pub mod sweep;
pub mod tokenizer;

pub use decode::{generate, DecoderConfig, GenerationRecord, StepTrace, Strategy};
pub use lm::{LanguageModel, TokenDistribution, TokenId};

/// Version stamped into every JSON-lines and CSV artifact.
pub const SCHEMA_VERSION: u32 = 1;

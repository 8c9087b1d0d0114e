//! Wire types for the newline-delimited JSON model protocol.
//!
//! Every line is one JSON object. Requests carry `id`, `method` and
//! `params`; responses echo the `id` with `ok` and either `result` or
//! `error`. `docs/protocol.md` has the full schema.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::lm::TokenId;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Handshake,
    VocabInfo,
    Encode,
    Decode,
    NextLogprobs,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub method: Method,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ProtocolError,
    VersionMismatch,
    InvalidParams,
    ContextTooLong,
    ModelFailure,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("unknown"))
    }
}

/// `id` is null only when the request line could not be parsed at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Response {
    pub fn success(id: u64, result: Value) -> Self {
        Self { id: Some(id), ok: true, result: Some(result), error: None }
    }

    pub fn failure(id: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            id,
            ok: false,
            result: None,
            error: Some(ErrorBody { code, message: message.into() }),
        }
    }
}

/// Ids of the four format markers in the served vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokenIds {
    pub start: TokenId,
    pub end: TokenId,
    pub prompt: TokenId,
    pub response: TokenId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshakeParams {
    pub protocol_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshakeResult {
    pub protocol_version: u32,
    pub vocab_size: usize,
    pub model_name: String,
    pub special_tokens: SpecialTokenIds,
    pub max_context: usize,
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabInfoResult {
    pub vocab_size: usize,
    pub special_tokens: SpecialTokenIds,
    pub max_context: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextParams {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsParams {
    pub ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResult {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LogprobMode {
    Full,
    Sparse { top_m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextLogprobsParams {
    pub context: Vec<TokenId>,
    #[serde(flatten)]
    pub mode: LogprobMode,
}

/// Log-probabilities travel as JSON numbers; `null` stands for `-inf`,
/// which JSON cannot encode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextLogprobsResult {
    Full {
        logprobs: Vec<Option<f64>>,
    },
    Sparse {
        /// `(token, logprob)` in descending logprob order.
        pairs: Vec<(TokenId, f64)>,
        /// Log of the probability mass outside `pairs`.
        tail_logmass: Option<f64>,
    },
}

pub fn encode_logprob(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn decode_logprob(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NEG_INFINITY)
}

//! Protocol conformance checks that any bridge server must pass, mock or
//! real. Used by the test suite and by `narrative bridge-check`.

use serde_json::json;

use super::client::Connection;
use super::mock::transcript_request;
use super::protocol::*;
use super::{BridgeClient, BridgeError, Transport};
use crate::lm::{logsumexp, TokenId};

const FULL_TOLERANCE: f64 = 1e-4;
const SPARSE_TOLERANCE: f64 = 1e-5;
const REPEAT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name, passed, detail: detail.into() }
    }

    fn from_result(name: &'static str, r: Result<String, String>) -> Self {
        match r {
            Ok(d) => Self::new(name, true, d),
            Err(d) => Self::new(name, false, d),
        }
    }
}

fn error_code(resp: &Response) -> Option<ErrorCode> {
    resp.error.as_ref().map(|e| e.code)
}

fn expect_error(resp: Result<Response, BridgeError>, id: Option<u64>, code: ErrorCode) -> Result<String, String> {
    let resp = resp.map_err(|e| e.to_string())?;
    if resp.ok || resp.id != id || error_code(&resp) != Some(code) {
        return Err(format!("expected {code} with id {id:?}, got {resp:?}"));
    }
    Ok(format!("{code} as required"))
}

fn handshake_line(id: u64, version: u32) -> String {
    transcript_request(id, Method::Handshake, json!({ "protocol_version": version }))
}

/// Ordering and framing rules, exercised on fresh raw connections.
fn session_rules(transport: &Transport) -> Result<Vec<Check>, BridgeError> {
    let mut out = Vec::new();

    let mut c = Connection::open(transport)?;
    let before = c.exchange_line(&transcript_request(1, Method::VocabInfo, json!({})));
    out.push(Check::from_result("handshake-first", expect_error(before, Some(1), ErrorCode::ProtocolError)));

    let mut c = Connection::open(transport)?;
    let first = c.exchange_line(&handshake_line(1, PROTOCOL_VERSION))?;
    let detail = match &first.error {
        Some(e) => format!("rejected: {}", e.message),
        None => format!("response id {:?}", first.id),
    };
    out.push(Check::new("handshake-accepted", first.ok && first.id == Some(1), detail));
    let twice = c.exchange_line(&handshake_line(2, PROTOCOL_VERSION));
    out.push(Check::from_result("double-handshake", expect_error(twice, Some(2), ErrorCode::ProtocolError)));
    let stale = c.exchange_line(&transcript_request(2, Method::VocabInfo, json!({})));
    out.push(Check::from_result("ids-increase", expect_error(stale, Some(2), ErrorCode::ProtocolError)));
    let garbage = c.exchange_line("this is not json");
    out.push(Check::from_result("unparseable-line", expect_error(garbage, None, ErrorCode::ProtocolError)));
    let bad_params = c.exchange_line(&transcript_request(5, Method::Encode, json!({ "txt": 3 })));
    out.push(Check::from_result("invalid-params", expect_error(bad_params, Some(5), ErrorCode::InvalidParams)));

    let mut c = Connection::open(transport)?;
    let wrong = c.exchange_line(&handshake_line(1, PROTOCOL_VERSION + 998));
    out.push(Check::from_result("version-mismatch", expect_error(wrong, Some(1), ErrorCode::VersionMismatch)));
    Ok(out)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

fn model_checks(client: &BridgeClient) -> Vec<Check> {
    let info = client.info().clone();
    let v = info.vocab_size;
    let mut out = Vec::new();

    let s = info.special_tokens;
    let specials_ok = [s.start, s.end, s.prompt, s.response].iter().all(|&t| (t as usize) < v);
    out.push(Check::new(
        "handshake-metadata",
        info.protocol_version == PROTOCOL_VERSION && v >= 2 && specials_ok,
        format!("model {} with |V| = {v}, max_context {}", info.model_name, info.max_context),
    ));

    out.push(Check::from_result(
        "vocab-info",
        client.vocab_info().map_err(|e| e.to_string()).and_then(|vi| {
            if vi.vocab_size == v && vi.special_tokens == s && vi.max_context == info.max_context {
                Ok("matches handshake".into())
            } else {
                Err(format!("{vi:?} disagrees with handshake"))
            }
        }),
    ));

    out.push(Check::from_result(
        "encode-decode-round-trip",
        client
            .encode_text("hello world")
            .and_then(|ids| client.decode_ids(&ids))
            .map_err(|e| e.to_string())
            .and_then(|t| if t == "hello world" { Ok(t) } else { Err(format!("got {t:?}")) }),
    ));

    out.push(Check::from_result(
        "encode-empty",
        client.encode_text("").map_err(|e| e.to_string()).and_then(|ids| {
            if ids.is_empty() || ids == [s.start] {
                Ok(format!("{ids:?}"))
            } else {
                Err(format!("got {ids:?}"))
            }
        }),
    ));

    let contexts: Vec<Vec<TokenId>> = vec![vec![], vec![s.start, s.response], vec![s.start, s.prompt, (v as TokenId) - 1]];
    let mut full = Vec::new();
    let mut normalized = Ok(String::new());
    for ctx in &contexts {
        match client.full_logprobs(ctx) {
            Ok(d) => {
                let lse = logsumexp(d.logprobs());
                if lse.abs() > FULL_TOLERANCE {
                    normalized = Err(format!("logsumexp {lse} for context {ctx:?}"));
                }
                full.push(d.into_logprobs());
            }
            Err(e) => {
                normalized = Err(e.to_string());
                break;
            }
        }
    }
    let full_ok = normalized.is_ok();
    out.push(Check::from_result(
        "full-normalization",
        normalized.map(|_| format!("{} contexts within {FULL_TOLERANCE}", contexts.len())),
    ));
    if !full_ok {
        return out;
    }

    let mut repeat = Ok(String::new());
    for (ctx, first) in contexts.iter().zip(&full) {
        match client.full_logprobs(ctx) {
            Ok(d) if max_abs_diff(first, d.logprobs()) <= REPEAT_TOLERANCE => {}
            Ok(d) => repeat = Err(format!("repeat differs by {}", max_abs_diff(first, d.logprobs()))),
            Err(e) => repeat = Err(e.to_string()),
        }
    }
    out.push(Check::from_result("repeatable", repeat.map(|_| format!("within {REPEAT_TOLERANCE}"))));

    let top_m = 50.min(v);
    let mut sparse = Ok(String::new());
    for (ctx, lp) in contexts.iter().zip(&full) {
        let (pairs, tail) = match client.sparse_logprobs(ctx, top_m) {
            Ok(x) => x,
            Err(e) => {
                sparse = Err(e.to_string());
                break;
            }
        };
        let mut parts: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        parts.push(tail);
        let lse = logsumexp(&parts);
        let worst = pairs.iter().map(|&(t, l)| (l - lp[t as usize]).abs()).fold(0.0, f64::max);
        if pairs.len() != top_m || lse.abs() > FULL_TOLERANCE || worst > SPARSE_TOLERANCE {
            sparse = Err(format!("{} pairs, recombined logsumexp {lse}, max deviation from full {worst}", pairs.len()));
            break;
        }
    }
    out.push(Check::from_result(
        "sparse-consistency",
        sparse.map(|_| format!("top {top_m} pairs match full mode within {SPARSE_TOLERANCE}")),
    ));

    if info.max_context < 1 << 20 {
        let long = vec![s.start; info.max_context + 1];
        let r = match client.full_logprobs(&long) {
            Err(BridgeError::ContextTooLong(_)) => Ok("context_too_long as required".into()),
            other => Err(format!("expected context_too_long, got {other:?}")),
        };
        out.push(Check::from_result("context-window", r));
    }

    out.push(Check::from_result(
        "embed-deterministic",
        match (client.embed_text("a"), client.embed_text("a")) {
            (Ok(a), Ok(b)) if a == b && a.len() == info.embedding_dim => Ok(format!("dimension {}", a.len())),
            (Ok(a), Ok(b)) => Err(format!("lengths {} and {}, equal: {}", a.len(), b.len(), a == b)),
            (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
        },
    ));
    out
}

/// Runs every check against the server behind `transport`. Only a failure to
/// reach the server at all is an `Err`.
pub fn run_conformance(transport: &Transport) -> Result<Vec<Check>, BridgeError> {
    let mut out = session_rules(transport)?;
    let client = BridgeClient::connect(transport.clone())?;
    out.extend(model_checks(&client));
    Ok(out)
}

//! Fixture-driven protocol server with no ML runtime.
//!
//! The served model has a 32-token vocabulary. For an empty context it
//! returns a Zipf unigram, `P(i) ∝ 1/(i+1)`; for a non-empty context the
//! same weights are rotated so the last context token takes rank 0.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use super::protocol::*;
use super::Connector;
use crate::lm::{logsumexp, rank_order, TokenId};
use crate::metrics::{Embedder, HashEmbedder};

pub const MOCK_MODEL_NAME: &str = "mock-zipf-32";
pub const MOCK_MAX_CONTEXT: usize = 64;
pub const MOCK_EMBEDDING_DIM: usize = 16;

pub const MOCK_VOCAB: [&str; 32] = [
    "<|startoftext|>", "<|endoftext|>", "[WP]", "[RESPONSE]", "<unk>", "the", "a", "hello", "world", "whale",
    "sea", "ship", "captain", "storm", "night", "and", "of", "to", "was", "he", "she", "it", "dark", "old",
    "sailed", "saw", "said", ".", ",", "?", "!", "\"",
];

const UNK: TokenId = 4;

#[derive(Debug, Clone)]
pub struct MockServer {
    vocab: Vec<String>,
    embedder: HashEmbedder,
    protocol_version: u32,
}

impl Default for MockServer {
    fn default() -> Self {
        Self {
            vocab: MOCK_VOCAB.iter().map(|s| s.to_string()).collect(),
            embedder: HashEmbedder::new(MOCK_EMBEDDING_DIM, 0),
            protocol_version: PROTOCOL_VERSION,
        }
    }
}

struct Session {
    handshaken: bool,
    last_id: Option<u64>,
}

fn params<T: DeserializeOwned>(v: Value) -> Result<T, (ErrorCode, String)> {
    serde_json::from_value(v).map_err(|e| (ErrorCode::InvalidParams, e.to_string()))
}

impl MockServer {
    /// A server that advertises another protocol version, for mismatch tests.
    pub fn with_protocol_version(version: u32) -> Self {
        Self { protocol_version: version, ..Self::default() }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn special_tokens(&self) -> SpecialTokenIds {
        SpecialTokenIds { start: 0, end: 1, prompt: 2, response: 3 }
    }

    pub fn handshake_result(&self) -> HandshakeResult {
        HandshakeResult {
            protocol_version: self.protocol_version,
            vocab_size: self.vocab.len(),
            model_name: MOCK_MODEL_NAME.to_string(),
            special_tokens: self.special_tokens(),
            max_context: MOCK_MAX_CONTEXT,
            embedding_dim: MOCK_EMBEDDING_DIM,
        }
    }

    /// The served next-token log-probabilities.
    pub fn logprobs(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.vocab.len();
        let shift = context.last().map_or(0, |&t| t as usize);
        let weights: Vec<f64> = (0..v).map(|i| -(((i + v - shift) % v + 1) as f64).ln()).collect();
        let norm = logsumexp(&weights);
        weights.into_iter().map(|w| w - norm).collect()
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<(), (ErrorCode, String)> {
        match ids.iter().find(|&&t| t as usize >= self.vocab.len()) {
            Some(t) => Err((ErrorCode::InvalidParams, format!("token id {t} out of range"))),
            None => Ok(()),
        }
    }

    fn dispatch(&self, session: &mut Session, req: Request) -> Result<Value, (ErrorCode, String)> {
        if let Some(last) = session.last_id {
            if req.id <= last {
                return Err((ErrorCode::ProtocolError, format!("id {} not above previous id {last}", req.id)));
            }
        }
        session.last_id = Some(req.id);
        match (req.method, session.handshaken) {
            (Method::Handshake, true) => return Err((ErrorCode::ProtocolError, "handshake already done".into())),
            (Method::Handshake, false) => {
                let p: HandshakeParams = params(req.params)?;
                if p.protocol_version != self.protocol_version {
                    return Err((
                        ErrorCode::VersionMismatch,
                        format!("server speaks {}, client asked for {}", self.protocol_version, p.protocol_version),
                    ));
                }
                session.handshaken = true;
                return Ok(serde_json::to_value(self.handshake_result()).expect("serializable"));
            }
            (_, false) => return Err((ErrorCode::ProtocolError, "handshake must come first".into())),
            _ => {}
        }
        let out = match req.method {
            Method::Handshake => unreachable!("handled above"),
            Method::VocabInfo => serde_json::to_value(VocabInfoResult {
                vocab_size: self.vocab.len(),
                special_tokens: self.special_tokens(),
                max_context: MOCK_MAX_CONTEXT,
            }),
            Method::Encode => {
                let p: TextParams = params(req.params)?;
                let ids: Vec<TokenId> = p
                    .text
                    .split_whitespace()
                    .map(|w| self.vocab.iter().position(|t| t == w).map_or(UNK, |i| i as TokenId))
                    .collect();
                serde_json::to_value(EncodeResult { ids })
            }
            Method::Decode => {
                let p: IdsParams = params(req.params)?;
                self.check_ids(&p.ids)?;
                let words: Vec<&str> = p.ids.iter().map(|&i| self.vocab[i as usize].as_str()).collect();
                serde_json::to_value(DecodeResult { text: words.join(" ") })
            }
            Method::NextLogprobs => {
                let p: NextLogprobsParams = params(req.params)?;
                self.check_ids(&p.context)?;
                if p.context.len() > MOCK_MAX_CONTEXT {
                    return Err((
                        ErrorCode::ContextTooLong,
                        format!("{} tokens exceed the window of {MOCK_MAX_CONTEXT}", p.context.len()),
                    ));
                }
                let lp = self.logprobs(&p.context);
                let result = match p.mode {
                    LogprobMode::Full => NextLogprobsResult::Full {
                        logprobs: lp.iter().map(|&x| encode_logprob(x)).collect(),
                    },
                    LogprobMode::Sparse { top_m } => {
                        if top_m == 0 {
                            return Err((ErrorCode::InvalidParams, "top_m must be at least 1".into()));
                        }
                        let mut ids: Vec<TokenId> = (0..lp.len() as TokenId).collect();
                        ids.sort_by(|&a, &b| rank_order(&lp, a, b));
                        let m = top_m.min(ids.len());
                        let rest: Vec<f64> = ids[m..].iter().map(|&t| lp[t as usize]).collect();
                        NextLogprobsResult::Sparse {
                            pairs: ids[..m].iter().map(|&t| (t, lp[t as usize])).collect(),
                            tail_logmass: encode_logprob(logsumexp(&rest)),
                        }
                    }
                };
                serde_json::to_value(result)
            }
            Method::Embed => {
                let p: TextParams = params(req.params)?;
                let vector = self.embedder.embed(&p.text).map_err(|e| (ErrorCode::ModelFailure, e.to_string()))?;
                serde_json::to_value(EmbedResult { vector })
            }
        };
        out.map_err(|e| (ErrorCode::ModelFailure, e.to_string()))
    }

    /// Handles one request line and returns the response.
    fn respond(&self, session: &mut Session, line: &str) -> Response {
        let req: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<Value>(line).ok().and_then(|v| v.get("id").and_then(Value::as_u64));
                return Response::failure(id, ErrorCode::ProtocolError, format!("bad request: {e}"));
            }
        };
        let id = req.id;
        match self.dispatch(session, req) {
            Ok(result) => Response::success(id, result),
            Err((code, message)) => Response::failure(Some(id), code, message),
        }
    }

    /// Serves one connection until the reader hits end of input.
    pub fn serve<R: BufRead, W: Write>(&self, reader: R, mut writer: W) -> io::Result<()> {
        let mut session = Session { handshaken: false, last_id: None };
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let resp = self.respond(&mut session, &line);
            serde_json::to_writer(&mut writer, &resp)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(())
    }

    /// Accepts TCP connections forever, one thread per connection.
    pub fn serve_tcp(self: Arc<Self>, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let server = Arc::clone(&self);
            std::thread::spawn(move || {
                let reader = BufReader::new(stream.try_clone()?);
                server.serve(reader, stream)
            });
        }
        Ok(())
    }

    /// Connector that runs each new connection on a thread over in-process
    /// pipes.
    pub fn connector(self) -> Connector {
        let server = Arc::new(self);
        Arc::new(move || {
            let (req_r, req_w) = io::pipe()?;
            let (resp_r, resp_w) = io::pipe()?;
            let server = Arc::clone(&server);
            std::thread::spawn(move || server.serve(BufReader::new(req_r), resp_w));
            Ok((Box::new(resp_r) as Box<dyn io::Read + Send>, Box::new(req_w) as Box<dyn Write + Send>))
        })
    }
}

/// Requests of a fresh session, for golden transcripts.
pub fn transcript_request(id: u64, method: Method, params: Value) -> String {
    serde_json::to_string(&json!({"id": id, "method": method, "params": params})).expect("serializable")
}

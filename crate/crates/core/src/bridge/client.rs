use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::*;
use super::BridgeError;
use crate::lm::{logsumexp, Codec, LanguageModel, LmError, SpecialTokens, TokenDistribution, TokenId};
use crate::metrics::{Embedder, MetricsError};
use crate::tokenizer::{Tokenizer, TokenizerError};

/// Starting `top_m` for sparse requests; doubled until the mass target is met.
pub const DEFAULT_TOP_M: usize = 64;

/// Mass a sparse response must cover before it stands in for the full vector.
pub const SPARSE_MIN_MASS: f64 = 0.9999;

/// Full-mode vectors must normalize to within this.
const FULL_TOLERANCE: f64 = 1e-4;

pub type Connector = Arc<dyn Fn() -> std::io::Result<(Box<dyn Read + Send>, Box<dyn Write + Send>)> + Send + Sync>;

#[derive(Clone)]
pub enum Transport {
    /// Spawn a server process and talk over its stdin/stdout.
    Stdio { program: String, args: Vec<String> },
    /// Connect to a listening server.
    Tcp(String),
    /// Any other byte stream pair, e.g. [`super::MockServer::connector`].
    Custom(Connector),
}

impl std::fmt::Debug for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Stdio { program, args } => f.debug_struct("Stdio").field("program", program).field("args", args).finish(),
            Self::Tcp(addr) => f.debug_tuple("Tcp").field(addr).finish(),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

pub(super) struct Connection {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Box<dyn Write + Send>,
    next_id: u64,
    child: Option<Child>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Connection {
    pub(super) fn open(transport: &Transport) -> Result<Self, BridgeError> {
        let (reader, writer, child): (Box<dyn Read + Send>, Box<dyn Write + Send>, _) = match transport {
            Transport::Stdio { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|source| BridgeError::Spawn { program: program.clone(), source })?;
                let stdin = child.stdin.take().expect("piped");
                let stdout = child.stdout.take().expect("piped");
                (Box::new(stdout), Box::new(stdin), Some(child))
            }
            Transport::Tcp(addr) => {
                let stream = TcpStream::connect(addr)?;
                stream.set_nodelay(true)?;
                (Box::new(stream.try_clone()?), Box::new(stream), None)
            }
            Transport::Custom(connect) => {
                let (r, w) = connect()?;
                (r, w, None)
            }
        };
        Ok(Self { reader: BufReader::new(reader), writer, next_id: 1, child })
    }

    /// Sends one raw line and reads one raw response, without id checks.
    pub(super) fn exchange_line(&mut self, line: &str) -> Result<Response, BridgeError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut buf = String::new();
        if self.reader.read_line(&mut buf)? == 0 {
            return Err(BridgeError::Closed);
        }
        Ok(serde_json::from_str(&buf)?)
    }

    fn call<P: Serialize, R: DeserializeOwned>(&mut self, method: Method, params: &P) -> Result<R, BridgeError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request { id, method, params: serde_json::to_value(params)? };
        let mut line = serde_json::to_vec(&req)?;
        line.push(b'\n');
        self.writer.write_all(&line)?;
        self.writer.flush()?;
        let mut buf = String::new();
        if self.reader.read_line(&mut buf)? == 0 {
            return Err(BridgeError::Closed);
        }
        let resp: Response = serde_json::from_str(&buf)?;
        if resp.id != Some(id) {
            return Err(BridgeError::Protocol(format!("response id {:?} for request {id}", resp.id)));
        }
        if !resp.ok {
            let e = resp
                .error
                .ok_or_else(|| BridgeError::Protocol("failure response without error body".into()))?;
            return Err(match e.code {
                ErrorCode::ContextTooLong => BridgeError::ContextTooLong(e.message),
                ErrorCode::ModelFailure => BridgeError::ModelFailure(e.message),
                code => BridgeError::Remote { code, message: e.message },
            });
        }
        let result = resp
            .result
            .ok_or_else(|| BridgeError::Protocol("success response without result".into()))?;
        Ok(serde_json::from_value(result)?)
    }

    fn handshake(&mut self) -> Result<HandshakeResult, BridgeError> {
        let info: HandshakeResult = self
            .call(Method::Handshake, &HandshakeParams { protocol_version: PROTOCOL_VERSION })
            .map_err(|e| match e {
                BridgeError::Remote { code: ErrorCode::VersionMismatch, message } => {
                    BridgeError::Protocol(format!("server refused version {PROTOCOL_VERSION}: {message}"))
                }
                other => other,
            })?;
        if info.protocol_version != PROTOCOL_VERSION {
            return Err(BridgeError::VersionMismatch { expected: PROTOCOL_VERSION, got: info.protocol_version });
        }
        if info.vocab_size < 2 {
            return Err(BridgeError::Protocol(format!("vocab_size {} is too small", info.vocab_size)));
        }
        Ok(info)
    }
}

/// Pooled connections to one bridge server. Every connection performs its
/// own handshake; requests on a connection are strictly sequential, and
/// concurrent callers get separate connections.
pub struct BridgeClient {
    transport: Transport,
    info: HandshakeResult,
    pool: Mutex<Vec<Connection>>,
    initial_top_m: usize,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("transport", &self.transport)
            .field("info", &self.info)
            .finish_non_exhaustive()
    }
}

impl BridgeClient {
    pub fn connect(transport: Transport) -> Result<Self, BridgeError> {
        let mut conn = Connection::open(&transport)?;
        let info = conn.handshake()?;
        Ok(Self {
            transport,
            info,
            pool: Mutex::new(vec![conn]),
            initial_top_m: DEFAULT_TOP_M,
        })
    }

    pub fn with_initial_top_m(mut self, top_m: usize) -> Self {
        self.initial_top_m = top_m.max(1);
        self
    }

    pub fn info(&self) -> &HandshakeResult {
        &self.info
    }

    fn with_connection<T>(&self, f: impl FnOnce(&mut Connection) -> Result<T, BridgeError>) -> Result<T, BridgeError> {
        let pooled = self.pool.lock().expect("pool lock").pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => {
                let mut c = Connection::open(&self.transport)?;
                let info = c.handshake()?;
                if info != self.info {
                    return Err(BridgeError::Protocol("servers in the pool disagree on handshake metadata".into()));
                }
                c
            }
        };
        let out = f(&mut conn);
        // A connection that failed at the transport level may be mid-line;
        // only keep it after clean exchanges or server-side errors.
        let reusable = match &out {
            Ok(_) => true,
            Err(e) => matches!(
                e,
                BridgeError::Remote { .. } | BridgeError::ContextTooLong(_) | BridgeError::ModelFailure(_)
            ),
        };
        if reusable {
            self.pool.lock().expect("pool lock").push(conn);
        }
        out
    }

    pub fn vocab_info(&self) -> Result<VocabInfoResult, BridgeError> {
        self.with_connection(|c| c.call(Method::VocabInfo, &serde_json::json!({})))
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<TokenId>, BridgeError> {
        let r: EncodeResult = self.with_connection(|c| c.call(Method::Encode, &TextParams { text: text.into() }))?;
        Ok(r.ids)
    }

    pub fn decode_ids(&self, ids: &[TokenId]) -> Result<String, BridgeError> {
        let r: DecodeResult = self.with_connection(|c| c.call(Method::Decode, &IdsParams { ids: ids.to_vec() }))?;
        Ok(r.text)
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f64>, BridgeError> {
        let r: EmbedResult = self.with_connection(|c| c.call(Method::Embed, &TextParams { text: text.into() }))?;
        if r.vector.len() != self.info.embedding_dim || r.vector.iter().any(|x| !x.is_finite()) {
            return Err(BridgeError::ModelFailure(format!(
                "embedding of length {} (expected {}) or with non-finite entries",
                r.vector.len(),
                self.info.embedding_dim
            )));
        }
        Ok(r.vector)
    }

    fn raw_logprobs(&self, context: &[TokenId], mode: LogprobMode) -> Result<NextLogprobsResult, BridgeError> {
        let params = NextLogprobsParams { context: context.to_vec(), mode };
        self.with_connection(|c| c.call(Method::NextLogprobs, &params))
    }

    /// Full next-token vector, checked for length and normalization.
    pub fn full_logprobs(&self, context: &[TokenId]) -> Result<TokenDistribution, BridgeError> {
        let NextLogprobsResult::Full { logprobs } = self.raw_logprobs(context, LogprobMode::Full)? else {
            return Err(BridgeError::Protocol("sparse result for a full request".into()));
        };
        if logprobs.len() != self.info.vocab_size {
            return Err(BridgeError::ModelFailure(format!(
                "{} logprobs for a vocabulary of {}",
                logprobs.len(),
                self.info.vocab_size
            )));
        }
        let lp: Vec<f64> = logprobs.into_iter().map(decode_logprob).collect();
        let lse = logsumexp(&lp);
        if lse.is_nan() || lse.abs() > FULL_TOLERANCE {
            return Err(BridgeError::ModelFailure(format!("full vector logsumexp is {lse}")));
        }
        TokenDistribution::from_scores(lp).map_err(|e| BridgeError::ModelFailure(e.to_string()))
    }

    /// Top-`m` pairs in descending order plus the log tail mass.
    pub fn sparse_logprobs(&self, context: &[TokenId], top_m: usize) -> Result<(Vec<(TokenId, f64)>, f64), BridgeError> {
        let NextLogprobsResult::Sparse { pairs, tail_logmass } = self.raw_logprobs(context, LogprobMode::Sparse { top_m })?
        else {
            return Err(BridgeError::Protocol("full result for a sparse request".into()));
        };
        if pairs.len() > top_m.min(self.info.vocab_size) {
            return Err(BridgeError::Protocol(format!("{} pairs for top_m {top_m}", pairs.len())));
        }
        for w in pairs.windows(2) {
            if w[1].1 > w[0].1 {
                return Err(BridgeError::Protocol("sparse pairs not in descending order".into()));
            }
        }
        if let Some(&(t, _)) = pairs.iter().find(|(t, _)| *t as usize >= self.info.vocab_size) {
            return Err(BridgeError::Protocol(format!("token id {t} outside the vocabulary")));
        }
        Ok((pairs, decode_logprob(tail_logmass)))
    }

    /// Doubles `top_m` until the returned pairs cover
    /// `max(min_mass, SPARSE_MIN_MASS)`, then spreads the tail mass evenly
    /// over the unreturned tokens. Every unreturned token is at most as
    /// probable as the last returned one, so a nucleus with `p` at or below
    /// the covered mass never reaches into the tail. A target of 1 cannot be
    /// certified from a prefix and goes straight to a full request.
    pub fn covering_logprobs(&self, context: &[TokenId], min_mass: f64) -> Result<TokenDistribution, BridgeError> {
        let v = self.info.vocab_size;
        let target = min_mass.max(SPARSE_MIN_MASS);
        let mut top_m = self.initial_top_m.min(v);
        loop {
            if target >= 1.0 || top_m >= v {
                return self.full_logprobs(context);
            }
            let (pairs, tail) = self.sparse_logprobs(context, top_m)?;
            let head: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if logsumexp(&head).exp() >= target {
                let rest = v - pairs.len();
                let last = head.last().copied().unwrap_or(f64::NEG_INFINITY);
                // Capped so no tail token outranks a returned one.
                let fill = if rest == 0 { f64::NEG_INFINITY } else { (tail - (rest as f64).ln()).min(last) };
                let mut lp = vec![fill; v];
                for &(t, l) in &pairs {
                    lp[t as usize] = l;
                }
                return TokenDistribution::from_scores(lp).map_err(|e| BridgeError::ModelFailure(e.to_string()));
            }
            top_m = top_m.saturating_mul(2);
        }
    }
}

impl LanguageModel for BridgeClient {
    fn vocab_size(&self) -> usize {
        self.info.vocab_size
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        crate::lm::check_context(context, self.info.vocab_size)?;
        Ok(self.full_logprobs(context)?)
    }

    fn next_distribution_covering(&self, context: &[TokenId], min_mass: f64) -> Result<TokenDistribution, LmError> {
        crate::lm::check_context(context, self.info.vocab_size)?;
        Ok(self.covering_logprobs(context, min_mass)?)
    }
}

impl Codec for BridgeClient {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        Ok(self.encode_text(text)?)
    }

    fn decode(&self, ids: &[TokenId]) -> Result<String, LmError> {
        Ok(self.decode_ids(ids)?)
    }

    fn specials(&self) -> SpecialTokens {
        let s = self.info.special_tokens;
        SpecialTokens { start: s.start, end: s.end, prompt: s.prompt, response: s.response }
    }
}

impl Tokenizer for BridgeClient {
    fn count(&self, text: &str) -> Result<usize, TokenizerError> {
        Ok(self.encode_text(text)?.len())
    }

    fn truncate(&self, text: &str, max_tokens: usize) -> Result<String, TokenizerError> {
        let ids = self.encode_text(text)?;
        if ids.len() <= max_tokens {
            return Ok(text.to_string());
        }
        Ok(self.decode_ids(&ids[..max_tokens])?)
    }
}

impl Embedder for BridgeClient {
    fn dimension(&self) -> usize {
        self.info.embedding_dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricsError> {
        self.embed_text(text).map_err(|e| MetricsError::EmbedderUnavailable(e.to_string()))
    }
}

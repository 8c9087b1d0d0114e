//! Client side of the external model protocol, plus an in-process mock
//! server that speaks the same protocol from fixed fixtures.

mod client;
pub mod conformance;
pub mod mock;
pub mod protocol;

pub use client::{BridgeClient, Connector, Transport, DEFAULT_TOP_M, SPARSE_MIN_MASS};
pub use mock::MockServer;
pub use protocol::{ErrorCode, HandshakeResult, LogprobMode, PROTOCOL_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("could not start bridge {program:?}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bridge i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bridge sent malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bridge closed the connection")]
    Closed,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("bridge speaks protocol version {got}, expected {expected}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("context too long: {0}")]
    ContextTooLong(String),
    #[error("model failure: {0}")]
    ModelFailure(String),
    #[error("bridge rejected request ({code}): {message}")]
    Remote { code: ErrorCode, message: String },
}

use std::path::PathBuf;

use narrative_core::bridge::BridgeError;
use narrative_core::corpus::CorpusError;
use narrative_core::decode::DecodeError;
use narrative_core::lm::LmError;
use narrative_core::metrics::MetricsError;
use narrative_core::sweep::SweepError;
use narrative_core::tokenizer::TokenizerError;

/// Everything a subcommand can fail with, sorted by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bridge: {0}")]
    Bridge(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) | Self::File { .. } => 2,
            Self::Bridge(_) => 3,
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::File { path, source }
    }
}

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        Self::Bridge(e.to_string())
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Lm(inner) => inner.into(),
            DecodeError::DegenerateDistribution | DecodeError::VocabMismatch { .. } => Self::Data(e.to_string()),
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::BridgeUnavailable(b) => b.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::Bridge(b) => b.into(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Tokenizer(t) => t.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::EmbedderUnavailable(m) => Self::Bridge(m),
            MetricsError::InvalidN(_) => Self::Usage(e.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::InvalidSpec(_) => Self::Usage(e.to_string()),
            SweepError::Metrics(m) => m.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Data(e.to_string())
    }
}

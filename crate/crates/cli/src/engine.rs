//! Loads the model a command runs against: a saved n-gram file or a bridge.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;

use narrative_core::bridge::{BridgeClient, Transport};
use narrative_core::lm::{Codec, LanguageModel, NGramLM};
use narrative_core::metrics::Embedder;
use narrative_core::tokenizer::Tokenizer;

use crate::error::CliError;

#[derive(Debug, Clone, Args, Default)]
pub struct BridgeArgs {
    /// Command that starts a bridge server speaking the protocol on stdio,
    /// e.g. "python -m narrative_bridge --model gpt2".
    #[arg(long, value_name = "COMMAND")]
    pub bridge_cmd: Option<String>,
    /// Address of a bridge server listening on TCP.
    #[arg(long, value_name = "HOST:PORT", conflicts_with = "bridge_cmd")]
    pub bridge_tcp: Option<String>,
}

impl BridgeArgs {
    pub fn transport(&self) -> Result<Transport, CliError> {
        match (&self.bridge_cmd, &self.bridge_tcp) {
            (Some(cmd), _) => {
                let mut parts = cmd.split_whitespace().map(str::to_string);
                let program = parts.next().ok_or_else(|| CliError::Usage("--bridge-cmd is empty".into()))?;
                Ok(Transport::Stdio { program, args: parts.collect() })
            }
            (None, Some(addr)) => Ok(Transport::Tcp(addr.clone())),
            (None, None) => Err(CliError::Usage("a bridge needs --bridge-cmd or --bridge-tcp".into())),
        }
    }

    pub fn connect(&self) -> Result<BridgeClient, CliError> {
        Ok(BridgeClient::connect(self.transport()?)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Saved n-gram model file, or `bridge` to use a bridge server.
    #[arg(long, value_name = "PATH|bridge")]
    pub model: String,
    /// Separate model for the anti-LM term; defaults to `--model`.
    #[arg(long, value_name = "PATH")]
    pub uncond_model: Option<PathBuf>,
    #[command(flatten)]
    pub bridge: BridgeArgs,
}

pub enum Engine {
    NGram(NGramLM),
    Bridge(BridgeClient),
}

impl Engine {
    pub fn load_ngram(path: &std::path::Path) -> Result<NGramLM, CliError> {
        let file = File::open(path).map_err(CliError::file(path))?;
        Ok(NGramLM::load(BufReader::new(file))?)
    }

    pub fn lm(&self) -> &dyn LanguageModel {
        match self {
            Self::NGram(m) => m,
            Self::Bridge(b) => b,
        }
    }

    pub fn codec(&self) -> &dyn Codec {
        match self {
            Self::NGram(m) => m,
            Self::Bridge(b) => b,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::NGram(m) => format!("ngram{}", m.order()),
            Self::Bridge(b) => b.info().model_name.clone(),
        }
    }
}

/// The conditional model plus, when requested, a separate unconditional one.
pub struct Models {
    pub cond: Engine,
    pub uncond: Option<Engine>,
}

impl Models {
    pub fn load(args: &ModelArgs) -> Result<Self, CliError> {
        let cond = if args.model == "bridge" {
            Engine::Bridge(args.bridge.connect()?)
        } else {
            Engine::NGram(Engine::load_ngram(std::path::Path::new(&args.model))?)
        };
        let uncond = args.uncond_model.as_deref().map(Engine::load_ngram).transpose()?.map(Engine::NGram);
        if let Some(u) = &uncond {
            if u.lm().vocab_size() != cond.lm().vocab_size() {
                return Err(CliError::Usage(format!(
                    "--uncond-model has {} tokens, --model has {}",
                    u.lm().vocab_size(),
                    cond.lm().vocab_size()
                )));
            }
        }
        Ok(Self { cond, uncond })
    }

    pub fn uncond_lm(&self) -> &dyn LanguageModel {
        self.uncond.as_ref().unwrap_or(&self.cond).lm()
    }
}

pub fn bridge_tokenizer(args: &BridgeArgs) -> Result<Box<dyn Tokenizer>, CliError> {
    Ok(Box::new(args.connect()?))
}

pub fn bridge_embedder(args: &BridgeArgs) -> Result<Box<dyn Embedder>, CliError> {
    Ok(Box::new(args.connect()?))
}

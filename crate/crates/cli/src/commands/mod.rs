//! Subcommand implementations.

mod bridge;
mod data;
mod decode;
mod eval;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use narrative_core::corpus::{filter_wp, read_jsonl};
use narrative_core::sweep::write_atomic;

use crate::error::CliError;
use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Preprocess(a) => data::preprocess(a),
        Command::Train(a) => data::train(a),
        Command::Generate(a) => decode::generate(a, config),
        Command::SweepP(a) => decode::sweep(a, narrative_core::sweep::SweepKind::P, config, cli.jobs),
        Command::SweepLambda(a) => decode::sweep(a, narrative_core::sweep::SweepKind::Lambda, config, cli.jobs),
        Command::Metrics(a) => eval::metrics(a),
        Command::Agreement(a) => eval::agreement(a),
        Command::Correlate(a) => eval::correlate(a),
        Command::Cdf(a) => eval::cdf(a),
        Command::BridgeCheck(a) => bridge::check(a),
        Command::MockBridge(a) => bridge::mock(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    Ok(BufReader::new(File::open(path).map_err(CliError::file(path))?))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// One JSON value per non-blank line.
fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(CliError::file(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf).map_err(CliError::file(path))
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    write_atomic(path, &buf).map_err(CliError::file(path))
}

/// Prompts from a file: WP-tagged prompt/response pairs as JSON lines, or
/// one prompt per line.
fn read_prompts(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::file(path))?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let prompts: Vec<String> = if first.is_some_and(|l| l.trim_start().starts_with('{')) {
        filter_wp(read_jsonl(text.as_bytes())?).into_iter().map(|p| p.prompt.trim().to_string()).collect()
    } else {
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
    };
    if prompts.is_empty() {
        return Err(CliError::Data(format!("{}: no prompts", path.display())));
    }
    Ok(prompts)
}

use std::path::{Path, PathBuf};

use serde_json::json;

use narrative_core::decode::{generate as run_generate, DecoderConfig, MmiPlacement, Strategy};
use narrative_core::sweep::{cell_seed, run_sweep, SweepKind, SweepOptions, SweepSpec};

use super::{read_json, read_prompts, write_json_lines};
use crate::engine::{Engine, ModelArgs, Models};
use crate::error::CliError;
use crate::manifest::{file_digest, ManifestBuilder};
use crate::{GenerateArgs, SweepArgs};

fn model_config(args: &ModelArgs, models: &Models) -> Result<serde_json::Value, CliError> {
    let cond = match &models.cond {
        Engine::NGram(_) => json!({ "ngram_sha256": file_digest(Path::new(&args.model))? }),
        Engine::Bridge(b) => serde_json::to_value(b.info())?,
    };
    let uncond = args.uncond_model.as_deref().map(file_digest).transpose()?;
    Ok(json!({ "cond": cond, "uncond_sha256": uncond, "label": models.cond.label() }))
}

/// Defaults, then `--config`, then flags.
fn resolve_decoder(a: &GenerateArgs, config: Option<&Path>) -> Result<DecoderConfig, CliError> {
    let mut cfg: DecoderConfig = match config {
        Some(path) => read_json(path)?,
        None => DecoderConfig::default(),
    };
    cfg.strategy = a.strategy;
    if a.strategy == Strategy::Random {
        cfg.p = 1.0;
    }
    if let Some(p) = a.p {
        cfg.p = p;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(t) = a.temperature {
        cfg.temperature = t;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(w) = a.mmi_window {
        cfg.mmi_window = w;
    }
    if a.mmi_after_filter {
        cfg.mmi_placement = MmiPlacement::AfterFilter;
    }
    if let Some(c) = a.max_class {
        cfg.max_tokens = c.token_cap();
    }
    if let Some(n) = a.max_tokens {
        cfg.max_tokens = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn generate(a: GenerateArgs, config: Option<&Path>) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start();
    let cfg = resolve_decoder(&a, config)?;
    let prompt_path = Path::new(&a.prompt);
    let prompts = if prompt_path.is_file() { read_prompts(prompt_path)? } else { vec![a.prompt.clone()] };
    let models = Models::load(&a.model)?;
    let mut records = Vec::with_capacity(prompts.len());
    for (i, prompt) in prompts.iter().enumerate() {
        // Same seeds as story 0 of a sweep over these prompts.
        let cell = DecoderConfig { seed: cell_seed(cfg.seed, i, 0), ..cfg.clone() };
        let rec = run_generate(models.cond.lm(), models.uncond_lm(), models.cond.codec(), prompt, &cell)?;
        println!("{}", rec.response);
        records.push(rec);
    }
    if let Some(trace) = a.trace {
        write_json_lines(&trace, &records)?;
        let config = json!({
            "command": "generate",
            "decoder": cfg,
            "prompts": prompts,
            "model": model_config(&a.model, &models)?,
        });
        manifest.finish(config, Some(cfg.seed), vec![trace], None)?;
    }
    Ok(())
}

fn resolve_spec(a: &SweepArgs, kind: SweepKind, config: Option<&Path>) -> Result<SweepSpec, CliError> {
    let mut spec: SweepSpec = match a.spec.as_deref().or(config) {
        Some(path) => read_json(path)?,
        None => SweepSpec::default(),
    };
    if let Some(path) = &a.prompts {
        spec.prompts = read_prompts(path)?;
    }
    if let Some(grid) = &a.grid {
        match kind {
            SweepKind::P => spec.p_grid = grid.clone(),
            SweepKind::Lambda => spec.lambda_grid = grid.clone(),
        }
    }
    if let Some(n) = a.stories {
        spec.stories_per_cell = n;
    }
    if let Some(s) = a.seed {
        spec.base_seed = s;
    }
    if let Some(c) = a.class {
        spec.length_class = c;
    }
    if a.mmi_after_filter {
        spec.mmi_placement = MmiPlacement::AfterFilter;
    }
    spec.validate(kind)?;
    Ok(spec)
}

pub fn sweep(a: SweepArgs, kind: SweepKind, config: Option<&Path>, jobs: Option<usize>) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start();
    let spec = resolve_spec(&a, kind, config)?;
    let models = Models::load(&a.model)?;
    std::fs::create_dir_all(&a.out).map_err(CliError::file(&a.out))?;
    let shard_dir = a.out.join("shards");
    let options = SweepOptions { shard_dir: Some(shard_dir.clone()), jobs };
    let outcome = run_sweep(&spec, kind, models.cond.lm(), models.uncond_lm(), models.cond.codec(), &options)?;

    let records_path = a.out.join("records.jsonl");
    let failures_path = a.out.join("failures.jsonl");
    write_json_lines(&records_path, &outcome.records)?;
    write_json_lines(&failures_path, &outcome.failures)?;
    eprintln!(
        "{} of {} cells done ({} resumed), {} failed",
        outcome.records.len(),
        spec.cell_count(kind),
        outcome.resumed,
        outcome.failures.len()
    );
    for f in outcome.failures.iter().take(5) {
        eprintln!("  {}: {}", f.cell.shard_name(), f.error);
    }
    let config = json!({
        "command": match kind { SweepKind::P => "sweep-p", SweepKind::Lambda => "sweep-lambda" },
        "kind": kind,
        "spec": spec,
        "model": model_config(&a.model, &models)?,
    });
    let outputs: Vec<PathBuf> = vec![records_path, failures_path, shard_dir];
    manifest.finish(config, Some(spec.base_seed), outputs, Some(&a.out))?;
    if outcome.records.is_empty() {
        return Err(CliError::Data("every cell failed".into()));
    }
    Ok(())
}

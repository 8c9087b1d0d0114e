use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use narrative_core::corpus::{LengthClass, ProcessedExample};
use narrative_core::decode::{GenerationRecord, Strategy};
use narrative_core::lm::{perplexity, PerplexityScope};
use narrative_core::metrics::{
    corpus_dist_n, fleiss_kappa, likert_mean, paired_t_test, pooled_dist_n, rating_matrices, read_ratings,
    sent_diversity, spearman, welch_t_test, ConfigKey, Embedder, HashEmbedder, MetricReport,
};
use narrative_core::sweep::{read_generation_records, token_space_cdf, write_cdf_csv, write_reports_csv, write_atomic};

use super::{open, read_json_lines, write_json_pretty};
use crate::engine::{bridge_embedder, Engine};
use crate::error::CliError;
use crate::manifest::{file_digest, ManifestBuilder};
use crate::{AgreementArgs, CdfArgs, CorrelateArgs, EmbedderKind, MetricsArgs};

/// A sweep directory resolves to its `records.jsonl`.
fn records_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("records.jsonl")
    } else {
        path.to_path_buf()
    }
}

fn load_records(path: &Path) -> Result<(PathBuf, Vec<GenerationRecord>), CliError> {
    let file = records_file(path);
    let records = read_generation_records(open(&file)?)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{}: no records", file.display())));
    }
    Ok((file, records))
}

/// Smallest class whose cap covers the token limit; anything longer is large.
fn length_class_for(max_tokens: usize) -> LengthClass {
    LengthClass::ALL
        .into_iter()
        .find(|c| max_tokens <= c.token_cap())
        .unwrap_or(LengthClass::Large)
}

/// Records grouped by decoding configuration, in order of first appearance.
fn group_by_config(records: &[GenerationRecord], model: &str) -> Vec<(ConfigKey, Vec<GenerationRecord>)> {
    let mut groups: Vec<(ConfigKey, Vec<GenerationRecord>)> = Vec::new();
    for r in records {
        let c = &r.config;
        let key = ConfigKey {
            model: model.to_string(),
            strategy: c.strategy,
            p: c.p,
            lambda: c.lambda,
            length_class: length_class_for(c.max_tokens),
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.clone()),
            None => groups.push((key, vec![r.clone()])),
        }
    }
    groups
}

pub fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start();
    if a.dist.contains(&0) {
        return Err(CliError::Usage("--dist values must be at least 1".into()));
    }
    let (file, records) = load_records(&a.records)?;
    let embedder: Option<Box<dyn Embedder>> = match (a.sent_div, a.embedder) {
        (false, _) => None,
        (true, EmbedderKind::Builtin) => Some(Box::new(HashEmbedder::default())),
        (true, EmbedderKind::Bridge) => Some(bridge_embedder(&a.bridge)?),
    };
    let ppl = match (&a.ppl_model, &a.ppl_data) {
        (Some(model), Some(data)) => {
            let lm = Engine::load_ngram(model)?;
            let examples: Vec<ProcessedExample> = read_json_lines(data)?;
            Some(perplexity(&lm, &lm, &examples, PerplexityScope::ResponseOnly)?)
        }
        _ => None,
    };
    let dist = |group: &[GenerationRecord], n: usize| {
        if a.pooled {
            pooled_dist_n(group, n)
        } else {
            corpus_dist_n(group, n)
        }
    };
    let mut reports = Vec::new();
    for (key, group) in group_by_config(&records, &a.label) {
        let sent_div = match &embedder {
            Some(e) if group.len() >= 2 => Some(sent_diversity(&group, e.as_ref())?),
            _ => None,
        };
        let mut extra_dist = BTreeMap::new();
        for &n in a.dist.iter().filter(|&&n| n > 2) {
            extra_dist.insert(n, dist(&group, n)?);
        }
        reports.push(MetricReport {
            schema_version: narrative_core::SCHEMA_VERSION,
            config_key: key,
            records: group.len(),
            dist1: dist(&group, 1)?,
            dist2: dist(&group, 2)?,
            extra_dist,
            sent_div,
            ppl,
            mean_ratings: None,
        });
    }
    write_json_pretty(&a.report, &reports)?;
    let mut outputs = vec![a.report.clone()];
    if let Some(csv_path) = &a.csv {
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &reports)?;
        write_atomic(csv_path, &buf).map_err(CliError::file(csv_path))?;
        outputs.push(csv_path.clone());
    }
    for r in &reports {
        let k = &r.config_key;
        eprintln!(
            "{:?} p={} lambda={} n={} dist1={:.4} dist2={:.4}",
            k.strategy, k.p, k.lambda, r.records, r.dist1, r.dist2
        );
    }
    let mut config = json!({
        "command": "metrics",
        "records_sha256": file_digest(&file)?,
        "dist": a.dist,
        "pooled": a.pooled,
        "sent_div": a.sent_div,
        "embedder": format!("{:?}", a.embedder).to_lowercase(),
        "label": a.label,
    });
    if let (Some(m), Some(d)) = (&a.ppl_model, &a.ppl_data) {
        config["ppl_model_sha256"] = file_digest(m)?.into();
        config["ppl_data_sha256"] = file_digest(d)?.into();
    }
    manifest.finish(config, None, outputs, None)?;
    Ok(())
}

pub fn agreement(a: AgreementArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start();
    let ratings = read_ratings(open(&a.ratings)?)?;
    let mut out = BTreeMap::new();
    for (metric, m) in rating_matrices(&ratings, a.categories)? {
        out.insert(
            metric,
            json!({
                "fleiss_kappa": fleiss_kappa(&m)?,
                "likert_mean": likert_mean(&m),
                "items": m.items(),
                "annotators_per_item": m.annotators_per_item(),
            }),
        );
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(path) = a.out {
        write_json_pretty(&path, &out)?;
        let config = json!({
            "command": "agreement",
            "ratings_sha256": file_digest(&a.ratings)?,
            "categories": a.categories,
        });
        manifest.finish(config, None, vec![path], None)?;
    }
    Ok(())
}

fn parse_cell(s: &str, col: &str, row: usize) -> Result<Option<f64>, CliError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| CliError::Data(format!("row {row}, column {col}: {s:?} is not a number")))
}

pub fn correlate(a: CorrelateArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(&a.input)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("no column {name:?} in {}", a.input.display())))
    };
    let (xi, yi) = (col(&a.x)?, col(&a.y)?);
    let (mut xs, mut ys, mut pairs) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let x = parse_cell(row.get(xi).unwrap_or(""), &a.x, i + 2)?;
        let y = parse_cell(row.get(yi).unwrap_or(""), &a.y, i + 2)?;
        xs.extend(x);
        ys.extend(y);
        if let (Some(x), Some(y)) = (x, y) {
            pairs.push((x, y));
        }
    }
    let (px, py): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let rho = spearman(&px, &py)?;
    let (test, kind) = if a.paired { (paired_t_test(&px, &py)?, "paired") } else { (welch_t_test(&xs, &ys)?, "welch") };
    let out = json!({
        "x": a.x,
        "y": a.y,
        "spearman": rho,
        "t_test": { "kind": kind, "t": test.t, "df": test.df, "p": test.p },
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(path) = a.out {
        write_json_pretty(&path, &out)?;
        let config = json!({
            "command": "correlate",
            "input_sha256": file_digest(&a.input)?,
            "x": a.x,
            "y": a.y,
            "paired": a.paired,
        });
        manifest.finish(config, None, vec![path], None)?;
    }
    Ok(())
}

pub fn cdf(a: CdfArgs) -> Result<(), CliError> {
    let manifest = ManifestBuilder::start();
    let (file, records) = load_records(&a.records)?;
    // Pooling is only meaningful across plain nucleus runs; greedy records
    // carry a default p and anti-LM runs reshape the distribution.
    let kept: Vec<GenerationRecord> = records
        .into_iter()
        .filter(|r| r.config.strategy == Strategy::Nucleus && r.config.lambda == 0.0)
        .filter(|r| a.include_p1 || r.config.p < 1.0)
        .collect();
    if kept.is_empty() {
        return Err(CliError::Data("no nucleus records without the anti-LM term".into()));
    }
    let series = token_space_cdf(&kept)?;
    let mut buf = Vec::new();
    write_cdf_csv(&mut buf, &series)?;
    write_atomic(&a.out, &buf).map_err(CliError::file(&a.out))?;
    for s in &series {
        println!("p={} median={} steps={}", s.p, s.median(), s.steps);
    }
    let config = json!({
        "command": "cdf",
        "records_sha256": file_digest(&file)?,
        "include_p1": a.include_p1,
    });
    manifest.finish(config, None, vec![a.out], None)?;
    Ok(())
}

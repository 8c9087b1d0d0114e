//! Grid experiments over nucleus `p` and anti-LM `λ`, their metric reports,
//! and the sampled-space-size CDF.
//!
//! Each cell (prompt, grid value, story) is generated independently with a
//! seed derived from `(base_seed, prompt_index, story_index)`. The grid
//! value is left out of the seed so every grid point sees the same random
//! stream for a given prompt and story; differences between cells then come
//! from the decoding parameter alone.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::LengthClass;
use crate::decode::{generate, DecoderConfig, GenerationRecord, MmiPlacement, Strategy};
use crate::lm::{Codec, LanguageModel};
use crate::metrics::{ConfigKey, Embedder, MetricReport, MetricsError};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("no records")]
    EmptyInput,
    #[error("shard {path}: {source}")]
    Shard {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const DEFAULT_P_GRID: [f64; 7] = [0.0, 0.3, 0.5, 0.7, 0.9, 0.95, 1.0];
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.0, 0.1, 0.2, 0.35, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub prompts: Vec<String>,
    pub p_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub lambda_base_p: f64,
    pub stories_per_cell: usize,
    pub base_seed: u64,
    pub length_class: LengthClass,
    pub temperature: f64,
    pub mmi_window: usize,
    pub mmi_placement: MmiPlacement,
    /// Label carried into metric reports.
    pub model: String,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            prompts: Vec::new(),
            p_grid: DEFAULT_P_GRID.to_vec(),
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            lambda_base_p: 0.7,
            stories_per_cell: 1,
            base_seed: 0,
            length_class: LengthClass::Medium,
            temperature: 1.0,
            mmi_window: 20,
            mmi_placement: MmiPlacement::BeforeFilter,
            model: "ngram".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    P,
    Lambda,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            Self::P => "p",
            Self::Lambda => "lambda",
        }
    }
}

impl SweepSpec {
    pub fn validate(&self, kind: SweepKind) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidSpec(m));
        if self.prompts.is_empty() {
            return bad("no prompts".into());
        }
        if let Some(i) = self.prompts.iter().position(|p| p.trim().is_empty()) {
            return bad(format!("prompt {i} is empty"));
        }
        if self.stories_per_cell == 0 {
            return bad("stories_per_cell must be at least 1".into());
        }
        let grid = self.grid(kind);
        if grid.is_empty() {
            return bad(format!("{}_grid is empty", kind.name()));
        }
        for (i, &v) in grid.iter().enumerate() {
            if grid[..i].contains(&v) {
                return bad(format!("{}_grid repeats {v}", kind.name()));
            }
        }
        for &v in grid {
            let cfg = self.cell_config(kind, v, 0);
            cfg.validate().map_err(|e| SweepError::InvalidSpec(e.to_string()))?;
        }
        Ok(())
    }

    pub fn grid(&self, kind: SweepKind) -> &[f64] {
        match kind {
            SweepKind::P => &self.p_grid,
            SweepKind::Lambda => &self.lambda_grid,
        }
    }

    pub fn cell_count(&self, kind: SweepKind) -> usize {
        self.prompts.len() * self.grid(kind).len() * self.stories_per_cell
    }

    /// Decoder settings for one cell.
    pub fn cell_config(&self, kind: SweepKind, value: f64, seed: u64) -> DecoderConfig {
        let (p, lambda) = match kind {
            SweepKind::P => (value, 0.0),
            SweepKind::Lambda => (self.lambda_base_p, value),
        };
        DecoderConfig {
            strategy: Strategy::Nucleus,
            p,
            lambda,
            temperature: self.temperature,
            mmi_window: self.mmi_window,
            mmi_placement: self.mmi_placement,
            max_tokens: self.length_class.token_cap(),
            seed,
            ..DecoderConfig::default()
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one (prompt, story) pair, shared by every grid value.
pub fn cell_seed(base_seed: u64, prompt_index: usize, story_index: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ prompt_index as u64) ^ story_index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub kind: SweepKind,
    pub prompt_index: usize,
    pub grid_index: usize,
    pub grid_value: f64,
    pub story_index: usize,
}

impl CellKey {
    /// File name of this cell's shard inside the shard directory.
    pub fn shard_name(&self) -> String {
        format!(
            "{}_v{}_p{:05}_s{:03}.jsonl",
            self.kind.name(),
            self.grid_value,
            self.prompt_index,
            self.story_index
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub cell: CellKey,
    pub seed: u64,
    pub record: GenerationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: CellKey,
    pub error: String,
}

/// Every cell ends up in exactly one of the two lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    /// Ordered by grid index, then prompt, then story.
    pub records: Vec<SweepRecord>,
    pub failures: Vec<CellFailure>,
    /// Cells read back from existing shards instead of regenerated.
    pub resumed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Directory for per-cell shards; enables resuming.
    pub shard_dir: Option<PathBuf>,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
}

fn cells(spec: &SweepSpec, kind: SweepKind) -> Vec<CellKey> {
    let mut out = Vec::with_capacity(spec.cell_count(kind));
    for (grid_index, &grid_value) in spec.grid(kind).iter().enumerate() {
        for prompt_index in 0..spec.prompts.len() {
            for story_index in 0..spec.stories_per_cell {
                out.push(CellKey { kind, prompt_index, grid_index, grid_value, story_index });
            }
        }
    }
    out
}

fn read_shard(path: &Path, key: &CellKey) -> Option<SweepRecord> {
    let text = fs::read_to_string(path).ok()?;
    let rec: SweepRecord = serde_json::from_str(text.trim_end()).ok()?;
    (rec.cell == *key && rec.schema_version == crate::SCHEMA_VERSION).then_some(rec)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

enum CellResult {
    Done(SweepRecord, bool),
    Failed(CellFailure),
}

fn run_cell<C, U, K>(
    spec: &SweepSpec,
    key: CellKey,
    cond: &C,
    uncond: &U,
    codec: &K,
    shard_dir: Option<&Path>,
) -> CellResult
where
    C: LanguageModel + ?Sized,
    U: LanguageModel + ?Sized,
    K: Codec + ?Sized,
{
    let shard = shard_dir.map(|d| d.join(key.shard_name()));
    if let Some(rec) = shard.as_deref().and_then(|p| read_shard(p, &key)) {
        return CellResult::Done(rec, true);
    }
    let seed = cell_seed(spec.base_seed, key.prompt_index, key.story_index);
    let config = spec.cell_config(key.kind, key.grid_value, seed);
    let record = match generate(cond, uncond, codec, &spec.prompts[key.prompt_index], &config) {
        Ok(r) => r,
        Err(e) => return CellResult::Failed(CellFailure { cell: key, error: e.to_string() }),
    };
    let rec = SweepRecord { schema_version: crate::SCHEMA_VERSION, cell: key, seed, record };
    if let Some(path) = shard {
        let mut line = serde_json::to_vec(&rec).expect("records serialize");
        line.push(b'\n');
        if let Err(e) = write_atomic(&path, &line) {
            return CellResult::Failed(CellFailure { cell: key, error: format!("writing {}: {e}", path.display()) });
        }
    }
    CellResult::Done(rec, false)
}

#[cfg(feature = "parallel")]
fn map_cells<F>(keys: Vec<CellKey>, jobs: Option<usize>, f: F) -> Vec<CellResult>
where
    F: Fn(CellKey) -> CellResult + Send + Sync,
{
    use rayon::prelude::*;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    match builder.build() {
        Ok(pool) => pool.install(|| keys.into_par_iter().map(&f).collect()),
        Err(_) => keys.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_cells<F>(keys: Vec<CellKey>, _jobs: Option<usize>, f: F) -> Vec<CellResult>
where
    F: Fn(CellKey) -> CellResult + Send + Sync,
{
    keys.into_iter().map(f).collect()
}

/// Runs every cell of one grid. Cell-level generation failures are
/// collected rather than aborting the sweep.
pub fn run_sweep<C, U, K>(
    spec: &SweepSpec,
    kind: SweepKind,
    cond: &C,
    uncond: &U,
    codec: &K,
    options: &SweepOptions,
) -> Result<SweepOutcome, SweepError>
where
    C: LanguageModel + ?Sized,
    U: LanguageModel + ?Sized,
    K: Codec + ?Sized,
{
    spec.validate(kind)?;
    if let Some(dir) = &options.shard_dir {
        fs::create_dir_all(dir).map_err(|source| SweepError::Shard { path: dir.clone(), source })?;
    }
    let shard_dir = options.shard_dir.as_deref();
    let results = map_cells(cells(spec, kind), options.jobs, |key| run_cell(spec, key, cond, uncond, codec, shard_dir));
    let mut out = SweepOutcome::default();
    for r in results {
        match r {
            CellResult::Done(rec, resumed) => {
                out.resumed += resumed as usize;
                out.records.push(rec);
            }
            CellResult::Failed(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

pub fn run_p_sweep<C, U, K>(spec: &SweepSpec, cond: &C, uncond: &U, codec: &K, options: &SweepOptions) -> Result<SweepOutcome, SweepError>
where
    C: LanguageModel + ?Sized,
    U: LanguageModel + ?Sized,
    K: Codec + ?Sized,
{
    run_sweep(spec, SweepKind::P, cond, uncond, codec, options)
}

/// λ grid at `p = spec.lambda_base_p`.
pub fn run_lambda_sweep<C, U, K>(spec: &SweepSpec, cond: &C, uncond: &U, codec: &K, options: &SweepOptions) -> Result<SweepOutcome, SweepError>
where
    C: LanguageModel + ?Sized,
    U: LanguageModel + ?Sized,
    K: Codec + ?Sized,
{
    run_sweep(spec, SweepKind::Lambda, cond, uncond, codec, options)
}

/// Records grouped by grid index, in grid order.
pub fn group_by_grid(records: &[SweepRecord]) -> Vec<(f64, Vec<GenerationRecord>)> {
    let mut groups: BTreeMap<usize, (f64, Vec<GenerationRecord>)> = BTreeMap::new();
    for r in records {
        groups
            .entry(r.cell.grid_index)
            .or_insert_with(|| (r.cell.grid_value, Vec::new()))
            .1
            .push(r.record.clone());
    }
    groups.into_values().collect()
}

/// One [`MetricReport`] per grid value.
pub fn metric_reports<E: Embedder + ?Sized>(
    spec: &SweepSpec,
    records: &[SweepRecord],
    embedder: &E,
) -> Result<Vec<MetricReport>, SweepError> {
    if records.is_empty() {
        return Err(SweepError::EmptyInput);
    }
    let mut out = Vec::new();
    for (_, group) in group_by_grid(records) {
        let cfg = &group[0].config;
        let key = ConfigKey {
            model: spec.model.clone(),
            strategy: cfg.strategy,
            p: cfg.p,
            lambda: cfg.lambda,
            length_class: spec.length_class,
        };
        out.push(MetricReport::from_records(key, &group, embedder)?);
    }
    Ok(out)
}

/// Empirical CDF of per-step sampled-space sizes for one `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSeries {
    pub p: f64,
    /// Distinct sizes, ascending.
    pub sorted_sizes: Vec<usize>,
    /// Fraction of steps with size at most the matching entry.
    pub cumulative_fraction: Vec<f64>,
    pub steps: usize,
}

impl CdfSeries {
    /// Pools raw sizes without per-story averaging.
    pub fn from_sizes(p: f64, mut sizes: Vec<usize>) -> Result<Self, SweepError> {
        if sizes.is_empty() {
            return Err(SweepError::EmptyInput);
        }
        sizes.sort_unstable();
        let n = sizes.len();
        let mut sorted_sizes = Vec::new();
        let mut cumulative_fraction = Vec::new();
        for (i, &s) in sizes.iter().enumerate() {
            if i + 1 == n || sizes[i + 1] != s {
                sorted_sizes.push(s);
                cumulative_fraction.push((i + 1) as f64 / n as f64);
            }
        }
        Ok(Self { p, sorted_sizes, cumulative_fraction, steps: n })
    }

    /// Smallest size whose cumulative fraction reaches 0.5.
    pub fn median(&self) -> usize {
        self.quantile(0.5)
    }

    pub fn quantile(&self, q: f64) -> usize {
        let i = self.cumulative_fraction.partition_point(|&f| f < q);
        self.sorted_sizes[i.min(self.sorted_sizes.len() - 1)]
    }
}

/// One CDF per distinct `p` among the records, ascending in `p`.
pub fn token_space_cdf(records: &[GenerationRecord]) -> Result<Vec<CdfSeries>, SweepError> {
    if records.is_empty() {
        return Err(SweepError::EmptyInput);
    }
    let mut by_p: Vec<(f64, Vec<usize>)> = Vec::new();
    for r in records {
        let sizes = r.sampled_space_sizes();
        match by_p.iter_mut().find(|(p, _)| *p == r.config.p) {
            Some((_, v)) => v.extend(sizes),
            None => by_p.push((r.config.p, sizes.collect())),
        }
    }
    by_p.sort_by(|a, b| a.0.total_cmp(&b.0));
    by_p.into_iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(p, s)| CdfSeries::from_sizes(p, s))
        .collect()
}

pub fn write_records_jsonl<W: Write>(mut w: W, records: &[SweepRecord]) -> Result<(), SweepError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads sweep records, or bare generation records, one JSON object per line.
pub fn read_generation_records<R: BufRead>(r: R) -> Result<Vec<GenerationRecord>, SweepError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Line {
        Sweep(Box<SweepRecord>),
        Plain(Box<GenerationRecord>),
    }
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(match serde_json::from_str(&line)? {
            Line::Sweep(s) => s.record,
            Line::Plain(g) => *g,
        });
    }
    Ok(out)
}

pub fn read_sweep_records<R: BufRead>(r: R) -> Result<Vec<SweepRecord>, SweepError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_cdf_csv<W: Write>(w: W, series: &[CdfSeries]) -> Result<(), SweepError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["schema_version", "p", "size", "cumulative_fraction"])?;
    for s in series {
        for (size, frac) in s.sorted_sizes.iter().zip(&s.cumulative_fraction) {
            out.write_record([
                crate::SCHEMA_VERSION.to_string(),
                s.p.to_string(),
                size.to_string(),
                frac.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_reports_csv<W: Write>(w: W, reports: &[MetricReport]) -> Result<(), SweepError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "schema_version",
        "model",
        "strategy",
        "p",
        "lambda",
        "length_class",
        "records",
        "dist1",
        "dist2",
        "sent_div",
        "ppl",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in reports {
        let k = &r.config_key;
        let strategy = serde_json::to_value(k.strategy)?;
        out.write_record([
            r.schema_version.to_string(),
            k.model.clone(),
            strategy.as_str().unwrap_or_default().to_string(),
            k.p.to_string(),
            k.lambda.to_string(),
            k.length_class.name().to_string(),
            r.records.to_string(),
            r.dist1.to_string(),
            r.dist2.to_string(),
            opt(r.sent_div),
            opt(r.ppl),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_of_constant_sizes() {
        let s = CdfSeries::from_sizes(0.0, vec![1, 1, 1]).unwrap();
        assert_eq!(s.sorted_sizes, vec![1]);
        assert_eq!(s.cumulative_fraction, vec![1.0]);
        assert_eq!(s.median(), 1);
    }

    #[test]
    fn cdf_sort_and_count() {
        let s = CdfSeries::from_sizes(0.5, vec![5, 2, 2, 9, 5, 2]).unwrap();
        assert_eq!(s.sorted_sizes, vec![2, 5, 9]);
        assert_eq!(s.cumulative_fraction, vec![0.5, 5.0 / 6.0, 1.0]);
        assert_eq!(s.median(), 2);
        assert_eq!(s.quantile(0.51), 5);
        assert!(CdfSeries::from_sizes(0.5, vec![]).is_err());
    }

    #[test]
    fn seeds_ignore_grid_value() {
        assert_ne!(cell_seed(1, 0, 0), cell_seed(1, 1, 0));
        assert_ne!(cell_seed(1, 0, 0), cell_seed(1, 0, 1));
        assert_ne!(cell_seed(1, 0, 0), cell_seed(2, 0, 0));
        assert_eq!(cell_seed(9, 3, 4), cell_seed(9, 3, 4));
    }

    #[test]
    fn spec_validation() {
        let mut spec = SweepSpec { prompts: vec!["x".into()], ..Default::default() };
        spec.validate(SweepKind::P).unwrap();
        spec.p_grid = vec![0.5, 1.5];
        assert!(spec.validate(SweepKind::P).is_err());
        spec.p_grid = vec![0.5, 0.5];
        assert!(spec.validate(SweepKind::P).is_err());
        spec.lambda_grid = vec![-0.1];
        assert!(spec.validate(SweepKind::Lambda).is_err());
        assert!(SweepSpec::default().validate(SweepKind::P).is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SweepSpec = serde_json::from_str(r#"{"prompts":["a"],"length_class":"small"}"#).unwrap();
        assert_eq!(spec.p_grid, DEFAULT_P_GRID.to_vec());
        assert_eq!(spec.length_class, LengthClass::Small);
        assert_eq!(spec.cell_config(SweepKind::Lambda, 0.2, 5).p, 0.7);
    }
}

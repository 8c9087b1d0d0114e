use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{corpus_dist_n, sent_diversity, Embedder, MetricsError};
use crate::corpus::LengthClass;
use crate::decode::{GenerationRecord, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigKey {
    pub model: String,
    pub strategy: Strategy,
    pub p: f64,
    pub lambda: f64,
    pub length_class: LengthClass,
}

/// Automatic metrics for one decoding configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub config_key: ConfigKey,
    pub records: usize,
    pub dist1: f64,
    pub dist2: f64,
    /// dist-n for any other requested n.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_dist: BTreeMap<usize, f64>,
    /// `None` when fewer than two records exist.
    pub sent_div: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ratings: Option<BTreeMap<String, f64>>,
}

impl MetricReport {
    pub fn from_records<E: Embedder + ?Sized>(
        config_key: ConfigKey,
        records: &[GenerationRecord],
        embedder: &E,
    ) -> Result<Self, MetricsError> {
        let sent_div = if records.len() >= 2 { Some(sent_diversity(records, embedder)?) } else { None };
        Ok(Self {
            schema_version: crate::SCHEMA_VERSION,
            config_key,
            records: records.len(),
            dist1: corpus_dist_n(records, 1)?,
            dist2: corpus_dist_n(records, 2)?,
            extra_dist: BTreeMap::new(),
            sent_div,
            ppl: None,
            mean_ratings: None,
        })
    }
}

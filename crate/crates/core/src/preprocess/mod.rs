//! Raw sensor feeds to an aligned, log-transformed [`Dataset`].
//!
//! Stage order is fixed: warm-up trimming, running median, schedule filter,
//! co-located sensor deduplication, log transform, covariate alignment.
//! Whether the median runs before or after the schedule filter is
//! configurable (`median_before_schedule`).

mod covariates;
mod dataset_io;
mod records;
mod steps;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use covariates::{
    align_covariates, covariates_at, load_sources, read_timeseries_csv, schema_of, write_timeseries_csv,
    CovariateSource, GridGeometry, GriddedSeriesFile, SourceData, SourceFormat, SourceSpec,
};
pub use dataset_io::{read_dataset_csv, write_dataset_csv, Sidecar};
pub use records::{format_time, parse_time, read_raw_csv, write_raw_csv, RawRecord, RAW_HEADER};
pub use steps::{
    dedup_colocated, filter_schedule, log_transform, running_median, trim_warmup, DEFAULT_DEDUP_RADIUS_M,
    DEFAULT_LOG_FLOOR, DEFAULT_MEDIAN_WINDOW, DEFAULT_WARMUP_S,
};

use crate::error::{Error, Result};
use crate::geo::Projection;
use crate::types::{CovariateSchema, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub warmup_s: f64,
    pub median_window: usize,
    pub dedup_radius_m: f64,
    pub log_floor: f64,
    pub median_before_schedule: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            warmup_s: DEFAULT_WARMUP_S,
            median_window: DEFAULT_MEDIAN_WINDOW,
            dedup_radius_m: DEFAULT_DEDUP_RADIUS_M,
            log_floor: DEFAULT_LOG_FLOOR,
            median_before_schedule: true,
        }
    }
}

/// TOML file driving `aeromap preprocess`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    #[serde(default)]
    pub projection: Projection,
    #[serde(default)]
    pub params: PipelineParams,
    #[serde(default, rename = "source")]
    pub sources: Vec<SourceSpec>,
}

impl PreprocessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("preprocess config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(format!("preprocess config: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub input: usize,
    pub after_trim_warmup: usize,
    pub after_running_median: usize,
    pub after_filter_schedule: usize,
    pub after_dedup_colocated: usize,
    pub after_log_transform: usize,
    pub output: usize,
}

/// Runs every cleaning stage over the records and returns the surviving
/// records together with per-stage counts.
pub fn clean_records(records: &[RawRecord], params: &PipelineParams) -> Result<(Vec<RawRecord>, StageCounts)> {
    let mut counts = StageCounts {
        input: records.len(),
        ..Default::default()
    };
    let trimmed = trim_warmup(records, params.warmup_s);
    counts.after_trim_warmup = trimmed.len();
    let scheduled = if params.median_before_schedule {
        let m = running_median(&trimmed, params.median_window)?;
        counts.after_running_median = m.len();
        let s = filter_schedule(&m);
        counts.after_filter_schedule = s.len();
        s
    } else {
        let s = filter_schedule(&trimmed);
        counts.after_filter_schedule = s.len();
        let m = running_median(&s, params.median_window)?;
        counts.after_running_median = m.len();
        m
    };
    let deduped = dedup_colocated(&scheduled, params.dedup_radius_m);
    counts.after_dedup_colocated = deduped.len();
    Ok((deduped, counts))
}

/// Full pipeline: cleaning, log transform and covariate alignment.
pub fn run_pipeline(
    records: &[RawRecord],
    params: &PipelineParams,
    sources: &[CovariateSource],
    schema: &CovariateSchema,
) -> Result<(Dataset, StageCounts)> {
    let (clean, mut counts) = clean_records(records, params)?;
    let utc_offset_s = dominant_offset(&clean);
    let obs = log_transform(&clean, params.log_floor);
    counts.after_log_transform = obs.len();
    let ds = align_covariates(obs, sources, schema, utc_offset_s)?;
    counts.output = ds.len();
    Ok((ds, counts))
}

/// Most frequent UTC offset among the records (0 when empty).
pub fn dominant_offset(records: &[RawRecord]) -> i32 {
    let mut freq = std::collections::BTreeMap::new();
    for r in records {
        *freq.entry(r.time.offset().local_minus_utc()).or_insert(0usize) += 1;
    }
    freq.into_iter().max_by_key(|(off, n)| (*n, -off)).map(|(o, _)| o).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CovariateKind, Mobility, StationClass};
    use chrono::Duration;

    fn records() -> Vec<RawRecord> {
        let t0 = parse_time("2018-11-27T09:00:00+01:00").unwrap();
        let mut out = Vec::new();
        for k in 0..40 {
            out.push(RawRecord {
                sensor_id: "m1".into(),
                time: t0 + Duration::seconds(30 * k),
                x: 10.0 * k as f64,
                y: 0.0,
                concentration: 20.0 + (k % 3) as f64,
                mobility: Mobility::Mobile,
                run_id: "m1-0".into(),
                station_class: StationClass::LowCost,
            });
        }
        for (id, x) in [("f1", 0.0), ("f2", 10.0)] {
            for k in 0..5 {
                out.push(RawRecord {
                    sensor_id: id.into(),
                    time: t0 + Duration::seconds(600 * k),
                    x,
                    y: 0.0,
                    concentration: 15.0,
                    mobility: Mobility::Fixed,
                    run_id: String::new(),
                    station_class: StationClass::LowCost,
                });
            }
        }
        out
    }

    #[test]
    fn pipeline_counts_and_schema() {
        let src = vec![CovariateSource::temporal("temp", vec![0.0, 2e9], vec![0.0, 1.0])];
        let schema = CovariateSchema::new(vec!["temp".into()], vec![CovariateKind::Temporal]).unwrap();
        let recs = records();
        let (ds, counts) = run_pipeline(&recs, &PipelineParams::default(), &src, &schema).unwrap();
        assert_eq!(counts.input, 50);
        assert_eq!(counts.after_trim_warmup, 40);
        assert_eq!(counts.after_dedup_colocated, 35);
        assert_eq!(ds.len(), 35);
        assert_eq!(ds.utc_offset_s, 3600);
        assert!(ds.covariates.iter().all(|c| c.0.len() == 1));
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = PreprocessConfig {
            projection: Projection::default(),
            params: PipelineParams::default(),
            sources: vec![SourceSpec {
                name: "prox_primary".into(),
                kind: CovariateKind::Spatial,
                format: SourceFormat::Proximity,
                path: "roads.geojson".into(),
                class: Some("primary".into()),
                radius_m: None,
            }],
        };
        let back = PreprocessConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}

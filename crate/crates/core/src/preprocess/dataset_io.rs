//! Dataset CSV: fixed observation columns followed by one column per
//! covariate, headed `name@kind`. Floats use the shortest representation
//! that round-trips exactly.

use std::path::Path;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use super::records::format_time;
use super::{PipelineParams, StageCounts};
use crate::error::{Error, Result};
use crate::geo::Projection;
use crate::types::{CovariateKind, CovariateSchema, CovariateVector, Dataset, Observation, SpatioTemporalPoint};

const FIXED_COLUMNS: [&str; 8] = ["sensor_id", "time_iso8601", "x", "y", "t", "value", "mobility", "station_class"];

/// JSON written next to a preprocessed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: CovariateSchema,
    pub projection: Projection,
    pub utc_offset_s: i32,
    pub params: PipelineParams,
    pub counts_lowcost: StageCounts,
    pub counts_reference: Option<StageCounts>,
    pub n_observations: usize,
}

fn kind_str(k: CovariateKind) -> &'static str {
    match k {
        CovariateKind::Temporal => "temporal",
        CovariateKind::Spatial => "spatial",
        CovariateKind::SpatioTemporal => "spatio_temporal",
    }
}

fn parse_kind(s: &str) -> Result<CovariateKind> {
    match s {
        "temporal" => Ok(CovariateKind::Temporal),
        "spatial" => Ok(CovariateKind::Spatial),
        "spatio_temporal" => Ok(CovariateKind::SpatioTemporal),
        other => Err(Error::Parse(format!("unknown covariate kind `{other}`"))),
    }
}

fn local_time(t: f64, offset: i32) -> String {
    let off = FixedOffset::east_opt(offset).unwrap_or(FixedOffset::east_opt(0).unwrap());
    let secs = t.floor();
    let nanos = ((t - secs) * 1e9).round().min(999_999_999.0) as u32;
    let dt = DateTime::from_timestamp(secs as i64, nanos).unwrap_or_default().with_timezone(&off);
    format_time(&dt)
}

pub fn write_dataset_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(
        ds.schema
            .names
            .iter()
            .zip(&ds.schema.kinds)
            .map(|(n, k)| format!("{n}@{}", kind_str(*k))),
    );
    w.write_record(&header)?;
    for (o, c) in ds.observations.iter().zip(&ds.covariates) {
        let mut row = vec![
            o.sensor_id.clone(),
            local_time(o.point.t, ds.utc_offset_s),
            o.point.x.to_string(),
            o.point.y.to_string(),
            o.point.t.to_string(),
            o.value.to_string(),
            o.mobility.as_str().to_string(),
            o.station_class.as_str().to_string(),
        ];
        row.extend(c.0.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn num(s: &str, what: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} `{s}`")))
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < FIXED_COLUMNS.len() || header.iter().take(FIXED_COLUMNS.len()).ne(FIXED_COLUMNS) {
        return Err(Error::Parse(format!("{} is not a dataset CSV", path.display())));
    }
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    for h in header.iter().skip(FIXED_COLUMNS.len()) {
        let (n, k) = h
            .rsplit_once('@')
            .ok_or_else(|| Error::Parse(format!("covariate column `{h}` lacks `@kind`")))?;
        names.push(n.to_string());
        kinds.push(parse_kind(k)?);
    }
    let schema = CovariateSchema::new(names, kinds)?;
    let mut obs = Vec::new();
    let mut covs = Vec::new();
    let mut offset = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if offset.is_none() {
            offset = Some(
                super::records::parse_time(&rec[1])?
                    .offset()
                    .local_minus_utc(),
            );
        }
        obs.push(Observation {
            point: SpatioTemporalPoint::new(num(&rec[2], "x", line)?, num(&rec[3], "y", line)?, num(&rec[4], "t", line)?),
            value: num(&rec[5], "value", line)?,
            sensor_id: rec[0].to_string(),
            mobility: rec[6].parse()?,
            station_class: rec[7].parse()?,
        });
        covs.push(CovariateVector(
            (FIXED_COLUMNS.len()..rec.len())
                .map(|j| num(&rec[j], "covariate", line))
                .collect::<Result<_>>()?,
        ));
    }
    Dataset::new(obs, covs, schema, offset.unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Mobility, StationClass};

    #[test]
    fn dataset_csv_round_trip_is_exact() {
        let schema = CovariateSchema::new(
            vec!["temp".into(), "prox".into()],
            vec![CovariateKind::Temporal, CovariateKind::Spatial],
        )
        .unwrap();
        let obs = vec![
            Observation {
                point: SpatioTemporalPoint::new(0.1 + 0.2, -5.5, 1_543_230_000.25),
                value: 2.302585092994046,
                sensor_id: "a,b".into(),
                mobility: Mobility::Mobile,
                station_class: StationClass::LowCost,
            },
            Observation {
                point: SpatioTemporalPoint::new(1e6 / 3.0, 7.0, 1_543_230_060.0),
                value: -0.1,
                sensor_id: "ref1".into(),
                mobility: Mobility::Fixed,
                station_class: StationClass::Reference,
            },
        ];
        let covs = vec![CovariateVector(vec![10.5, 1.0 / 7.0]), CovariateVector(vec![-3.0, 0.0])];
        let ds = Dataset::new(obs, covs, schema, 3600).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_dataset_csv(&p, &ds).unwrap();
        assert_eq!(read_dataset_csv(&p).unwrap(), ds);
    }
}

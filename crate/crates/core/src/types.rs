//! Domain types shared by every model and pipeline stage.

use std::collections::{BTreeSet, HashSet};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Projected planar location (meters) plus time (seconds since the Unix epoch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl SpatioTemporalPoint {
    pub fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.t.is_finite()
    }

    pub fn spatial_distance(&self, other: &Self) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Space-time distance `sqrt(dx² + dy² + c·dt²)`; `c` converts squared seconds
/// into squared meters.
pub fn st_distance(a: &SpatioTemporalPoint, b: &SpatioTemporalPoint, c: f64) -> f64 {
    debug_assert!(c.is_finite() && c >= 0.0);
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dt = a.t - b.t;
    (dx * dx + dy * dy + c * dt * dt).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    Fixed,
    Mobile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationClass {
    LowCost,
    Reference,
}

impl Mobility {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mobility::Fixed => "fixed",
            Mobility::Mobile => "mobile",
        }
    }
}

impl std::str::FromStr for Mobility {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(Mobility::Fixed),
            "mobile" => Ok(Mobility::Mobile),
            other => Err(crate::Error::Parse(format!("unknown mobility `{other}`"))),
        }
    }
}

impl StationClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            StationClass::LowCost => "lowcost",
            StationClass::Reference => "reference",
        }
    }
}

impl std::str::FromStr for StationClass {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lowcost" | "low_cost" => Ok(StationClass::LowCost),
            "reference" => Ok(StationClass::Reference),
            other => Err(crate::Error::Parse(format!("unknown station class `{other}`"))),
        }
    }
}

/// One log-transformed pollutant measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: SpatioTemporalPoint,
    /// `ln` of the concentration in µg/m³.
    pub value: f64,
    pub sensor_id: String,
    pub mobility: Mobility,
    pub station_class: StationClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Temporal,
    Spatial,
    SpatioTemporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub names: Vec<String>,
    pub kinds: Vec<CovariateKind>,
}

impl CovariateSchema {
    pub fn new(names: Vec<String>, kinds: Vec<CovariateKind>) -> Result<Self> {
        let schema = Self { names, kinds };
        schema.validate()?;
        Ok(schema)
    }

    pub fn empty() -> Self {
        Self {
            names: Vec::new(),
            kinds: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.len() != self.kinds.len() {
            return Err(contract("schema names and kinds differ in length"));
        }
        let mut seen = HashSet::new();
        for n in &self.names {
            if !seen.insert(n.as_str()) {
                return Err(contract(format!("duplicate covariate name `{n}`")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// The P covariate values attached to one observation or query location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateVector(pub Vec<f64>);

impl CovariateVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Locations and covariates at which a fitted model is asked for predictions.
#[derive(Debug, Clone, Default)]
pub struct Query {
    pub points: Vec<SpatioTemporalPoint>,
    pub covariates: Vec<CovariateVector>,
}

impl Query {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub covariates: Vec<CovariateVector>,
    pub schema: CovariateSchema,
    /// Offset of local civil time from UTC, used to assign observations to days.
    #[serde(default)]
    pub utc_offset_s: i32,
}

impl Dataset {
    pub fn new(
        observations: Vec<Observation>,
        covariates: Vec<CovariateVector>,
        schema: CovariateSchema,
        utc_offset_s: i32,
    ) -> Result<Self> {
        let ds = Self {
            observations,
            covariates,
            schema,
            utc_offset_s,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn empty(schema: CovariateSchema, utc_offset_s: i32) -> Self {
        Self {
            observations: Vec::new(),
            covariates: Vec::new(),
            schema,
            utc_offset_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.observations.len() != self.covariates.len() {
            return Err(contract(format!(
                "{} observations but {} covariate vectors",
                self.observations.len(),
                self.covariates.len()
            )));
        }
        let p = self.schema.len();
        for (i, (o, c)) in self.observations.iter().zip(&self.covariates).enumerate() {
            if !o.point.is_finite() || !o.value.is_finite() {
                return Err(contract(format!("observation {i} is not finite")));
            }
            if c.0.len() != p {
                return Err(contract(format!(
                    "observation {i} has {} covariates, schema expects {p}",
                    c.0.len()
                )));
            }
            if c.0.iter().any(|v| !v.is_finite()) {
                return Err(contract(format!("observation {i} has a non-finite covariate")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.schema.len()
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.value).collect()
    }

    pub fn points(&self) -> Vec<SpatioTemporalPoint> {
        self.observations.iter().map(|o| o.point).collect()
    }

    pub fn as_query(&self) -> Query {
        Query {
            points: self.points(),
            covariates: self.covariates.clone(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
            covariates: indices.iter().map(|&i| self.covariates[i].clone()).collect(),
            schema: self.schema.clone(),
            utc_offset_s: self.utc_offset_s,
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&Observation) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.observations[i])).collect();
        self.subset(&idx)
    }

    /// Concatenates two datasets sharing a schema.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema != other.schema {
            return Err(contract("cannot concatenate datasets with different schemas"));
        }
        let mut out = self.clone();
        out.observations.extend(other.observations.iter().cloned());
        out.covariates.extend(other.covariates.iter().cloned());
        Ok(out)
    }

    /// Keeps only the named covariate columns, in the given order.
    pub fn select_covariates(&self, names: &[&str]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.schema
                    .index_of(n)
                    .ok_or_else(|| contract(format!("unknown covariate `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let schema = CovariateSchema {
            names: idx.iter().map(|&i| self.schema.names[i].clone()).collect(),
            kinds: idx.iter().map(|&i| self.schema.kinds[i]).collect(),
        };
        Ok(Dataset {
            observations: self.observations.clone(),
            covariates: self
                .covariates
                .iter()
                .map(|c| CovariateVector(idx.iter().map(|&i| c.0[i]).collect()))
                .collect(),
            schema,
            utc_offset_s: self.utc_offset_s,
        })
    }

    pub fn local_date(&self, t: f64) -> NaiveDate {
        local_date(t, self.utc_offset_s)
    }

    /// Local calendar days present, sorted.
    pub fn days(&self) -> Vec<NaiveDate> {
        self.observations
            .iter()
            .map(|o| self.local_date(o.point.t))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Distinct sensor ids, sorted.
    pub fn sensor_ids(&self) -> Vec<String> {
        self.observations
            .iter()
            .map(|o| o.sensor_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

pub fn local_date(t: f64, utc_offset_s: i32) -> NaiveDate {
    let secs = (t + utc_offset_s as f64).floor() as i64;
    DateTime::from_timestamp(secs, 0)
        .map(|d| d.date_naive())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, t: f64) -> SpatioTemporalPoint {
        SpatioTemporalPoint::new(x, y, t)
    }

    #[test]
    fn st_distance_examples() {
        let a = p(1.0, 2.0, 3.0);
        assert_eq!(st_distance(&a, &a, 7.0), 0.0);
        assert_eq!(st_distance(&p(0.0, 0.0, 0.0), &p(3.0, 4.0, 0.0), 1.0), 5.0);
        assert_eq!(st_distance(&p(0.0, 0.0, 0.0), &p(0.0, 0.0, 2.0), 9.0), 6.0);
    }

    #[test]
    fn schema_rejects_duplicates() {
        let r = CovariateSchema::new(
            vec!["a".into(), "a".into()],
            vec![CovariateKind::Spatial, CovariateKind::Spatial],
        );
        assert!(r.is_err());
    }

    #[test]
    fn dataset_checks_lengths() {
        let schema = CovariateSchema::new(vec!["a".into()], vec![CovariateKind::Spatial]).unwrap();
        let obs = Observation {
            point: p(0.0, 0.0, 0.0),
            value: 1.0,
            sensor_id: "s".into(),
            mobility: Mobility::Fixed,
            station_class: StationClass::LowCost,
        };
        assert!(Dataset::new(vec![obs.clone()], vec![], schema.clone(), 0).is_err());
        assert!(Dataset::new(vec![obs.clone()], vec![CovariateVector(vec![1.0, 2.0])], schema.clone(), 0).is_err());
        assert!(Dataset::new(vec![obs], vec![CovariateVector(vec![1.0])], schema, 0).is_ok());
    }

    #[test]
    fn local_date_uses_offset() {
        // 2018-11-25T23:30:00Z is already the 26th in UTC+1.
        let t = 1_543_188_600.0;
        assert_eq!(local_date(t, 0), NaiveDate::from_ymd_opt(2018, 11, 25).unwrap());
        assert_eq!(local_date(t, 3600), NaiveDate::from_ymd_opt(2018, 11, 26).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn st_distance_symmetric_and_positive(
                ax in -1e4..1e4f64, ay in -1e4..1e4f64, at in 0.0..1e5f64,
                bx in -1e4..1e4f64, by in -1e4..1e4f64, bt in 0.0..1e5f64,
                c in 1e-6..10.0f64,
            ) {
                let a = p(ax, ay, at);
                let b = p(bx, by, bt);
                let d1 = st_distance(&a, &b, c);
                let d2 = st_distance(&b, &a, c);
                prop_assert_eq!(d1, d2);
                prop_assert_eq!(d1 == 0.0, a == b);
            }
        }
    }
}

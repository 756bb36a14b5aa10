//! Covariate sources and their alignment onto observations.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::records::{format_time, parse_time};
use crate::error::{contract, Error, Result};
use crate::geo::{read_geojson, Feature, Geometry, Projection, Xy};
use crate::raster::AsciiGrid;
use crate::types::{CovariateKind, CovariateSchema, CovariateVector, Dataset, Observation, SpatioTemporalPoint};

/// Geometry of a regular grid without values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
}

impl GridGeometry {
    /// Row-major index (northernmost row first) of the cell containing (x, y).
    pub fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        let c = ((x - self.xll) / self.cellsize).floor();
        let rb = ((y - self.yll) / self.cellsize).floor();
        if c < 0.0 || rb < 0.0 || c >= self.ncols as f64 || rb >= self.nrows as f64 {
            return None;
        }
        Some((self.nrows - 1 - rb as usize) * self.ncols + c as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceData {
    /// A time series, linearly interpolated.
    Temporal { times: Vec<f64>, values: Vec<f64> },
    /// Value of the raster cell containing the point.
    Raster(AsciiGrid),
    /// Distance in meters to the nearest feature.
    Proximity(Vec<Geometry>),
    /// Number of feature locations within `radius_m`.
    Count { points: Vec<Xy>, radius_m: f64 },
    /// Per-cell time series on a coarse grid, linearly interpolated in time.
    Gridded {
        grid: GridGeometry,
        times: Vec<f64>,
        frames: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSource {
    pub name: String,
    pub kind: CovariateKind,
    pub data: SourceData,
}

fn interp_series(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let n = times.len();
    if n == 0 || t < times[0] || t > times[n - 1] {
        return None;
    }
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return Some(values[0]);
    }
    if k >= n {
        return Some(values[n - 1]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    Some(values[k - 1] + w * (values[k] - values[k - 1]))
}

impl CovariateSource {
    pub fn temporal(name: &str, times: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Temporal,
            data: SourceData::Temporal { times, values },
        }
    }

    pub fn proximity(name: &str, geoms: Vec<Geometry>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Spatial,
            data: SourceData::Proximity(geoms),
        }
    }

    /// Value at a point, `None` when outside coverage.
    pub fn evaluate(&self, p: &SpatioTemporalPoint) -> Option<f64> {
        match &self.data {
            SourceData::Temporal { times, values } => interp_series(times, values, p.t),
            SourceData::Raster(g) => g.sample(p.x, p.y),
            SourceData::Proximity(geoms) => {
                let d = geoms.iter().map(|g| g.distance_to([p.x, p.y])).fold(f64::INFINITY, f64::min);
                d.is_finite().then_some(d)
            }
            SourceData::Count { points, radius_m } => {
                let r2 = radius_m * radius_m;
                Some(
                    points
                        .iter()
                        .filter(|q| (q[0] - p.x).powi(2) + (q[1] - p.y).powi(2) <= r2)
                        .count() as f64,
                )
            }
            SourceData::Gridded { grid, times, frames } => {
                let cell = grid.cell_index(p.x, p.y)?;
                let series: Vec<f64> = frames.iter().map(|f| f[cell]).collect();
                interp_series(times, &series, p.t)
            }
        }
    }

    fn out_of_coverage(&self) -> Error {
        Error::OutOfCoverage {
            source_name: self.name.clone(),
        }
    }
}

fn location_key(p: &SpatioTemporalPoint) -> (u64, u64) {
    (p.x.to_bits(), p.y.to_bits())
}

fn order_sources<'a>(sources: &'a [CovariateSource], schema: &CovariateSchema) -> Result<Vec<&'a CovariateSource>> {
    schema
        .names
        .iter()
        .zip(&schema.kinds)
        .map(|(name, kind)| {
            let s = sources
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| contract(format!("no covariate source named `{name}`")))?;
            if s.kind != *kind {
                return Err(contract(format!("source `{name}` is {:?}, schema says {:?}", s.kind, kind)));
            }
            Ok(s)
        })
        .collect()
}

/// Covariate vectors at arbitrary points; per-point errors name the first
/// source that does not cover the point.
pub fn covariates_at(
    points: &[SpatioTemporalPoint],
    sources: &[CovariateSource],
    schema: &CovariateSchema,
) -> Result<Vec<Result<CovariateVector>>> {
    let ordered = order_sources(sources, schema)?;

    // Building counts are computed once per distinct location.
    let mut count_cache: Vec<Option<HashMap<(u64, u64), f64>>> = Vec::with_capacity(ordered.len());
    for s in &ordered {
        if matches!(s.data, SourceData::Count { .. }) {
            let mut uniq: Vec<SpatioTemporalPoint> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for p in points {
                if seen.insert(location_key(p)) {
                    uniq.push(*p);
                }
            }
            let vals: Vec<f64> = uniq.par_iter().map(|p| s.evaluate(p).unwrap_or(0.0)).collect();
            count_cache.push(Some(uniq.iter().map(location_key).zip(vals).collect()));
        } else {
            count_cache.push(None);
        }
    }

    Ok(points
        .par_iter()
        .map(|p| {
            let mut v = Vec::with_capacity(ordered.len());
            for (s, cache) in ordered.iter().zip(&count_cache) {
                let val = match cache {
                    Some(c) => c.get(&location_key(p)).copied(),
                    None => s.evaluate(p),
                };
                v.push(val.ok_or_else(|| s.out_of_coverage())?);
            }
            Ok(CovariateVector(v))
        })
        .collect())
}

/// Attaches covariates to observations, columns ordered per `schema`.
pub fn align_covariates(
    obs: Vec<Observation>,
    sources: &[CovariateSource],
    schema: &CovariateSchema,
    utc_offset_s: i32,
) -> Result<Dataset> {
    let points: Vec<SpatioTemporalPoint> = obs.iter().map(|o| o.point).collect();
    let covs = covariates_at(&points, sources, schema)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(obs, covs, schema.clone(), utc_offset_s)
}

// ---------------------------------------------------------------------------
// On-disk description of covariate sources.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    /// CSV `time_iso8601,value`
    TimeseriesCsv,
    /// ESRI ASCII grid
    Raster,
    /// GeoJSON; distance to the nearest feature of `class`
    Proximity,
    /// GeoJSON; number of features of `class` within `radius_m`
    Count,
    /// JSON gridded time series
    GriddedSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub kind: CovariateKind,
    pub format: SourceFormat,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedSeriesFile {
    pub grid: GridGeometry,
    pub times: Vec<String>,
    pub frames: Vec<Vec<f64>>,
}

pub fn read_timeseries_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t = parse_time(rec.get(0).unwrap_or(""))?;
        let v: f64 = rec
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad value in {}", path.display())))?;
        pairs.push((t.timestamp() as f64, v));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

pub fn write_timeseries_csv(path: &Path, times: &[f64], values: &[f64], utc_offset_s: i32) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_iso8601", "value"])?;
    let off = chrono::FixedOffset::east_opt(utc_offset_s).unwrap_or(chrono::FixedOffset::east_opt(0).unwrap());
    for (t, v) in times.iter().zip(values) {
        let dt = chrono::DateTime::from_timestamp(*t as i64, 0).unwrap_or_default().with_timezone(&off);
        w.write_record([format_time(&dt), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn features_of_class(features: &[Feature], class: &Option<String>) -> Vec<Geometry> {
    features
        .iter()
        .filter(|f| class.as_ref().is_none_or(|c| &f.class == c))
        .map(|f| f.geometry.clone())
        .collect()
}

/// Loads sources; relative paths resolve against `base_dir`.
pub fn load_sources(specs: &[SourceSpec], base_dir: &Path, proj: &Projection) -> Result<Vec<CovariateSource>> {
    let mut geojson_cache: HashMap<PathBuf, Vec<Feature>> = HashMap::new();
    let mut out = Vec::new();
    for spec in specs {
        let path = if spec.path.is_absolute() {
            spec.path.clone()
        } else {
            base_dir.join(&spec.path)
        };
        let data = match spec.format {
            SourceFormat::TimeseriesCsv => {
                let (times, values) = read_timeseries_csv(&path)?;
                SourceData::Temporal { times, values }
            }
            SourceFormat::Raster => SourceData::Raster(AsciiGrid::read(&path)?),
            SourceFormat::Proximity | SourceFormat::Count => {
                if !geojson_cache.contains_key(&path) {
                    geojson_cache.insert(path.clone(), read_geojson(&path, proj)?);
                }
                let geoms = features_of_class(&geojson_cache[&path], &spec.class);
                if spec.format == SourceFormat::Proximity {
                    SourceData::Proximity(geoms)
                } else {
                    SourceData::Count {
                        points: geoms.iter().map(Geometry::representative_point).collect(),
                        radius_m: spec.radius_m.unwrap_or(500.0),
                    }
                }
            }
            SourceFormat::GriddedSeries => {
                let file: GriddedSeriesFile = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                let times = file
                    .times
                    .iter()
                    .map(|s| parse_time(s).map(|t| t.timestamp() as f64))
                    .collect::<Result<Vec<_>>>()?;
                if file.frames.len() != times.len()
                    || file.frames.iter().any(|f| f.len() != file.grid.ncols * file.grid.nrows)
                {
                    return Err(Error::Parse(format!("inconsistent gridded series in {}", path.display())));
                }
                SourceData::Gridded {
                    grid: file.grid,
                    times,
                    frames: file.frames,
                }
            }
        };
        out.push(CovariateSource {
            name: spec.name.clone(),
            kind: spec.kind,
            data,
        });
    }
    Ok(out)
}

pub fn schema_of(specs: &[SourceSpec]) -> Result<CovariateSchema> {
    CovariateSchema::new(
        specs.iter().map(|s| s.name.clone()).collect(),
        specs.iter().map(|s| s.kind).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Mobility, StationClass};

    fn obs(x: f64, y: f64, t: f64) -> Observation {
        Observation {
            point: SpatioTemporalPoint::new(x, y, t),
            value: 0.0,
            sensor_id: "s".into(),
            mobility: Mobility::Fixed,
            station_class: StationClass::LowCost,
        }
    }

    fn sources() -> (Vec<CovariateSource>, CovariateSchema) {
        let temp = CovariateSource::temporal("temperature", vec![43_200.0, 46_800.0], vec![10.0, 12.0]);
        let road = CovariateSource::proximity("prox_road", vec![Geometry::LineString(vec![[0.0, 0.0], [1000.0, 0.0]])]);
        let count = CovariateSource {
            name: "buildings".into(),
            kind: CovariateKind::Spatial,
            data: SourceData::Count {
                points: vec![[0.0, 0.0], [100.0, 0.0], [900.0, 0.0]],
                radius_m: 500.0,
            },
        };
        let mut g = AsciiGrid::new(2, 2, -1000.0, -1000.0, 1000.0);
        g.values = vec![1.0, 2.0, 3.0, 4.0];
        let elev = CovariateSource {
            name: "elevation".into(),
            kind: CovariateKind::Spatial,
            data: SourceData::Raster(g),
        };
        let chim = CovariateSource {
            name: "ctm".into(),
            kind: CovariateKind::SpatioTemporal,
            data: SourceData::Gridded {
                grid: GridGeometry {
                    ncols: 2,
                    nrows: 1,
                    xll: -1000.0,
                    yll: -500.0,
                    cellsize: 1000.0,
                },
                times: vec![43_200.0, 46_800.0],
                frames: vec![vec![1.0, 10.0], vec![3.0, 30.0]],
            },
        };
        // schema order differs from source order on purpose
        let schema = CovariateSchema::new(
            vec!["elevation".into(), "temperature".into(), "prox_road".into(), "buildings".into(), "ctm".into()],
            vec![
                CovariateKind::Spatial,
                CovariateKind::Temporal,
                CovariateKind::Spatial,
                CovariateKind::Spatial,
                CovariateKind::SpatioTemporal,
            ],
        )
        .unwrap();
        (vec![temp, road, count, elev, chim], schema)
    }

    #[test]
    fn temporal_midpoint_interpolation() {
        let (src, schema) = sources();
        let ds = align_covariates(vec![obs(10.0, 50.0, 45_000.0)], &src, &schema, 0).unwrap();
        let c = &ds.covariates[0].0;
        assert_eq!(c[1], 11.0);
        assert_eq!(c[2], 50.0);
        assert_eq!(c[3], 2.0);
        assert_eq!(c[0], 2.0); // north-east cell
        // cell (col 1) of the gridded source, halfway between 10 and 30
        assert_eq!(c[4], 20.0);
    }

    #[test]
    fn spatial_and_temporal_invariance() {
        let (src, schema) = sources();
        let ds = align_covariates(
            vec![obs(10.0, 50.0, 43_500.0), obs(10.0, 50.0, 46_000.0), obs(-700.0, -300.0, 43_500.0)],
            &src,
            &schema,
            0,
        )
        .unwrap();
        let (a, b, c) = (&ds.covariates[0].0, &ds.covariates[1].0, &ds.covariates[2].0);
        // same place, different times: spatial columns equal
        for k in [0, 2, 3] {
            assert_eq!(a[k], b[k]);
        }
        // same time, different places: temporal column equal
        assert_eq!(a[1], c[1]);
    }

    #[test]
    fn out_of_coverage_names_source() {
        let (src, schema) = sources();
        let err = align_covariates(vec![obs(10.0, 50.0, 50_000.0)], &src, &schema, 0).unwrap_err();
        match err {
            Error::OutOfCoverage { source_name } => assert_eq!(source_name, "temperature"),
            other => panic!("unexpected {other:?}"),
        }
    }
}

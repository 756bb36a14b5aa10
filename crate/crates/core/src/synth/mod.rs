//! Synthetic scenes with known ground truth.
//!
//! The log-concentration at a point is a linear trend in the scene's
//! covariates, plus a latent Gaussian space-time field, plus a per-day
//! offset. Fixed and mobile low-cost sensors and reference stations sample
//! it with per-sensor bias and noise; the raw feed is exponentiated so the
//! whole preprocessing pipeline applies to it.

mod field;
mod fleet;
mod world;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use field::{simulate_field, DayField, FieldParams, TruthField, MAX_SIM_NODES};
pub use fleet::{deploy, walk, FleetSpec, Track};
pub use world::{covariate_kind, scene_schema, Lattice, RoadSpec, World, COVARIATE_NAMES, ROAD_CLASSES};

use crate::error::{contract, Error, Result};
use crate::geo::{write_geojson, Projection};
use crate::gp::GpParams;
use crate::models::linear::TrendCoefficients;
use crate::preprocess::{
    covariates_at, format_time, run_pipeline, write_raw_csv, write_timeseries_csv, CovariateSource, GriddedSeriesFile,
    PipelineParams, PreprocessConfig, RawRecord,
};
use crate::types::{CovariateSchema, CovariateVector, Dataset, Observation, SpatioTemporalPoint, StationClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendSpec {
    pub intercept: f64,
    /// Coefficient per covariate name; absent names get zero.
    pub coefficients: BTreeMap<String, f64>,
}

impl Default for TrendSpec {
    fn default() -> Self {
        let c = [
            ("temperature", -0.02),
            ("humidity", 0.004),
            ("elevation", -0.004),
            ("proximity_motorway", -2.0e-4),
            ("proximity_trunk", -1.5e-4),
            ("proximity_primary", -4.0e-4),
            ("proximity_secondary", -3.0e-4),
            ("proximity_tertiary", -2.0e-4),
            ("proximity_residential", -1.0e-4),
            ("proximity_green_space", 1.0e-4),
            ("proximity_industrial", -1.5e-4),
            ("buildings_500m", 0.003),
            ("proximity_river", 5.0e-5),
            ("chimere_analysis", 0.02),
            ("chimere_forecast", 0.01),
        ];
        Self {
            intercept: 2.8,
            coefficients: c.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

impl TrendSpec {
    pub fn coefficients(&self, schema: &CovariateSchema) -> Result<TrendCoefficients> {
        if let Some(bad) = self.coefficients.keys().find(|k| schema.index_of(k).is_none()) {
            return Err(contract(format!("trend coefficient for unknown covariate `{bad}`")));
        }
        let mut beta = vec![self.intercept];
        beta.extend(schema.names.iter().map(|n| self.coefficients.get(n).copied().unwrap_or(0.0)));
        Ok(TrendCoefficients { beta })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Measurement noise of low-cost sensors, log units.
    pub lowcost_sd: f64,
    pub reference_sd: f64,
    /// Spread of the constant per-sensor bias of low-cost sensors, log units.
    pub bias_sd: f64,
    /// Deterministic offset added per elapsed day.
    pub drift_per_day: f64,
    /// Random per-day offset.
    pub day_effect_sd: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            lowcost_sd: 0.1,
            reference_sd: 0.02,
            bias_sd: 0.0,
            drift_per_day: 0.0,
            day_effect_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    /// Local date of the first day, `YYYY-MM-DD`.
    pub start_date: String,
    pub utc_offset_s: i32,
    pub n_days: usize,
    pub width_m: f64,
    pub height_m: f64,
    /// Local hours bounding each day's sampling.
    pub day_start_h: f64,
    pub day_end_h: f64,
    pub projection: Projection,
    pub roads: RoadSpec,
    pub field: FieldParams,
    pub trend: TrendSpec,
    pub fleet: FleetSpec,
    pub noise: NoiseSpec,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            start_date: "2024-03-04".into(),
            utc_offset_s: 3600,
            n_days: 3,
            width_m: 3000.0,
            height_m: 3000.0,
            day_start_h: 3.0,
            day_end_h: 20.0,
            projection: Projection::default(),
            roads: RoadSpec::default(),
            field: FieldParams::default(),
            trend: TrendSpec::default(),
            fleet: FleetSpec::default(),
            noise: NoiseSpec::default(),
        }
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("scene config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(format!("scene config: {e}")))
    }

    pub fn first_day(&self) -> Result<NaiveDate> {
        NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| Error::Parse(format!("start_date `{}`: {e}", self.start_date)))
    }

    fn span_t(&self) -> f64 {
        (self.day_end_h - self.day_start_h) * 3600.0
    }

    pub fn validate(&self) -> Result<()> {
        self.first_day()?;
        let n = &self.noise;
        let ok = self.n_days >= 1
            && self.width_m > 0.0
            && self.height_m > 0.0
            && (0.0..24.0).contains(&self.day_start_h)
            && self.day_end_h > self.day_start_h
            && self.day_end_h <= 24.0
            && FixedOffset::east_opt(self.utc_offset_s).is_some()
            && [n.lowcost_sd, n.reference_sd, n.bias_sd, n.day_effect_sd].iter().all(|v| *v >= 0.0)
            && n.drift_per_day.is_finite();
        if !ok {
            return Err(contract("scene config: extents, days, hours and noise levels must be positive and consistent"));
        }
        self.field.validate()?;
        self.fleet.validate(self.span_t())?;
        self.trend.coefficients(&scene_schema())?;
        Ok(())
    }

    /// UNIX time of each day's local midnight.
    pub fn midnights(&self) -> Result<Vec<f64>> {
        let d0 = self.first_day()?;
        Ok((0..self.n_days)
            .map(|d| {
                let date = d0 + chrono::Days::new(d as u64);
                date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp() as f64 - self.utc_offset_s as f64
            })
            .collect())
    }
}

/// Everything `truth_at` needs.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub field: TruthField,
    pub trend: TrendCoefficients,
    pub day_offsets: Vec<f64>,
    pub sources: Vec<CovariateSource>,
    pub schema: CovariateSchema,
}

impl SceneTruth {
    pub fn at(&self, points: &[SpatioTemporalPoint]) -> Result<Vec<f64>> {
        let covs = covariates_at(points, &self.sources, &self.schema)?;
        points
            .iter()
            .zip(covs)
            .map(|(p, c)| {
                let c = c?;
                let nu = self
                    .field
                    .value_at(p)
                    .ok_or_else(|| contract(format!("point ({}, {}, {}) lies outside the simulated scene", p.x, p.y, p.t)))?;
                let day = self.day_of(p.t).expect("inside a simulated day");
                Ok(self.trend.evaluate(&c.0) + nu + self.day_offsets[day])
            })
            .collect()
    }

    fn day_of(&self, t: f64) -> Option<usize> {
        self.field.days.iter().position(|d| (d.t0..=d.t0 + self.field.span_t).contains(&t))
    }
}

/// Records every true parameter of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    pub config: SceneConfig,
    pub schema: CovariateSchema,
    pub trend: TrendCoefficients,
    /// Field parameters; the nugget is the low-cost noise variance.
    pub gp_params: GpParams,
    pub days: Vec<String>,
    pub day_offsets: Vec<f64>,
    pub sensor_bias: BTreeMap<String, f64>,
    pub n_lowcost_records: usize,
    pub n_reference_records: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub world: World,
    pub truth: SceneTruth,
    /// Direct samples of low-cost sensors, log scale, no preprocessing.
    pub lowcost: Dataset,
    pub reference: Dataset,
    pub raw_lowcost: Vec<RawRecord>,
    pub raw_reference: Vec<RawRecord>,
    pub manifest: SceneManifest,
}

pub const SCENE_FILES: [&str; 11] = [
    "lowcost.csv",
    "reference.csv",
    "roads.geojson",
    "landuse.geojson",
    "elevation.asc",
    "temperature.csv",
    "humidity.csv",
    "chimere_analysis.json",
    "chimere_forecast.json",
    "preprocess.toml",
    "manifest.json",
];

pub fn generate_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let midnights = cfg.midnights()?;
    let world = World::generate(cfg.width_m, cfg.height_m, &cfg.roads, &midnights, cfg.utc_offset_s, &mut rng)?;
    let windows: Vec<(f64, f64)> = midnights.iter().map(|m| (m + cfg.day_start_h * 3600.0, cfg.span_t())).collect();
    let starts: Vec<f64> = windows.iter().map(|w| w.0).collect();
    let field = TruthField::simulate(&cfg.field, [0.0, 0.0, cfg.width_m, cfg.height_m], &starts, cfg.span_t(), &mut rng)?;
    let day_offsets: Vec<f64> = (0..cfg.n_days)
        .map(|d| cfg.noise.drift_per_day * d as f64 + cfg.noise.day_effect_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let schema = scene_schema();
    let trend = cfg.trend.coefficients(&schema)?;
    let truth = SceneTruth {
        field,
        trend: trend.clone(),
        day_offsets: day_offsets.clone(),
        sources: world.sources(),
        schema: schema.clone(),
    };

    let tracks = deploy(&cfg.fleet, &world.lattice, cfg.width_m, cfg.height_m, &windows, &mut rng);
    let mut sensor_bias = BTreeMap::new();
    for t in &tracks {
        let b = if t.class == StationClass::LowCost {
            cfg.noise.bias_sd * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        sensor_bias.insert(t.sensor_id.clone(), b);
    }

    let offset = FixedOffset::east_opt(cfg.utc_offset_s).expect("validated offset");
    let mut lowcost = (Vec::new(), Vec::new(), Vec::new());
    let mut reference = (Vec::new(), Vec::new(), Vec::new());
    for t in &tracks {
        let covs = covariates_at(&t.points, &truth.sources, &schema)?;
        let sd = match t.class {
            StationClass::LowCost => cfg.noise.lowcost_sd,
            StationClass::Reference => cfg.noise.reference_sd,
        };
        let bias = sensor_bias[&t.sensor_id];
        let sink = match t.class {
            StationClass::LowCost => &mut lowcost,
            StationClass::Reference => &mut reference,
        };
        for ((p, c), run) in t.points.iter().zip(covs).zip(&t.runs) {
            let c: CovariateVector = c?;
            let nu = truth.field.value_at(p).ok_or_else(|| contract("sample outside the simulated scene"))?;
            let day = truth.day_of(p.t).expect("sampled inside a day");
            let value = trend.evaluate(&c.0) + nu + day_offsets[day] + bias + sd * rng.sample::<f64, _>(StandardNormal);
            sink.0.push(Observation {
                point: *p,
                value,
                sensor_id: t.sensor_id.clone(),
                mobility: t.mobility,
                station_class: t.class,
            });
            sink.1.push(c);
            sink.2.push(RawRecord {
                sensor_id: t.sensor_id.clone(),
                time: DateTime::from_timestamp(p.t as i64, 0).expect("valid timestamp").with_timezone(&offset),
                x: p.x,
                y: p.y,
                concentration: value.exp(),
                mobility: t.mobility,
                run_id: run.clone(),
                station_class: t.class,
            });
        }
    }

    let manifest = SceneManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        schema: schema.clone(),
        trend: trend.clone(),
        gp_params: GpParams {
            beta: trend,
            sigma2: cfg.field.sigma2,
            range_s: cfg.field.range_s,
            range_t: cfg.field.range_t,
            tau2: cfg.noise.lowcost_sd.powi(2),
        },
        days: midnights
            .iter()
            .map(|m| crate::types::local_date(*m, cfg.utc_offset_s).to_string())
            .collect(),
        day_offsets,
        sensor_bias,
        n_lowcost_records: lowcost.2.len(),
        n_reference_records: reference.2.len(),
        files: SCENE_FILES.iter().map(|s| s.to_string()).collect(),
    };
    Ok(SyntheticScene {
        config: cfg.clone(),
        lowcost: Dataset::new(lowcost.0, lowcost.1, schema.clone(), cfg.utc_offset_s)?,
        reference: Dataset::new(reference.0, reference.1, schema, cfg.utc_offset_s)?,
        raw_lowcost: lowcost.2,
        raw_reference: reference.2,
        world,
        truth,
        manifest,
    })
}

/// Exact log-concentration of the scene at each point.
pub fn truth_at(scene: &SyntheticScene, points: &[SpatioTemporalPoint]) -> Result<Vec<f64>> {
    scene.truth.at(points)
}

impl SyntheticScene {
    /// Low-cost and reference feeds run through the preprocessing pipeline
    /// and joined into one dataset.
    pub fn preprocessed(&self, params: &PipelineParams) -> Result<Dataset> {
        let (lc, _) = run_pipeline(&self.raw_lowcost, params, &self.truth.sources, &self.truth.schema)?;
        let (rf, _) = run_pipeline(&self.raw_reference, params, &self.truth.sources, &self.truth.schema)?;
        lc.concat(&rf)
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            projection: self.config.projection,
            params: PipelineParams::default(),
            sources: World::source_specs(),
        }
    }

    /// Writes raw feeds, covariate inputs, a preprocess config and the manifest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let proj = &self.config.projection;
        write_raw_csv(std::fs::File::create(dir.join("lowcost.csv"))?, &self.raw_lowcost, proj)?;
        write_raw_csv(std::fs::File::create(dir.join("reference.csv"))?, &self.raw_reference, proj)?;
        write_geojson(&dir.join("roads.geojson"), &self.world.roads, proj)?;
        write_geojson(&dir.join("landuse.geojson"), &self.world.landuse, proj)?;
        self.world.elevation.write(&dir.join("elevation.asc"))?;
        let off = self.config.utc_offset_s;
        write_timeseries_csv(&dir.join("temperature.csv"), &self.world.temperature.times, &self.world.temperature.values, off)?;
        write_timeseries_csv(&dir.join("humidity.csv"), &self.world.humidity.times, &self.world.humidity.values, off)?;
        let offset = FixedOffset::east_opt(off).expect("validated offset");
        for (name, g) in [
            ("chimere_analysis.json", &self.world.chimere_analysis),
            ("chimere_forecast.json", &self.world.chimere_forecast),
        ] {
            let file = GriddedSeriesFile {
                grid: g.grid,
                times: g
                    .times
                    .iter()
                    .map(|t| format_time(&DateTime::from_timestamp(*t as i64, 0).expect("valid").with_timezone(&offset)))
                    .collect(),
                frames: g.frames.clone(),
            };
            std::fs::write(dir.join(name), serde_json::to_string(&file)?)?;
        }
        std::fs::write(dir.join("preprocess.toml"), self.preprocess_config().to_toml()?)?;
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneConfig {
        SceneConfig {
            n_days: 1,
            field: FieldParams { nx: 8, ny: 8, nt: 10, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_fixed_sensors_observe_truth() {
        let cfg = SceneConfig {
            fleet: FleetSpec { mobile_lowcost: 0, ..Default::default() },
            noise: NoiseSpec { lowcost_sd: 0.0, reference_sd: 0.0, bias_sd: 0.0, ..Default::default() },
            ..small()
        };
        let s = generate_scene(&cfg).unwrap();
        let truth = truth_at(&s, &s.lowcost.points()).unwrap();
        assert_eq!(truth, s.lowcost.values());
        assert!(s.lowcost.observations.iter().all(|o| o.mobility == crate::types::Mobility::Fixed));
    }

    #[test]
    fn same_seed_same_scene() {
        let a = generate_scene(&small()).unwrap();
        let b = generate_scene(&small()).unwrap();
        assert_eq!(a.lowcost, b.lowcost);
        assert_eq!(a.raw_reference, b.raw_reference);
        assert_eq!(a.manifest, b.manifest);
        let c = generate_scene(&SceneConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.lowcost.values(), c.lowcost.values());
    }

    #[test]
    fn truth_interpolates_nodes_bilinearly() {
        let s = generate_scene(&small()).unwrap();
        let f = &s.truth.field;
        let p = f.node_point(0, 3, 4, 5);
        assert_eq!(f.value_at(&p), Some(f.node_value(0, 3, 4, 5)));
        // a point a quarter across in x and half-way in y, on a time slice
        let (a, b) = (f.node_point(0, 3, 4, 5), f.node_point(0, 4, 5, 5));
        let q = SpatioTemporalPoint::new(a.x + 0.25 * (b.x - a.x), a.y + 0.5 * (b.y - a.y), a.t);
        let v = |i, j| f.node_value(0, i, j, 5);
        let hand = 0.5 * (0.75 * v(3, 4) + 0.25 * v(4, 4)) + 0.5 * (0.75 * v(3, 5) + 0.25 * v(4, 5));
        assert!((f.value_at(&q).unwrap() - hand).abs() < 1e-12);
        let pts = vec![q, p];
        assert_eq!(truth_at(&s, &pts).unwrap(), truth_at(&s, &pts).unwrap());
        assert!(truth_at(&s, &[SpatioTemporalPoint::new(-10.0, 5.0, a.t)]).is_err());
    }

    #[test]
    fn mobile_samples_stay_on_streets() {
        let s = generate_scene(&small()).unwrap();
        let streets = &s.world.roads;
        for o in s.lowcost.observations.iter().filter(|o| o.mobility == crate::types::Mobility::Mobile) {
            let d = streets
                .iter()
                .map(|f| f.geometry.distance_to([o.point.x, o.point.y]))
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9);
        }
    }

    #[test]
    fn reference_stations_are_unbiased() {
        let cfg = SceneConfig {
            noise: NoiseSpec { reference_sd: 0.0, bias_sd: 0.5, ..Default::default() },
            ..small()
        };
        let s = generate_scene(&cfg).unwrap();
        let truth = truth_at(&s, &s.reference.points()).unwrap();
        for (t, v) in truth.iter().zip(s.reference.values()) {
            assert!((t - v).abs() < 1e-12);
        }
        assert!(s.manifest.sensor_bias.iter().filter(|(k, _)| k.starts_with('f')).any(|(_, b)| b.abs() > 0.0));
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let cfg = SceneConfig {
            field: FieldParams { nx: 20, ny: 20, nt: 20, ..Default::default() },
            ..small()
        };
        assert!(matches!(generate_scene(&cfg), Err(Error::SceneTooLarge { nodes: 8000, .. })));
    }

    #[test]
    fn nodal_variogram_matches_the_model() {
        // five independent days of nodal values, pooled
        let cfg = SceneConfig {
            n_days: 5,
            field: FieldParams { sigma2: 1.0, range_s: 600.0, range_t: 5400.0, nx: 15, ny: 15, nt: 16 },
            fleet: FleetSpec { fixed_lowcost: 0, mobile_lowcost: 0, reference: 0, ..Default::default() },
            ..Default::default()
        };
        let s = generate_scene(&cfg).unwrap();
        let f = &s.truth.field;
        let (nx, ny, nt) = (15, 15, 16);
        let ds = f.width / (nx - 1) as f64;
        let dt = f.span_t / (nt - 1) as f64;
        // semivariance at unit node lags, spatial and temporal
        let (mut gs, mut gt, mut ns, mut nt_) = (0.0, 0.0, 0.0, 0.0);
        for d in 0..5 {
            for k in 0..nt {
                for j in 0..ny {
                    for i in 0..nx {
                        let v = f.node_value(d, i, j, k);
                        if i + 1 < nx {
                            gs += 0.5 * (f.node_value(d, i + 1, j, k) - v).powi(2);
                            ns += 1.0;
                        }
                        if k + 1 < nt {
                            gt += 0.5 * (f.node_value(d, i, j, k + 1) - v).powi(2);
                            nt_ += 1.0;
                        }
                    }
                }
            }
        }
        let model = |h: f64| 1.0 - (-h).exp();
        let (es, et) = (gs / ns, gt / nt_);
        assert!((es / model(ds / 600.0) - 1.0).abs() < 0.15, "spatial {es} vs {}", model(ds / 600.0));
        assert!((et / model(dt / 5400.0) - 1.0).abs() < 0.15, "temporal {et} vs {}", model(dt / 5400.0));
    }

    #[test]
    fn written_scene_matches_manifest() {
        let s = generate_scene(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write(dir.path()).unwrap();
        for f in SCENE_FILES {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let text = std::fs::read_to_string(dir.path().join("lowcost.csv")).unwrap();
        assert_eq!(text.lines().count() - 1, s.manifest.n_lowcost_records);
        let m: SceneManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m, s.manifest);
    }

    #[test]
    fn preprocessing_the_scene_keeps_the_schedule() {
        let s = generate_scene(&small()).unwrap();
        let ds = s.preprocessed(&PipelineParams::default()).unwrap();
        assert!(!ds.is_empty() && ds.len() < s.lowcost.len() + s.reference.len());
        for o in &ds.observations {
            let h = (o.point.t + 3600.0).rem_euclid(86_400.0) / 3600.0;
            assert!((4.0..19.0).contains(&h));
        }
    }
}

//! The synthetic city: street lattice, land use, terrain, weather and a
//! coarse chemistry-transport grid, exposed as covariate sources.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geo::{Feature, Geometry, Xy};
use crate::preprocess::{CovariateSource, GridGeometry, SourceData, SourceFormat, SourceSpec};
use crate::raster::{fmt_g6, AsciiGrid};
use crate::types::{CovariateKind, CovariateSchema};

/// Covariates of every synthetic scene, in schema order.
pub const COVARIATE_NAMES: [&str; 15] = [
    "temperature",
    "humidity",
    "elevation",
    "proximity_motorway",
    "proximity_trunk",
    "proximity_primary",
    "proximity_secondary",
    "proximity_tertiary",
    "proximity_residential",
    "proximity_green_space",
    "proximity_industrial",
    "buildings_500m",
    "proximity_river",
    "chimere_analysis",
    "chimere_forecast",
];

pub const ROAD_CLASSES: [&str; 6] = ["motorway", "trunk", "primary", "secondary", "tertiary", "residential"];

/// Margin in meters by which gridded sources extend past the domain.
const MARGIN_M: f64 = 500.0;
const BUILDING_RADIUS_M: f64 = 500.0;

pub fn covariate_kind(name: &str) -> CovariateKind {
    match name {
        "temperature" | "humidity" => CovariateKind::Temporal,
        "chimere_analysis" | "chimere_forecast" => CovariateKind::SpatioTemporal,
        _ => CovariateKind::Spatial,
    }
}

pub fn scene_schema() -> CovariateSchema {
    CovariateSchema {
        names: COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
        kinds: COVARIATE_NAMES.iter().map(|n| covariate_kind(n)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadSpec {
    /// Distance between parallel streets.
    pub spacing_m: f64,
}

impl Default for RoadSpec {
    fn default() -> Self {
        Self { spacing_m: 300.0 }
    }
}

fn street_class(k: usize, shift: usize, first: &'static str) -> &'static str {
    if k == 0 {
        return first;
    }
    ["primary", "residential", "tertiary", "residential", "secondary"][(k + shift) % 5]
}

/// Regular street lattice; intersections at `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Lattice {
    pub fn new(width: f64, height: f64, spacing: f64) -> Result<Self> {
        let nx = (width / spacing).floor() as usize + 1;
        let ny = (height / spacing).floor() as usize + 1;
        if nx < 6 || ny < 6 {
            return Err(contract(format!(
                "street spacing {spacing} m leaves fewer than six streets per direction; every road class needs a street"
            )));
        }
        Ok(Self {
            xs: (0..nx).map(|i| i as f64 * spacing).collect(),
            ys: (0..ny).map(|j| j as f64 * spacing).collect(),
        })
    }

    pub fn node(&self, i: usize, j: usize) -> Xy {
        [self.xs[i], self.ys[j]]
    }

    /// Intersections adjacent to `(i, j)`.
    pub fn neighbors(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push((i - 1, j));
        }
        if i + 1 < self.xs.len() {
            out.push((i + 1, j));
        }
        if j > 0 {
            out.push((i, j - 1));
        }
        if j + 1 < self.ys.len() {
            out.push((i, j + 1));
        }
        out
    }

    /// One feature per street: horizontal streets first, then vertical.
    pub fn streets(&self) -> Vec<Feature> {
        let mut out = Vec::new();
        for (j, &y) in self.ys.iter().enumerate() {
            out.push(Feature {
                class: street_class(j, 0, "motorway").into(),
                geometry: Geometry::LineString(self.xs.iter().map(|&x| [x, y]).collect()),
            });
        }
        for (i, &x) in self.xs.iter().enumerate() {
            out.push(Feature {
                class: street_class(i, 2, "trunk").into(),
                geometry: Geometry::LineString(self.ys.iter().map(|&y| [x, y]).collect()),
            });
        }
        out
    }
}

/// Time series of a temporal covariate at fixed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gridded {
    pub grid: GridGeometry,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

/// Everything needed to compute covariates anywhere in the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub width: f64,
    pub height: f64,
    pub lattice: Lattice,
    pub roads: Vec<Feature>,
    pub landuse: Vec<Feature>,
    pub elevation: AsciiGrid,
    pub temperature: Series,
    pub humidity: Series,
    pub chimere_analysis: Gridded,
    pub chimere_forecast: Gridded,
    pub utc_offset_s: i32,
}

fn rect(x0: f64, y0: f64, w: f64, h: f64) -> Geometry {
    Geometry::Polygon(vec![vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h], [x0, y0]]])
}

/// Smooth AR(1) noise sequence.
fn ar1(n: usize, phi: f64, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let innov = sd * (1.0 - phi * phi).sqrt();
    let mut v = rng.sample::<f64, _>(StandardNormal) * sd;
    (0..n)
        .map(|_| {
            let out = v;
            v = phi * v + innov * rng.sample::<f64, _>(StandardNormal);
            out
        })
        .collect()
}

/// Local hour of day at UNIX time `t`.
fn local_hour(t: f64, utc_offset_s: i32) -> f64 {
    (t + utc_offset_s as f64).rem_euclid(86_400.0) / 3600.0
}

impl World {
    /// Builds the world for days starting at local midnights `midnights`.
    pub fn generate(
        width: f64,
        height: f64,
        roads: &RoadSpec,
        midnights: &[f64],
        utc_offset_s: i32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let lattice = Lattice::new(width, height, roads.spacing_m)?;
        let streets = lattice.streets();
        let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.random_range(lo..hi);

        let mut landuse = Vec::new();
        for _ in 0..4 {
            let (w, h) = (u(rng, 150.0, 400.0), u(rng, 150.0, 400.0));
            landuse.push(Feature {
                class: "green_space".into(),
                geometry: rect(u(rng, 0.0, width - w), u(rng, 0.0, height - h), w, h),
            });
        }
        for _ in 0..2 {
            let (w, h) = (u(rng, 200.0, 500.0), u(rng, 200.0, 500.0));
            landuse.push(Feature {
                class: "industrial".into(),
                geometry: rect(u(rng, 0.0, width - w), u(rng, 0.0, height - h), w, h),
            });
        }
        let (phase, y_river) = (u(rng, 0.0, TAU), u(rng, 0.25, 0.45) * height);
        let n_river = ((width + 2.0 * MARGIN_M) / 50.0).ceil() as usize;
        landuse.push(Feature {
            class: "river".into(),
            geometry: Geometry::LineString(
                (0..=n_river)
                    .map(|k| {
                        let x = -MARGIN_M + k as f64 * 50.0;
                        [x, y_river + 200.0 * (TAU * x / 1500.0 + phase).sin()]
                    })
                    .collect(),
            ),
        });
        // buildings cluster toward the center
        let (cx, cy) = (width / 2.0, height / 2.0);
        let mut placed = 0;
        while placed < 400 {
            let (x, y) = (u(rng, 0.0, width), u(rng, 0.0, height));
            let d = (x - cx).hypot(y - cy);
            if rng.random_range(0.0..1.0) < (-d / 1500.0).exp() {
                landuse.push(Feature {
                    class: "building".into(),
                    geometry: Geometry::Point([x, y]),
                });
                placed += 1;
            }
        }

        // terrain, rounded to what the ASCII grid stores
        let cell = 50.0;
        let ncols = ((width + 2.0 * MARGIN_M) / cell).ceil() as usize;
        let nrows = ((height + 2.0 * MARGIN_M) / cell).ceil() as usize;
        let mut elevation = AsciiGrid::new(ncols, nrows, -MARGIN_M, -MARGIN_M, cell);
        let (p1, p2) = (u(rng, 0.0, TAU), u(rng, 0.0, TAU));
        for r in 0..nrows {
            for c in 0..ncols {
                let (x, y) = elevation.cell_center(c, r);
                let z = 20.0 + 12.0 * (x / 800.0 + p1).sin() + 8.0 * (y / 650.0 + p2).cos() + 0.004 * y;
                elevation.set(c, r, fmt_g6(z).parse().expect("formatted float parses"));
            }
        }

        // weather every 15 minutes from the first midnight to the end of the last day
        let t_start = midnights[0];
        let t_end = midnights[midnights.len() - 1] + 86_400.0;
        let times: Vec<f64> = (0..=((t_end - t_start) / 900.0) as usize).map(|k| t_start + 900.0 * k as f64).collect();
        let day_of = |t: f64| (((t - t_start) / 86_400.0).floor() as usize).min(midnights.len() - 1);
        let day_temp: Vec<f64> = (0..midnights.len()).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let day_hum: Vec<f64> = (0..midnights.len()).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let tn = ar1(times.len(), 0.9, 0.3, rng);
        let hn = ar1(times.len(), 0.9, 1.5, rng);
        let diurnal = |t: f64, peak: f64| (TAU * (local_hour(t, utc_offset_s) - peak) / 24.0).cos();
        let temperature = Series {
            times: times.clone(),
            values: times.iter().enumerate().map(|(k, &t)| 9.0 + 4.0 * diurnal(t, 15.0) + day_temp[day_of(t)] + tn[k]).collect(),
        };
        let humidity = Series {
            times: times.clone(),
            values: times
                .iter()
                .enumerate()
                .map(|(k, &t)| (82.0 - 10.0 * diurnal(t, 15.0) + day_hum[day_of(t)] + hn[k]).clamp(30.0, 100.0))
                .collect(),
        };

        // hourly chemistry-transport grid with 1 km cells
        let grid = GridGeometry {
            ncols: ((width + 2.0 * MARGIN_M) / 1000.0).ceil() as usize,
            nrows: ((height + 2.0 * MARGIN_M) / 1000.0).ceil() as usize,
            xll: -MARGIN_M,
            yll: -MARGIN_M,
            cellsize: 1000.0,
        };
        let hours: Vec<f64> = (0..=((t_end - t_start) / 3600.0) as usize).map(|k| t_start + 3600.0 * k as f64).collect();
        let day_chem: Vec<f64> = (0..midnights.len()).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let chem_noise = ar1(hours.len(), 0.8, 1.0, rng);
        let fc_err = ar1(hours.len(), 0.7, 1.5, rng);
        let ncell = grid.ncols * grid.nrows;
        let cell_x = |c: usize| grid.xll + (c % grid.ncols) as f64 * grid.cellsize + grid.cellsize / 2.0;
        let mut analysis = Vec::with_capacity(hours.len());
        let mut forecast = Vec::with_capacity(hours.len());
        for (k, &t) in hours.iter().enumerate() {
            let base = 18.0 + 4.0 * diurnal(t, 8.0) + day_chem[day_of(t)] + chem_noise[k];
            let a: Vec<f64> = (0..ncell).map(|c| base + 0.5 * cell_x(c) / 1000.0).collect();
            forecast.push(a.iter().map(|v| v + fc_err[k]).collect());
            analysis.push(a);
        }

        Ok(Self {
            width,
            height,
            lattice,
            roads: streets,
            landuse,
            elevation,
            temperature,
            humidity,
            chimere_analysis: Gridded {
                grid,
                times: hours.clone(),
                frames: analysis,
            },
            chimere_forecast: Gridded {
                grid,
                times: hours,
                frames: forecast,
            },
            utc_offset_s,
        })
    }

    fn geoms(features: &[Feature], class: &str) -> Vec<Geometry> {
        features.iter().filter(|f| f.class == class).map(|f| f.geometry.clone()).collect()
    }

    /// Covariate sources in schema order.
    pub fn sources(&self) -> Vec<CovariateSource> {
        COVARIATE_NAMES
            .iter()
            .map(|&name| {
                let data = match name {
                    "temperature" => SourceData::Temporal {
                        times: self.temperature.times.clone(),
                        values: self.temperature.values.clone(),
                    },
                    "humidity" => SourceData::Temporal {
                        times: self.humidity.times.clone(),
                        values: self.humidity.values.clone(),
                    },
                    "elevation" => SourceData::Raster(self.elevation.clone()),
                    "buildings_500m" => SourceData::Count {
                        points: Self::geoms(&self.landuse, "building").iter().map(Geometry::representative_point).collect(),
                        radius_m: BUILDING_RADIUS_M,
                    },
                    "chimere_analysis" | "chimere_forecast" => {
                        let g = if name == "chimere_analysis" { &self.chimere_analysis } else { &self.chimere_forecast };
                        SourceData::Gridded {
                            grid: g.grid,
                            times: g.times.clone(),
                            frames: g.frames.clone(),
                        }
                    }
                    prox => {
                        let class = prox.trim_start_matches("proximity_");
                        let features = if ROAD_CLASSES.contains(&class) { &self.roads } else { &self.landuse };
                        SourceData::Proximity(Self::geoms(features, class))
                    }
                };
                CovariateSource {
                    name: name.into(),
                    kind: covariate_kind(name),
                    data,
                }
            })
            .collect()
    }

    /// How `aeromap preprocess` finds each source among the exported files.
    pub fn source_specs() -> Vec<SourceSpec> {
        COVARIATE_NAMES
            .iter()
            .map(|&name| {
                let (format, path, class, radius_m) = match name {
                    "temperature" => (SourceFormat::TimeseriesCsv, "temperature.csv", None, None),
                    "humidity" => (SourceFormat::TimeseriesCsv, "humidity.csv", None, None),
                    "elevation" => (SourceFormat::Raster, "elevation.asc", None, None),
                    "buildings_500m" => (SourceFormat::Count, "landuse.geojson", Some("building"), Some(BUILDING_RADIUS_M)),
                    "chimere_analysis" => (SourceFormat::GriddedSeries, "chimere_analysis.json", None, None),
                    "chimere_forecast" => (SourceFormat::GriddedSeries, "chimere_forecast.json", None, None),
                    prox => {
                        let class = prox.trim_start_matches("proximity_");
                        let file = if ROAD_CLASSES.contains(&class) { "roads.geojson" } else { "landuse.geojson" };
                        (SourceFormat::Proximity, file, Some(class), None)
                    }
                };
                SourceSpec {
                    name: name.into(),
                    kind: covariate_kind(name),
                    format,
                    path: path.into(),
                    class: class.map(String::from),
                    radius_m,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn every_class_has_a_street() {
        let l = Lattice::new(3000.0, 3000.0, 300.0).unwrap();
        let streets = l.streets();
        for c in ROAD_CLASSES {
            assert!(streets.iter().any(|f| f.class == c), "{c}");
        }
        assert!(Lattice::new(1000.0, 1000.0, 300.0).is_err());
    }

    #[test]
    fn sources_match_schema_and_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = World::generate(3000.0, 3000.0, &RoadSpec::default(), &[1.7e9], 3600, &mut rng).unwrap();
        let s = w.sources();
        let schema = scene_schema();
        assert_eq!(s.iter().map(|s| s.name.clone()).collect::<Vec<_>>(), schema.names);
        let specs = World::source_specs();
        assert_eq!(crate::preprocess::schema_of(&specs).unwrap(), schema);
    }
}

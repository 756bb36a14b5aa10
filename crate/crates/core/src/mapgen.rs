//! Raster maps: predict every cell center of a grid at one instant.

use std::path::{Path, PathBuf};

use image::{Rgba, RgbaImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::models::TrainedModel;
use crate::preprocess::{covariates_at, CovariateSource};
use crate::raster::AsciiGrid;
use crate::types::{CovariateSchema, CovariateVector, Query, SpatioTemporalPoint};

pub const DEFAULT_CELL_M: f64 = 100.0;

/// Cell layout of a map; rows run north to south as in ESRI grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Lower-left corner.
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub ncols: usize,
    pub nrows: usize,
}

impl GridSpec {
    pub fn new(xll: f64, yll: f64, cellsize: f64, ncols: usize, nrows: usize) -> Result<Self> {
        let g = Self { xll, yll, cellsize, ncols, nrows };
        if !(cellsize > 0.0 && xll.is_finite() && yll.is_finite()) || ncols == 0 || nrows == 0 {
            return Err(contract(format!("invalid grid {g:?}")));
        }
        Ok(g)
    }

    /// Smallest grid of `cellsize` cells whose extent covers every point.
    pub fn covering(points: &[SpatioTemporalPoint], cellsize: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(contract("cannot size a grid from zero points"));
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let ncols = (((x1 - x0) / cellsize).floor() as usize + 1).max(1);
        let nrows = (((y1 - y0) / cellsize).floor() as usize + 1).max(1);
        Self::new(x0, y0, cellsize, ncols, nrows)
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn template(&self) -> AsciiGrid {
        AsciiGrid::new(self.ncols, self.nrows, self.xll, self.yll, self.cellsize)
    }

    /// Cell centers in storage order.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        let g = self.template();
        (0..self.nrows)
            .flat_map(|r| (0..self.ncols).map(move |c| (c, r)))
            .map(|(c, r)| g.cell_center(c, r))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub model: String,
    pub grid: GridSpec,
    /// UNIX seconds.
    pub t: f64,
    /// Log-space predictions; NaN marks cells without covariates.
    pub values: Vec<f64>,
    /// Latent-field variance, GP models only.
    pub variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub model: String,
    pub t: f64,
    pub units: String,
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: f64,
    pub n_cells: usize,
    pub n_nodata: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Predicts `model` at every cell center at time `t`. Cells the covariate
/// sources do not cover become no-data.
pub fn render_map(
    model: &TrainedModel,
    grid: &GridSpec,
    t: f64,
    sources: &[CovariateSource],
    schema: &CovariateSchema,
) -> Result<RasterGrid> {
    let points: Vec<SpatioTemporalPoint> = grid.centers().into_iter().map(|(x, y)| SpatioTemporalPoint::new(x, y, t)).collect();
    let covs = covariates_at(&points, sources, schema)?;
    let covered: Vec<usize> = covs.iter().enumerate().filter(|(_, c)| c.is_ok()).map(|(i, _)| i).collect();
    let query = Query {
        points: covered.iter().map(|&i| points[i]).collect(),
        covariates: covered
            .iter()
            .map(|&i| covs[i].as_ref().map(|c| c.clone()).unwrap_or_else(|_| CovariateVector(vec![])))
            .collect(),
    };
    let mut values = vec![f64::NAN; grid.len()];
    let mut variance = None;
    if !covered.is_empty() {
        let pred = model.predict(&query)?;
        for (k, &i) in covered.iter().enumerate() {
            values[i] = pred.mean[k];
        }
        if let Some(v) = pred.variance {
            let mut full = vec![f64::NAN; grid.len()];
            for (k, &i) in covered.iter().enumerate() {
                full[i] = v[k];
            }
            variance = Some(full);
        }
    }
    Ok(RasterGrid {
        model: model.name().to_string(),
        grid: *grid,
        t,
        values,
        variance,
    })
}

fn finite_range(v: &[f64]) -> Option<(f64, f64)> {
    v.iter()
        .filter(|x| x.is_finite())
        .fold(None, |acc, &x| Some(acc.map_or((x, x), |(a, b): (f64, f64)| (a.min(x), b.max(x)))))
}

impl RasterGrid {
    pub fn n_nodata(&self) -> usize {
        self.values.iter().filter(|v| !v.is_finite()).count()
    }

    /// Values in µg/m³, or log space when `log_space` is set.
    pub fn output_values(&self, log_space: bool) -> Vec<f64> {
        if log_space {
            self.values.clone()
        } else {
            self.values.iter().map(|v| v.exp()).collect()
        }
    }

    pub fn to_ascii_grid(&self, log_space: bool) -> AsciiGrid {
        let mut g = self.grid.template();
        for (dst, v) in g.values.iter_mut().zip(self.output_values(log_space)) {
            if v.is_finite() {
                *dst = v;
            }
        }
        g
    }

    pub fn variance_grid(&self) -> Option<AsciiGrid> {
        let var = self.variance.as_ref()?;
        let mut g = self.grid.template();
        for (dst, v) in g.values.iter_mut().zip(var) {
            if v.is_finite() {
                *dst = *v;
            }
        }
        Some(g)
    }

    pub fn summary(&self, log_space: bool) -> MapSummary {
        let range = finite_range(&self.output_values(log_space));
        MapSummary {
            model: self.model.clone(),
            t: self.t,
            units: if log_space { "log(ug/m3)".into() } else { "ug/m3".into() },
            ncols: self.grid.ncols,
            nrows: self.grid.nrows,
            cellsize: self.grid.cellsize,
            n_cells: self.grid.len(),
            n_nodata: self.n_nodata(),
            min: range.map(|r| r.0),
            max: range.map(|r| r.1),
        }
    }

    /// Quick-look image; the color ramp spans `range`, or the raster's own
    /// range when `None`. No-data cells are transparent.
    pub fn to_png(&self, log_space: bool, range: Option<(f64, f64)>) -> RgbaImage {
        let vals = self.output_values(log_space);
        let (lo, hi) = range.or_else(|| finite_range(&vals)).unwrap_or((0.0, 1.0));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut img = RgbaImage::new(self.grid.ncols as u32, self.grid.nrows as u32);
        for (i, v) in vals.iter().enumerate() {
            let px = if v.is_finite() { ramp(((v - lo) / span).clamp(0.0, 1.0)) } else { Rgba([0, 0, 0, 0]) };
            img.put_pixel((i % self.grid.ncols) as u32, (i / self.grid.ncols) as u32, px);
        }
        img
    }

    /// Writes `<stem>.asc`, `<stem>.png`, `<stem>.json` and, for GP models,
    /// `<stem>_variance.asc`. Returns the paths written.
    pub fn write(&self, dir: &Path, stem: &str, log_space: bool, png_range: Option<(f64, f64)>) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = vec![dir.join(format!("{stem}.asc")), dir.join(format!("{stem}.png")), dir.join(format!("{stem}.json"))];
        self.to_ascii_grid(log_space).write(&out[0])?;
        self.to_png(log_space, png_range)
            .save_with_format(&out[1], image::ImageFormat::Png)
            .map_err(|e| crate::error::Error::Io(std::io::Error::other(e)))?;
        std::fs::write(&out[2], serde_json::to_string_pretty(&self.summary(log_space))?)?;
        if let Some(v) = self.variance_grid() {
            let p = dir.join(format!("{stem}_variance.asc"));
            v.write(&p)?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Dark blue through green to yellow.
fn ramp(u: f64) -> Rgba<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let x = u * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgba([c(0), c(1), c(2), 255])
}

/// Predicts in parallel chunks; used when many rasters share one grid.
pub fn render_maps(
    models: &[TrainedModel],
    grid: &GridSpec,
    t: f64,
    sources: &[CovariateSource],
    schema: &CovariateSchema,
) -> Vec<Result<RasterGrid>> {
    models.par_iter().map(|m| render_map(m, grid, t, sources, schema)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::dataset_at;
    use crate::models::ModelSpec;

    fn grid() -> GridSpec {
        GridSpec::new(0.0, 0.0, 100.0, 8, 5).unwrap()
    }

    #[test]
    fn single_point_idw_is_uniform() {
        let d = dataset_at(&[SpatioTemporalPoint::new(120.0, 80.0, 0.0)], &[vec![]], &[2.5]);
        let spec = ModelSpec::Idw { params: Default::default(), tune_c: false, c_candidates: vec![] };
        let m = spec.fit(&d).unwrap();
        let r = render_map(&m, &grid(), 600.0, &[], &CovariateSchema::empty()).unwrap();
        assert!(r.values.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn intercept_only_model_is_uniform() {
        let pts: Vec<_> = (0..5).map(|i| SpatioTemporalPoint::new(i as f64 * 50.0, 10.0, 0.0)).collect();
        let d = dataset_at(&pts, &vec![vec![]; 5], &[1.0, 2.0, 3.0, 1.5, 2.5]);
        let m = ModelSpec::Lr.fit(&d).unwrap();
        let r = render_map(&m, &grid(), 0.0, &[], &CovariateSchema::empty()).unwrap();
        let first = r.values[0];
        assert!((first - 2.0).abs() < 1e-12);
        assert!(r.values.iter().all(|&v| v == first));
    }

    #[test]
    fn idw_stays_within_training_range() {
        let pts: Vec<_> = (0..6).map(|i| SpatioTemporalPoint::new(i as f64 * 130.0, (i * 37 % 5) as f64 * 90.0, i as f64 * 60.0)).collect();
        let z = [1.0, 4.0, 2.0, 3.5, 0.5, 2.2];
        let d = dataset_at(&pts, &vec![vec![]; 6], &z);
        let m = ModelSpec::default_for("idw").unwrap().fit(&d).unwrap();
        let r = render_map(&m, &grid(), 100.0, &[], &CovariateSchema::empty()).unwrap();
        assert!(r.values.iter().all(|&v| (0.5..=4.0).contains(&v)));
    }

    #[test]
    fn uncovered_cells_are_nodata() {
        let schema = CovariateSchema::new(vec!["near".into()], vec![crate::CovariateKind::Temporal]).unwrap();
        // the series ends before the map instant
        let src = vec![CovariateSource::temporal("near", vec![0.0, 10.0], vec![1.0, 1.0])];
        let pts: Vec<_> = (0..3).map(|i| SpatioTemporalPoint::new(i as f64 * 100.0, 0.0, 5.0)).collect();
        let d = dataset_at(&pts, &[vec![1.0], vec![1.0], vec![1.0]], &[1.0, 2.0, 3.0]);
        let d = crate::Dataset { schema: schema.clone(), ..d };
        let m = ModelSpec::default_for("idw").unwrap().fit(&d).unwrap();
        let r = render_map(&m, &grid(), 100.0, &src, &schema).unwrap();
        assert_eq!(r.n_nodata(), grid().len());
        assert_eq!(r.summary(false).min, None);
    }

    #[test]
    fn written_ascii_round_trips_and_is_repeatable() {
        let pts: Vec<_> = (0..4).map(|i| SpatioTemporalPoint::new(i as f64 * 200.0, 150.0, 0.0)).collect();
        let d = dataset_at(&pts, &vec![vec![]; 4], &[1.1, 2.3, 3.7, 2.9]);
        let m = ModelSpec::default_for("idw").unwrap().fit(&d).unwrap();
        let r = render_map(&m, &grid(), 0.0, &[], &CovariateSchema::empty()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = r.write(dir.path(), "idw", false, None).unwrap();
        let back = AsciiGrid::read(&files[0]).unwrap();
        for (a, b) in back.values.iter().zip(r.output_values(false)) {
            assert!(((a - b) / b).abs() < 5e-6);
        }
        let first = std::fs::read(&files[1]).unwrap();
        r.write(dir.path(), "idw", false, None).unwrap();
        assert_eq!(first, std::fs::read(&files[1]).unwrap());
        assert_eq!(image::open(&files[1]).unwrap().width(), 8);
    }

    #[test]
    fn covering_grid_contains_every_point() {
        let pts = [SpatioTemporalPoint::new(-30.0, 12.0, 0.0), SpatioTemporalPoint::new(905.0, 430.0, 0.0)];
        let g = GridSpec::covering(&pts, 100.0).unwrap();
        let t = g.template();
        assert!(pts.iter().all(|p| t.cell_of(p.x, p.y).is_some()));
        assert_eq!((g.ncols, g.nrows), (10, 5));
    }
}

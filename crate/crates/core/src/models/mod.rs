//! The ten predictors behind one fit/predict contract.
//!
//! A [`ModelSpec`] names a method and its settings; [`ModelSpec::fit`] turns
//! it into an immutable [`TrainedModel`]. Both serialize to JSON, tagged by
//! the registered model name.

pub mod boost;
pub mod forest;
pub mod gam;
pub mod idw;
pub mod kriged;
pub mod linear;
pub mod mlp;
pub mod network;
pub mod scale;
pub mod svr;
pub mod tree;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::gp::{gls_beta, gp_ml_fit, gp_vg_fit, GpFit, GpParams, KrigingOptions, MlFitOptions, VgFitOptions};
use crate::types::{CovariateSchema, Dataset, Query};

use boost::{boost_fit, BoostParams, Booster};
use forest::{rf_fit, Forest, ForestParams};
use gam::{GamModel, GamParams};
use idw::{idw_tune_c, IdwModel, IdwParams, DEFAULT_C_CANDIDATES};
use kriged::KrigingModel;
use linear::{lr_fit, LinearModel};
use mlp::{mlp_fit, MlpConfig, MlpModel};
use network::{NetworkModel, Segmenter};
use svr::{svr_fit, SvrModel, SvrParams};

/// Registered model names, in reporting order.
pub const MODEL_NAMES: [&str; 10] = ["idw", "lr", "nr", "gam", "gp_vg", "gp_ml", "rf", "xgboost", "svr", "ann"];

pub const MODEL_FILE_VERSION: u32 = 1;

pub fn registered_names() -> Vec<String> {
    MODEL_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Short label for report tables.
pub fn display_name(name: &str) -> &str {
    match name {
        "idw" => "IDW",
        "lr" => "LR",
        "nr" => "NR",
        "gam" => "GAM",
        "gp_vg" => "GP (VG)",
        "gp_ml" => "GP (ML)",
        "rf" => "RF",
        "xgboost" => "XGBoost",
        "svr" => "SVR",
        "ann" => "ANN",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    /// Latent-field variance, for the GP models only.
    pub variance: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}

fn default_candidates() -> Vec<f64> {
    DEFAULT_C_CANDIDATES.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Idw {
        #[serde(default)]
        params: IdwParams,
        /// Choose `c` by leave-one-sensor-out cross-validation at tuning time.
        #[serde(default = "yes")]
        tune_c: bool,
        #[serde(default = "default_candidates")]
        c_candidates: Vec<f64>,
    },
    Lr,
    Nr {
        #[serde(default)]
        segmenter: Segmenter,
    },
    Gam {
        #[serde(default)]
        params: GamParams,
    },
    GpVg {
        #[serde(default)]
        vg: VgFitOptions,
        #[serde(default)]
        kriging: KrigingOptions,
        /// Frozen covariance parameters; only the trend is refitted.
        #[serde(default)]
        theta: Option<GpParams>,
    },
    GpMl {
        #[serde(default)]
        ml: MlFitOptions,
        #[serde(default)]
        kriging: KrigingOptions,
        #[serde(default)]
        theta: Option<GpParams>,
    },
    Rf {
        #[serde(default)]
        params: ForestParams,
    },
    Xgboost {
        #[serde(default)]
        params: BoostParams,
    },
    Svr {
        #[serde(default)]
        params: SvrParams,
    },
    Ann {
        #[serde(default)]
        params: MlpConfig,
    },
}

fn rows(data: &Dataset) -> Vec<Vec<f64>> {
    data.covariates.iter().map(|c| c.0.clone()).collect()
}

fn query_rows(query: &Query) -> Vec<Vec<f64>> {
    query.covariates.iter().map(|c| c.0.clone()).collect()
}

/// Accepts an optimizer's best point when it stopped early.
fn settle(fit: Result<GpFit>, route: &str) -> Result<(GpParams, bool, Vec<String>)> {
    match fit {
        Ok(f) => Ok((f.params, true, vec![])),
        Err(Error::NoConvergence { message, best: Some(b) }) => {
            Ok((*b, false, vec![format!("{route}: kept best parameters after non-convergence ({message})")]))
        }
        Err(e) => Err(e),
    }
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Idw { .. } => "idw",
            ModelSpec::Lr => "lr",
            ModelSpec::Nr { .. } => "nr",
            ModelSpec::Gam { .. } => "gam",
            ModelSpec::GpVg { .. } => "gp_vg",
            ModelSpec::GpMl { .. } => "gp_ml",
            ModelSpec::Rf { .. } => "rf",
            ModelSpec::Xgboost { .. } => "xgboost",
            ModelSpec::Svr { .. } => "svr",
            ModelSpec::Ann { .. } => "ann",
        }
    }

    /// Default settings of a registered model.
    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "idw" => ModelSpec::Idw {
                params: IdwParams::default(),
                tune_c: true,
                c_candidates: default_candidates(),
            },
            "lr" => ModelSpec::Lr,
            "nr" => ModelSpec::Nr { segmenter: Segmenter::default() },
            "gam" => ModelSpec::Gam { params: GamParams::default() },
            "gp_vg" => ModelSpec::GpVg {
                vg: VgFitOptions::default(),
                kriging: KrigingOptions::default(),
                theta: None,
            },
            "gp_ml" => ModelSpec::GpMl {
                ml: MlFitOptions::default(),
                kriging: KrigingOptions::default(),
                theta: None,
            },
            "rf" => ModelSpec::Rf { params: ForestParams::default() },
            "xgboost" => ModelSpec::Xgboost { params: BoostParams::default() },
            "svr" => ModelSpec::Svr { params: SvrParams::default() },
            "ann" => ModelSpec::Ann { params: MlpConfig::default() },
            other => {
                return Err(Error::UnknownModel {
                    name: other.to_string(),
                    registered: registered_names(),
                })
            }
        })
    }

    /// Sets every random seed the method uses.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelSpec::GpVg { vg, .. } => vg.seed = seed,
            ModelSpec::GpMl { ml, .. } => {
                ml.warm_start.seed = seed;
                ml.vecchia.seed = seed;
            }
            ModelSpec::Rf { params } => params.seed = seed,
            ModelSpec::Ann { params } => params.seed = seed,
            _ => {}
        }
        self
    }

    /// Freezes the expensive hyperparameters on `data`: IDW's space-time
    /// factor and the GP covariance parameters. Other methods are returned
    /// unchanged.
    pub fn tune(&self, data: &Dataset) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            ModelSpec::Idw { params, tune_c, c_candidates } if *tune_c => {
                params.c = idw_tune_c(data, c_candidates, params)?;
                *tune_c = false;
            }
            ModelSpec::GpVg { vg, theta, .. } if theta.is_none() => {
                *theta = Some(settle(gp_vg_fit(data, vg), "variogram fit")?.0);
            }
            ModelSpec::GpMl { ml, theta, .. } if theta.is_none() => {
                *theta = Some(settle(gp_ml_fit(data, ml, None), "likelihood fit")?.0);
            }
            _ => {}
        }
        Ok(out)
    }

    pub fn fit(&self, train: &Dataset) -> Result<TrainedModel> {
        if train.is_empty() {
            return Err(Error::EmptyTraining);
        }
        Ok(match self {
            ModelSpec::Idw { params, tune_c, c_candidates } => {
                let mut p = params.clone();
                if *tune_c {
                    p.c = idw_tune_c(train, c_candidates, params)?;
                }
                TrainedModel::Idw(IdwModel::fit(train, p)?)
            }
            ModelSpec::Lr => TrainedModel::Lr(LinearModel::fit(train)?),
            ModelSpec::Nr { segmenter } => TrainedModel::Nr(NetworkModel::fit(train, segmenter.clone())?),
            ModelSpec::Gam { params } => TrainedModel::Gam(GamModel::fit(train, params)?),
            ModelSpec::GpVg { vg, kriging, theta } => {
                let (params, converged, notes) = match theta {
                    Some(t) => (GpParams { beta: lr_fit(train)?, ..t.clone() }, true, vec![]),
                    None => settle(gp_vg_fit(train, vg), "variogram fit")?,
                };
                TrainedModel::GpVg(KrigingModel::new(params, kriging.clone(), train.clone(), converged, notes))
            }
            ModelSpec::GpMl { ml, kriging, theta } => {
                let (params, converged, notes) = match theta {
                    Some(t) => (GpParams { beta: gls_beta(train, t, &ml.vecchia)?, ..t.clone() }, true, vec![]),
                    None => settle(gp_ml_fit(train, ml, None), "likelihood fit")?,
                };
                TrainedModel::GpMl(KrigingModel::new(params, kriging.clone(), train.clone(), converged, notes))
            }
            ModelSpec::Rf { params } => TrainedModel::Rf(rf_fit(&rows(train), &train.values(), params)?),
            ModelSpec::Xgboost { params } => TrainedModel::Xgboost(boost_fit(&rows(train), &train.values(), params)?),
            ModelSpec::Svr { params } => TrainedModel::Svr(svr_fit(&rows(train), &train.values(), params)?),
            ModelSpec::Ann { params } => TrainedModel::Ann(mlp_fit(&rows(train), &train.values(), params)?),
        })
    }
}

/// GP model parameters that a fixed covariance would otherwise need;
/// convenience for building a frozen spec.
pub fn frozen_gp(name: &str, theta: GpParams) -> Result<ModelSpec> {
    Ok(match ModelSpec::default_for(name)? {
        ModelSpec::GpVg { vg, kriging, .. } => ModelSpec::GpVg { vg, kriging, theta: Some(theta) },
        ModelSpec::GpMl { ml, kriging, .. } => ModelSpec::GpMl { ml, kriging, theta: Some(theta) },
        _ => return Err(contract(format!("`{name}` is not a Gaussian-process model"))),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    Idw(IdwModel),
    Lr(LinearModel),
    Nr(NetworkModel),
    Gam(GamModel),
    GpVg(KrigingModel),
    GpMl(KrigingModel),
    Rf(Forest),
    Xgboost(Booster),
    Svr(SvrModel),
    Ann(MlpModel),
}

impl TrainedModel {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedModel::Idw(_) => "idw",
            TrainedModel::Lr(_) => "lr",
            TrainedModel::Nr(_) => "nr",
            TrainedModel::Gam(_) => "gam",
            TrainedModel::GpVg(_) => "gp_vg",
            TrainedModel::GpMl(_) => "gp_ml",
            TrainedModel::Rf(_) => "rf",
            TrainedModel::Xgboost(_) => "xgboost",
            TrainedModel::Svr(_) => "svr",
            TrainedModel::Ann(_) => "ann",
        }
    }

    pub fn predict(&self, query: &Query) -> Result<Prediction> {
        if query.points.len() != query.covariates.len() {
            return Err(contract("query points and covariates differ in length"));
        }
        let mean = match self {
            TrainedModel::Idw(m) => m.predict(&query.points),
            TrainedModel::Lr(m) => m.predict(query),
            TrainedModel::Nr(m) => m.predict(query),
            TrainedModel::Gam(m) => m.predict(query),
            TrainedModel::GpVg(m) | TrainedModel::GpMl(m) => {
                let (mean, var) = m.predict(query)?;
                return Ok(Prediction { mean, variance: Some(var) });
            }
            TrainedModel::Rf(m) => m.predict(&query_rows(query)),
            TrainedModel::Xgboost(m) => m.predict(&query_rows(query)),
            TrainedModel::Svr(m) => m.predict(&query_rows(query)),
            TrainedModel::Ann(m) => m.predict(&query_rows(query)),
        };
        Ok(Prediction { mean, variance: None })
    }

    /// Fit diagnostics worth surfacing in reports.
    pub fn notes(&self) -> Vec<String> {
        match self {
            TrainedModel::GpVg(m) | TrainedModel::GpMl(m) => m.notes.clone(),
            TrainedModel::Nr(m) if !m.graph.flagged.is_empty() => vec![format!(
                "{} segments without observed neighbors use the global training mean",
                m.graph.flagged.len()
            )],
            TrainedModel::Svr(m) if !m.converged => vec!["SMO stopped at the iteration cap".to_string()],
            _ => vec![],
        }
    }

    /// Loss per boosting round or training epoch, for the two iterative learners.
    pub fn training_curve(&self) -> Option<&[f64]> {
        match self {
            TrainedModel::Xgboost(m) => Some(&m.training_loss),
            TrainedModel::Ann(m) => Some(&m.training_loss),
            _ => None,
        }
    }

    pub fn write_training_curve(&self, path: &Path) -> Result<()> {
        let curve = self
            .training_curve()
            .ok_or_else(|| contract(format!("`{}` has no training curve", self.name())))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "step,loss")?;
        for (i, l) in curve.iter().enumerate() {
            writeln!(f, "{i},{l}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Self-describing JSON wrapper of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub schema: CovariateSchema,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(schema: CovariateSchema, model: TrainedModel) -> Self {
        Self {
            format_version: MODEL_FILE_VERSION,
            schema,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let m: Self = serde_json::from_reader(f)?;
        if m.format_version != MODEL_FILE_VERSION {
            return Err(Error::Parse(format!("unsupported model file version {}", m.format_version)));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::dataset_at;
    use crate::types::SpatioTemporalPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<SpatioTemporalPoint> = (0..n)
            .map(|_| SpatioTemporalPoint::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0), rng.random_range(0.0..7200.0)))
            .collect();
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)]).collect();
        let z: Vec<f64> = pts
            .iter()
            .zip(&xs)
            .map(|(p, x)| 2.0 + 0.5 * x[0] - 0.3 * x[1] + (p.x / 300.0).sin() * 0.2 + rng.random_range(-0.05..0.05))
            .collect();
        dataset_at(&pts, &xs, &z)
    }

    fn quick(name: &str) -> ModelSpec {
        match ModelSpec::default_for(name).unwrap() {
            ModelSpec::Rf { .. } => ModelSpec::Rf {
                params: ForestParams { n_trees: 10, ..Default::default() },
            },
            ModelSpec::Ann { .. } => ModelSpec::Ann {
                params: MlpConfig { epochs: 20, ..Default::default() },
            },
            ModelSpec::GpMl { kriging, .. } => ModelSpec::GpMl {
                ml: MlFitOptions { max_evals: 60, refresh_neighbors: false, ..Default::default() },
                kriging,
                theta: None,
            },
            s => s,
        }
    }

    #[test]
    fn unknown_name_lists_registry() {
        match ModelSpec::default_for("kriging") {
            Err(Error::UnknownModel { registered, .. }) => assert_eq!(registered.len(), 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_names_round_trip() {
        for name in MODEL_NAMES {
            let s = ModelSpec::default_for(name).unwrap();
            assert_eq!(s.name(), name);
            let json = serde_json::to_string(&s).unwrap();
            let back: ModelSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
        }
        let s: ModelSpec = serde_json::from_str(r#"{"model":"idw"}"#).unwrap();
        assert_eq!(s, ModelSpec::default_for("idw").unwrap());
    }

    #[test]
    fn every_model_fits_predicts_and_round_trips() {
        let train = scene(150, 1);
        let query = scene(20, 2).as_query();
        for name in MODEL_NAMES {
            let m = quick(name).fit(&train).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(m.name(), name);
            let p = m.predict(&query).unwrap();
            assert_eq!(p.mean.len(), 20);
            assert!(p.mean.iter().all(|v| v.is_finite()), "{name}");
            assert_eq!(p.variance.is_some(), name.starts_with("gp_"));
            let file = ModelFile::new(train.schema.clone(), m);
            let back: ModelFile = serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
            assert_eq!(back.model.predict(&query).unwrap().mean, p.mean, "{name}");
        }
    }

    #[test]
    fn tuning_freezes_hyperparameters() {
        let train = scene(150, 3);
        let t = ModelSpec::default_for("gp_vg").unwrap().tune(&train).unwrap();
        let ModelSpec::GpVg { theta: Some(theta), .. } = &t else { panic!() };
        let fold = train.subset(&(0..100).collect::<Vec<_>>());
        let TrainedModel::GpVg(m) = t.fit(&fold).unwrap() else { panic!() };
        assert_eq!((m.params.range_s, m.params.tau2), (theta.range_s, theta.tau2));
        assert_eq!(m.params.beta, lr_fit(&fold).unwrap());

        let t = ModelSpec::default_for("idw").unwrap().tune(&train).unwrap();
        assert!(matches!(t, ModelSpec::Idw { tune_c: false, .. }));
    }

    #[test]
    fn training_curves_export() {
        let train = scene(80, 4);
        let m = quick("xgboost").fit(&train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        m.write_training_curve(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 201);
        assert!(quick("lr").fit(&train).unwrap().write_training_curve(&path).is_err());
    }
}

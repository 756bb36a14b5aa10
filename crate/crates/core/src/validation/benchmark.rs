use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldPlan, PlanKind, Scenario, ScenarioKind};
use super::report::{aggregate, EvaluationReport, FoldResult};
use crate::error::{Error, Result};
use crate::metrics::MetricSet;
use crate::models::ModelSpec;
use crate::types::{Dataset, StationClass};

/// Anything the benchmark can score: fit on a training set, predict the
/// log values of several test sets.
pub trait Estimator: Send + Sync {
    fn name(&self) -> String;
    fn fit_predict(&self, train: &Dataset, tests: &[Dataset]) -> Result<FitOutcome>;
}

#[derive(Debug, Clone, Default)]
pub struct FitOutcome {
    pub predictions: Vec<Vec<f64>>,
    pub notes: Vec<String>,
}

impl Estimator for ModelSpec {
    fn name(&self) -> String {
        ModelSpec::name(self).to_string()
    }

    fn fit_predict(&self, train: &Dataset, tests: &[Dataset]) -> Result<FitOutcome> {
        let model = self.fit(train)?;
        let predictions = tests.iter().map(|t| model.predict(&t.as_query()).map(|p| p.mean)).collect::<Result<_>>()?;
        Ok(FitOutcome { predictions, notes: model.notes() })
    }
}

/// Stands in for a model whose tuning failed: every cell reports the error.
struct Failed {
    name: String,
    message: String,
}

impl Estimator for Failed {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn fit_predict(&self, _: &Dataset, _: &[Dataset]) -> Result<FitOutcome> {
        Err(Error::Contract(format!("tuning failed: {}", self.message)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<ScenarioKind>,
    pub validations: Vec<PlanKind>,
    /// Day D; by default the second day when at least three are present,
    /// the first otherwise.
    pub day: Option<NaiveDate>,
    /// Day on which hyperparameters are frozen; by default the day before
    /// D when present. Without one each fold tunes on its own training set.
    pub tuning_day: Option<NaiveDate>,
    /// Adds metrics on back-transformed concentrations.
    pub back_transform: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scenarios: ScenarioKind::ALL.to_vec(),
            validations: PlanKind::ALL.to_vec(),
            day: None,
            tuning_day: None,
            back_transform: false,
        }
    }
}

/// Days actually used by a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDays {
    pub day: NaiveDate,
    pub tuning_day: Option<NaiveDate>,
}

impl BenchmarkConfig {
    pub fn resolve_days(&self, data: &Dataset) -> Result<BenchmarkDays> {
        let days = data.days();
        if days.is_empty() {
            return Err(Error::EmptyTraining);
        }
        let day = self.day.unwrap_or(if days.len() >= 3 { days[1] } else { days[0] });
        let tuning_day = self.tuning_day.or_else(|| day.pred_opt().filter(|d| days.contains(d)));
        if tuning_day == Some(day) {
            return Err(Error::Contract("the tuning day must differ from day D".into()));
        }
        Ok(BenchmarkDays { day, tuning_day })
    }
}

/// Freezes every model's hyperparameters on the tuning day's low-cost data.
pub fn tune_models(data: &Dataset, models: &[ModelSpec], tuning_day: Option<NaiveDate>) -> Vec<Box<dyn Estimator>> {
    let Some(day) = tuning_day else {
        return models.iter().map(|m| Box::new(m.clone()) as Box<dyn Estimator>).collect();
    };
    let tuning = data.filter(|o| o.station_class == StationClass::LowCost && data.local_date(o.point.t) == day);
    models
        .par_iter()
        .map(|m| match m.tune(&tuning) {
            Ok(t) => Box::new(t) as Box<dyn Estimator>,
            Err(e) => Box::new(Failed {
                name: m.name().to_string(),
                message: e.to_string(),
            }),
        })
        .collect()
}

/// Fits every registered model spec on every fold of every scenario and
/// validation plan. Per-cell failures are recorded, not raised.
pub fn run_benchmark(data: &Dataset, models: &[ModelSpec], cfg: &BenchmarkConfig) -> Result<EvaluationReport> {
    let days = cfg.resolve_days(data)?;
    let estimators = tune_models(data, models, days.tuning_day);
    run_estimators(data, &estimators, cfg, days)
}

struct Job<'a> {
    model: usize,
    train: &'a [usize],
    /// (plan, fold) pairs sharing this training set.
    folds: Vec<(usize, usize)>,
}

pub fn run_estimators(
    data: &Dataset,
    estimators: &[Box<dyn Estimator>],
    cfg: &BenchmarkConfig,
    days: BenchmarkDays,
) -> Result<EvaluationReport> {
    let mut plans: Vec<std::result::Result<FoldPlan, (Scenario, PlanKind, String)>> = Vec::new();
    for &s in &cfg.scenarios {
        let scenario = Scenario::new(s, days.day);
        for &v in &cfg.validations {
            plans.push(make_folds(data, v, &scenario).map_err(|e| (scenario, v, e.to_string())));
        }
    }

    // One fit per model and distinct training set.
    let mut by_train: BTreeMap<&[usize], Vec<(usize, usize)>> = BTreeMap::new();
    for (p, plan) in plans.iter().enumerate() {
        if let Ok(plan) = plan {
            for (f, fold) in plan.folds.iter().enumerate() {
                by_train.entry(fold.train.as_slice()).or_default().push((p, f));
            }
        }
    }
    let jobs: Vec<Job> = (0..estimators.len())
        .flat_map(|m| by_train.iter().map(move |(t, f)| Job { model: m, train: t, folds: f.clone() }))
        .collect();
    let outcomes: Vec<(usize, Vec<((usize, usize), Result<Vec<f64>>)>, Vec<String>)> = jobs
        .par_iter()
        .map(|job| {
            let train = data.subset(job.train);
            let tests: Vec<Dataset> = job
                .folds
                .iter()
                .map(|&(p, f)| data.subset(&plans[p].as_ref().expect("planned").folds[f].test))
                .collect();
            match estimators[job.model].fit_predict(&train, &tests) {
                Ok(out) => (
                    job.model,
                    job.folds.iter().copied().zip(out.predictions.into_iter().map(Ok)).collect(),
                    out.notes,
                ),
                Err(e) => (
                    job.model,
                    job.folds.iter().map(|&k| (k, Err(Error::Contract(e.to_string())))).collect(),
                    vec![],
                ),
            }
        })
        .collect();

    let mut preds: BTreeMap<(usize, usize, usize), Result<Vec<f64>>> = BTreeMap::new();
    let mut notes: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (m, cells, n) in outcomes {
        for ((p, f), r) in cells {
            preds.insert((m, p, f), r);
        }
        let entry = notes.entry(m).or_default();
        for note in n {
            if !entry.contains(&note) {
                entry.push(note);
            }
        }
    }

    let mut cells = Vec::new();
    for (m, est) in estimators.iter().enumerate() {
        let model = est.name();
        for (p, plan) in plans.iter().enumerate() {
            let plan = match plan {
                Ok(plan) => plan,
                Err((scenario, v, msg)) => {
                    cells.push(FoldResult::failed(&model, scenario.kind, *v, "-", vec![], msg.clone()));
                    continue;
                }
            };
            for (f, fold) in plan.folds.iter().enumerate() {
                let actual: Vec<f64> = fold.test.iter().map(|&i| data.observations[i].value).collect();
                let sensors = fold.test_sensors.iter().cloned().collect();
                let cell = match preds.remove(&(m, p, f)).expect("every fold was scheduled") {
                    Ok(pred) => score(&pred, &actual, cfg.back_transform).map(|(ms, bt)| FoldResult {
                        model: model.clone(),
                        scenario: plan.scenario.kind,
                        validation: plan.kind,
                        fold: fold.label.clone(),
                        test_sensors: sensors,
                        metrics: Some(ms),
                        back_transformed: bt,
                        error: None,
                        predicted: pred,
                        actual,
                    }),
                    Err(e) => Err(e),
                };
                cells.push(cell.unwrap_or_else(|e| {
                    FoldResult::failed(&model, plan.scenario.kind, plan.kind, &fold.label, fold.test_sensors.iter().cloned().collect(), e.to_string())
                }));
            }
        }
    }
    let aggregates = aggregate(&cells);
    Ok(EvaluationReport {
        days,
        models: estimators.iter().map(|e| e.name()).collect(),
        scenarios: cfg.scenarios.clone(),
        validations: cfg.validations.clone(),
        notes: notes.into_iter().map(|(m, n)| (estimators[m].name(), n)).filter(|(_, n)| !n.is_empty()).collect(),
        cells,
        aggregates,
    })
}

fn score(pred: &[f64], actual: &[f64], back: bool) -> Result<(MetricSet, Option<MetricSet>)> {
    let m = MetricSet::compute(pred, actual)?;
    let b = if back { Some(MetricSet::compute_back_transformed(pred, actual)?) } else { None };
    Ok((m, b))
}

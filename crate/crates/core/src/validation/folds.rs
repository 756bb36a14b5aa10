use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::types::{Dataset, StationClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Predict day D at held-out places from day-D data.
    Interpolation,
    /// Predict day D+1 from day-D data.
    Forecast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    LeaveOneSensorOut,
    FixedStationHoldout,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 2] = [ScenarioKind::Interpolation, ScenarioKind::Forecast];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Interpolation => "interpolation",
            ScenarioKind::Forecast => "forecast",
        }
    }
}

impl PlanKind {
    pub const ALL: [PlanKind; 2] = [PlanKind::LeaveOneSensorOut, PlanKind::FixedStationHoldout];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlanKind::LeaveOneSensorOut => "loso",
            PlanKind::FixedStationHoldout => "fixed_station",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interpolation" => Ok(ScenarioKind::Interpolation),
            "forecast" => Ok(ScenarioKind::Forecast),
            _ => Err(Error::Parse(format!("unknown scenario `{s}` (expected interpolation or forecast)"))),
        }
    }
}

impl FromStr for PlanKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loso" => Ok(PlanKind::LeaveOneSensorOut),
            "fixed_station" => Ok(PlanKind::FixedStationHoldout),
            _ => Err(Error::Parse(format!("unknown validation `{s}` (expected loso or fixed_station)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub train_day: NaiveDate,
    pub test_day: NaiveDate,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, train_day: NaiveDate) -> Self {
        let test_day = match kind {
            ScenarioKind::Interpolation => train_day,
            ScenarioKind::Forecast => train_day.succ_opt().expect("date in range"),
        };
        Self { kind, train_day, test_day }
    }
}

/// One train/test split, as row indices into the benchmarked dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    /// Held-out sensor for per-sensor folds.
    pub label: String,
    pub train_sensors: BTreeSet<String>,
    pub test_sensors: BTreeSet<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub kind: PlanKind,
    pub scenario: Scenario,
    pub folds: Vec<Fold>,
}

fn sensors(data: &Dataset, idx: &[usize]) -> BTreeSet<String> {
    idx.iter().map(|&i| data.observations[i].sensor_id.clone()).collect()
}

fn rows(data: &Dataset, day: NaiveDate, class: StationClass) -> Vec<usize> {
    (0..data.len())
        .filter(|&i| {
            let o = &data.observations[i];
            o.station_class == class && data.local_date(o.point.t) == day
        })
        .collect()
}

/// Splits the test rows per sensor; every fold shares `train`.
fn per_sensor(data: &Dataset, train: &[usize], test: &[usize]) -> Vec<Fold> {
    let train_sensors = sensors(data, train);
    sensors(data, test)
        .into_iter()
        .map(|s| {
            let t: Vec<usize> = test.iter().copied().filter(|&i| data.observations[i].sensor_id == s).collect();
            Fold {
                label: s.clone(),
                train_sensors: train_sensors.clone(),
                test_sensors: BTreeSet::from([s]),
                train: train.to_vec(),
                test: t,
            }
        })
        .collect()
}

/// Builds the folds of one validation plan. Reference stations never
/// enter a training set.
pub fn make_folds(data: &Dataset, kind: PlanKind, scenario: &Scenario) -> Result<FoldPlan> {
    let train_lc = rows(data, scenario.train_day, StationClass::LowCost);
    let n_lc = sensors(data, &train_lc).len();
    let folds = match (kind, scenario.kind) {
        (PlanKind::LeaveOneSensorOut, _) if n_lc < 2 => {
            return Err(Error::InsufficientSensors(format!(
                "leave-one-sensor-out needs at least 2 low-cost sensors on {}, found {n_lc}",
                scenario.train_day
            )))
        }
        (PlanKind::LeaveOneSensorOut, ScenarioKind::Interpolation) => sensors(data, &train_lc)
            .into_iter()
            .map(|s| {
                let (test, train): (Vec<usize>, Vec<usize>) =
                    train_lc.iter().partition(|&&i| data.observations[i].sensor_id == s);
                Fold {
                    label: s.clone(),
                    train_sensors: sensors(data, &train),
                    test_sensors: BTreeSet::from([s]),
                    train,
                    test,
                }
            })
            .collect(),
        (PlanKind::LeaveOneSensorOut, ScenarioKind::Forecast) => {
            let test = rows(data, scenario.test_day, StationClass::LowCost);
            if test.is_empty() {
                return Err(Error::InsufficientSensors(format!("no low-cost observations on {}", scenario.test_day)));
            }
            per_sensor(data, &train_lc, &test)
        }
        (PlanKind::FixedStationHoldout, _) => {
            if train_lc.is_empty() {
                return Err(Error::InsufficientSensors(format!("no low-cost observations on {}", scenario.train_day)));
            }
            let test = rows(data, scenario.test_day, StationClass::Reference);
            if test.is_empty() {
                return Err(Error::InsufficientSensors(format!("no reference-station observations on {}", scenario.test_day)));
            }
            per_sensor(data, &train_lc, &test)
        }
    };
    let plan = FoldPlan { kind, scenario: *scenario, folds };
    assert_no_leakage(data, &plan)?;
    Ok(plan)
}

/// Fails if any (sensor, timestamp) pair is in both the train and test
/// rows of a fold, if sensor sets overlap where the plan forbids it, or if
/// reference data reaches training.
pub fn assert_no_leakage(data: &Dataset, plan: &FoldPlan) -> Result<()> {
    for f in &plan.folds {
        let key = |i: usize| {
            let o = &data.observations[i];
            (o.sensor_id.as_str(), o.point.t.to_bits())
        };
        let train: HashSet<_> = f.train.iter().map(|&i| key(i)).collect();
        if let Some(&i) = f.test.iter().find(|&&i| train.contains(&key(i))) {
            let o = &data.observations[i];
            return Err(contract(format!("fold {}: ({}, {}) is in train and test", f.label, o.sensor_id, o.point.t)));
        }
        if f.train.iter().any(|&i| data.observations[i].station_class == StationClass::Reference) {
            return Err(contract(format!("fold {}: reference data in training", f.label)));
        }
        let same_day = plan.scenario.kind == ScenarioKind::Interpolation;
        if same_day && !f.train_sensors.is_disjoint(&f.test_sensors) {
            return Err(contract(format!("fold {}: a test sensor also trains", f.label)));
        }
        if !same_day {
            let last = f.train.iter().map(|&i| data.observations[i].point.t).fold(f64::NEG_INFINITY, f64::max);
            let first = f.test.iter().map(|&i| data.observations[i].point.t).fold(f64::INFINITY, f64::min);
            if last >= first {
                return Err(contract(format!("fold {}: training data is not strictly before the test day", f.label)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CovariateSchema, CovariateVector, Mobility, Observation, SpatioTemporalPoint};

    // Two days from 2024-03-04 (UTC); 5 low-cost and 2 reference sensors.
    fn data() -> Dataset {
        let d0 = 1_709_510_400.0;
        let mut obs = Vec::new();
        for day in 0..2 {
            for s in 0..7 {
                for k in 0..4 {
                    let class = if s < 5 { StationClass::LowCost } else { StationClass::Reference };
                    obs.push(Observation {
                        point: SpatioTemporalPoint::new(s as f64 * 100.0, 0.0, d0 + day as f64 * 86_400.0 + 36_000.0 + k as f64 * 60.0),
                        value: 1.0,
                        sensor_id: format!("s{s}"),
                        mobility: Mobility::Fixed,
                        station_class: class,
                    });
                }
            }
        }
        let n = obs.len();
        Dataset::new(obs, vec![CovariateVector(vec![]); n], CovariateSchema::empty(), 0).unwrap()
    }

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 3, 4).unwrap()
    }

    #[test]
    fn loso_interpolation_has_one_fold_per_sensor() {
        let d = data();
        let p = make_folds(&d, PlanKind::LeaveOneSensorOut, &Scenario::new(ScenarioKind::Interpolation, day0())).unwrap();
        assert_eq!(p.folds.len(), 5);
        let tested: Vec<_> = p.folds.iter().flat_map(|f| f.test_sensors.iter().cloned()).collect();
        assert_eq!(tested, ["s0", "s1", "s2", "s3", "s4"]);
        for f in &p.folds {
            assert_eq!((f.train.len(), f.test.len()), (16, 4));
        }
    }

    #[test]
    fn holdout_never_trains_on_reference() {
        let d = data();
        for kind in ScenarioKind::ALL {
            let p = make_folds(&d, PlanKind::FixedStationHoldout, &Scenario::new(kind, day0())).unwrap();
            assert_eq!(p.folds.len(), 2);
            for f in &p.folds {
                assert!(f.train.iter().all(|&i| d.observations[i].station_class == StationClass::LowCost));
                assert!(f.test.iter().all(|&i| d.observations[i].station_class == StationClass::Reference));
            }
        }
    }

    #[test]
    fn forecast_trains_strictly_before_testing() {
        let d = data();
        let p = make_folds(&d, PlanKind::LeaveOneSensorOut, &Scenario::new(ScenarioKind::Forecast, day0())).unwrap();
        assert_eq!(p.folds.len(), 5);
        for f in &p.folds {
            let max_train = f.train.iter().map(|&i| d.observations[i].point.t).fold(f64::MIN, f64::max);
            let min_test = f.test.iter().map(|&i| d.observations[i].point.t).fold(f64::MAX, f64::min);
            assert!(max_train < min_test);
        }
    }

    #[test]
    fn too_few_sensors_is_an_error() {
        let d = data().filter(|o| o.sensor_id == "s0" || o.station_class == StationClass::Reference);
        let s = Scenario::new(ScenarioKind::Interpolation, day0());
        assert!(matches!(make_folds(&d, PlanKind::LeaveOneSensorOut, &s), Err(Error::InsufficientSensors(_))));
        let no_ref = data().filter(|o| o.station_class == StationClass::LowCost);
        assert!(matches!(make_folds(&no_ref, PlanKind::FixedStationHoldout, &s), Err(Error::InsufficientSensors(_))));
    }

    #[test]
    fn leakage_is_detected() {
        let d = data();
        let mut p = make_folds(&d, PlanKind::LeaveOneSensorOut, &Scenario::new(ScenarioKind::Interpolation, day0())).unwrap();
        let leak = p.folds[0].test[0];
        p.folds[0].train.push(leak);
        assert!(assert_no_leakage(&d, &p).is_err());
    }
}

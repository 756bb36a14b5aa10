use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::benchmark::BenchmarkDays;
use super::folds::{PlanKind, ScenarioKind};
use crate::error::Result;
use crate::metrics::MetricSet;
use crate::models::display_name;
use crate::raster::fmt_g;

/// Outcome of one (model, scenario, validation, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub model: String,
    pub scenario: ScenarioKind,
    pub validation: PlanKind,
    pub fold: String,
    pub test_sensors: Vec<String>,
    /// Log-space metrics; `None` for error cells.
    pub metrics: Option<MetricSet>,
    pub back_transformed: Option<MetricSet>,
    pub error: Option<String>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
}

impl FoldResult {
    pub(crate) fn failed(
        model: &str,
        scenario: ScenarioKind,
        validation: PlanKind,
        fold: &str,
        test_sensors: Vec<String>,
        error: String,
    ) -> Self {
        Self {
            model: model.to_string(),
            scenario,
            validation,
            fold: fold.to_string(),
            test_sensors,
            metrics: None,
            back_transformed: None,
            error: Some(error),
            predicted: vec![],
            actual: vec![],
        }
    }
}

/// Fold-averaged indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub rmse: f64,
    pub bias: f64,
    /// Mean over folds where the correlation is defined.
    pub corr: Option<f64>,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub scenario: ScenarioKind,
    pub validation: PlanKind,
    pub n_folds: usize,
    pub n_failed: usize,
    pub mean: Option<MeanMetrics>,
    /// Indicators over all successful folds' predictions at once.
    pub pooled: Option<MetricSet>,
    /// Min, median and max of the per-fold RMSE.
    pub rmse_range: Option<[f64; 3]>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Groups cells by (model, scenario, validation) in first-seen order.
pub fn aggregate(cells: &[FoldResult]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, ScenarioKind, PlanKind)> = Vec::new();
    for c in cells {
        let k = (c.model.clone(), c.scenario, c.validation);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(model, scenario, validation)| {
            let group: Vec<&FoldResult> =
                cells.iter().filter(|c| c.model == model && c.scenario == scenario && c.validation == validation).collect();
            let ok: Vec<&MetricSet> = group.iter().filter_map(|c| c.metrics.as_ref()).collect();
            let (mean_m, range) = if ok.is_empty() {
                (None, None)
            } else {
                let rmse: Vec<f64> = ok.iter().map(|m| m.rmse).collect();
                let corrs: Vec<f64> = ok.iter().filter_map(|m| m.corr).collect();
                (
                    Some(MeanMetrics {
                        rmse: mean(&rmse),
                        bias: mean(&ok.iter().map(|m| m.bias).collect::<Vec<_>>()),
                        corr: (!corrs.is_empty()).then(|| mean(&corrs)),
                        mae: mean(&ok.iter().map(|m| m.mae).collect::<Vec<_>>()),
                    }),
                    Some([
                        rmse.iter().copied().fold(f64::INFINITY, f64::min),
                        median(&rmse),
                        rmse.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    ]),
                )
            };
            let pred: Vec<f64> = group.iter().filter(|c| c.metrics.is_some()).flat_map(|c| c.predicted.iter().copied()).collect();
            let act: Vec<f64> = group.iter().filter(|c| c.metrics.is_some()).flat_map(|c| c.actual.iter().copied()).collect();
            Aggregate {
                model,
                scenario,
                validation,
                n_folds: group.len(),
                n_failed: group.len() - ok.len(),
                mean: mean_m,
                pooled: MetricSet::compute(&pred, &act).ok(),
                rmse_range: range,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub days: BenchmarkDays,
    pub models: Vec<String>,
    pub scenarios: Vec<ScenarioKind>,
    pub validations: Vec<PlanKind>,
    /// Fit notes per model, such as optimizer non-convergence.
    pub notes: Vec<(String, Vec<String>)>,
    pub cells: Vec<FoldResult>,
    pub aggregates: Vec<Aggregate>,
}

pub const CSV_HEADER: [&str; 6] = ["model", "scenario", "validation", "fold", "metric", "value"];

/// Shortest text that parses back to the same float.
fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "NA".into())
}

fn metric_rows(m: &MetricSet, suffix: &str) -> Vec<(String, String)> {
    vec![
        (format!("rmse{suffix}"), num(m.rmse)),
        (format!("bias{suffix}"), num(m.bias)),
        (format!("corr{suffix}"), opt(m.corr)),
        (format!("mae{suffix}"), num(m.mae)),
    ]
}

impl EvaluationReport {
    pub fn aggregate(&self, model: &str, scenario: ScenarioKind, validation: PlanKind) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.model == model && a.scenario == scenario && a.validation == validation)
    }

    /// Long-format rows: per-fold metrics, then one `mean` pseudo-fold per
    /// aggregate.
    pub fn csv_rows(&self) -> Vec<[String; 6]> {
        let mut out = Vec::new();
        let mut push = |m: &str, s: ScenarioKind, v: PlanKind, f: &str, k: String, val: String| {
            out.push([m.to_string(), s.to_string(), v.to_string(), f.to_string(), k, val]);
        };
        for c in &self.cells {
            let mut rows = Vec::new();
            match (&c.metrics, &c.error) {
                (Some(m), _) => {
                    rows.extend(metric_rows(m, ""));
                    rows.push(("n".into(), m.n.to_string()));
                    if let Some(b) = &c.back_transformed {
                        rows.extend(metric_rows(b, "_ugm3"));
                    }
                }
                (None, e) => rows.push(("error".into(), e.clone().unwrap_or_default())),
            }
            for (k, v) in rows {
                push(&c.model, c.scenario, c.validation, &c.fold, k, v);
            }
        }
        for a in &self.aggregates {
            let mut rows = vec![];
            if let Some(m) = &a.mean {
                rows.push(("rmse".to_string(), num(m.rmse)));
                rows.push(("bias".into(), num(m.bias)));
                rows.push(("corr".into(), opt(m.corr)));
                rows.push(("mae".into(), num(m.mae)));
            }
            rows.push(("n_folds".into(), a.n_folds.to_string()));
            rows.push(("n_failed".into(), a.n_failed.to_string()));
            for (k, v) in rows {
                push(&a.model, a.scenario, a.validation, "mean", k, v);
            }
        }
        out
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in self.csv_rows() {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Summary tables, one per scenario: a row per model and the four
    /// fold-averaged indicators under each validation target.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Evaluation summary\n");
        let _ = writeln!(
            s,
            "Day D: {}. Tuning day: {}. Values are fold means in log space.\n",
            self.days.day,
            self.days.tuning_day.map(|d| d.to_string()).unwrap_or_else(|| "none (tuned per fold)".into())
        );
        for &sc in &self.scenarios {
            let title = match sc {
                ScenarioKind::Interpolation => "Temporal interpolation (train D, test D)",
                ScenarioKind::Forecast => "Forecast (train D, test D+1)",
            };
            let _ = writeln!(s, "## {title}\n");
            let mut head = String::from("| Model |");
            let mut rule = String::from("|---|");
            for v in &self.validations {
                let label = match v {
                    PlanKind::LeaveOneSensorOut => "LOSO",
                    PlanKind::FixedStationHoldout => "Fixed stations",
                };
                for m in ["RMSE", "BIAS", "CORR", "MAE"] {
                    let _ = write!(head, " {label} {m} |");
                    rule.push_str("---:|");
                }
            }
            let _ = writeln!(s, "{head}\n{rule}");
            for model in &self.models {
                let _ = write!(s, "| {} |", display_name(model));
                for &v in &self.validations {
                    match self.aggregate(model, sc, v).and_then(|a| a.mean.as_ref().map(|m| (a, m))) {
                        Some((a, m)) => {
                            let flag = if a.n_failed > 0 { "*" } else { "" };
                            let corr = m.corr.map(md_num).unwrap_or_else(|| "NA".into());
                            let _ = write!(s, " {}{flag} | {} | {corr} | {} |", md_num(m.rmse), md_num(m.bias), md_num(m.mae));
                        }
                        None => s.push_str(" error | error | error | error |"),
                    }
                }
                s.push('\n');
            }
            s.push('\n');
        }
        let failed: Vec<&FoldResult> = self.cells.iter().filter(|c| c.error.is_some()).collect();
        if !failed.is_empty() {
            let _ = writeln!(s, "Failed cells (`*` marks a mean over the remaining folds):\n");
            for c in failed {
                let _ = writeln!(
                    s,
                    "- {} / {} / {} / {}: {}",
                    c.model,
                    c.scenario,
                    c.validation,
                    c.fold,
                    c.error.as_deref().unwrap_or_default()
                );
            }
            s.push('\n');
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "Notes:\n");
            for (m, notes) in &self.notes {
                for n in notes {
                    let _ = writeln!(s, "- {m}: {n}");
                }
            }
        }
        s
    }

    /// Writes `report.csv`, `report.md` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("report.csv"))?)?;
        std::fs::write(dir.join("report.md"), self.to_markdown())?;
        std::fs::write(dir.join("report.json"), serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Display rounding of the Markdown tables.
pub fn md_num(v: f64) -> String {
    fmt_g(v, 4)
}

//! Record-level cleaning steps. Each step returns a new list and never
//! mutates its input.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, Timelike, Weekday};

use super::records::RawRecord;
use crate::error::{contract, Result};
use crate::types::{Mobility, Observation, SpatioTemporalPoint, StationClass};

pub const DEFAULT_WARMUP_S: f64 = 300.0;
pub const DEFAULT_MEDIAN_WINDOW: usize = 15;
pub const DEFAULT_DEDUP_RADIUS_M: f64 = 50.0;
pub const DEFAULT_LOG_FLOOR: f64 = 0.1;

/// Drops mobile records less than `warmup_s` after the first record of their run.
pub fn trim_warmup(records: &[RawRecord], warmup_s: f64) -> Vec<RawRecord> {
    let mut run_start: HashMap<&str, f64> = HashMap::new();
    for r in records.iter().filter(|r| r.mobility == Mobility::Mobile) {
        let e = run_start.entry(r.run_id.as_str()).or_insert(f64::INFINITY);
        *e = e.min(r.t());
    }
    records
        .iter()
        .filter(|r| r.mobility != Mobility::Mobile || r.t() - run_start[r.run_id.as_str()] >= warmup_s)
        .cloned()
        .collect()
}

fn median_of(buf: &mut [f64]) -> f64 {
    buf.sort_by(f64::total_cmp);
    buf[buf.len() / 2]
}

/// Centered running median per sensor; the window shrinks symmetrically at
/// stream edges. Output keeps the input order.
pub fn running_median(records: &[RawRecord], window: usize) -> Result<Vec<RawRecord>> {
    if window == 0 || window % 2 == 0 {
        return Err(contract(format!("running median window must be odd, got {window}")));
    }
    let half = window / 2;
    let mut by_sensor: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_sensor.entry(r.sensor_id.as_str()).or_default().push(i);
    }
    let mut out = records.to_vec();
    let mut buf = Vec::with_capacity(window);
    for idx in by_sensor.values_mut() {
        idx.sort_by(|&a, &b| records[a].time.cmp(&records[b].time).then(a.cmp(&b)));
        let n = idx.len();
        for k in 0..n {
            let h = half.min(k).min(n - 1 - k);
            buf.clear();
            buf.extend(idx[k - h..=k + h].iter().map(|&j| records[j].concentration));
            out[idx[k]].concentration = median_of(&mut buf);
        }
    }
    Ok(out)
}

/// Keeps records whose local time falls in [04:00, 19:00), Monday to Saturday.
pub fn filter_schedule(records: &[RawRecord]) -> Vec<RawRecord> {
    records
        .iter()
        .filter(|r| {
            let local = r.time;
            let hour = local.hour();
            local.weekday() != Weekday::Sun && (4..19).contains(&hour)
        })
        .cloned()
        .collect()
}

/// Among fixed low-cost sensors closer than `radius_m` to one another, keeps
/// only the one with the most records (ties: lowest sensor id).
pub fn dedup_colocated(records: &[RawRecord], radius_m: f64) -> Vec<RawRecord> {
    struct Site {
        x: f64,
        y: f64,
        count: usize,
    }
    let mut sites: BTreeMap<&str, Site> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.mobility == Mobility::Fixed && r.station_class == StationClass::LowCost)
    {
        let s = sites.entry(r.sensor_id.as_str()).or_insert(Site { x: 0.0, y: 0.0, count: 0 });
        s.x += r.x;
        s.y += r.y;
        s.count += 1;
    }
    let mut ranked: Vec<(&str, f64, f64, usize)> = sites
        .iter()
        .map(|(id, s)| (*id, s.x / s.count as f64, s.y / s.count as f64, s.count))
        .collect();
    // BTreeMap order makes the sort deterministic for equal counts.
    ranked.sort_by(|a, b| b.3.cmp(&a.3).then(a.0.cmp(b.0)));
    let mut kept: Vec<(&str, f64, f64)> = Vec::new();
    let mut dropped = std::collections::HashSet::new();
    for (id, x, y, _) in ranked {
        if kept.iter().any(|(_, kx, ky)| (x - kx).hypot(y - ky) < radius_m) {
            dropped.insert(id);
        } else {
            kept.push((id, x, y));
        }
    }
    records
        .iter()
        .filter(|r| {
            !(r.mobility == Mobility::Fixed
                && r.station_class == StationClass::LowCost
                && dropped.contains(r.sensor_id.as_str()))
        })
        .cloned()
        .collect()
}

/// `value = ln(max(concentration, floor))`.
pub fn log_transform(records: &[RawRecord], floor: f64) -> Vec<Observation> {
    records
        .iter()
        .map(|r| Observation {
            point: SpatioTemporalPoint::new(r.x, r.y, r.t()),
            value: r.concentration.max(floor).ln(),
            sensor_id: r.sensor_id.clone(),
            mobility: r.mobility,
            station_class: r.station_class,
        })
        .collect()
}

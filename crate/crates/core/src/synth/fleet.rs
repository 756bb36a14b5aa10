//! Where and when each synthetic sensor samples.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::Lattice;
use crate::error::{contract, Result};
use crate::types::{Mobility, SpatioTemporalPoint, StationClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetSpec {
    pub fixed_lowcost: usize,
    pub mobile_lowcost: usize,
    pub reference: usize,
    /// Sampling interval of fixed sensors and reference stations.
    pub fixed_interval_s: f64,
    pub mobile_runs_per_day: usize,
    /// Mobile sensors sample at 1 Hz for this long per run.
    pub run_duration_s: f64,
    pub speed_mps: f64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            fixed_lowcost: 6,
            mobile_lowcost: 2,
            reference: 3,
            fixed_interval_s: 600.0,
            mobile_runs_per_day: 2,
            run_duration_s: 600.0,
            speed_mps: 8.0,
        }
    }
}

impl FleetSpec {
    pub fn validate(&self, span_t: f64) -> Result<()> {
        if !(self.fixed_interval_s > 0.0 && self.speed_mps > 0.0 && self.run_duration_s >= 1.0) {
            return Err(contract(format!("invalid fleet {self:?}")));
        }
        if self.mobile_lowcost > 0 && self.mobile_runs_per_day > 0 && self.run_duration_s > span_t {
            return Err(contract("mobile runs are longer than the daily sampling window"));
        }
        Ok(())
    }
}

/// One sensor's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub sensor_id: String,
    pub mobility: Mobility,
    pub class: StationClass,
    pub points: Vec<SpatioTemporalPoint>,
    /// Run identifier per point; empty for fixed sensors.
    pub runs: Vec<String>,
}

/// Location at least `min_sep` meters from every location in `taken`.
fn place(rng: &mut ChaCha8Rng, width: f64, height: f64, taken: &[[f64; 2]], min_sep: f64) -> [f64; 2] {
    let inset = 50.0f64.min(width / 4.0).min(height / 4.0);
    for _ in 0..10_000 {
        let p = [rng.random_range(inset..width - inset), rng.random_range(inset..height - inset)];
        if taken.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_sep) {
            return p;
        }
    }
    [rng.random_range(inset..width - inset), rng.random_range(inset..height - inset)]
}

fn fixed_times(t0: f64, span: f64, step: f64) -> Vec<f64> {
    let n = (span / step).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * step).collect()
}

/// Random walk along lattice edges at constant speed, one point per second.
/// Never reverses at an intersection with another way out.
pub fn walk(lattice: &Lattice, t_start: f64, duration_s: f64, speed: f64, rng: &mut ChaCha8Rng) -> Vec<SpatioTemporalPoint> {
    let mut cur = (rng.random_range(0..lattice.xs.len()), rng.random_range(0..lattice.ys.len()));
    let mut prev: Option<(usize, usize)> = None;
    let next = |cur: (usize, usize), prev: Option<(usize, usize)>, rng: &mut ChaCha8Rng| {
        let mut opts = lattice.neighbors(cur.0, cur.1);
        if opts.len() > 1 {
            opts.retain(|&o| Some(o) != prev);
        }
        opts[rng.random_range(0..opts.len())]
    };
    let mut to = next(cur, prev, rng);
    let mut along = 0.0;
    let n = duration_s.floor() as usize;
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let (a, b) = (lattice.node(cur.0, cur.1), lattice.node(to.0, to.1));
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let f = along / len;
        out.push(SpatioTemporalPoint::new(a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), t_start + s as f64));
        along += speed;
        loop {
            let (a, b) = (lattice.node(cur.0, cur.1), lattice.node(to.0, to.1));
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if along < len {
                break;
            }
            along -= len;
            prev = Some(cur);
            cur = to;
            to = next(cur, prev, rng);
        }
    }
    out
}

/// Places the fleet and samples every sensor over every day window
/// `[t0, t0 + span]`.
pub fn deploy(
    fleet: &FleetSpec,
    lattice: &Lattice,
    width: f64,
    height: f64,
    windows: &[(f64, f64)],
    rng: &mut ChaCha8Rng,
) -> Vec<Track> {
    let mut tracks = Vec::new();
    // Fixed low-cost sensors stay out of each other's deduplication radius.
    let mut taken = Vec::new();
    let mut fixed_sites = Vec::new();
    for _ in 0..fleet.fixed_lowcost {
        let p = place(rng, width, height, &taken, 120.0);
        taken.push(p);
        fixed_sites.push(p);
    }
    let mut ref_sites = Vec::new();
    for _ in 0..fleet.reference {
        let p = place(rng, width, height, &ref_sites, 120.0);
        ref_sites.push(p);
    }
    let fixed_track = |id: String, class: StationClass, p: [f64; 2]| {
        let points: Vec<SpatioTemporalPoint> = windows
            .iter()
            .flat_map(|&(t0, span)| fixed_times(t0, span, fleet.fixed_interval_s))
            .map(|t| SpatioTemporalPoint::new(p[0], p[1], t))
            .collect();
        Track {
            sensor_id: id,
            mobility: Mobility::Fixed,
            class,
            runs: vec![String::new(); points.len()],
            points,
        }
    };
    for (i, p) in fixed_sites.iter().enumerate() {
        tracks.push(fixed_track(format!("f{i}"), StationClass::LowCost, *p));
    }
    for (i, p) in ref_sites.iter().enumerate() {
        tracks.push(fixed_track(format!("ref{i}"), StationClass::Reference, *p));
    }
    for m in 0..fleet.mobile_lowcost {
        let mut points = Vec::new();
        let mut runs = Vec::new();
        for (d, &(t0, span)) in windows.iter().enumerate() {
            for r in 0..fleet.mobile_runs_per_day {
                let start = (t0 + rng.random_range(0.0..=(span - fleet.run_duration_s))).floor().max(t0);
                let pts = walk(lattice, start, fleet.run_duration_s, fleet.speed_mps, rng);
                runs.extend(std::iter::repeat_n(format!("m{m}-d{d}-r{r}"), pts.len()));
                points.extend(pts);
            }
        }
        tracks.push(Track {
            sensor_id: format!("m{m}"),
            mobility: Mobility::Mobile,
            class: StationClass::LowCost,
            points,
            runs,
        });
    }
    tracks
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn walks_stay_on_streets_at_one_hertz() {
        let l = Lattice::new(3000.0, 3000.0, 300.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = walk(&l, 100.0, 900.0, 8.0, &mut rng);
        assert_eq!(pts.len(), 900);
        for (k, p) in pts.iter().enumerate() {
            assert_eq!(p.t, 100.0 + k as f64);
            let on_h = l.ys.iter().any(|&y| (p.y - y).abs() < 1e-9);
            let on_v = l.xs.iter().any(|&x| (p.x - x).abs() < 1e-9);
            assert!(on_h || on_v, "{p:?}");
        }
        for w in pts.windows(2) {
            assert!(w[0].spatial_distance(&w[1]) <= 8.0 + 1e-9);
        }
    }

    #[test]
    fn fixed_sensors_are_spread_apart() {
        let l = Lattice::new(3000.0, 3000.0, 300.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fleet = FleetSpec::default();
        let tracks = deploy(&fleet, &l, 3000.0, 3000.0, &[(0.0, 3600.0)], &mut rng);
        assert_eq!(tracks.len(), 6 + 3 + 2);
        let fixed: Vec<_> = tracks.iter().filter(|t| t.sensor_id.starts_with('f')).collect();
        for a in &fixed {
            assert_eq!(a.points.len(), 7);
            for b in &fixed {
                if a.sensor_id != b.sensor_id {
                    assert!(a.points[0].spatial_distance(&b.points[0]) >= 120.0);
                }
            }
        }
    }
}

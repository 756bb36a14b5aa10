//! Network regression: OLS augmented with the mean value of similar street
//! segments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::linear::{ols, TrendCoefficients};
use super::scale::Standardizer;
use crate::error::{contract, Error, Result};
use crate::geo::{snap_to_polyline, Xy};
use crate::linalg::mean;
use crate::types::{Dataset, Query, SpatioTemporalPoint};

pub const DEFAULT_SEGMENT_M: f64 = 50.0;

/// Maps a location to a street-segment identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segmenter {
    /// Snap to the nearest road polyline, cut into pieces of `segment_m` along it.
    Roads { lines: Vec<Vec<Xy>>, segment_m: f64 },
    /// Square cells of side `cell_m`; used when no road geometry is available.
    Grid { cell_m: f64 },
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::Grid { cell_m: DEFAULT_SEGMENT_M }
    }
}

impl Segmenter {
    pub fn segment_of(&self, p: &SpatioTemporalPoint) -> String {
        match self {
            Segmenter::Roads { lines, segment_m } => {
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for (i, l) in lines.iter().enumerate() {
                    let (d, s) = snap_to_polyline([p.x, p.y], l);
                    if d < best.0 {
                        best = (d, i, s);
                    }
                }
                if best.0.is_infinite() {
                    return "r-none".into();
                }
                format!("r{:06}s{:06}", best.1, (best.2 / segment_m).floor() as i64)
            }
            Segmenter::Grid { cell_m } => {
                let ix = (p.x / cell_m).floor() as i64;
                let iy = (p.y / cell_m).floor() as i64;
                format!("g{ix:+08}{iy:+08}")
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Segmenter::Roads { lines, segment_m } => *segment_m > 0.0 && lines.iter().any(|l| !l.is_empty()),
            Segmenter::Grid { cell_m } => *cell_m > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(contract("segmenter needs a positive length and at least one road"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGraph {
    pub nodes: Vec<String>,
    /// Covariates used for similarity, one row per node.
    pub node_covariates: Vec<Vec<f64>>,
    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Mean observed value over each node's neighbors.
    pub neighbor_means: Vec<f64>,
    /// Mean observed value on each node, if observed.
    pub node_means: Vec<Option<f64>>,
    /// Nodes whose network term fell back to the global mean.
    pub flagged: Vec<String>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let next = self.0[i];
            self.0[i] = r;
            i = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Links each node to its nearest neighbor in covariate space, then joins
/// components by the globally shortest remaining edge until connected.
/// Distance ties go to the lexicographically smaller node ids.
pub fn nr_build_graph(nodes: &[String], covariates: &[Vec<f64>]) -> Result<SegmentGraph> {
    let n = nodes.len();
    if n < 2 {
        return Err(contract("network graph needs at least two segments"));
    }
    if covariates.len() != n {
        return Err(contract("one covariate row per segment required"));
    }
    let key = |i: usize, j: usize| if nodes[i] <= nodes[j] { (i, j) } else { (j, i) };
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..n).filter(|&j| j != i) {
            let d = dist(&covariates[i], &covariates[j]);
            best = match best {
                Some((bd, bj)) if d > bd || (d == bd && nodes[j] >= nodes[bj]) => Some((bd, bj)),
                _ => Some((d, j)),
            };
        }
        let j = best.expect("n >= 2").1;
        edges.insert((i.min(j), i.max(j)));
    }
    let mut dsu = Dsu((0..n).collect());
    for &(i, j) in &edges {
        dsu.union(i, j);
    }
    let roots = (0..n).filter(|&i| dsu.find(i) == i).count();
    if roots > 1 {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                if dsu.find(i) != dsu.find(j) {
                    let (a, b) = key(i, j);
                    pairs.push((dist(&covariates[i], &covariates[j]), a, b));
                }
            }
        }
        pairs.sort_by(|x, y| {
            x.0.total_cmp(&y.0)
                .then_with(|| nodes[x.1].cmp(&nodes[y.1]))
                .then_with(|| nodes[x.2].cmp(&nodes[y.2]))
        });
        let mut left = roots - 1;
        for (_, a, b) in pairs {
            if left == 0 {
                break;
            }
            if dsu.union(a, b) {
                edges.insert((a.min(b), a.max(b)));
                left -= 1;
            }
        }
    }
    Ok(SegmentGraph {
        nodes: nodes.to_vec(),
        node_covariates: covariates.to_vec(),
        edges: edges.into_iter().collect(),
        neighbor_means: Vec::new(),
        node_means: Vec::new(),
        flagged: Vec::new(),
    })
}

impl SegmentGraph {
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .collect()
    }

    /// Sets each node's network term from per-node mean values; `None` marks
    /// a node without observations.
    pub fn set_neighbor_means(&mut self, node_means: &[Option<f64>], global_mean: f64) {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        self.flagged.clear();
        self.node_means = node_means.to_vec();
        self.neighbor_means = adj
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                let v: Vec<f64> = nb.iter().filter_map(|&j| node_means[j]).collect();
                if v.is_empty() {
                    self.flagged.push(self.nodes[i].clone());
                    global_mean
                } else {
                    mean(&v)
                }
            })
            .collect();
    }

    fn index(&self) -> BTreeMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub segmenter: Segmenter,
    pub graph: SegmentGraph,
    pub scaler: Standardizer,
    /// Covariate coefficients followed by the network-term coefficient.
    pub coefficients: TrendCoefficients,
}

fn segment_means(train: &Dataset, segmenter: &Segmenter) -> (Vec<String>, Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
    let ids: Vec<String> = train.observations.iter().map(|o| segmenter.segment_of(&o.point)).collect();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in ids.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    let nodes: Vec<String> = groups.keys().map(|s| s.to_string()).collect();
    let p = train.n_covariates();
    let mut assign = vec![0; train.len()];
    let mut covs = Vec::with_capacity(nodes.len());
    let mut zbar = Vec::with_capacity(nodes.len());
    for (k, idx) in groups.values().enumerate() {
        for &i in idx {
            assign[i] = k;
        }
        let m = idx.len() as f64;
        covs.push((0..p).map(|j| idx.iter().map(|&i| train.covariates[i].0[j]).sum::<f64>() / m).collect());
        zbar.push(idx.iter().map(|&i| train.observations[i].value).sum::<f64>() / m);
    }
    (nodes, assign, covs, zbar)
}

fn augmented_names(train: &Dataset) -> Vec<String> {
    let mut names = train.schema.names.clone();
    names.push("network_mean".into());
    names
}

impl NetworkModel {
    pub fn fit(train: &Dataset, segmenter: Segmenter) -> Result<Self> {
        segmenter.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyTraining);
        }
        let (nodes, _, covs, zbar) = segment_means(train, &segmenter);
        if nodes.len() < 2 {
            return Err(contract("network regression needs observations on at least two segments"));
        }
        let scaler = Standardizer::fit(&covs.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let scaled: Vec<Vec<f64>> = covs.iter().map(|r| scaler.apply(r)).collect();
        let mut graph = nr_build_graph(&nodes, &scaled)?;
        let zmeans: Vec<Option<f64>> = zbar.into_iter().map(Some).collect();
        graph.set_neighbor_means(&zmeans, mean(&train.values()));
        Self::fit_with_graph(train, graph, segmenter, scaler)
    }

    /// Regression step on a prepared graph whose nodes cover every training row.
    pub fn fit_with_graph(train: &Dataset, graph: SegmentGraph, segmenter: Segmenter, scaler: Standardizer) -> Result<Self> {
        if graph.neighbor_means.len() != graph.nodes.len() {
            return Err(contract("graph has no network terms"));
        }
        let index = graph.index();
        let mut rows = Vec::with_capacity(train.len());
        for (o, c) in train.observations.iter().zip(&train.covariates) {
            let id = segmenter.segment_of(&o.point);
            let &k = index
                .get(id.as_str())
                .ok_or_else(|| contract(format!("observation on segment {id} missing from the graph")))?;
            let mut r = c.0.clone();
            r.push(graph.neighbor_means[k]);
            rows.push(r);
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let coefficients = ols(&refs, &augmented_names(train), &train.values())?;
        Ok(Self {
            segmenter,
            graph,
            scaler,
            coefficients,
        })
    }

    /// Network term for a query: its own node's, or for an unseen segment the
    /// mean value of the most similar training segment.
    fn network_term(&self, index: &BTreeMap<&str, usize>, p: &SpatioTemporalPoint, x: &[f64]) -> f64 {
        if let Some(&k) = index.get(self.segmenter.segment_of(p).as_str()) {
            return self.graph.neighbor_means[k];
        }
        let xs = self.scaler.apply(x);
        let mut best = (f64::INFINITY, 0usize);
        for (k, c) in self.graph.node_covariates.iter().enumerate() {
            let d = dist(&xs, c);
            if d < best.0 || (d == best.0 && self.graph.nodes[k] < self.graph.nodes[best.1]) {
                best = (d, k);
            }
        }
        self.node_value(best.1)
    }

    fn node_value(&self, k: usize) -> f64 {
        self.graph.node_means.get(k).copied().flatten().unwrap_or(self.graph.neighbor_means[k])
    }

    pub fn predict(&self, query: &Query) -> Vec<f64> {
        let index = self.graph.index();
        query
            .points
            .iter()
            .zip(&query.covariates)
            .map(|(p, c)| {
                let mut r = c.0.clone();
                r.push(self.network_term(&index, p, &c.0));
                self.coefficients.evaluate(&r)
            })
            .collect()
    }
}

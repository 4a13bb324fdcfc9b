//! Isolation forest over weekly spending points.
//!
//! Trees are grown on subsamples drawn without replacement. Each internal
//! node picks a random feature that still varies inside the node and a
//! uniform split value between that feature's minimum and maximum. Points
//! that isolate in few splits receive scores close to 1.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::Date;
use crate::series::{Grain, ResampledSeries};

pub const DEFAULT_N_TREES: usize = 100;
pub const DEFAULT_PSI: usize = 64;
pub const DEFAULT_CONTAMINATION: f64 = 0.05;
pub const MIN_WEEKS: usize = 8;

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Average path length of an unsuccessful binary-search-tree lookup among
/// `n` points, used to normalize path lengths.
pub fn c(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        /// Points with `x[feature] < value` go left.
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    pub fn height(&self) -> usize {
        fn depth(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(nodes, left).max(depth(nodes, right)),
            }
        }
        depth(&self.nodes, 0)
    }

    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        let mut edges = 0.0;
        loop {
            match self.nodes[i] {
                Node::Leaf { size } => return edges + c(size),
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    i = if x[feature] < value { left } else { right };
                    edges += 1.0;
                }
            }
        }
    }
}

struct TreeBuilder<'a> {
    points: &'a [Vec<f64>],
    n_features: usize,
    height_limit: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: idx.len() });
        if depth >= self.height_limit || idx.len() <= 1 {
            return id;
        }
        let ranges: Vec<(usize, f64, f64)> = (0..self.n_features)
            .filter_map(|f| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = self.points[i][f];
                    (lo.min(v), hi.max(v))
                });
                (lo < hi).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[self.rng.random_range(0..ranges.len())];
        let value = loop {
            let v = self.rng.random_range(lo..hi);
            if v > lo {
                break v;
            }
        };
        let mut split = 0;
        for k in 0..idx.len() {
            if self.points[idx[k]][feature] < value {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForestModel {
    pub trees: Vec<IsolationTree>,
    /// Effective subsample size after clamping to the dataset size.
    pub subsample_size: usize,
    pub psi_clamped: bool,
    pub n_trees: usize,
    pub seed: u64,
    pub c_psi: f64,
    pub n_features: usize,
}

/// Fits a forest. Tree `t` draws from its own ChaCha stream `t` under
/// `seed`, so the result does not depend on thread scheduling.
pub fn fit(points: &[Vec<f64>], n_trees: usize, psi: usize, seed: u64) -> Result<IsolationForestModel> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "isolation forest needs at least 2 points, got {}",
            points.len()
        )));
    }
    if psi < 2 {
        return Err(Error::Invalid(format!("psi must be at least 2, got {psi}")));
    }
    if n_trees == 0 {
        return Err(Error::Invalid("n_trees must be at least 1".into()));
    }
    let n_features = points[0].len();
    if n_features == 0 || points.iter().any(|p| p.len() != n_features) {
        return Err(Error::Invalid("all points need the same non-zero number of features".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("points contain non-finite values".into()));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::InsufficientData(
            "all points are identical; no split is possible".into(),
        ));
    }
    let subsample_size = psi.min(points.len());
    let height_limit = (subsample_size as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut idx = index::sample(&mut rng, points.len(), subsample_size).into_vec();
            let mut builder = TreeBuilder {
                points,
                n_features,
                height_limit,
                rng,
                nodes: Vec::with_capacity(2 * subsample_size),
            };
            builder.grow(&mut idx, 0);
            IsolationTree {
                nodes: builder.nodes,
            }
        })
        .collect();
    Ok(IsolationForestModel {
        trees,
        subsample_size,
        psi_clamped: subsample_size < psi,
        n_trees,
        seed,
        c_psi: c(subsample_size),
        n_features,
    })
}

impl IsolationForestModel {
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        (-self.mean_path_length(x) / self.c_psi).exp2()
    }
}

pub fn score(model: &IsolationForestModel, point: &[f64]) -> f64 {
    model.score(point)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub contamination: f64,
    pub n_trees: usize,
    pub psi: usize,
    pub seed: u64,
    /// Adds weekly volume as a second feature next to frequency.
    pub with_volume: bool,
}

impl DetectParams {
    pub fn with_seed(seed: u64) -> Self {
        DetectParams {
            contamination: DEFAULT_CONTAMINATION,
            n_trees: DEFAULT_N_TREES,
            psi: DEFAULT_PSI,
            seed,
            with_volume: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyPoint {
    pub period_start: Date,
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub contamination: f64,
    pub threshold: f64,
    pub n_flagged: usize,
    pub n_trees: usize,
    pub psi: usize,
    pub psi_clamped: bool,
    pub seed: u64,
    pub features: Vec<String>,
    pub points: Vec<AnomalyPoint>,
}

impl AnomalyReport {
    pub fn flagged_weeks(&self) -> impl Iterator<Item = Date> + '_ {
        self.points.iter().filter(|p| p.flagged).map(|p| p.period_start)
    }
}

fn check_contamination(c: f64) -> Result<()> {
    if c > 0.0 && c <= 0.5 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("contamination must be in (0, 0.5], got {c}")))
    }
}

/// Score of the `floor(contamination * n)`-th highest point, or 1.0 (above
/// every score) when that count is zero.
pub fn threshold_for(scores: &[f64], contamination: f64) -> f64 {
    // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
    let m = (contamination * scores.len() as f64 + 1e-9).floor() as usize;
    if m == 0 {
        return 1.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[m.min(sorted.len()) - 1]
}

struct ScoredWeeks {
    starts: Vec<Date>,
    scores: Vec<f64>,
    model: IsolationForestModel,
    features: Vec<String>,
}

fn score_weeks(weekly: &ResampledSeries, params: &DetectParams) -> Result<ScoredWeeks> {
    weekly.require(Grain::Weekly)?;
    if weekly.points.len() < MIN_WEEKS {
        return Err(Error::InsufficientData(format!(
            "anomaly detection needs at least {MIN_WEEKS} weeks, got {}",
            weekly.points.len()
        )));
    }
    let points: Vec<Vec<f64>> = weekly
        .points
        .iter()
        .map(|p| {
            let mut v = vec![p.frequency as f64];
            if params.with_volume {
                v.push(p.volume);
            }
            v
        })
        .collect();
    let model = fit(&points, params.n_trees, params.psi, params.seed)?;
    let scores = points.par_iter().map(|p| model.score(p)).collect();
    let mut features = vec!["frequency".to_string()];
    if params.with_volume {
        features.push("volume".into());
    }
    Ok(ScoredWeeks {
        starts: weekly.points.iter().map(|p| p.period_start).collect(),
        scores,
        model,
        features,
    })
}

fn report_at(scored: &ScoredWeeks, contamination: f64) -> AnomalyReport {
    let threshold = threshold_for(&scored.scores, contamination);
    let points: Vec<AnomalyPoint> = scored
        .starts
        .iter()
        .zip(&scored.scores)
        .map(|(&period_start, &score)| AnomalyPoint {
            period_start,
            score,
            flagged: score >= threshold,
        })
        .collect();
    AnomalyReport {
        contamination,
        threshold,
        n_flagged: points.iter().filter(|p| p.flagged).count(),
        n_trees: scored.model.n_trees,
        psi: scored.model.subsample_size,
        psi_clamped: scored.model.psi_clamped,
        seed: scored.model.seed,
        features: scored.features.clone(),
        points,
    }
}

pub fn detect(weekly: &ResampledSeries, params: &DetectParams) -> Result<AnomalyReport> {
    check_contamination(params.contamination)?;
    Ok(report_at(&score_weeks(weekly, params)?, params.contamination))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub contamination: f64,
    pub threshold: f64,
    pub n_flagged: usize,
    pub flagged: Vec<Date>,
}

/// Flags weeks at several contamination levels using a single fitted model,
/// so the flagged sets are nested. `params.contamination` is ignored.
pub fn sweep_contamination(
    weekly: &ResampledSeries,
    values: &[f64],
    params: &DetectParams,
) -> Result<Vec<SweepEntry>> {
    if values.is_empty() {
        return Err(Error::Invalid("contamination sweep needs at least one value".into()));
    }
    for &v in values {
        check_contamination(v)?;
    }
    let scored = score_weeks(weekly, params)?;
    Ok(values
        .iter()
        .map(|&c| {
            let r = report_at(&scored, c);
            SweepEntry {
                contamination: c,
                threshold: r.threshold,
                n_flagged: r.n_flagged,
                flagged: r.flagged_weeks().collect(),
            }
        })
        .collect())
}

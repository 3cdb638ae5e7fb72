//! Priority assignment by k-means clustering of flow features, and the
//! deadline-monotonic baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze, AnalysisOptions};
use crate::config::{PreemptionConfig, PriorityRanks};
use crate::error::{Error, Result};
use crate::network::{Flow, FlowId, Network, Routes};

pub const MAX_K: usize = 8;
const RESTARTS: usize = 5;
const MAX_LLOYD_ITERATIONS: usize = 1000;

pub type Point = [f64; 4];

/// Per-flow features `(pl, t, d, s)`: negated relative path length, and
/// period, deadline and payload each relative to the largest in the set.
/// Small values mean "more urgent" in every coordinate.
pub fn feature_vectors(flows: &[Flow], routes: &Routes) -> Result<Vec<Point>> {
    if flows.is_empty() {
        return Ok(Vec::new());
    }
    let mut hops = Vec::with_capacity(flows.len());
    for f in flows {
        let p = routes
            .get(&f.id)
            .ok_or_else(|| Error::NoRoute { src: f.src.0.clone(), dst: f.dst.0.clone() })?;
        hops.push(p.hops() as f64);
    }
    let max_pl = hops.iter().cloned().fold(0.0, f64::max);
    let max_t = flows.iter().map(|f| f.period.as_f64()).fold(0.0, f64::max);
    let max_d = flows.iter().map(|f| f.deadline.as_f64()).fold(0.0, f64::max);
    let max_s = flows.iter().map(|f| f.size as f64).fold(0.0, f64::max);
    Ok(flows
        .iter()
        .zip(hops)
        .map(|(f, pl)| [pl / -max_pl, f.period.as_f64() / max_t, f.deadline.as_f64() / max_d, f.size as f64 / max_s])
        .collect())
}

fn dist2(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean(p: &Point) -> f64 {
    p.iter().sum::<f64>() / p.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    /// Cluster of each point; clusters are numbered by ascending centroid mean.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Point>,
    pub wcss: f64,
    /// Within-cluster sum of squares after every Lloyd iteration of the kept restart.
    pub wcss_trace: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// Lloyd's algorithm with farthest-point seeding, keeping the best of several
/// seeded restarts. Clusters that end up empty are re-seeded from the point
/// farthest from its centroid, or dropped when every point already sits on one.
pub fn kmeans(points: &[Point], k: usize, seed: u64) -> Result<Clustering> {
    if points.is_empty() {
        return Err(Error::Domain("k-means needs at least one point".into()));
    }
    if k == 0 {
        return Err(Error::Domain("k-means needs k >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..RESTARTS {
        let first = rng.random_range(0..points.len());
        let run = lloyd(points, seed_centroids(points, k, first));
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(canonical(best.unwrap()))
}

fn seed_centroids(points: &[Point], k: usize, first: usize) -> Vec<Point> {
    let mut centroids = vec![points[first]];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while centroids.len() < k {
        let (idx, d) = nearest
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        if d <= 0.0 {
            break;
        }
        centroids.push(points[idx]);
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist2(p, &points[idx]));
        }
    }
    centroids
}

fn nearest_centroid(p: &Point, centroids: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cent) in centroids.iter().enumerate() {
        let d = dist2(p, cent);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn wcss(points: &[Point], assignments: &[usize], centroids: &[Point]) -> f64 {
    points.iter().zip(assignments).map(|(p, &c)| dist2(p, &centroids[c])).sum()
}

fn lloyd(points: &[Point], mut centroids: Vec<Point>) -> Clustering {
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids)).collect();
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        repair_empty(points, &mut assignments, &mut centroids);
        centroids = update(points, &assignments, centroids.len());
        trace.push(wcss(points, &assignments, &centroids));
        let next: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let w = wcss(points, &assignments, &centroids);
    Clustering { assignments, centroids, wcss: w, wcss_trace: trace }
}

fn update(points: &[Point], assignments: &[usize], k: usize) -> Vec<Point> {
    let mut sums = vec![[0.0; 4]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignments) {
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
        counts[c] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| s.map(|v| v / n as f64))
        .collect()
}

fn repair_empty(points: &[Point], assignments: &mut [usize], centroids: &mut Vec<Point>) {
    loop {
        let mut counts = vec![0usize; centroids.len()];
        for &c in assignments.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        // Farthest point among clusters that can spare one.
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[assignments[*i]] > 1)
            .map(|(i, p)| (i, dist2(p, &centroids[assignments[i]])))
            .fold(None, |acc: Option<(usize, f64)>, (i, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((i, d)),
            });
        match far {
            Some((i, d)) if d > 0.0 => {
                assignments[i] = empty;
                centroids[empty] = points[i];
            }
            _ => {
                centroids.remove(empty);
                for a in assignments.iter_mut() {
                    if *a > empty {
                        *a -= 1;
                    }
                }
            }
        }
    }
}

/// Renumbers clusters by ascending centroid mean, ties by previous index.
fn canonical(c: Clustering) -> Clustering {
    let order = order_clusters(&c.centroids);
    let mut rank = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    Clustering {
        assignments: c.assignments.iter().map(|&a| rank[a]).collect(),
        centroids: order.iter().map(|&o| c.centroids[o]).collect(),
        wcss: c.wcss,
        wcss_trace: c.wcss_trace,
    }
}

/// Cluster indices sorted by ascending centroid mean; the first becomes priority 0.
pub fn order_clusters(centroids: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..centroids.len()).collect();
    idx.sort_by(|&a, &b| mean(&centroids[a]).total_cmp(&mean(&centroids[b])).then(a.cmp(&b)));
    idx
}

/// Deadline-monotonic priorities in `k` bins: flows sorted by deadline (ties by
/// id) and cut into contiguous groups, the first `n % k` one flow larger.
pub fn assign_priorities_dmpo(flows: &[Flow], k: usize) -> Result<Vec<Flow>> {
    if k == 0 || k > MAX_K {
        return Err(Error::Domain(format!("k must be in 1..={MAX_K}, got {k}")));
    }
    let mut order: Vec<usize> = (0..flows.len()).collect();
    order.sort_by(|&a, &b| flows[a].deadline.cmp(&flows[b].deadline).then(flows[a].id.cmp(&flows[b].id)));
    let n = flows.len();
    let base = n / k;
    let extra = n % k;
    let mut out = flows.to_vec();
    let mut pos = 0;
    for bin in 0..k {
        let size = base + usize::from(bin < extra);
        for &i in &order[pos..pos + size] {
            out[i].priority = Some(bin as u8);
            out[i].class = None;
        }
        pos += size;
    }
    Ok(out)
}

/// Priorities from a clustering: flow `i` gets its cluster index.
pub fn priorities_from_clusters(flows: &[Flow], clustering: &Clustering) -> Vec<Flow> {
    flows
        .iter()
        .zip(&clustering.assignments)
        .map(|(f, &c)| {
            let mut g = f.clone();
            g.priority = Some(c as u8);
            g.class = None;
            g
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kmeans,
    Dmpo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KScore {
    pub k: usize,
    /// Distinct priorities actually produced.
    pub priorities: usize,
    /// Flows meeting their deadline under the fully preemptive configuration.
    pub schedulable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorityAssignment {
    pub schema_version: u32,
    pub method: Method,
    pub chosen_k: usize,
    pub schedulable: usize,
    pub flows: usize,
    pub priorities: Vec<(FlowId, u8)>,
    pub scores: Vec<KScore>,
    #[serde(skip)]
    pub assigned: Vec<Flow>,
}

/// Flows meeting their deadline when every priority gets its own class.
pub fn fully_preemptive_score(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    opts: &AnalysisOptions,
) -> Result<usize> {
    let p = PriorityRanks::of(flows)?.len();
    let report = analyze(network, flows, routes, &PreemptionConfig::fully_preemptive(p), opts)?;
    Ok(report.schedulable_count())
}

fn sweep(
    method: Method,
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    opts: &AnalysisOptions,
    ks: Vec<usize>,
    candidate: impl Fn(usize) -> Result<Vec<Flow>> + Sync,
) -> Result<PriorityAssignment> {
    if flows.is_empty() {
        return Err(Error::Domain("cannot assign priorities to an empty flow set".into()));
    }
    if ks.iter().any(|&k| k == 0 || k > MAX_K) {
        return Err(Error::Domain(format!("k must lie in 1..={MAX_K}")));
    }
    let evaluated: Vec<(usize, Vec<Flow>, KScore)> = ks
        .par_iter()
        .map(|&k| {
            let assigned = candidate(k)?;
            let priorities = PriorityRanks::of(&assigned)?.len();
            let schedulable = fully_preemptive_score(network, &assigned, routes, opts)?;
            Ok((k, assigned, KScore { k, priorities, schedulable }))
        })
        .collect::<Result<_>>()?;
    let best = evaluated
        .iter()
        .fold(None, |acc: Option<&(usize, Vec<Flow>, KScore)>, e| match acc {
            Some(b) if b.2.schedulable >= e.2.schedulable => acc,
            _ => Some(e),
        })
        .expect("at least one k");
    Ok(PriorityAssignment {
        schema_version: crate::analysis::SCHEMA_VERSION,
        method,
        chosen_k: best.0,
        schedulable: best.2.schedulable,
        flows: flows.len(),
        priorities: best.1.iter().map(|f| (f.id.clone(), f.priority.unwrap())).collect(),
        scores: evaluated.iter().map(|e| e.2.clone()).collect(),
        assigned: best.1.clone(),
    })
}

/// Clusters flows for each `k` in `1..=8` and keeps the `k` under which most
/// flows are schedulable with one class per priority (ties go to smaller `k`).
pub fn assign_priorities_kmeans(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    seed: u64,
    opts: &AnalysisOptions,
) -> Result<PriorityAssignment> {
    assign_priorities(Method::Kmeans, network, flows, routes, seed, None, opts)
}

/// The same `k` sweep over deadline-monotonic binning.
pub fn assign_priorities_dmpo_sweep(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    opts: &AnalysisOptions,
) -> Result<PriorityAssignment> {
    assign_priorities(Method::Dmpo, network, flows, routes, 0, None, opts)
}

/// Runs `method` for a single `k`, or sweeps `1..=8` when `k` is `None`.
/// `seed` only affects k-means.
pub fn assign_priorities(
    method: Method,
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    seed: u64,
    k: Option<usize>,
    opts: &AnalysisOptions,
) -> Result<PriorityAssignment> {
    let ks = match k {
        Some(k) => vec![k],
        None => (1..=MAX_K.min(flows.len())).collect(),
    };
    match method {
        Method::Kmeans => {
            let features = feature_vectors(flows, routes)?;
            sweep(method, network, flows, routes, opts, ks, |k| {
                let c = kmeans(&features, k, seed)?;
                Ok(priorities_from_clusters(flows, &c))
            })
        }
        Method::Dmpo => sweep(method, network, flows, routes, opts, ks, |k| assign_priorities_dmpo(flows, k)),
    }
}

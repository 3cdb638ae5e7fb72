//! Seeded random flow sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Flow, Network, NodeId, MAX_PAYLOAD, MIN_PAYLOAD};
use crate::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadParams {
    pub flows: usize,
    /// Inclusive range in microseconds.
    pub period_us: (i64, i64),
    /// Inclusive range in microseconds.
    pub deadline_us: (i64, i64),
    /// Inclusive payload range; clipped to the legal payload sizes.
    pub size_bytes: (u32, u32),
    /// Draw deadlines no larger than the period.
    pub constrained: bool,
    pub seed: u64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            flows: 10,
            period_us: (500, 100_000),
            deadline_us: (500, 100_000),
            size_bytes: (64, 1500),
            constrained: false,
            seed: 0,
        }
    }
}

impl WorkloadParams {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(m.to_string()));
        if self.period_us.0 <= 0 || self.period_us.0 > self.period_us.1 {
            return bad("period range must be positive and ordered");
        }
        if self.deadline_us.0 <= 0 || self.deadline_us.0 > self.deadline_us.1 {
            return bad("deadline range must be positive and ordered");
        }
        if self.size_bytes.0 > self.size_bytes.1 {
            return bad("size range must be ordered");
        }
        Ok(())
    }
}

/// Random flows between distinct end-points of `network`, each with a route.
/// Flow ids are `f0, f1, ..`; no priorities or classes are assigned.
pub fn generate_flows(network: &Network, params: &WorkloadParams) -> Result<Vec<Flow>> {
    params.check()?;
    let eps: Vec<NodeId> = network.endpoints().map(|n| n.id.clone()).collect();
    if eps.len() < 2 {
        return Err(Error::Domain("network needs at least two end-points".into()));
    }
    let mut pairs = Vec::new();
    for a in &eps {
        for b in &eps {
            if a != b && network.shortest_path(a, b).is_ok() {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Domain("no connected end-point pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let lo = params.size_bytes.0.clamp(MIN_PAYLOAD, MAX_PAYLOAD);
    let hi = params.size_bytes.1.clamp(MIN_PAYLOAD, MAX_PAYLOAD);
    let mut out = Vec::with_capacity(params.flows);
    for i in 0..params.flows {
        let (src, dst) = pairs[rng.random_range(0..pairs.len())].clone();
        let period = rng.random_range(params.period_us.0..=params.period_us.1);
        let deadline = if params.constrained {
            let top = params.deadline_us.1.min(period);
            if top < params.deadline_us.0 {
                top
            } else {
                rng.random_range(params.deadline_us.0..=top)
            }
        } else {
            rng.random_range(params.deadline_us.0..=params.deadline_us.1)
        };
        let size = rng.random_range(lo..=hi);
        out.push(Flow {
            id: format!("f{i}").as_str().into(),
            src,
            dst,
            period: Duration::from_micros(period),
            deadline: Duration::from_micros(deadline),
            size,
            priority: None,
            class: None,
        });
    }
    Ok(out)
}

//! Byte-accurate discrete-event simulation of preemptive egress ports, used to
//! measure observed traversal times and check them against analytic bounds.

mod engine;

use std::collections::BTreeMap;
use std::io::Write;

use num_integer::Integer;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{analyze, AnalysisOptions, SCHEMA_VERSION};
use crate::config::{validate_config, PreemptionConfig, PriorityRanks};
use crate::cpa;
use crate::error::{Error, Result};
use crate::network::{Flow, FlowId, LinkId, Network, Routes};
use crate::time::{Duration, Rational};
use engine::{Engine, SimFlow};

/// Largest tick resolution accepted, in ticks per microsecond.
const MAX_TICKS_PER_US: i128 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhasePolicy {
    /// First release uniform in `[0, period)`, drawn from the seed.
    Random,
    /// Every flow releases at time zero.
    Zero,
    /// Given first-release times; flows not listed start at zero.
    Explicit(BTreeMap<FlowId, Duration>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    /// Releases stop at the horizon; frames in flight are then drained.
    pub horizon: Duration,
    pub seed: u64,
    pub phases: PhasePolicy,
    pub switch_delay: Duration,
    pub trace: bool,
}

impl SimConfig {
    pub fn new(horizon: Duration, seed: u64) -> Self {
        SimConfig { horizon, seed, phases: PhasePolicy::Random, switch_delay: Duration::ZERO, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowStats {
    pub flow: FlowId,
    pub released: u64,
    pub delivered: u64,
    pub max_delay: Option<Duration>,
    pub mean_delay: Option<Duration>,
    /// Largest observed time at each egress port, from arrival to last bit sent.
    pub hop_max_delay: Vec<Duration>,
    pub deadline_misses: u64,
    pub preemptions_suffered: u64,
    pub preemptions_caused: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortStats {
    pub port: String,
    pub preemptions: u64,
    /// Longest time a frame waited behind a frame of a larger class number.
    pub max_lower_class_blocking: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub time_ns: serde_json::Number,
    pub port: String,
    pub event: String,
    pub flow: FlowId,
    pub q: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub seed: u64,
    pub horizon: Duration,
    pub config: PreemptionConfig,
    pub events: u64,
    pub flows: Vec<FlowStats>,
    pub ports: Vec<PortStats>,
    /// First release of every flow, so a run can be replayed with explicit phases.
    pub phases: Vec<(FlowId, Duration)>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl SimReport {
    pub fn flow(&self, id: &str) -> Option<&FlowStats> {
        self.flows.iter().find(|f| f.flow.0 == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes the trace as one JSON object per line.
    pub fn write_trace(&self, mut out: impl Write) -> Result<()> {
        for r in &self.trace {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn explicit_phases(&self) -> PhasePolicy {
        PhasePolicy::Explicit(self.phases.iter().cloned().collect())
    }
}

struct Scale {
    ticks_per_us: i128,
}

impl Scale {
    fn ticks(&self, d: Duration) -> Result<u64> {
        let r = d.as_rational() * Rational::from_integer(self.ticks_per_us);
        if !r.is_integer() {
            return Err(Error::Domain(format!("{d} us is not representable in simulation ticks")));
        }
        r.to_integer()
            .to_u64()
            .ok_or_else(|| Error::Domain(format!("{d} us overflows the simulation clock")))
    }

    fn duration(&self, ticks: u64) -> Duration {
        Duration::from_ratio(ticks as i128, self.ticks_per_us)
    }

    fn duration_ratio(&self, ticks: u128, count: u64) -> Duration {
        Duration::from_ratio(ticks as i128, self.ticks_per_us * count as i128)
    }
}

fn tick_scale(network: &Network, flows: &[Flow], cfg: &SimConfig) -> Result<Scale> {
    let mut s: i128 = 1;
    for l in network.links() {
        // 8 bits per byte at `a/b` bits per microsecond.
        let byte = Rational::from_integer(8) / l.rate.as_rational();
        s = s.lcm(byte.denom());
    }
    let mut times = vec![cfg.horizon, cfg.switch_delay];
    for f in flows {
        times.push(f.period);
        times.push(f.deadline);
    }
    if let PhasePolicy::Explicit(m) = &cfg.phases {
        times.extend(m.values().copied());
    }
    for d in times {
        s = s.lcm(&d.denom());
    }
    if s > MAX_TICKS_PER_US {
        return Err(Error::Domain("time values need too fine a tick resolution".into()));
    }
    Ok(Scale { ticks_per_us: s })
}

/// Runs the simulation of `flows` under `config`.
pub fn simulate(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    config: &PreemptionConfig,
    cfg: &SimConfig,
) -> Result<SimReport> {
    let v = validate_config(flows, config)?;
    if !v.is_valid() {
        return Err(Error::RuleViolations(v.violations));
    }
    if flows.is_empty() {
        return Err(Error::Domain("nothing to simulate".into()));
    }
    let ranks = PriorityRanks::of(flows)?;
    let max_period = flows.iter().map(|f| f.period).max().unwrap();
    if cfg.horizon < max_period * 10u64 {
        return Err(Error::Domain(format!(
            "horizon {} us is shorter than ten times the largest period ({} us)",
            cfg.horizon, max_period
        )));
    }
    let mut warnings = Vec::new();
    if cfg.horizon < max_period * 100u64 {
        warnings.push(format!("horizon covers fewer than 100 periods of the slowest flow ({max_period} us)"));
    }
    let scale = tick_scale(network, flows, cfg)?;

    let mut port_of: BTreeMap<LinkId, usize> = BTreeMap::new();
    let mut port_links = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim_flows = Vec::with_capacity(flows.len());
    let mut phases = Vec::with_capacity(flows.len());
    for f in flows {
        f.validate()?;
        let path = routes
            .get(&f.id)
            .ok_or_else(|| Error::NoRoute { src: f.src.0.clone(), dst: f.dst.0.clone() })?;
        let ports: Vec<usize> = path
            .links
            .iter()
            .map(|l| {
                *port_of.entry(*l).or_insert_with(|| {
                    port_links.push(*l);
                    port_links.len() - 1
                })
            })
            .collect();
        let period = scale.ticks(f.period)?;
        let phase = match &cfg.phases {
            PhasePolicy::Random => rng.random_range(0..period),
            PhasePolicy::Zero => 0,
            PhasePolicy::Explicit(m) => scale.ticks(m.get(&f.id).copied().unwrap_or(Duration::ZERO))?,
        };
        phases.push((f.id.clone(), scale.duration(phase)));
        let prio = f.priority.unwrap();
        sim_flows.push(SimFlow {
            priority: prio,
            class: config.entries[ranks.rank(prio).unwrap()],
            wire_bytes: cpa::wire_bytes(f.size) as u64,
            period,
            phase,
            deadline: scale.ticks(f.deadline)?,
            path: ports,
        });
    }
    let byte_ticks: Vec<u64> = port_links
        .iter()
        .map(|&l| scale.ticks(network.link(l).rate.byte_time(1)))
        .collect::<Result<_>>()?;
    let horizon = scale.ticks(cfg.horizon)?;
    let mut engine = Engine::new(&sim_flows, &byte_ticks, horizon, scale.ticks(cfg.switch_delay)?, cfg.trace);
    engine.run();

    let mut stats = Vec::with_capacity(flows.len());
    for (f, c) in flows.iter().zip(&engine.counters) {
        if c.delivered != c.released {
            warnings.push(format!("{}: {} frames released but {} delivered", f.id, c.released, c.delivered));
        }
        stats.push(FlowStats {
            flow: f.id.clone(),
            released: c.released,
            delivered: c.delivered,
            max_delay: (c.delivered > 0).then(|| scale.duration(c.max_delay)),
            mean_delay: (c.delivered > 0).then(|| scale.duration_ratio(c.sum_delay, c.delivered)),
            hop_max_delay: c.hop_max.iter().map(|&t| scale.duration(t)).collect(),
            deadline_misses: c.misses,
            preemptions_suffered: c.suffered,
            preemptions_caused: c.caused,
        });
    }
    let ports = port_links
        .iter()
        .zip(&engine.ports)
        .map(|(&l, p)| PortStats {
            port: network.port_name(l),
            preemptions: p.preemptions,
            max_lower_class_blocking: scale.duration(p.max_blocking),
        })
        .collect();
    let trace = engine
        .trace
        .take()
        .unwrap_or_default()
        .into_iter()
        .map(|e| TraceRecord {
            time_ns: ns_number(scale.duration(e.time)),
            port: network.port_name(port_links[e.port]),
            event: e.event.to_string(),
            flow: flows[e.flow].id.clone(),
            q: e.seq,
            detail: e.detail,
        })
        .collect();
    Ok(SimReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        horizon: cfg.horizon,
        config: config.clone(),
        events: engine.events,
        flows: stats,
        ports,
        phases,
        warnings,
        trace,
    })
}

fn ns_number(d: Duration) -> serde_json::Number {
    let ns = d.as_rational() * Rational::from_integer(1000);
    if ns.is_integer() {
        serde_json::Number::from(ns.to_integer() as i64)
    } else {
        let text = crate::time::format_fixed(ns, 3);
        text.parse().expect("fixed-point text is a JSON number")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCheck {
    pub flow: FlowId,
    pub observed: Option<Duration>,
    pub bound: Option<Duration>,
    /// `bound - observed`; negative on a violation.
    pub margin: Option<Duration>,
    /// Per-hop `(observed, bound)`.
    pub hops: Vec<(Duration, Option<Duration>)>,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub schema_version: u32,
    pub seed: u64,
    pub flows: Vec<FlowCheck>,
    /// Flows whose observed delay exceeded a bound, end to end or at one hop.
    pub violations: Vec<FlowId>,
    /// Flows without a finite bound, which are not checked.
    pub unbounded: Vec<FlowId>,
    pub phases: Vec<(FlowId, Duration)>,
}

impl CrossValidation {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Simulates and analyses the same system and compares observed maxima with
/// the bounds, end to end and per port.
pub fn cross_validate(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    config: &PreemptionConfig,
    sim: &SimConfig,
    opts: &AnalysisOptions,
) -> Result<CrossValidation> {
    let opts = AnalysisOptions { switch_delay: sim.switch_delay, ..opts.clone() };
    let report = analyze(network, flows, routes, config, &opts)?;
    let observed = simulate(network, flows, routes, config, sim)?;
    let mut checks = Vec::with_capacity(flows.len());
    let mut violations = Vec::new();
    let mut unbounded = Vec::new();
    for (a, s) in report.flows.iter().zip(&observed.flows) {
        let hops: Vec<(Duration, Option<Duration>)> =
            s.hop_max_delay.iter().zip(&a.hops).map(|(&o, h)| (o, h.bound)).collect();
        let hop_violation = hops.iter().any(|(o, b)| b.is_some_and(|b| *o > b));
        let margin = match (a.total, s.max_delay) {
            (Some(b), Some(o)) => Some(b - o),
            _ => None,
        };
        let violation = hop_violation || margin.is_some_and(|m| m.is_negative());
        if a.total.is_none() {
            unbounded.push(a.flow.clone());
        }
        if violation {
            violations.push(a.flow.clone());
        }
        checks.push(FlowCheck {
            flow: a.flow.clone(),
            observed: s.max_delay,
            bound: a.total,
            margin,
            hops,
            violation,
        });
    }
    Ok(CrossValidation {
        schema_version: SCHEMA_VERSION,
        seed: sim.seed,
        flows: checks,
        violations,
        unbounded,
        phases: observed.phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::route_all;
    use crate::topology;
    use crate::time::Rate;

    fn us(v: i64) -> Duration {
        Duration::from_micros(v)
    }

    fn bytes(n: i128) -> Duration {
        Duration::from_ratio(8 * n, 100)
    }

    fn pair() -> (Network, Vec<Flow>) {
        let net = topology::star(3, Rate::mbps(100)).unwrap();
        let flows = vec![
            Flow::new("e", "e0", "e2", 5000, 5000, 200).with_priority(0),
            Flow::new("b", "e1", "e2", 5000, 5000, 1500).with_priority(1),
        ];
        (net, flows)
    }

    #[test]
    fn lone_frame_takes_its_transmission_time_per_hop() {
        let net = topology::star(2, Rate::mbps(100)).unwrap();
        let flows = vec![Flow::new("f", "e0", "e1", 1000, 1000, 100).with_priority(0)];
        let routes = route_all(&net, &flows).unwrap();
        let cfg = SimConfig { phases: PhasePolicy::Zero, ..SimConfig::new(us(100_000), 1) };
        let r = simulate(&net, &flows, &routes, &PreemptionConfig::non_preemptive(1), &cfg).unwrap();
        let f = r.flow("f").unwrap();
        assert_eq!(f.released, 100);
        assert_eq!(f.delivered, 100);
        assert_eq!(f.max_delay, Some(bytes(142) * 2i128));
        assert_eq!(f.mean_delay, Some(bytes(142) * 2i128));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn express_preempts_after_sixty_bytes() {
        let (net, flows) = pair();
        let routes = route_all(&net, &flows).unwrap();
        // b starts on e1->s0 at 0 and reaches s0->e2 after 123.36 us; e arrives there 1 us later.
        let phases = BTreeMap::from([("b".into(), Duration::ZERO), ("e".into(), bytes(1542) - bytes(242) + us(1))]);
        let cfg = SimConfig { phases: PhasePolicy::Explicit(phases), ..SimConfig::new(us(50_000), 0) };
        let r = simulate(&net, &flows, &routes, &PreemptionConfig::new(1, vec![0, 1]), &cfg).unwrap();
        let e = r.flow("e").unwrap();
        // Waits for 60 bytes of b minus the 1 us already sent, then the 24-byte overhead.
        assert_eq!(e.hop_max_delay[1], bytes(60) - us(1) + bytes(24) + bytes(242));
        assert_eq!(r.flow("b").unwrap().preemptions_suffered, 10);
        assert_eq!(e.preemptions_caused, 10);
        let port = r.ports.iter().find(|p| p.port == "s0->e2").unwrap();
        assert!(port.max_lower_class_blocking <= bytes(143));
    }

    #[test]
    fn non_preemptive_blocking_is_the_whole_frame() {
        let (net, flows) = pair();
        let routes = route_all(&net, &flows).unwrap();
        let phases = BTreeMap::from([("b".into(), Duration::ZERO), ("e".into(), bytes(1542) - bytes(242) + us(1))]);
        let cfg = SimConfig { phases: PhasePolicy::Explicit(phases), ..SimConfig::new(us(50_000), 0) };
        let r = simulate(&net, &flows, &routes, &PreemptionConfig::non_preemptive(2), &cfg).unwrap();
        let e = r.flow("e").unwrap();
        assert_eq!(e.hop_max_delay[1], bytes(1542) - us(1) + bytes(242));
        assert_eq!(r.flow("b").unwrap().preemptions_suffered, 0);
    }

    #[test]
    fn same_seed_same_report() {
        let net = topology::line(2, 2, Rate::mbps(100)).unwrap();
        let flows = vec![
            Flow::new("a", "e0_0", "e1_0", 1000, 1000, 1500).with_priority(0),
            Flow::new("b", "e0_1", "e1_1", 700, 1000, 400).with_priority(1),
            Flow::new("c", "e1_0", "e0_0", 900, 1000, 900).with_priority(1),
        ];
        let routes = route_all(&net, &flows).unwrap();
        let cfg = SimConfig { trace: true, ..SimConfig::new(us(100_000), 42) };
        let config = PreemptionConfig::new(1, vec![0, 1]);
        let x = simulate(&net, &flows, &routes, &config, &cfg).unwrap();
        let y = simulate(&net, &flows, &routes, &config, &cfg).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.trace, y.trace);
        assert!(!x.trace.is_empty());
        let z = simulate(&net, &flows, &routes, &config, &SimConfig { seed: 43, ..cfg.clone() }).unwrap();
        assert_ne!(x.phases, z.phases);
        let mut buf = Vec::new();
        x.write_trace(&mut buf).unwrap();
        let first: serde_json::Value = serde_json::from_str(std::str::from_utf8(&buf).unwrap().lines().next().unwrap()).unwrap();
        for key in ["time_ns", "port", "event", "flow", "q", "detail"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn short_horizons_are_refused_or_flagged() {
        let (net, flows) = pair();
        let routes = route_all(&net, &flows).unwrap();
        let config = PreemptionConfig::new(1, vec![0, 1]);
        assert!(simulate(&net, &flows, &routes, &config, &SimConfig::new(us(49_999), 0)).is_err());
        let r = simulate(&net, &flows, &routes, &config, &SimConfig::new(us(50_000), 0)).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn cross_validation_of_a_quiet_pair_is_safe() {
        let (net, flows) = pair();
        let routes = route_all(&net, &flows).unwrap();
        let config = PreemptionConfig::new(1, vec![0, 1]);
        let cv = cross_validate(
            &net,
            &flows,
            &routes,
            &config,
            &SimConfig::new(us(500_000), 5),
            &AnalysisOptions::exhaustive(),
        )
        .unwrap();
        assert!(cv.is_safe());
        assert!(cv.flows.iter().all(|f| f.margin.unwrap() >= Duration::ZERO));
    }
}

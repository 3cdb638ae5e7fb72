//! End-to-end bounds with jitter propagated hop by hop until it settles.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::local::{wctt_local, Contender, LocalBound, PortAnalysisContext, Unschedulable};
use super::report::{FlowReport, HopReport, Verdict, WcttReport, SCHEMA_VERSION};
use super::AnalysisOptions;
use crate::config::{validate_config, FlowClassKind, PreemptionConfig, PriorityRanks};
use crate::cpa::{self, EventModel};
use crate::error::{Error, Result};
use crate::network::{Flow, FlowId, LinkId, Network, Routes};
use crate::time::Duration;

struct HopInfo {
    link: LinkId,
    c_plus: Duration,
    fragments: u64,
}

pub struct Analyzer<'a> {
    network: &'a Network,
    flows: &'a [Flow],
    config: PreemptionConfig,
    opts: AnalysisOptions,
    ranks: Vec<usize>,
    classes: Vec<u8>,
    hops: Vec<Vec<HopInfo>>,
    // Per port: (flow index, hop index) of every flow crossing it.
    ports: BTreeMap<LinkId, Vec<(usize, usize)>>,
}

type HopResult = std::result::Result<LocalBound, Unschedulable>;

impl<'a> Analyzer<'a> {
    pub fn new(
        network: &'a Network,
        flows: &'a [Flow],
        routes: &Routes,
        config: &PreemptionConfig,
        opts: &AnalysisOptions,
    ) -> Result<Self> {
        let ranks_of = PriorityRanks::of(flows)?;
        let v = validate_config(flows, config)?;
        if !v.is_valid() {
            return Err(Error::RuleViolations(v.violations));
        }
        let mut ranks = Vec::with_capacity(flows.len());
        let mut classes = Vec::with_capacity(flows.len());
        let mut hops = Vec::with_capacity(flows.len());
        let mut ports: BTreeMap<LinkId, Vec<(usize, usize)>> = BTreeMap::new();
        for (fi, f) in flows.iter().enumerate() {
            f.validate()?;
            let rank = ranks_of.rank(f.priority.expect("checked by PriorityRanks")).unwrap();
            ranks.push(rank);
            classes.push(config.entries[rank]);
            let path = routes
                .get(&f.id)
                .ok_or_else(|| Error::NoRoute { src: f.src.0.clone(), dst: f.dst.0.clone() })?;
            let mut info = Vec::with_capacity(path.links.len());
            for (h, &l) in path.links.iter().enumerate() {
                if l.0 >= network.links().len() {
                    return Err(Error::InvalidNetwork(format!("route of {} uses unknown link {}", f.id, l.0)));
                }
                let rate = network.link(l).rate;
                info.push(HopInfo {
                    link: l,
                    c_plus: cpa::transmission_time(f.size, rate),
                    fragments: cpa::max_fragments(f.size)?,
                });
                ports.entry(l).or_default().push((fi, h));
            }
            hops.push(info);
        }
        Ok(Analyzer { network, flows, config: config.clone(), opts: opts.clone(), ranks, classes, hops, ports })
    }

    fn port_context(&self, link: LinkId, jitter: &[Vec<Option<Duration>>]) -> PortAnalysisContext {
        let members = &self.ports[&link];
        let contenders = members
            .iter()
            .map(|&(fi, h)| {
                let f = &self.flows[fi];
                let hop = &self.hops[fi][h];
                Contender {
                    flow: f.id.clone(),
                    rank: self.ranks[fi],
                    class: self.classes[fi],
                    payload: f.size,
                    c_plus: hop.c_plus,
                    fragments: hop.fragments,
                    model: jitter[fi][h].map(|j| EventModel { period: f.period, jitter: j }),
                }
            })
            .collect();
        PortAnalysisContext::new(self.network.link(link).rate, self.config.level, contenders)
    }

    fn budget(&self, fi: usize, h: usize, previous: &[Vec<Option<HopResult>>]) -> Option<Duration> {
        if !self.opts.abort_on_deadline {
            return None;
        }
        let spent: Duration = (0..h)
            .map(|k| match &previous[fi][k] {
                Some(Ok(b)) => b.wctt,
                _ => self.hops[fi][k].c_plus,
            })
            .sum();
        Some(self.flows[fi].deadline - spent - self.opts.switch_delay * h as u64)
    }

    fn one_round(
        &self,
        jitter: &[Vec<Option<Duration>>],
        previous: &[Vec<Option<HopResult>>],
    ) -> Vec<Vec<Option<HopResult>>> {
        let contexts: BTreeMap<LinkId, PortAnalysisContext> =
            self.ports.keys().map(|&l| (l, self.port_context(l, jitter))).collect();
        let tasks: Vec<(LinkId, usize, usize, usize)> = self
            .ports
            .iter()
            .flat_map(|(&l, members)| members.iter().enumerate().map(move |(idx, &(fi, h))| (l, idx, fi, h)))
            .collect();
        let results: Vec<(usize, usize, HopResult)> = tasks
            .par_iter()
            .map(|&(l, idx, fi, h)| {
                let r = wctt_local(&contexts[&l], idx, self.budget(fi, h, previous), &self.opts);
                (fi, h, r)
            })
            .collect();
        let mut out: Vec<Vec<Option<HopResult>>> =
            self.hops.iter().map(|hs| (0..hs.len()).map(|_| None).collect()).collect();
        for (fi, h, r) in results {
            out[fi][h] = Some(r);
        }
        out
    }

    fn propagate(&self, results: &[Vec<Option<HopResult>>]) -> Vec<Vec<Option<Duration>>> {
        self.hops
            .iter()
            .enumerate()
            .map(|(fi, hs)| {
                let mut j = Some(Duration::ZERO);
                let mut out = Vec::with_capacity(hs.len());
                for (h, hop) in hs.iter().enumerate() {
                    out.push(j);
                    j = match (&results[fi][h], j) {
                        (Some(Ok(b)), Some(prev)) => Some(prev + (b.wctt - hop.c_plus)),
                        _ => None,
                    };
                }
                out
            })
            .collect()
    }

    pub fn run(&self) -> WcttReport {
        let mut jitter: Vec<Vec<Option<Duration>>> =
            self.hops.iter().map(|hs| vec![Some(Duration::ZERO); hs.len()]).collect();
        let mut results: Vec<Vec<Option<HopResult>>> =
            self.hops.iter().map(|hs| (0..hs.len()).map(|_| None).collect()).collect();
        let mut rounds = 0usize;
        let mut converged = false;
        while rounds < self.opts.round_cap {
            rounds += 1;
            results = self.one_round(&jitter, &results);
            let next = self.propagate(&results);
            if next == jitter {
                converged = true;
                break;
            }
            jitter = next;
        }
        self.report(&jitter, &results, rounds, converged)
    }

    fn report(
        &self,
        jitter: &[Vec<Option<Duration>>],
        results: &[Vec<Option<HopResult>>],
        rounds: usize,
        converged: bool,
    ) -> WcttReport {
        let flows: Vec<FlowReport> = self
            .flows
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let hops: Vec<HopReport> = self.hops[fi]
                    .iter()
                    .enumerate()
                    .map(|(h, hop)| {
                        let r = results[fi][h].as_ref().expect("every hop analysed");
                        HopReport {
                            port: self.network.port_name(hop.link),
                            link: hop.link,
                            jitter: jitter[fi][h],
                            bound: r.as_ref().ok().map(|b| b.wctt),
                            critical_q: r.as_ref().ok().map(|b| b.critical_q),
                            failure: r.as_ref().err().cloned(),
                        }
                    })
                    .collect();
                let total = if hops.iter().all(|h| h.bound.is_some()) {
                    let switches = hops.len().saturating_sub(1) as u64;
                    Some(hops.iter().map(|h| h.bound.unwrap()).sum::<Duration>() + self.opts.switch_delay * switches)
                } else {
                    None
                };
                let slack = total.map(|t| f.deadline - t);
                let verdict = if !converged {
                    Verdict::Unschedulable { port: None, reason: Unschedulable::RoundCap { rounds } }
                } else if let Some(bad) = hops.iter().find(|h| h.failure.is_some()) {
                    Verdict::Unschedulable { port: Some(bad.port.clone()), reason: bad.failure.clone().unwrap() }
                } else if total.unwrap() > f.deadline {
                    Verdict::Unschedulable {
                        port: None,
                        reason: Unschedulable::DeadlineExceeded { bound: total.unwrap(), budget: f.deadline },
                    }
                } else {
                    Verdict::Schedulable
                };
                FlowReport {
                    flow: f.id.clone(),
                    priority: f.priority.unwrap(),
                    class: self.classes[fi],
                    kind: FlowClassKind::of(self.classes[fi], self.config.level),
                    deadline: f.deadline,
                    hops,
                    total: if converged { total } else { None },
                    slack: if converged { slack } else { None },
                    verdict,
                }
            })
            .collect();
        WcttReport {
            schema_version: SCHEMA_VERSION,
            mode: self.opts.mode,
            config: self.config.clone(),
            rounds,
            schedulable: flows.iter().all(|f| f.verdict.is_schedulable()),
            flows,
        }
    }
}

/// Bounds for every flow under `config`.
pub fn analyze(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    config: &PreemptionConfig,
    opts: &AnalysisOptions,
) -> Result<WcttReport> {
    Ok(Analyzer::new(network, flows, routes, config, opts)?.run())
}

/// The end-to-end result of one flow, analysed together with all others.
pub fn wctt_end_to_end(
    flow: &FlowId,
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    config: &PreemptionConfig,
    opts: &AnalysisOptions,
) -> Result<FlowReport> {
    let report = analyze(network, flows, routes, config, opts)?;
    report
        .flows
        .into_iter()
        .find(|f| &f.flow == flow)
        .ok_or_else(|| Error::InvalidFlow { flow: flow.0.clone(), reason: "not in the flow set".into() })
}

/// True when every flow meets its deadline.
pub fn is_schedulable(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    config: &PreemptionConfig,
    opts: &AnalysisOptions,
) -> Result<bool> {
    Ok(analyze(network, flows, routes, config, opts)?.schedulable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AnalysisMode;
    use crate::network::{route_all, Node};
    use crate::time::Rate;

    fn us(v: i64) -> Duration {
        Duration::from_micros(v)
    }

    fn bytes(n: i128) -> Duration {
        Duration::from_ratio(8 * n, 100)
    }

    fn line(switches: usize) -> Network {
        let r = Rate::mbps(100);
        let mut nodes = vec![Node::endpoint("a"), Node::endpoint("b"), Node::endpoint("c")];
        let mut links = Vec::new();
        for s in 0..switches {
            nodes.push(Node::switch(&format!("s{s}")));
            if s > 0 {
                Network::duplex(&mut links, &format!("s{}", s - 1), &format!("s{s}"), r);
            }
        }
        Network::duplex(&mut links, "a", "s0", r);
        Network::duplex(&mut links, "c", "s0", r);
        Network::duplex(&mut links, &format!("s{}", switches - 1), "b", r);
        Network::new(nodes, links).unwrap()
    }

    #[test]
    fn single_flow_over_three_hops() {
        let n = line(2);
        let flows = vec![Flow::new("f", "a", "b", 1000, 1000, 200).with_priority(0)];
        let routes = route_all(&n, &flows).unwrap();
        let r = analyze(&n, &flows, &routes, &PreemptionConfig::non_preemptive(1), &AnalysisOptions::default())
            .unwrap();
        let f = r.flow("f").unwrap();
        assert_eq!(f.hops.len(), 3);
        assert_eq!(f.total, Some(bytes(242) * 3i128));
        assert!(r.schedulable);
        assert_eq!(r.rounds, 1);
    }

    #[test]
    fn jitter_accumulates_downstream() {
        let n = line(2);
        let flows = vec![
            Flow::new("hi", "a", "b", 1000, 1000, 1500).with_priority(0),
            Flow::new("lo", "c", "b", 1000, 1000, 100).with_priority(1),
        ];
        let routes = route_all(&n, &flows).unwrap();
        let r = analyze(&n, &flows, &routes, &PreemptionConfig::non_preemptive(2), &AnalysisOptions::default())
            .unwrap();
        let hi = r.flow("hi").unwrap();
        // hi is blocked by lo on the shared port s0->s1 and picks up that delay as jitter.
        assert_eq!(hi.hops[0].jitter, Some(Duration::ZERO));
        assert_eq!(hi.hops[1].bound, Some(bytes(1542 + 142)));
        assert_eq!(hi.hops[2].jitter, Some(bytes(142)));
        assert!(r.rounds >= 2);
    }

    #[test]
    fn switch_delay_adds_per_intermediate_node() {
        let n = line(2);
        let flows = vec![Flow::new("f", "a", "b", 1000, 1000, 200).with_priority(0)];
        let routes = route_all(&n, &flows).unwrap();
        let opts = AnalysisOptions { switch_delay: us(5), ..AnalysisOptions::default() };
        let f = wctt_end_to_end(&"f".into(), &n, &flows, &routes, &PreemptionConfig::non_preemptive(1), &opts)
            .unwrap();
        assert_eq!(f.total, Some(bytes(242) * 3i128 + us(10)));
    }

    #[test]
    fn deadline_miss_is_reported_with_negative_slack() {
        let n = line(1);
        let flows = vec![Flow::new("f", "a", "b", 1000, 20, 200).with_priority(0)];
        let routes = route_all(&n, &flows).unwrap();
        let cfg = PreemptionConfig::non_preemptive(1);
        let r = analyze(&n, &flows, &routes, &cfg, &AnalysisOptions::exhaustive()).unwrap();
        let f = r.flow("f").unwrap();
        assert!(!f.verdict.is_schedulable());
        assert!(f.slack.unwrap().is_negative());
        assert!(!is_schedulable(&n, &flows, &routes, &cfg, &AnalysisOptions::default()).unwrap());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let n = line(1);
        let flows = vec![
            Flow::new("f", "a", "b", 1000, 1000, 200).with_priority(0),
            Flow::new("g", "c", "b", 1000, 1000, 200).with_priority(1),
        ];
        let routes = route_all(&n, &flows).unwrap();
        let bad = PreemptionConfig::new(1, vec![1, 0]);
        assert!(matches!(
            analyze(&n, &flows, &routes, &bad, &AnalysisOptions::default()),
            Err(Error::RuleViolations(_))
        ));
    }

    #[test]
    fn modes_agree_without_jitter_or_peers() {
        let n = line(1);
        let flows = vec![
            Flow::new("e", "a", "b", 5000, 5000, 200).with_priority(0),
            Flow::new("b", "c", "b", 5000, 5000, 1500).with_priority(1),
        ];
        let routes = route_all(&n, &flows).unwrap();
        let cfg = PreemptionConfig::new(1, vec![0, 1]);
        let sound = analyze(&n, &flows, &routes, &cfg, &AnalysisOptions::default()).unwrap();
        let lit = AnalysisOptions { mode: AnalysisMode::Literal, ..AnalysisOptions::default() };
        let literal = analyze(&n, &flows, &routes, &cfg, &lit).unwrap();
        assert_eq!(sound.flow("e").unwrap().hops, literal.flow("e").unwrap().hops);
    }
}

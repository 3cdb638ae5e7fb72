//! Per-port worst-case traversal time.
//!
//! For flow `i` at one egress port, `Q` is the latest time the final
//! non-preemptable part of its `q`-th frame can start, measured from the start
//! of the busy window:
//!
//! ```text
//! Q = LPB + SPB(q, a) + HPI(Q) + PO(q, a, Q)
//! ```
//!
//! and the traversal time of that frame is `Q + C_i - a` for express flows or
//! `Q + frame_time(84) - a` for preemptable ones, with `a` its arrival time.

use serde::Serialize;

use super::{AnalysisMode, AnalysisOptions};
use crate::config::FlowClassKind;
use crate::cpa::{self, EventModel, MAX_NON_PREEMPTABLE, MIN_FRAME, PREEMPTION_OVERHEAD};
use crate::network::FlowId;
use crate::time::{Duration, Rate, Rational};

/// One flow's view of a port: its priority rank, class and arrival curve there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contender {
    pub flow: FlowId,
    /// Index into the distinct priorities, 0 = highest.
    pub rank: usize,
    pub class: u8,
    pub payload: u32,
    pub c_plus: Duration,
    /// Most preemptions a single frame can suffer.
    pub fragments: u64,
    /// `None` when upstream analysis found no finite bound for the flow.
    pub model: Option<EventModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortAnalysisContext {
    pub rate: Rate,
    pub level: u8,
    pub flows: Vec<Contender>,
}

impl PortAnalysisContext {
    pub fn new(rate: Rate, level: u8, flows: Vec<Contender>) -> Self {
        PortAnalysisContext { rate, level, flows }
    }

    /// Adds a strictly periodic contender with payload `payload` at this port's rate.
    pub fn push(&mut self, flow: &str, rank: usize, class: u8, payload: u32, period: Duration) {
        self.flows.push(Contender {
            flow: flow.into(),
            rank,
            class,
            payload,
            c_plus: cpa::transmission_time(payload, self.rate),
            fragments: cpa::max_fragments(payload).expect("payload >= 42"),
            model: Some(EventModel::periodic(period).expect("positive period")),
        });
    }

    pub fn index_of(&self, flow: &str) -> Option<usize> {
        self.flows.iter().position(|c| c.flow.0 == flow)
    }

    pub fn kind(&self, i: usize) -> FlowClassKind {
        FlowClassKind::of(self.flows[i].class, self.level)
    }

    fn bytes(&self, n: u32) -> Duration {
        cpa::frame_time(n, self.rate)
    }

    /// The part of the frame that runs after `Q`.
    pub fn completion_tail(&self, i: usize) -> Duration {
        if self.kind(i).is_preemptable() {
            self.bytes(MIN_FRAME)
        } else {
            self.flows[i].c_plus
        }
    }

    fn model(&self, j: usize) -> &EventModel {
        self.flows[j].model.as_ref().expect("interfering flow has a bounded event model")
    }

    fn eta(&self, j: usize, dt: Duration) -> u64 {
        self.model(j).eta_plus(dt)
    }

    fn others(&self, i: usize) -> impl Iterator<Item = (usize, &Contender)> {
        self.flows.iter().enumerate().filter(move |(j, _)| *j != i)
    }

    fn hp(&self, i: usize) -> impl Iterator<Item = (usize, &Contender)> {
        let r = self.flows[i].rank;
        self.others(i).filter(move |(_, c)| c.rank < r)
    }

    fn sp(&self, i: usize) -> impl Iterator<Item = (usize, &Contender)> {
        let r = self.flows[i].rank;
        self.others(i).filter(move |(_, c)| c.rank == r)
    }

    fn lp(&self, i: usize) -> impl Iterator<Item = (usize, &Contender)> {
        let r = self.flows[i].rank;
        self.others(i).filter(move |(_, c)| c.rank > r)
    }

    /// Flows whose arrivals can delay `i`: higher and same priority ones.
    fn interferers(&self, i: usize) -> impl Iterator<Item = (usize, &Contender)> {
        let r = self.flows[i].rank;
        self.others(i).filter(move |(_, c)| c.rank <= r)
    }
}

fn max_or_zero(it: impl Iterator<Item = Duration>) -> Duration {
    it.max().unwrap_or(Duration::ZERO)
}

/// Blocking by at most one lower-priority frame already on the wire.
pub fn lower_priority_blocking(ctx: &PortAnalysisContext, i: usize) -> Duration {
    let ci = ctx.flows[i].class;
    let same_class = max_or_zero(ctx.lp(i).filter(|(_, c)| c.class == ci).map(|(_, c)| c.c_plus));
    let cap = ctx.bytes(MAX_NON_PREEMPTABLE);
    match ctx.kind(i) {
        FlowClassKind::ExpressLike => {
            let preemptable = max_or_zero(ctx.lp(i).filter(|(_, c)| c.class > 0).map(|(_, c)| c.c_plus));
            same_class.max(preemptable.min(cap))
        }
        FlowClassKind::TpLike => {
            let lower = max_or_zero(ctx.lp(i).filter(|(_, c)| c.class > ci).map(|(_, c)| c.c_plus));
            same_class.max(lower.min(cap))
        }
        FlowClassKind::BpLike => same_class,
    }
}

/// Same-priority frames queued ahead of the `q`-th frame arriving at `a`, plus
/// the flow's own earlier frames and, for preemptable flows, everything but
/// the final 84 bytes of the frame itself.
pub fn same_priority_blocking(ctx: &PortAnalysisContext, i: usize, q: u64, a: Duration) -> Duration {
    let me = &ctx.flows[i];
    let peers: Duration = ctx.sp(i).map(|(j, c)| c.c_plus * ctx.eta(j, a)).sum();
    let own = me.c_plus * (q - 1);
    let head = if ctx.kind(i).is_preemptable() {
        me.c_plus.saturating_sub(ctx.bytes(MIN_FRAME))
    } else {
        Duration::ZERO
    };
    peers + own + head
}

/// Higher-priority frames arriving within a window of length `dt`.
pub fn higher_priority_interference(ctx: &PortAnalysisContext, i: usize, dt: Duration) -> Duration {
    ctx.hp(i).map(|(j, c)| c.c_plus * ctx.eta(j, dt)).sum()
}

/// Number of preemptions charged to the window, before taking the 24-byte cost.
pub fn preemption_count(
    ctx: &PortAnalysisContext,
    i: usize,
    q: u64,
    a: Duration,
    dt: Duration,
    mode: AnalysisMode,
) -> u64 {
    if !ctx.kind(i).is_preemptable() {
        return 0;
    }
    let me = &ctx.flows[i];
    // Arrivals able to preempt something in the window.
    let preemptors: u64 = ctx.hp(i).filter(|(_, c)| c.class < me.class).map(|(j, _)| ctx.eta(j, dt)).sum();
    // Fragment boundaries available to those arrivals.
    let lp = ctx.lp(i).filter(|(_, c)| c.class == me.class).map(|(_, c)| c.fragments).max().unwrap_or(0);
    let own = match mode {
        AnalysisMode::Sound => q * me.fragments,
        AnalysisMode::Literal => (q * me.fragments).saturating_sub(1),
    };
    let sp: u64 = ctx.sp(i).map(|(j, c)| ctx.eta(j, a) * c.fragments).sum();
    let hp: u64 = ctx.hp(i).filter(|(_, c)| c.class > 0).map(|(j, c)| ctx.eta(j, dt) * c.fragments).sum();
    preemptors.min(lp + own + sp + hp)
}

/// Preemption overhead in the window: 24 wire bytes per counted preemption.
pub fn preemption_overhead(
    ctx: &PortAnalysisContext,
    i: usize,
    q: u64,
    a: Duration,
    dt: Duration,
    mode: AnalysisMode,
) -> Duration {
    ctx.bytes(PREEMPTION_OVERHEAD) * preemption_count(ctx, i, q, a, dt, mode)
}

/// Why no finite bound (within the budget) exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Unschedulable {
    /// The bound under construction passed the deadline budget.
    DeadlineExceeded { bound: Duration, budget: Duration },
    /// Long-run demand at the port is at least the link capacity.
    Overload { utilization: String },
    /// The fixed point did not settle within the iteration cap.
    IterationCap { iterations: u64 },
    /// The busy window kept admitting new frames past the instance cap.
    InstanceCap { instances: u64 },
    /// A flow that can delay this one has no finite arrival curve here.
    UnboundedInterference { flow: FlowId },
    /// The flow's own arrival curve at this port is unbounded.
    UnboundedArrivals,
    /// Jitter propagation kept changing past the round cap.
    RoundCap { rounds: usize },
}

impl std::fmt::Display for Unschedulable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unschedulable::DeadlineExceeded { bound, budget } => {
                write!(f, "bound {bound} us exceeds the remaining budget {budget} us")
            }
            Unschedulable::Overload { utilization } => write!(f, "port utilization {utilization} >= 1"),
            Unschedulable::IterationCap { iterations } => {
                write!(f, "fixed point did not converge in {iterations} iterations")
            }
            Unschedulable::InstanceCap { instances } => write!(f, "busy window exceeded {instances} instances"),
            Unschedulable::UnboundedInterference { flow } => write!(f, "interfering flow {flow} is unbounded"),
            Unschedulable::UnboundedArrivals => write!(f, "arrival curve is unbounded"),
            Unschedulable::RoundCap { rounds } => write!(f, "jitter did not converge in {rounds} rounds"),
        }
    }
}

impl Unschedulable {
    /// True when the analysis itself failed to settle, as opposed to a bound
    /// that exists but misses the deadline.
    pub fn is_non_convergence(&self) -> bool {
        !matches!(self, Unschedulable::DeadlineExceeded { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueuingDelay {
    pub q: u64,
    pub arrival: Duration,
    /// Start of the final non-preemptable part, from the busy-window start.
    pub delay: Duration,
    pub iterations: u64,
}

/// Least fixed point of the queuing equation for the `q`-th frame arriving at `a`,
/// by Kleene iteration from zero. Aborts once `Q + tail - a` exceeds `budget`.
pub fn queuing_delay(
    ctx: &PortAnalysisContext,
    i: usize,
    q: u64,
    a: Duration,
    budget: Option<Duration>,
    opts: &AnalysisOptions,
) -> Result<QueuingDelay, Unschedulable> {
    precheck(ctx, i)?;
    fixed_point(ctx, i, q, a, budget, opts)
}

fn fixed_point(
    ctx: &PortAnalysisContext,
    i: usize,
    q: u64,
    a: Duration,
    budget: Option<Duration>,
    opts: &AnalysisOptions,
) -> Result<QueuingDelay, Unschedulable> {
    let base = lower_priority_blocking(ctx, i) + same_priority_blocking(ctx, i, q, a);
    let tail = ctx.completion_tail(i);
    let mut current = Duration::ZERO;
    let mut iterations = 0u64;
    loop {
        let next = base
            + higher_priority_interference(ctx, i, current)
            + preemption_overhead(ctx, i, q, a, current, opts.mode);
        iterations += 1;
        if let Some(b) = budget {
            let bound = next + tail - a;
            if bound > b {
                return Err(Unschedulable::DeadlineExceeded { bound, budget: b });
            }
        }
        if next == current {
            return Ok(QueuingDelay { q, arrival: a, delay: next, iterations });
        }
        if iterations >= opts.iteration_cap {
            return Err(Unschedulable::IterationCap { iterations });
        }
        current = next;
    }
}

fn precheck(ctx: &PortAnalysisContext, i: usize) -> Result<(), Unschedulable> {
    if ctx.flows[i].model.is_none() {
        return Err(Unschedulable::UnboundedArrivals);
    }
    if let Some((_, c)) = ctx.interferers(i).find(|(_, c)| c.model.is_none()) {
        return Err(Unschedulable::UnboundedInterference { flow: c.flow.clone() });
    }
    let u = demand_utilization(ctx, i);
    if u >= Rational::from_integer(1) {
        return Err(Unschedulable::Overload { utilization: crate::time::format_fixed(u, 4) });
    }
    Ok(())
}

/// Long-run share of the link taken by everything that can extend `i`'s busy window.
fn demand_utilization(ctx: &PortAnalysisContext, i: usize) -> Rational {
    let me = &ctx.flows[i];
    let overhead = ctx.bytes(PREEMPTION_OVERHEAD);
    let mut u = me.c_plus.ratio(ctx.model(i).period);
    for (j, c) in ctx.interferers(i) {
        let mut work = c.c_plus;
        if ctx.kind(i).is_preemptable() && c.class < me.class {
            work += overhead;
        }
        u += work.ratio(ctx.model(j).period);
    }
    u
}

/// Length of the longest window in which the port is continuously busy with
/// frames that delay `i`, including `i`'s own.
pub fn busy_period(ctx: &PortAnalysisContext, i: usize, opts: &AnalysisOptions) -> Result<Duration, Unschedulable> {
    precheck(ctx, i)?;
    let me = &ctx.flows[i];
    let overhead = ctx.bytes(PREEMPTION_OVERHEAD);
    let blocking = lower_priority_blocking(ctx, i);
    let mut current = Duration::ZERO;
    let mut iterations = 0u64;
    loop {
        let mut next = blocking + me.c_plus * ctx.eta(i, current);
        for (j, c) in ctx.interferers(i) {
            let n = ctx.eta(j, current);
            next += c.c_plus * n;
            if ctx.kind(i).is_preemptable() && c.class < me.class {
                next += overhead * n;
            }
        }
        iterations += 1;
        if next == current {
            return Ok(next);
        }
        if iterations >= opts.iteration_cap {
            return Err(Unschedulable::IterationCap { iterations });
        }
        current = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LocalBound {
    pub wctt: Duration,
    /// Frame index and arrival time that produced the bound.
    pub critical_q: u64,
    pub critical_arrival: Duration,
    /// Frames of `i` examined in the busy window.
    pub instances: u64,
}

/// Arrival instants in `(lo, hi)` where a same-priority arrival curve steps up.
fn same_priority_steps(ctx: &PortAnalysisContext, i: usize, lo: Duration, hi: Duration) -> Vec<Duration> {
    let mut out = Vec::new();
    for (j, _) in ctx.sp(i) {
        let m = ctx.model(j);
        let mut k = (lo + m.jitter).div_floor(m.period) + 1;
        loop {
            let x = m.period * k - m.jitter;
            if x >= hi {
                break;
            }
            if x > lo {
                out.push(x);
            }
            k += 1;
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Worst-case traversal time of flow `i` at this port, or the reason none
/// exists within `budget`.
///
/// In [`AnalysisMode::Literal`] the `q`-th frame is assumed to arrive at the
/// earliest instant `delta_minus(q)` and the window closes at the first `q`
/// whose completion precedes the next possible arrival. In
/// [`AnalysisMode::Sound`] every arrival instant within the busy period where
/// the queue ahead of the frame can grow is examined as well.
pub fn wctt_local(
    ctx: &PortAnalysisContext,
    i: usize,
    budget: Option<Duration>,
    opts: &AnalysisOptions,
) -> Result<LocalBound, Unschedulable> {
    precheck(ctx, i)?;
    let tail = ctx.completion_tail(i);
    let own = *ctx.model(i);
    let busy = match opts.mode {
        AnalysisMode::Sound => Some(busy_period(ctx, i, opts)?),
        AnalysisMode::Literal => None,
    };
    let mut best: Option<LocalBound> = None;
    let mut q = 1u64;
    loop {
        let earliest = own.delta_minus(q);
        let mut candidates = vec![earliest];
        if let Some(l) = busy {
            if q > 1 && earliest >= l {
                break;
            }
            candidates.extend(same_priority_steps(ctx, i, earliest, l));
        }
        let mut completion = Duration::ZERO;
        for a in candidates {
            let qd = fixed_point(ctx, i, q, a, budget, opts)?;
            let w = qd.delay + tail - a;
            completion = completion.max(qd.delay + tail);
            if best.is_none_or(|b| w > b.wctt) {
                best = Some(LocalBound { wctt: w, critical_q: q, critical_arrival: a, instances: q });
            }
        }
        if busy.is_none() && completion < own.delta_minus(q + 1) {
            break;
        }
        if q >= opts.instance_cap {
            return Err(Unschedulable::InstanceCap { instances: q });
        }
        q += 1;
    }
    let mut b = best.expect("at least one instance examined");
    b.instances = q;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn us(v: i64) -> Duration {
        Duration::from_micros(v)
    }

    fn bytes(n: i128) -> Duration {
        // 100 Mbit/s: 0.08 us per byte.
        Duration::from_ratio(8 * n, 100)
    }

    fn opts() -> AnalysisOptions {
        AnalysisOptions::default()
    }

    fn literal() -> AnalysisOptions {
        AnalysisOptions { mode: AnalysisMode::Literal, ..AnalysisOptions::default() }
    }

    fn port(level: u8) -> PortAnalysisContext {
        PortAnalysisContext::new(Rate::mbps(100), level, Vec::new())
    }

    #[test]
    fn express_blocked_by_long_preemptable_frame() {
        let mut p = port(1);
        p.push("e", 0, 0, 200, us(5000));
        p.push("b", 1, 1, 1500, us(5000));
        assert_eq!(lower_priority_blocking(&p, 0), bytes(143));
        for o in [opts(), literal()] {
            let b = wctt_local(&p, 0, None, &o).unwrap();
            assert_eq!(b.wctt, Duration::from_ratio(154, 5));
            assert_eq!(b.wctt.to_string(), "30.800");
        }
    }

    #[test]
    fn sole_flow_waits_only_for_itself() {
        let mut p = port(0);
        p.push("e", 0, 0, 200, us(5000));
        assert_eq!(wctt_local(&p, 0, None, &opts()).unwrap().wctt, bytes(242));
        assert_eq!(queuing_delay(&p, 0, 1, Duration::ZERO, None, &opts()).unwrap().delay, Duration::ZERO);
    }

    #[test]
    fn express_to_bp_chain_without_hp_load() {
        let mut p = port(1);
        p.push("e", 0, 0, 200, us(5000));
        p.push("b1", 1, 1, 1500, us(5000));
        p.push("b2", 2, 1, 1000, us(5000));
        assert_eq!(lower_priority_blocking(&p, 1), bytes(1042));
        assert_eq!(lower_priority_blocking(&p, 2), Duration::ZERO);
    }

    #[test]
    fn tp_flow_caps_lower_class_blocking() {
        let mut p = port(2);
        p.push("e", 0, 0, 200, us(5000));
        p.push("t", 1, 1, 300, us(5000));
        p.push("b", 2, 2, 1500, us(5000));
        assert_eq!(lower_priority_blocking(&p, 1), bytes(143));
        let mut q = port(1);
        q.push("e", 0, 0, 200, us(5000));
        q.push("t", 1, 1, 300, us(5000));
        q.push("b", 2, 1, 1500, us(5000));
        assert_eq!(lower_priority_blocking(&q, 1), bytes(1542));
    }

    #[test]
    fn equal_priority_express_pair() {
        let mut p = port(0);
        p.push("x", 0, 0, 500, us(100_000));
        p.push("y", 0, 0, 500, us(100_000));
        let c = bytes(542);
        for o in [opts(), literal()] {
            assert_eq!(wctt_local(&p, 0, None, &o).unwrap().wctt, c * 2i128);
            assert_eq!(wctt_local(&p, 1, None, &o).unwrap().wctt, c * 2i128);
        }
    }

    #[test]
    fn deadline_budget_aborts() {
        let mut p = port(1);
        p.push("e", 0, 0, 200, us(5000));
        p.push("b", 1, 1, 1500, us(5000));
        let err = wctt_local(&p, 0, Some(us(1)), &opts()).unwrap_err();
        assert!(matches!(err, Unschedulable::DeadlineExceeded { .. }));
        assert!(!err.is_non_convergence());
    }

    #[test]
    fn overload_is_reported_distinctly() {
        let mut p = port(0);
        p.push("a", 0, 0, 1500, us(100));
        p.push("b", 1, 0, 100, us(5000));
        let err = wctt_local(&p, 1, None, &opts()).unwrap_err();
        assert!(matches!(err, Unschedulable::Overload { .. }));
        assert!(err.is_non_convergence());
    }

    #[test]
    fn unbounded_interferer_propagates() {
        let mut p = port(0);
        p.push("a", 0, 0, 100, us(1000));
        p.push("b", 1, 0, 100, us(1000));
        p.flows[0].model = None;
        assert!(matches!(
            wctt_local(&p, 1, None, &opts()),
            Err(Unschedulable::UnboundedInterference { .. })
        ));
        // A lower-priority flow only blocks through its frame size.
        p.flows[0].model = Some(EventModel::periodic(us(1000)).unwrap());
        p.flows[1].model = None;
        assert!(wctt_local(&p, 0, None, &opts()).is_ok());
    }

    #[test]
    fn express_flows_pay_no_preemption_overhead() {
        let mut p = port(1);
        p.push("e", 0, 0, 1500, us(200));
        p.push("b", 1, 1, 1500, us(5000));
        assert_eq!(preemption_overhead(&p, 0, 3, us(0), us(10_000), AnalysisMode::Sound), Duration::ZERO);
    }

    #[test]
    fn preemption_count_is_capped_by_boundaries() {
        // b (class 1) carries 102 payload bytes: one boundary per frame.
        let mut p = port(1);
        p.push("e", 0, 0, 42, us(10));
        p.push("b", 1, 1, 102, us(5000));
        let dt = us(1000);
        assert_eq!(preemption_count(&p, 1, 1, us(0), dt, AnalysisMode::Sound), 1);
        assert_eq!(preemption_count(&p, 1, 1, us(0), dt, AnalysisMode::Literal), 0);
        assert_eq!(preemption_count(&p, 1, 2, us(0), dt, AnalysisMode::Sound), 2);
    }

    #[test]
    fn literal_count_misses_own_first_preemption() {
        // A 162-byte bp frame can be cut once after 60 payload bytes; an
        // express frame arriving then adds 24 bytes of overhead on top of the
        // 84-byte express frame, which the literal count drops.
        let mut p = port(1);
        p.push("e", 0, 0, 42, us(5000));
        p.push("b", 1, 1, 120, us(5000));
        let sound = wctt_local(&p, 1, None, &opts()).unwrap().wctt;
        let lit = wctt_local(&p, 1, None, &literal()).unwrap().wctt;
        assert_eq!(lit, bytes(162 + 84));
        assert_eq!(sound, bytes(162 + 84 + 24));
    }

    #[test]
    fn fifo_peer_with_jitter_needs_later_arrivals() {
        // Peer y bursts twice within 1 us; x arriving just after both waits for
        // both frames. The earliest-arrival assumption sees only one.
        let mut p = port(0);
        p.push("x", 0, 0, 1000, us(10_000));
        p.push("y", 0, 0, 1000, us(10_000));
        p.flows[1].model = Some(EventModel::new(us(10_000), us(9_999)).unwrap());
        let c = bytes(1042);
        let lit = wctt_local(&p, 0, None, &literal()).unwrap();
        assert_eq!(lit.wctt, c * 2i128);
        let sound = wctt_local(&p, 0, None, &opts()).unwrap();
        assert_eq!(sound.wctt, c * 3i128 - us(1));
        assert_eq!(sound.critical_arrival, us(1));
    }

    #[test]
    fn busy_period_covers_all_demand() {
        let mut p = port(0);
        p.push("a", 0, 0, 1500, us(200));
        p.push("b", 1, 0, 1500, us(1000));
        // 123.36 + 123.36 = 246.72 > 200 pulls in a second `a` frame.
        assert_eq!(busy_period(&p, 1, &opts()).unwrap(), bytes(1542) * 3i128);
    }
}

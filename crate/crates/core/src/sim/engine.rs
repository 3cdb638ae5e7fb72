//! Discrete-event core working in integer ticks.
//!
//! A port sends at most one fragment at a time. A frame waiting in a class
//! numerically below the class on the wire cuts the transmission at the first
//! instant where the current fragment has carried at least 60 bytes and at
//! least 84 bytes remain; the link then spends 24 bytes of overhead before the
//! next frame starts. Preempted frames sit on a stack and resume once nothing
//! of a smaller class is waiting. Events sharing a timestamp run link events
//! (completions, preemptions, overhead ends) first, then arrivals in
//! (priority, class, flow, release) order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::cpa::{MIN_FRAGMENT_PAYLOAD, MIN_FRAME, PREEMPTION_OVERHEAD};

#[derive(Debug, Clone)]
pub(crate) struct SimFlow {
    pub priority: u8,
    pub class: u8,
    pub wire_bytes: u64,
    pub period: u64,
    pub phase: u64,
    pub deadline: u64,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    flow: u32,
    seq: u64,
    release: u64,
    hop: u32,
    arrived: u64,
    remaining: u64,
}

#[derive(Debug, Clone, Copy)]
enum State {
    Idle,
    Sending { frame: Frame, start: u64, len: u64 },
    Overhead,
}

pub(crate) struct PortState {
    byte_ticks: u64,
    queues: Vec<VecDeque<Frame>>,
    stack: Vec<Frame>,
    state: State,
    generation: u64,
    preempt_pending: bool,
    blocked_since: Option<u64>,
    pub max_blocking: u64,
    pub preemptions: u64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct FlowCounters {
    pub released: u64,
    pub delivered: u64,
    pub max_delay: u64,
    pub sum_delay: u128,
    pub misses: u64,
    pub suffered: u64,
    pub caused: u64,
    pub hop_max: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TraceEntry {
    pub time: u64,
    pub port: usize,
    pub event: &'static str,
    pub flow: usize,
    pub seq: u64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    TxEnd { port: usize, generation: u64 },
    PreemptAt { port: usize, generation: u64 },
    OverheadEnd { port: usize, generation: u64 },
    // Arrivals sort after link events at equal times, in tie-break order.
    Arrive { priority: u8, class: u8, flow: u32, seq: u64, port: usize, hop: u32, release: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: u64,
    phase: u8,
    kind: Kind,
    order: u64,
}

pub(crate) struct Engine<'a> {
    flows: &'a [SimFlow],
    pub ports: Vec<PortState>,
    pub counters: Vec<FlowCounters>,
    heap: BinaryHeap<Reverse<Event>>,
    order: u64,
    horizon: u64,
    switch_delay: u64,
    pub events: u64,
    pub trace: Option<Vec<TraceEntry>>,
}

impl<'a> Engine<'a> {
    pub fn new(
        flows: &'a [SimFlow],
        port_byte_ticks: &[u64],
        horizon: u64,
        switch_delay: u64,
        trace: bool,
    ) -> Self {
        let ports = port_byte_ticks
            .iter()
            .map(|&bt| PortState {
                byte_ticks: bt,
                queues: vec![VecDeque::new(); 8],
                stack: Vec::new(),
                state: State::Idle,
                generation: 0,
                preempt_pending: false,
                blocked_since: None,
                max_blocking: 0,
                preemptions: 0,
            })
            .collect();
        let counters = flows
            .iter()
            .map(|f| FlowCounters { hop_max: vec![0; f.path.len()], ..FlowCounters::default() })
            .collect();
        Engine {
            flows,
            ports,
            counters,
            heap: BinaryHeap::new(),
            order: 0,
            horizon,
            switch_delay,
            events: 0,
            trace: trace.then(Vec::new),
        }
    }

    fn push(&mut self, time: u64, kind: Kind) {
        let phase = u8::from(matches!(kind, Kind::Arrive { .. }));
        self.order += 1;
        self.heap.push(Reverse(Event { time, phase, kind, order: self.order }));
    }

    fn arrive(&mut self, time: u64, flow: u32, seq: u64, hop: u32, release: u64) {
        let f = &self.flows[flow as usize];
        let port = f.path[hop as usize];
        let kind = Kind::Arrive { priority: f.priority, class: f.class, flow, seq, port, hop, release };
        self.push(time, kind);
    }

    fn log(&mut self, time: u64, port: usize, event: &'static str, frame: &Frame, detail: String) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEntry { time, port, event, flow: frame.flow as usize, seq: frame.seq, detail });
        }
    }

    pub fn run(&mut self) {
        for (i, f) in self.flows.iter().enumerate() {
            if f.phase < self.horizon {
                self.arrive(f.phase, i as u32, 0, 0, f.phase);
            }
        }
        while let Some(Reverse(ev)) = self.heap.pop() {
            self.events += 1;
            let t = ev.time;
            match ev.kind {
                Kind::Arrive { flow, seq, port, hop, release, .. } => {
                    if hop == 0 {
                        self.counters[flow as usize].released += 1;
                        let f = &self.flows[flow as usize];
                        let next = release + f.period;
                        if next < self.horizon {
                            self.arrive(next, flow, seq + 1, 0, next);
                        }
                    }
                    let bt = self.ports[port].byte_ticks;
                    let frame = Frame {
                        flow,
                        seq,
                        release,
                        hop,
                        arrived: t,
                        remaining: self.flows[flow as usize].wire_bytes * bt,
                    };
                    self.enqueue(port, t, frame);
                }
                Kind::TxEnd { port, generation } => {
                    if self.ports[port].generation == generation {
                        self.complete(port, t);
                    }
                }
                Kind::PreemptAt { port, generation } => {
                    if self.ports[port].generation == generation {
                        self.preempt(port, t);
                    }
                }
                Kind::OverheadEnd { port, generation } => {
                    if self.ports[port].generation == generation {
                        self.ports[port].state = State::Idle;
                        self.select(port, t);
                    }
                }
            }
        }
    }

    fn class_of(&self, f: &Frame) -> u8 {
        self.flows[f.flow as usize].class
    }

    fn enqueue(&mut self, port: usize, t: u64, frame: Frame) {
        self.log(t, port, "enqueue", &frame, String::new());
        let prio = self.flows[frame.flow as usize].priority as usize;
        let class = self.class_of(&frame);
        self.ports[port].queues[prio].push_back(frame);
        match self.ports[port].state {
            State::Idle => self.select(port, t),
            State::Sending { frame: on_wire, .. } => {
                if class < self.class_of(&on_wire) {
                    if self.ports[port].blocked_since.is_none() {
                        self.ports[port].blocked_since = Some(t);
                    }
                    if !self.ports[port].preempt_pending {
                        self.try_preempt(port, t);
                    }
                }
            }
            State::Overhead => {
                if self.ports[port].blocked_since.is_none() {
                    self.ports[port].blocked_since = Some(t);
                }
            }
        }
    }

    fn head(&self, port: usize) -> Option<(usize, Frame)> {
        self.ports[port].queues.iter().enumerate().find_map(|(p, q)| q.front().map(|f| (p, *f)))
    }

    fn try_preempt(&mut self, port: usize, t: u64) {
        let p = &self.ports[port];
        let State::Sending { start, len, .. } = p.state else { return };
        let bt = p.byte_ticks;
        let sent = t - start;
        let point = sent.max(MIN_FRAGMENT_PAYLOAD as u64 * bt);
        if len < point || len - point < MIN_FRAME as u64 * bt {
            return;
        }
        if point == sent {
            self.preempt(port, t);
        } else {
            let generation = p.generation;
            self.ports[port].preempt_pending = true;
            self.push(start + point, Kind::PreemptAt { port, generation });
        }
    }

    fn preempt(&mut self, port: usize, t: u64) {
        let State::Sending { mut frame, start, len } = self.ports[port].state else { return };
        let (_, preemptor) = self.head(port).expect("a waiting frame triggered the preemption");
        frame.remaining = len - (t - start);
        let bt = self.ports[port].byte_ticks;
        let detail = format!("by {} remaining {}", preemptor.flow, frame.remaining / bt);
        self.log(t, port, "preempt", &frame, detail);
        self.counters[frame.flow as usize].suffered += 1;
        self.counters[preemptor.flow as usize].caused += 1;
        let p = &mut self.ports[port];
        p.preemptions += 1;
        p.stack.push(frame);
        p.state = State::Overhead;
        p.generation += 1;
        p.preempt_pending = false;
        let generation = p.generation;
        self.push(t + PREEMPTION_OVERHEAD as u64 * bt, Kind::OverheadEnd { port, generation });
    }

    fn complete(&mut self, port: usize, t: u64) {
        let State::Sending { frame, .. } = self.ports[port].state else { return };
        self.ports[port].state = State::Idle;
        self.ports[port].generation += 1;
        self.ports[port].preempt_pending = false;
        let fi = frame.flow as usize;
        let hop_delay = t - frame.arrived;
        let c = &mut self.counters[fi];
        c.hop_max[frame.hop as usize] = c.hop_max[frame.hop as usize].max(hop_delay);
        let last = frame.hop as usize + 1 == self.flows[fi].path.len();
        if last {
            let delay = t - frame.release;
            c.delivered += 1;
            c.max_delay = c.max_delay.max(delay);
            c.sum_delay += delay as u128;
            if delay > self.flows[fi].deadline {
                c.misses += 1;
            }
            self.log(t, port, "deliver", &frame, format!("delay {delay}"));
        } else {
            self.log(t, port, "complete", &frame, String::new());
            self.arrive(t + self.switch_delay, frame.flow, frame.seq, frame.hop + 1, frame.release);
        }
        self.select(port, t);
    }

    fn select(&mut self, port: usize, t: u64) {
        let head = self.head(port);
        let top = self.ports[port].stack.last().copied();
        let (frame, resumed) = match (head, top) {
            (Some((p, h)), Some(s)) if self.class_of(&h) < self.class_of(&s) => {
                self.ports[port].queues[p].pop_front();
                (h, false)
            }
            (_, Some(s)) => {
                self.ports[port].stack.pop();
                (s, true)
            }
            (Some((p, h)), None) => {
                self.ports[port].queues[p].pop_front();
                (h, false)
            }
            (None, None) => return,
        };
        let p = &mut self.ports[port];
        if let Some(since) = p.blocked_since.take() {
            p.max_blocking = p.max_blocking.max(t - since);
        }
        p.generation += 1;
        p.preempt_pending = false;
        p.state = State::Sending { frame, start: t, len: frame.remaining };
        let generation = p.generation;
        self.push(t + frame.remaining, Kind::TxEnd { port, generation });
        self.log(t, port, if resumed { "resume" } else { "start" }, &frame, String::new());
    }
}

//! Topology, flows and static routing.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{deserialize_rational, Duration, Rate, Rational};

pub const MIN_PAYLOAD: u32 = 42;
pub const MAX_PAYLOAD: u32 = 1500;
pub const MAX_PRIORITY: u8 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub String);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FlowId {
    fn from(s: &str) -> Self {
        FlowId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    #[serde(alias = "endpoint", alias = "end_point", alias = "ep", alias = "EP")]
    EndPoint,
    #[serde(alias = "switch", alias = "sw", alias = "SW")]
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

impl Node {
    pub fn endpoint(id: &str) -> Self {
        Node { id: id.into(), kind: NodeKind::EndPoint }
    }

    pub fn switch(id: &str) -> Self {
        Node { id: id.into(), kind: NodeKind::Switch }
    }
}

/// A directed link; its source side is the egress port that frames queue at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub rate: Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct LinkId(pub usize);

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<NodeId, usize>,
    link_index: HashMap<(usize, usize), LinkId>,
    // Outgoing links per node, ordered by neighbour id.
    adjacency: Vec<Vec<(usize, LinkId)>>,
}

impl Network {
    /// Builds a network, checking ids, rates, full-duplex symmetry and that every
    /// end-point has exactly one physical link.
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self> {
        let mut node_index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0.is_empty() {
                return Err(Error::InvalidNetwork("node with empty id".into()));
            }
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate node id {}", n.id)));
            }
        }
        let mut link_index = HashMap::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            let a = *node_index.get(&l.from).ok_or_else(|| Error::UnknownNode(l.from.0.clone()))?;
            let b = *node_index.get(&l.to).ok_or_else(|| Error::UnknownNode(l.to.0.clone()))?;
            if a == b {
                return Err(Error::InvalidNetwork(format!("self-loop on {}", l.from)));
            }
            if link_index.insert((a, b), LinkId(i)).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate link {} -> {}", l.from, l.to)));
            }
            adjacency[a].push((b, LinkId(i)));
        }
        for l in &links {
            let a = node_index[&l.from];
            let b = node_index[&l.to];
            match link_index.get(&(b, a)) {
                None => {
                    return Err(Error::InvalidNetwork(format!(
                        "link {} -> {} has no reverse direction",
                        l.from, l.to
                    )))
                }
                Some(rev) if links[rev.0].rate != l.rate => {
                    return Err(Error::InvalidNetwork(format!(
                        "link {} <-> {} has asymmetric rates",
                        l.from, l.to
                    )))
                }
                _ => {}
            }
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.kind == NodeKind::EndPoint && adjacency[i].len() != 1 {
                return Err(Error::InvalidNetwork(format!(
                    "end-point {} must have exactly one link, has {}",
                    n.id,
                    adjacency[i].len()
                )));
            }
        }
        for adj in adjacency.iter_mut() {
            adj.sort_by(|x, y| nodes[x.0].id.cmp(&nodes[y.0].id));
        }
        Ok(Network { nodes, links, node_index, link_index, adjacency })
    }

    /// Adds both directions of a full-duplex link to a link list.
    pub fn duplex(links: &mut Vec<Link>, a: &str, b: &str, rate: Rate) {
        links.push(Link { from: a.into(), to: b.into(), rate });
        links.push(Link { from: b.into(), to: a.into(), rate });
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn link_between(&self, from: &NodeId, to: &NodeId) -> Option<LinkId> {
        let a = *self.node_index.get(from)?;
        let b = *self.node_index.get(to)?;
        self.link_index.get(&(a, b)).copied()
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::EndPoint)
    }

    /// Human-readable port name, `from->to`.
    pub fn port_name(&self, id: LinkId) -> String {
        let l = &self.links[id.0];
        format!("{}->{}", l.from, l.to)
    }

    /// Minimum-hop path; among equal-length paths the lexicographically smallest
    /// node-id sequence wins.
    pub fn shortest_path(&self, src: &NodeId, dst: &NodeId) -> Result<Path> {
        let s = *self.node_index.get(src).ok_or_else(|| Error::UnknownNode(src.0.clone()))?;
        let d = *self.node_index.get(dst).ok_or_else(|| Error::UnknownNode(dst.0.clone()))?;
        let no_route = || Error::NoRoute { src: src.0.clone(), dst: dst.0.clone() };
        if s == d {
            return Err(no_route());
        }
        // Hop distance to dst; only switches relay, so end-points other than
        // src/dst are never expanded.
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[d] = 0;
        let mut queue = VecDeque::from([d]);
        while let Some(v) = queue.pop_front() {
            if v != d && self.nodes[v].kind == NodeKind::EndPoint {
                continue;
            }
            for &(u, _) in &self.adjacency[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        if dist[s] == usize::MAX {
            return Err(no_route());
        }
        let mut nodes = vec![self.nodes[s].id.clone()];
        let mut links = Vec::new();
        let mut v = s;
        while v != d {
            let &(next, link) = self.adjacency[v]
                .iter()
                .find(|(u, _)| {
                    dist[*u] != usize::MAX
                        && dist[*u] + 1 == dist[v]
                        && (*u == d || self.nodes[*u].kind == NodeKind::Switch)
                })
                .ok_or_else(no_route)?;
            links.push(link);
            nodes.push(self.nodes[next].id.clone());
            v = next;
        }
        Ok(Path { nodes, links })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

pub type Routes = BTreeMap<FlowId, Path>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub period: Duration,
    pub deadline: Duration,
    /// Payload bytes, 42..=1500.
    pub size: u32,
    pub priority: Option<u8>,
    pub class: Option<u8>,
}

impl Flow {
    pub fn new(id: &str, src: &str, dst: &str, period_us: i64, deadline_us: i64, size: u32) -> Self {
        Flow {
            id: id.into(),
            src: src.into(),
            dst: dst.into(),
            period: Duration::from_micros(period_us),
            deadline: Duration::from_micros(deadline_us),
            size,
            priority: None,
            class: None,
        }
    }

    pub fn with_priority(mut self, p: u8) -> Self {
        self.priority = Some(p);
        self
    }

    pub fn with_class(mut self, c: u8) -> Self {
        self.class = Some(c);
        self
    }

    /// Checks the per-flow invariants that do not need a topology.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidFlow { flow: self.id.0.clone(), reason });
        if self.id.0.is_empty() {
            return bad("empty id".into());
        }
        if self.period <= Duration::ZERO {
            return bad("period must be positive".into());
        }
        if self.deadline <= Duration::ZERO {
            return bad("deadline must be positive".into());
        }
        if !(MIN_PAYLOAD..=MAX_PAYLOAD).contains(&self.size) {
            return bad(format!("payload {} outside {MIN_PAYLOAD}..={MAX_PAYLOAD} bytes", self.size));
        }
        if let Some(p) = self.priority {
            if p > MAX_PRIORITY {
                return bad(format!("priority {p} outside 0..={MAX_PRIORITY}"));
            }
        }
        if self.src == self.dst {
            return bad("source equals destination".into());
        }
        Ok(())
    }
}

/// Validates a flow set against a network: unique ids, per-flow invariants and
/// end-point sources and destinations.
pub fn validate_flows(network: &Network, flows: &[Flow]) -> Result<()> {
    let mut seen = HashSet::new();
    for f in flows {
        f.validate()?;
        if !seen.insert(&f.id) {
            return Err(Error::InvalidFlow { flow: f.id.0.clone(), reason: "duplicate flow id".into() });
        }
        for n in [&f.src, &f.dst] {
            match network.node(n) {
                None => return Err(Error::UnknownNode(n.0.clone())),
                Some(node) if node.kind != NodeKind::EndPoint => {
                    return Err(Error::InvalidFlow {
                        flow: f.id.0.clone(),
                        reason: format!("{n} is not an end-point"),
                    })
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// Shortest-path routes for every flow.
pub fn route_all(network: &Network, flows: &[Flow]) -> Result<Routes> {
    validate_flows(network, flows)?;
    flows
        .iter()
        .map(|f| Ok((f.id.clone(), network.shortest_path(&f.src, &f.dst)?)))
        .collect()
}

/// Flows traversing each egress port, in flow-slice order.
pub fn egress_port_flowsets(flows: &[Flow], routes: &Routes) -> Result<BTreeMap<LinkId, Vec<FlowId>>> {
    let mut out: BTreeMap<LinkId, Vec<FlowId>> = BTreeMap::new();
    for f in flows {
        let path = routes
            .get(&f.id)
            .ok_or_else(|| Error::NoRoute { src: f.src.0.clone(), dst: f.dst.0.clone() })?;
        for &l in &path.links {
            out.entry(l).or_default().push(f.id.clone());
        }
    }
    Ok(out)
}

// ---- JSON interchange -------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: Vec<Node>,
    pub links: Vec<LinkFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFile {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(deserialize_with = "deserialize_rational", serialize_with = "serialize_rational")]
    pub rate_mbps: Rational,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFile {
    pub id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(deserialize_with = "deserialize_rational", serialize_with = "serialize_rational")]
    pub period_us: Rational,
    #[serde(deserialize_with = "deserialize_rational", serialize_with = "serialize_rational")]
    pub deadline_us: Rational,
    pub size_bytes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<u8>,
}

fn serialize_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    if r.is_integer() {
        if let Ok(v) = i64::try_from(r.to_integer()) {
            return s.serialize_i64(v);
        }
    }
    let text = crate::time::format_fixed(*r, 9);
    let text = text.trim_end_matches('0').trim_end_matches('.');
    let n: serde_json::Number = text.parse().map_err(serde::ser::Error::custom)?;
    n.serialize(s)
}

impl TryFrom<NetworkFile> for Network {
    type Error = Error;
    fn try_from(f: NetworkFile) -> Result<Network> {
        let links = f
            .links
            .into_iter()
            .map(|l| Ok(Link { from: l.from, to: l.to, rate: Rate::from_mbps(l.rate_mbps)? }))
            .collect::<Result<Vec<_>>>()?;
        Network::new(f.nodes, links)
    }
}

impl From<&Network> for NetworkFile {
    fn from(n: &Network) -> Self {
        NetworkFile {
            nodes: n.nodes.clone(),
            links: n
                .links
                .iter()
                .map(|l| LinkFile { from: l.from.clone(), to: l.to.clone(), rate_mbps: l.rate.as_rational() })
                .collect(),
        }
    }
}

impl From<FlowFile> for Flow {
    fn from(f: FlowFile) -> Self {
        Flow {
            id: f.id,
            src: f.src,
            dst: f.dst,
            period: Duration::from_rational(f.period_us),
            deadline: Duration::from_rational(f.deadline_us),
            size: f.size_bytes,
            priority: f.priority,
            class: f.class,
        }
    }
}

impl From<&Flow> for FlowFile {
    fn from(f: &Flow) -> Self {
        FlowFile {
            id: f.id.clone(),
            src: f.src.clone(),
            dst: f.dst.clone(),
            period_us: f.period.as_rational(),
            deadline_us: f.deadline.as_rational(),
            size_bytes: f.size,
            priority: f.priority,
            class: f.class,
        }
    }
}

pub fn network_from_json(text: &str) -> Result<Network> {
    let file: NetworkFile = serde_json::from_str(text)?;
    Network::try_from(file)
}

pub fn network_to_json(network: &Network) -> String {
    serde_json::to_string_pretty(&NetworkFile::from(network)).expect("network serializes")
}

/// Parses a flow list and checks the per-flow invariants.
pub fn flows_from_json(text: &str) -> Result<Vec<Flow>> {
    let files: Vec<FlowFile> = serde_json::from_str(text)?;
    let flows: Vec<Flow> = files.into_iter().map(Flow::from).collect();
    let mut seen = HashSet::new();
    for f in &flows {
        f.validate()?;
        if !seen.insert(f.id.clone()) {
            return Err(Error::InvalidFlow { flow: f.id.0.clone(), reason: "duplicate flow id".into() });
        }
    }
    Ok(flows)
}

pub fn flows_to_json(flows: &[Flow]) -> String {
    let files: Vec<FlowFile> = flows.iter().map(FlowFile::from).collect();
    serde_json::to_string_pretty(&files).expect("flows serialize")
}

//! Small reference topologies.
//!
//! These are reconstructions of common evaluation shapes (a chain of
//! switches and a single-switch star), not copies of any particular testbed.

use crate::error::Result;
use crate::network::{Network, Node};
use crate::time::Rate;

/// `switches` switches `s0..` in a chain, each with `per_switch` end-points
/// named `e<switch>_<n>`.
pub fn line(switches: usize, per_switch: usize, rate: Rate) -> Result<Network> {
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for s in 0..switches {
        let sw = format!("s{s}");
        nodes.push(Node::switch(&sw));
        if s > 0 {
            Network::duplex(&mut links, &format!("s{}", s - 1), &sw, rate);
        }
        for e in 0..per_switch {
            let ep = format!("e{s}_{e}");
            nodes.push(Node::endpoint(&ep));
            Network::duplex(&mut links, &ep, &sw, rate);
        }
    }
    Network::new(nodes, links)
}

/// One switch `s0` with `endpoints` end-points `e0..`.
pub fn star(endpoints: usize, rate: Rate) -> Result<Network> {
    let mut nodes = vec![Node::switch("s0")];
    let mut links = Vec::new();
    for e in 0..endpoints {
        let ep = format!("e{e}");
        nodes.push(Node::endpoint(&ep));
        Network::duplex(&mut links, &ep, "s0", rate);
    }
    Network::new(nodes, links)
}

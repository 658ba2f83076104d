//! Chain topology: nodes N1..Nk, each adjacent to its predecessor and
//! successor. Node ids are 1-based throughout so that ledgers and link maps
//! read like the model equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based node index in the chain.
pub type NodeId = usize;

/// A directed link between chain-adjacent nodes.
pub type Link = (NodeId, NodeId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTopology {
    node_count: usize,
}

impl ChainTopology {
    /// Number of nodes k.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// All node ids, 1..=k.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        1..=self.node_count
    }

    /// Neighbors of `node` in increasing order.
    pub fn neighbors(&self, node: NodeId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(2);
        if node > 1 {
            out.push(node - 1);
        }
        if node < self.node_count {
            out.push(node + 1);
        }
        out
    }

    /// Nodes within carrier-sensing range of `node`. Sensing reaches two
    /// hops: a node defers to any transmitter whose signal can collide at
    /// one of its own neighbors.
    pub fn sensing_peers(&self, node: NodeId) -> Vec<NodeId> {
        let lo = node.saturating_sub(2).max(1);
        let hi = (node + 2).min(self.node_count);
        (lo..=hi).filter(|&n| n != node).collect()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        (1..=self.node_count).contains(&node)
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.contains(b) && a.abs_diff(b) == 1
    }

    /// Directed forward links (1,2), (2,3), ..., (k-1,k).
    pub fn forward_links(&self) -> impl Iterator<Item = Link> {
        (1..self.node_count).map(|i| (i, i + 1))
    }

    /// Directed backward links (k,k-1), ..., (2,1).
    pub fn backward_links(&self) -> impl Iterator<Item = Link> {
        (1..self.node_count).rev().map(|i| (i + 1, i))
    }
}

/// Builds the k-node chain. Requires k >= 3 so at least one intermediate
/// node exists.
pub fn build_chain(k: usize) -> Result<ChainTopology> {
    if k < 3 {
        return Err(Error::Config(format!(
            "chain needs at least 3 nodes, got {k}"
        )));
    }
    Ok(ChainTopology { node_count: k })
}

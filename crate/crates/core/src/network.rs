//! Tree topologies and summation consensus propagation.
//!
//! A [`TreeNetwork`] is an undirected tree whose every edge carries two
//! directed message slots. [`cp_sweep`] performs one synchronous round of
//! consensus propagation over all directed edges and [`cp_aggregate`] sums the
//! incoming messages at each node. After at least `diameter` sweeps with fixed
//! local values, `aggregate[l] + local[l]` equals the network-wide sum at every
//! node.
//!
//! The same engine is used for N-dimensional signal messages in the simulator
//! and for the scalar bundles carried by the state-evolution recursion, via the
//! [`Payload`] trait.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("a network needs at least one node")]
    Empty,
    #[error("edge ({a}, {b}) references a node outside 0..{node_count}")]
    NodeOutOfRange { a: usize, b: usize, node_count: usize },
    #[error("self-loop at node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate edge ({a}, {b})")]
    DuplicateEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) closes a cycle")]
    CycleDetected { a: usize, b: usize },
    #[error("node {node} is not connected to node 0")]
    Disconnected { node: usize },
    #[error("topology file: {0}")]
    Io(String),
    #[error("topology file: {0}")]
    Parse(String),
}

/// On-disk topology description: 0-based node indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub node_count: usize,
    pub edges: Vec<[usize; 2]>,
}

/// A validated undirected tree with directed-edge bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNetwork {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    /// `(from, to)` for every directed slot.
    directed: Vec<(usize, usize)>,
    /// Directed slot ids of the messages arriving at each node.
    incoming: Vec<Vec<usize>>,
    /// `reverse[e]` is the slot id of the opposite direction of `e`.
    reverse: Vec<usize>,
    diameter: usize,
}

impl TreeNetwork {
    /// Validates `edges` as a spanning tree on `node_count` nodes.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        if node_count == 0 {
            return Err(NetworkError::Empty);
        }
        let mut parent: Vec<usize> = (0..node_count).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }

        let mut neighbors = vec![Vec::new(); node_count];
        let mut kept = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(NetworkError::NodeOutOfRange { a, b, node_count });
            }
            if a == b {
                return Err(NetworkError::SelfLoop { node: a });
            }
            if neighbors[a].contains(&b) {
                return Err(NetworkError::DuplicateEdge { a, b });
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(NetworkError::CycleDetected { a, b });
            }
            parent[ra] = rb;
            neighbors[a].push(b);
            neighbors[b].push(a);
            kept.push((a, b));
        }
        let root = find(&mut parent, 0);
        if let Some(node) = (1..node_count).find(|&n| find(&mut parent, n) != root) {
            return Err(NetworkError::Disconnected { node });
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let mut directed = Vec::with_capacity(2 * kept.len());
        for (from, list) in neighbors.iter().enumerate() {
            for &to in list {
                directed.push((from, to));
            }
        }
        let slot = |from: usize, to: usize| directed.iter().position(|&e| e == (from, to)).unwrap();
        let reverse: Vec<usize> = directed.iter().map(|&(f, t)| slot(t, f)).collect();
        let mut incoming = vec![Vec::new(); node_count];
        for (id, &(_, to)) in directed.iter().enumerate() {
            incoming[to].push(id);
        }

        let mut net = Self {
            node_count,
            edges: kept,
            neighbors,
            directed,
            incoming,
            reverse,
            diameter: 0,
        };
        net.diameter = net.compute_diameter();
        Ok(net)
    }

    /// One-dimensional chain `0 - 1 - ... - (L-1)`.
    pub fn chain(node_count: usize) -> Result<Self, NetworkError> {
        let edges: Vec<_> = (1..node_count).map(|l| (l - 1, l)).collect();
        Self::new(node_count, &edges)
    }

    /// Eight-node tree without a central node.
    ///
    /// Heap layout of a binary tree: node `l > 0` hangs off node `(l - 1) / 2`.
    /// The largest degree is 3 and the diameter is 5.
    pub fn tree8() -> Self {
        let edges: Vec<_> = (1..8).map(|l| ((l - 1) / 2, l)).collect();
        Self::new(8, &edges).expect("built-in tree is valid")
    }

    pub fn from_file(file: &TopologyFile) -> Result<Self, NetworkError> {
        let edges: Vec<_> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::new(file.node_count, &edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| NetworkError::Io(e.to_string()))?;
        let file: TopologyFile =
            serde_json::from_str(&text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            node_count: self.node_count,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// Number of directed message slots, `2 (L - 1)`.
    pub fn directed_edge_count(&self) -> usize {
        self.directed.len()
    }

    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    /// Length of the longest shortest path, in hops.
    pub fn diameter(&self) -> usize {
        self.diameter
    }

    fn distances_from(&self, start: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &m in &self.neighbors[n] {
                if dist[m] == usize::MAX {
                    dist[m] = dist[n] + 1;
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    fn compute_diameter(&self) -> usize {
        // Two BFS passes suffice on a tree.
        let first = self.distances_from(0);
        let far = (0..self.node_count).max_by_key(|&n| first[n]).unwrap_or(0);
        self.distances_from(far).into_iter().max().unwrap_or(0)
    }
}

/// Values carried by consensus propagation: a commutative monoid under `+`.
pub trait Payload: Clone {
    /// The additive identity with the same shape as `self`.
    fn zero_like(&self) -> Self;
    fn add_assign(&mut self, other: &Self);
}

impl Payload for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_assign(&mut self, other: &Self) {
        *self += *other;
    }
}

impl<const K: usize> Payload for [f64; K] {
    fn zero_like(&self) -> Self {
        [0.0; K]
    }
    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += *b;
        }
    }
}

impl Payload for Vec<f64> {
    fn zero_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.iter_mut().zip(other) {
            *a += *b;
        }
    }
}

/// One payload per directed edge, indexed like [`TreeNetwork::directed_edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStore<P> {
    messages: Vec<P>,
}

impl<P: Payload> EdgeStore<P> {
    /// All slots set to the identity shaped like `template`.
    pub fn zeros(net: &TreeNetwork, template: &P) -> Self {
        Self {
            messages: vec![template.zero_like(); net.directed_edge_count()],
        }
    }

    /// Message on the directed edge `from -> to`, if that edge exists.
    pub fn get(&self, net: &TreeNetwork, from: usize, to: usize) -> Option<&P> {
        net.directed
            .iter()
            .position(|&e| e == (from, to))
            .map(|id| &self.messages[id])
    }

    pub fn messages(&self) -> &[P] {
        &self.messages
    }
}

/// One synchronous sweep:
/// `new[l -> l'] = local[l] + sum over l'' in N[l] \ {l'} of old[l'' -> l]`.
pub fn cp_sweep<P: Payload>(net: &TreeNetwork, local: &[P], store: &EdgeStore<P>) -> EdgeStore<P> {
    assert_eq!(local.len(), net.node_count, "one local payload per node");
    let messages = net
        .directed
        .iter()
        .enumerate()
        .map(|(id, &(from, _))| {
            let back = net.reverse[id];
            let mut msg = local[from].clone();
            for &inc in &net.incoming[from] {
                if inc != back {
                    msg.add_assign(&store.messages[inc]);
                }
            }
            msg
        })
        .collect();
    EdgeStore { messages }
}

/// `agg[l] = sum over l' in N[l] of store[l' -> l]`.
pub fn cp_aggregate<P: Payload>(net: &TreeNetwork, store: &EdgeStore<P>, template: &P) -> Vec<P> {
    net.incoming
        .iter()
        .map(|ids| {
            let mut acc = template.zero_like();
            for &id in ids {
                acc.add_assign(&store.messages[id]);
            }
            acc
        })
        .collect()
}

/// Warm-started consensus state that persists across rounds.
#[derive(Debug, Clone)]
pub struct Consensus<P> {
    store: EdgeStore<P>,
    template: P,
    sweeps_done: usize,
}

impl<P: Payload> Consensus<P> {
    pub fn new(net: &TreeNetwork, template: P) -> Self {
        Self {
            store: EdgeStore::zeros(net, &template),
            template,
            sweeps_done: 0,
        }
    }

    /// Runs `sweeps` sweeps starting from the previous round's messages and
    /// returns the per-node aggregates.
    pub fn round(&mut self, net: &TreeNetwork, local: &[P], sweeps: usize) -> Vec<P> {
        for _ in 0..sweeps {
            self.store = cp_sweep(net, local, &self.store);
        }
        self.sweeps_done += sweeps;
        cp_aggregate(net, &self.store, &self.template)
    }

    pub fn store(&self) -> &EdgeStore<P> {
        &self.store
    }

    /// Cumulative number of sweeps executed.
    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }
}

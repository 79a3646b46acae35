use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AsymmError, Result};

const MAX_REGENERATIONS: u64 = 1000;

/// Fixed, undirected, connected communication graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Sorted adjacency lists.
    pub adjacency: Vec<Vec<usize>>,
    pub diameter: usize,
}

impl Network {
    /// Builds and validates a network. Duplicate edges are merged; self-loops,
    /// out-of-range endpoints and disconnected graphs are rejected.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(AsymmError::config("network needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(AsymmError::config(format!("self-loop at node {a}")));
            }
            if a >= num_nodes || b >= num_nodes {
                return Err(AsymmError::config(format!("edge ({a},{b}) outside 0..{num_nodes}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        adjacency.iter_mut().for_each(|l| l.sort_unstable());
        let diameter = diameter_of(&adjacency)
            .ok_or_else(|| AsymmError::config("network is not connected"))?;
        Ok(Self {
            edges: set.into_iter().collect(),
            adjacency,
            diameter,
        })
    }

    pub fn path(num_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..num_nodes).map(|i| (i - 1, i)).collect();
        Self::from_edges(num_nodes, &edges)
    }

    pub fn complete(num_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (0..num_nodes)
            .flat_map(|i| (i + 1..num_nodes).map(move |j| (i, j)))
            .collect();
        Self::from_edges(num_nodes, &edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }
}

/// Largest BFS eccentricity, or `None` when some node is unreachable.
fn diameter_of(adjacency: &[Vec<usize>]) -> Option<usize> {
    let n = adjacency.len();
    let mut best = 0;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for &d in &dist {
            if d == usize::MAX {
                return None;
            }
            best = best.max(d);
        }
    }
    Some(best)
}

/// Exact diameter by BFS from every node.
pub fn compute_diameter(net: &Network) -> Result<usize> {
    diameter_of(&net.adjacency).ok_or_else(|| AsymmError::contract("network is not connected"))
}

/// Watts–Strogatz small world: a ring where each node links to its `k/2`
/// nearest neighbors on each side, then each lattice edge `(i, i+s)` is
/// rewired with probability `rewire_p` to `(i, w)` for a uniform `w` that
/// creates no self-loop or duplicate. Disconnected draws are discarded and
/// redrawn from the next sub-seed.
pub fn generate_watts_strogatz(seed: u64, num_nodes: usize, k: usize, rewire_p: f64) -> Result<Network> {
    if k < 2 || k % 2 != 0 || num_nodes <= k {
        return Err(AsymmError::config(format!(
            "Watts-Strogatz needs an even k >= 2 and N > k, got N={num_nodes}, k={k}"
        )));
    }
    if !(0.0..=1.0).contains(&rewire_p) {
        return Err(AsymmError::config("rewiring probability must lie in [0,1]"));
    }
    for attempt in 0..MAX_REGENERATIONS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_nodes];
        for i in 0..num_nodes {
            for s in 1..=k / 2 {
                let j = (i + s) % num_nodes;
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
        for s in 1..=k / 2 {
            for i in 0..num_nodes {
                let j = (i + s) % num_nodes;
                if !adj[i].contains(&j) || rng.random::<f64>() >= rewire_p {
                    continue;
                }
                if adj[i].len() >= num_nodes - 1 {
                    continue;
                }
                let w = loop {
                    let w = rng.random_range(0..num_nodes);
                    if w != i && !adj[i].contains(&w) {
                        break w;
                    }
                };
                adj[i].remove(&j);
                adj[j].remove(&i);
                adj[i].insert(w);
                adj[w].insert(i);
            }
        }
        let edges: Vec<(usize, usize)> = adj
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect();
        match Network::from_edges(num_nodes, &edges) {
            Ok(net) => return Ok(net),
            Err(_) => log::debug!("Watts-Strogatz draw {attempt} disconnected, redrawing"),
        }
    }
    Err(AsymmError::config(format!(
        "no connected Watts-Strogatz graph after {MAX_REGENERATIONS} draws"
    )))
}

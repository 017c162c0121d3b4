//! Environment graphs: generation, validation, and metric shortest paths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::{Error, Result};

/// Maximum node degree representable in the panoramic action space.
pub const MAX_DEGREE: usize = 36;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub pos: Vec3,
    pub scene_seed: u64,
}

/// An undirected metric graph with object placements. Immutable after
/// construction; edge lengths are Euclidean distances between endpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentGraph {
    pub nodes: Vec<Node>,
    /// Undirected edges as (u, v) with u < v.
    pub edges: Vec<(usize, usize)>,
    /// Object placements as (object type id, node id).
    pub objects: Vec<(usize, usize)>,
    /// Adjacency list: (neighbor, edge length). Sorted by neighbor id.
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl EnvironmentGraph {
    /// Assembles a graph and checks every structural invariant.
    pub fn new(
        nodes: Vec<Node>,
        edges: Vec<(usize, usize)>,
        objects: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let mut g = EnvironmentGraph {
            nodes,
            edges,
            objects,
            adjacency: Vec::new(),
        };
        g.rebuild_adjacency()?;
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn rebuild_adjacency(&mut self) -> Result<()> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for (idx, &(u, v)) in self.edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::validation(format!(
                    "edge #{idx} ({u},{v}) references a missing node"
                )));
            }
            let len = self.nodes[u].pos.dist(&self.nodes[v].pos);
            adj[u].push((v, len));
            adj[v].push((u, len));
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
        }
        self.adjacency = adj;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::validation("graph has no nodes"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::validation(format!(
                    "node #{i} has id {}; ids must be 0..N-1 in order",
                    node.id
                )));
            }
            if !node.pos.is_finite() {
                return Err(Error::validation(format!("node #{i} has non-finite position")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (idx, &(u, v)) in self.edges.iter().enumerate() {
            if u == v {
                return Err(Error::validation(format!("edge #{idx} is a self-loop at {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::validation(format!(
                    "edge #{idx} ({u},{v}) duplicates an earlier edge"
                )));
            }
            if self.nodes[u].pos.dist(&self.nodes[v].pos) <= 0.0 {
                return Err(Error::validation(format!(
                    "edge #{idx} ({u},{v}) has non-positive length"
                )));
            }
        }
        for (i, list) in self.adjacency.iter().enumerate() {
            if list.len() > MAX_DEGREE {
                return Err(Error::validation(format!(
                    "node {i} has degree {} > {MAX_DEGREE}; the panoramic action space cannot hold it",
                    list.len()
                )));
            }
        }
        for (idx, &(ty, node)) in self.objects.iter().enumerate() {
            let _ = ty;
            if node >= n {
                return Err(Error::validation(format!(
                    "object #{idx} placed at missing node {node}"
                )));
            }
        }
        if !self.is_connected() {
            return Err(Error::validation("graph is not connected"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn position(&self, v: usize) -> Vec3 {
        self.nodes[v].pos
    }

    /// Length of the edge (u, v), if present.
    pub fn edge_length(&self, u: usize, v: usize) -> Option<f64> {
        self.adjacency[u]
            .iter()
            .find(|&&(w, _)| w == v)
            .map(|&(_, len)| len)
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(w, _) in &self.adjacency[v] {
                if !visited[w] {
                    visited[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.nodes.len()
    }

    pub fn mean_edge_length(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .edges
            .iter()
            .map(|&(u, v)| self.nodes[u].pos.dist(&self.nodes[v].pos))
            .sum();
        total / self.edges.len() as f64
    }

    /// Nodes where instances of `object_type` are placed.
    pub fn object_nodes(&self, object_type: usize) -> Vec<usize> {
        self.objects
            .iter()
            .filter(|&&(ty, _)| ty == object_type)
            .map(|&(_, node)| node)
            .collect()
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reverse ordering for a min-heap; ties by node id for determinism.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact single-source shortest-path distances in meters (Dijkstra).
///
/// The connectivity invariant guarantees every node is reachable.
pub fn shortest_distances(g: &EnvironmentGraph, source: usize) -> Vec<f64> {
    let n = g.len();
    assert!(source < n, "source {source} out of range");
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in g.neighbors(v) {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(HeapEntry { dist: nd, node: w });
            }
        }
    }
    dist
}


/// Shortest-path distance from every node to the nearest of `sources`
/// (multi-source Dijkstra).
pub fn multi_source_distances(g: &EnvironmentGraph, sources: &[usize]) -> Vec<f64> {
    let n = g.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        assert!(s < n, "source {s} out of range");
        if dist[s] > 0.0 {
            dist[s] = 0.0;
            heap.push(HeapEntry { dist: 0.0, node: s });
        }
    }
    while let Some(HeapEntry { dist: d, node: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in g.neighbors(v) {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(HeapEntry { dist: nd, node: w });
            }
        }
    }
    dist
}

/// Unweighted hop counts from `source` (BFS).
pub fn shortest_hops(g: &EnvironmentGraph, source: usize) -> Vec<usize> {
    let n = g.len();
    let mut hops = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    hops[source] = 0;
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        for &(w, _) in g.neighbors(v) {
            if hops[w] == usize::MAX {
                hops[w] = hops[v] + 1;
                queue.push_back(w);
            }
        }
    }
    hops
}

const MAX_GENERATION_ATTEMPTS: usize = 200;

/// Generates a random connected geometric graph with object placements.
///
/// Node positions are sampled in a square box whose side scales with
/// sqrt(n) so typical edge lengths stay near 2 m regardless of size; z
/// varies mildly so the elevation grid is exercised. Positions are
/// rejection-resampled until the radius graph is connected, every node
/// fits the panoramic degree cap, and every object type got a node.
/// Deterministic for a fixed seed.
pub fn generate_environment(
    n_nodes: usize,
    connectivity_radius: f64,
    n_object_types: usize,
    seed: u64,
) -> Result<EnvironmentGraph> {
    if n_nodes < 2 {
        return Err(Error::contract("n_nodes must be >= 2"));
    }
    if connectivity_radius <= 0.0 {
        return Err(Error::contract("connectivity radius must be > 0"));
    }
    if n_object_types == 0 || n_object_types > n_nodes {
        return Err(Error::contract(
            "n_object_types must be in 1..=n_nodes",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // ~0.2 nodes / m^2 matches indoor-scale spacing.
    let side = (n_nodes as f64 / 0.2).sqrt();
    for _attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut nodes = Vec::with_capacity(n_nodes);
        for id in 0..n_nodes {
            nodes.push(Node {
                id,
                pos: Vec3::new(
                    rng.gen_range(0.0..side),
                    rng.gen_range(0.0..side),
                    rng.gen_range(-0.6..0.6),
                ),
                scene_seed: rng.gen::<u64>(),
            });
        }
        let mut edges = Vec::new();
        for u in 0..n_nodes {
            for v in (u + 1)..n_nodes {
                if nodes[u].pos.dist(&nodes[v].pos) <= connectivity_radius {
                    edges.push((u, v));
                }
            }
        }
        let mut objects = Vec::with_capacity(n_object_types);
        for ty in 0..n_object_types {
            objects.push((ty, rng.gen_range(0..n_nodes)));
        }
        match EnvironmentGraph::new(nodes, edges, objects) {
            Ok(g) => return Ok(g),
            Err(_) => continue,
        }
    }
    Err(Error::GenerationExhausted {
        attempts: MAX_GENERATION_ATTEMPTS,
        reason: format!(
            "no connected graph with degree <= {MAX_DEGREE} for n={n_nodes}, radius={connectivity_radius}"
        ),
    })
}

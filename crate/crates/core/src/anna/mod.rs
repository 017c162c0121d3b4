//! The simulated assistant.
//!
//! Assistance is a set of language-assisted routes anchored at graph
//! nodes. The route system is built over a shortest-path spanning tree:
//! every node emits a route to each of its 2^i-th ancestors plus the
//! reverse route, which keeps the total at most 2 * N * ceil(log2 N)
//! routes while still letting any pair of nodes be connected by at most
//! 2 * ceil(log2 N) chained routes. A help request selects the enterable
//! route (and departure point on it) that gets the agent closest to the
//! goal set, and replies with the route's instruction plus rendered
//! departure and goal views.

mod instruction;
mod io;

pub use instruction::{
    landmark_token, synth_instruction, task_command, turn_token, vocabulary, LANDMARK_TOKEN_BASE,
    MAX_OBJECT_TYPES, NUM_LANDMARKS, OBJECT_TOKEN_BASE, TOK_BACK, TOK_FIND, TOK_LEFT, TOK_RIGHT,
    TOK_SLIGHT_LEFT, TOK_SLIGHT_RIGHT, TOK_STOP, TOK_STRAIGHT, VOCAB_SIZE,
};
pub use io::{load_routes, load_vocabulary, save_routes, save_vocabulary};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{
    facing_view, multi_source_distances, render_observation, shortest_distances, EnvironmentGraph,
    Pose, SimConfig, ViewFeatureSet,
};
use crate::{Error, Result};

/// A language-assisted route: initial camera angles, a node path, and an
/// instruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Route {
    /// Initial heading slot (1..=12); faces the first hop.
    pub start_heading: u8,
    /// Initial elevation slot (-1..=1).
    pub start_elevation: i8,
    /// Consecutive-adjacent node path, at least 2 nodes.
    pub path: Vec<usize>,
    /// Instruction token ids, non-empty.
    pub instruction: Vec<u32>,
}

impl Route {
    pub fn start(&self) -> usize {
        self.path[0]
    }

    pub fn end(&self) -> usize {
        *self.path.last().unwrap()
    }

    pub fn validate(&self, g: &EnvironmentGraph) -> Result<()> {
        if self.path.len() < 2 {
            return Err(Error::validation("route path must have >= 2 nodes"));
        }
        for hop in self.path.windows(2) {
            if g.edge_length(hop[0], hop[1]).is_none() {
                return Err(Error::validation(format!(
                    "route hop {} -> {} is not an edge",
                    hop[0], hop[1]
                )));
            }
        }
        if self.instruction.is_empty() {
            return Err(Error::validation("route instruction is empty"));
        }
        if !(1..=12).contains(&self.start_heading) || !(-1..=1).contains(&self.start_elevation) {
            return Err(Error::validation("route start angles off the grid"));
        }
        Ok(())
    }
}

/// All routes of an environment, indexed by start node.
#[derive(Debug, Clone)]
pub struct RouteSystem {
    pub routes: Vec<Route>,
    pub eps_attn: f64,
    by_start: Vec<Vec<usize>>,
}

impl RouteSystem {
    pub fn new(routes: Vec<Route>, eps_attn: f64, g: &EnvironmentGraph) -> Result<Self> {
        for r in &routes {
            r.validate(g)?;
        }
        let mut by_start = vec![Vec::new(); g.len()];
        for (i, r) in routes.iter().enumerate() {
            by_start[r.start()].push(i);
        }
        Ok(RouteSystem {
            routes,
            eps_attn,
            by_start,
        })
    }

    pub fn starting_at(&self, node: usize) -> &[usize] {
        &self.by_start[node]
    }
}

/// Shortest-path spanning tree rooted at node 0 with binary-lifting
/// ancestor tables. Tie-broken by smaller predecessor id, so the tree is
/// deterministic for a given graph.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    pub parent: Vec<Option<usize>>,
    /// Hop depth below the root.
    pub depth: Vec<usize>,
    /// `up[k][v]` = 2^k-th ancestor of v (v itself when out of range).
    up: Vec<Vec<usize>>,
}

impl SpanningTree {
    pub fn build(g: &EnvironmentGraph) -> Self {
        let n = g.len();
        let dist = shortest_distances(g, 0);
        let mut parent = vec![None; n];
        for v in 1..n {
            // Smallest-id neighbor on a shortest path from the root.
            let mut best: Option<usize> = None;
            for &(u, len) in g.neighbors(v) {
                if (dist[u] + len - dist[v]).abs() < 1e-9 {
                    best = match best {
                        None => Some(u),
                        Some(b) => Some(b.min(u)),
                    };
                }
            }
            parent[v] = Some(best.expect("connected graph has a shortest-path predecessor"));
        }
        // Hop depths along tree edges.
        let mut children = vec![Vec::new(); n];
        for v in 1..n {
            children[parent[v].unwrap()].push(v);
        }
        let mut depth = vec![0usize; n];
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                stack.push(c);
            }
        }
        let levels = (usize::BITS - n.leading_zeros()) as usize;
        let mut up = vec![vec![0usize; n]; levels.max(1)];
        for v in 0..n {
            up[0][v] = parent[v].unwrap_or(v);
        }
        for k in 1..up.len() {
            for v in 0..n {
                up[k][v] = up[k - 1][up[k - 1][v]];
            }
        }
        SpanningTree { parent, depth, up }
    }

    /// The 2^k-th ancestor walked hop by hop is `ancestor(v, 1 << k)`.
    pub fn ancestor(&self, v: usize, mut hops: usize) -> usize {
        let mut v = v;
        let mut k = 0;
        while hops > 0 {
            if hops & 1 == 1 {
                v = self.up[k][v];
            }
            hops >>= 1;
            k += 1;
            if k >= self.up.len() {
                break;
            }
        }
        v
    }

    pub fn lca(&self, mut u: usize, mut v: usize) -> usize {
        if self.depth[u] < self.depth[v] {
            std::mem::swap(&mut u, &mut v);
        }
        u = self.ancestor(u, self.depth[u] - self.depth[v]);
        if u == v {
            return u;
        }
        for k in (0..self.up.len()).rev() {
            if self.up[k][u] != self.up[k][v] {
                u = self.up[k][u];
                v = self.up[k][v];
            }
        }
        self.up[0][u]
    }

    /// Tree path from `v` up to its ancestor `a` via parent links.
    fn path_up(&self, v: usize, a: usize) -> Vec<usize> {
        let mut path = vec![v];
        let mut cur = v;
        while cur != a {
            cur = self.parent[cur].expect("a is an ancestor of v");
            path.push(cur);
        }
        path
    }
}

/// Builds the route system: one route (plus its reverse) from every node
/// to each of its 2^i-th tree ancestors, for every i with 2^i <= depth.
/// Initial camera angles face the route's first hop and the instruction
/// comes from the synthetic grammar. The `seed` parameter is accepted for
/// interface stability; the construction itself is fully deterministic.
pub fn build_route_system(
    g: &EnvironmentGraph,
    _seed: u64,
    cfg: &SimConfig,
) -> Result<RouteSystem> {
    let tree = SpanningTree::build(g);
    let mut routes = Vec::new();
    for v in 0..g.len() {
        let depth = tree.depth[v];
        if depth == 0 {
            continue;
        }
        let mut i = 0usize;
        while (1usize << i) <= depth {
            let a = tree.ancestor(v, 1 << i);
            let forward = tree.path_up(v, a);
            let mut reverse = forward.clone();
            reverse.reverse();
            for path in [forward, reverse] {
                let (h, e) = facing_view(g, path[0], path[1]);
                let tokens = synth_instruction(g, h, &path);
                routes.push(Route {
                    start_heading: h,
                    start_elevation: e,
                    path,
                    instruction: tokens,
                });
            }
            i += 1;
        }
    }
    RouteSystem::new(routes, cfg.eps_attn, g)
}

/// Route indices enterable from `pose`: routes starting at the pose's own
/// node, or at an adjacent node within `eps_attn` meters. Ascending order.
pub fn enterable_routes(rs: &RouteSystem, g: &EnvironmentGraph, pose: &Pose) -> Vec<usize> {
    let mut out: Vec<usize> = rs.starting_at(pose.node).to_vec();
    for &(v, len) in g.neighbors(pose.node) {
        if len <= rs.eps_attn {
            out.extend_from_slice(rs.starting_at(v));
        }
    }
    out.sort_unstable();
    out
}

/// True iff some route is enterable from `pose` (the pose lies in a zone
/// of attention). Cheaper than materializing the candidate list.
pub fn in_zone(rs: &RouteSystem, g: &EnvironmentGraph, pose: &Pose) -> bool {
    if !rs.starting_at(pose.node).is_empty() {
        return true;
    }
    g.neighbors(pose.node)
        .iter()
        .any(|&(v, len)| len <= rs.eps_attn && !rs.starting_at(v).is_empty())
}

/// Minimum distance from any node of route `r` to the goal set, given the
/// distance-to-goal-set field.
fn route_goal_distance(route: &Route, goal_dist: &[f64]) -> f64 {
    route
        .path
        .iter()
        .map(|&v| goal_dist[v])
        .fold(f64::INFINITY, f64::min)
}

/// Picks the candidate route minimizing distance-to-goal over its nodes;
/// ties broken by the earliest candidate (smallest route index when the
/// list is ascending). Returns the route index.
pub fn select_route(
    rs: &RouteSystem,
    candidates: &[usize],
    g: &EnvironmentGraph,
    goals: &[usize],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::contract("select_route requires a non-empty candidate set"));
    }
    let goal_dist = multi_source_distances(g, goals);
    let mut best = candidates[0];
    let mut best_d = route_goal_distance(&rs.routes[best], &goal_dist);
    for &idx in &candidates[1..] {
        let d = route_goal_distance(&rs.routes[idx], &goal_dist);
        if d < best_d {
            best = idx;
            best_d = d;
        }
    }
    Ok(best)
}

/// Departure node (earliest path position minimizing distance to the
/// goal set) and the goal closest to it (ties by smallest goal id).
pub fn select_departure_and_goal(
    route: &Route,
    g: &EnvironmentGraph,
    goals: &[usize],
) -> (usize, usize) {
    let goal_dist = multi_source_distances(g, goals);
    let mut v_d = route.path[0];
    let mut best = goal_dist[v_d];
    for &v in &route.path[1..] {
        if goal_dist[v] < best {
            best = goal_dist[v];
            v_d = v;
        }
    }
    let from_vd = shortest_distances(g, v_d);
    let mut g_star = goals[0];
    let mut best_g = from_vd[g_star];
    for &goal in &goals[1..] {
        if from_vd[goal] < best_g {
            best_g = from_vd[goal];
            g_star = goal;
        }
    }
    (v_d, g_star)
}

/// The assistant's reply to a help request.
#[derive(Debug, Clone)]
pub struct HelpResponse {
    pub route_index: usize,
    pub instruction: Vec<u32>,
    pub departure_node: usize,
    pub departure_view: ViewFeatureSet,
    pub goal_node: usize,
    pub goal_view: ViewFeatureSet,
}

/// Full assistance assembly. Errors if called outside every zone of
/// attention (no enterable route).
pub fn respond(
    rs: &RouteSystem,
    g: &EnvironmentGraph,
    pose: &Pose,
    goals: &[usize],
    cfg: &SimConfig,
) -> Result<HelpResponse> {
    let candidates = enterable_routes(rs, g, pose);
    if candidates.is_empty() {
        return Err(Error::contract(format!(
            "help requested at node {} outside every zone of attention",
            pose.node
        )));
    }
    let route_index = select_route(rs, &candidates, g, goals)?;
    let route = &rs.routes[route_index];
    let (v_d, g_star) = select_departure_and_goal(route, g, goals);
    Ok(HelpResponse {
        route_index,
        instruction: route.instruction.clone(),
        departure_node: v_d,
        departure_view: render_observation(g, v_d, cfg),
        goal_node: g_star,
        goal_view: render_observation(g, g_star, cfg),
    })
}

/// Composes chained routes walking `u` to `v` along the tree through
/// their lowest common ancestor, greedily decomposing each tree distance
/// into descending powers of two. Uses at most 2 * ceil(log2 N) routes.
pub struct RoutePlanner<'a> {
    rs: &'a RouteSystem,
    tree: SpanningTree,
    /// (node, log2 hops) -> index of the route from node up to its ancestor.
    up_jumps: BTreeMap<(usize, u32), usize>,
    /// (node, log2 hops) -> index of the route from the ancestor down to node.
    down_jumps: BTreeMap<(usize, u32), usize>,
}

impl<'a> RoutePlanner<'a> {
    pub fn new(rs: &'a RouteSystem, g: &EnvironmentGraph) -> Self {
        let tree = SpanningTree::build(g);
        let mut up_jumps = BTreeMap::new();
        let mut down_jumps = BTreeMap::new();
        for (idx, route) in rs.routes.iter().enumerate() {
            let hops = route.path.len() - 1;
            if !hops.is_power_of_two() {
                continue;
            }
            let level = hops.trailing_zeros();
            if route
                .path
                .windows(2)
                .all(|w| tree.parent[w[0]] == Some(w[1]))
            {
                up_jumps.entry((route.start(), level)).or_insert(idx);
            }
            if route
                .path
                .windows(2)
                .all(|w| tree.parent[w[1]] == Some(w[0]))
            {
                down_jumps.entry((route.end(), level)).or_insert(idx);
            }
        }
        RoutePlanner {
            rs,
            tree,
            up_jumps,
            down_jumps,
        }
    }

    pub fn compose_plan(&self, u: usize, v: usize) -> Result<Vec<usize>> {
        if u == v {
            return Err(Error::contract("compose_plan requires distinct endpoints"));
        }
        let w = self.tree.lca(u, v);
        let mut plan = Vec::new();
        // Climb u -> w by descending powers of two.
        let mut cur = u;
        let mut remaining = self.tree.depth[u] - self.tree.depth[w];
        while remaining > 0 {
            let jump = prev_power_of_two(remaining);
            let level = jump.trailing_zeros();
            let idx = *self.up_jumps.get(&(cur, level)).ok_or_else(|| {
                Error::contract(format!(
                    "route system lacks the 2^{level} ancestor jump at node {cur}"
                ))
            })?;
            plan.push(idx);
            cur = self.rs.routes[idx].end();
            remaining -= jump;
        }
        // Descend w -> v: at each step jump to the node x on the w..v
        // chain that is `jump` hops below the current node.
        let mut remaining = self.tree.depth[v] - self.tree.depth[w];
        while remaining > 0 {
            let jump = prev_power_of_two(remaining);
            let level = jump.trailing_zeros();
            let x = self.tree.ancestor(v, remaining - jump);
            let idx = *self.down_jumps.get(&(x, level)).ok_or_else(|| {
                Error::contract(format!(
                    "route system lacks the 2^{level} descent to node {x}"
                ))
            })?;
            plan.push(idx);
            remaining -= jump;
        }
        Ok(plan)
    }
}

fn prev_power_of_two(x: usize) -> usize {
    debug_assert!(x > 0);
    1usize << (usize::BITS - 1 - x.leading_zeros())
}

/// Convenience wrapper building a fresh planner.
pub fn compose_plan(
    rs: &RouteSystem,
    g: &EnvironmentGraph,
    u: usize,
    v: usize,
) -> Result<Vec<usize>> {
    RoutePlanner::new(rs, g).compose_plan(u, v)
}

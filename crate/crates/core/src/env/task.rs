//! Object-finding tasks and success testing.

use serde::{Deserialize, Serialize};

use super::{shortest_distances, EnvironmentGraph, Pose};

/// An object-finding request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Task {
    /// Stem of the environment file this task belongs to.
    pub env_id: String,
    pub object_type: usize,
    pub start: Pose,
    /// All nodes within eps_success meters of an instance of the object.
    pub goals: Vec<usize>,
    /// Step budget.
    pub budget: usize,
}

/// Goal node set for an object type: every node whose shortest-path
/// distance to some instance of the type is at most `eps_success`.
pub fn goal_set(g: &EnvironmentGraph, object_type: usize, eps_success: f64) -> Vec<usize> {
    let mut goals = std::collections::BTreeSet::new();
    for instance in g.object_nodes(object_type) {
        let dist = shortest_distances(g, instance);
        for (v, &d) in dist.iter().enumerate() {
            if d <= eps_success {
                goals.insert(v);
            }
        }
    }
    goals.into_iter().collect()
}

/// True iff the final node lies within `eps_success` meters (shortest
/// path) of some goal node.
pub fn is_success(
    g: &EnvironmentGraph,
    final_node: usize,
    goals: &[usize],
    eps_success: f64,
) -> bool {
    min_goal_distance(g, final_node, goals) <= eps_success
}

/// Shortest-path distance from `node` to the nearest goal.
pub fn min_goal_distance(g: &EnvironmentGraph, node: usize, goals: &[usize]) -> f64 {
    let dist = shortest_distances(g, node);
    goals
        .iter()
        .map(|&v| dist[v])
        .fold(f64::INFINITY, f64::min)
}

//! The navigation world: weighted metric graphs, discrete camera poses,
//! the 37-slot panoramic action space, synthetic view rendering, and
//! success semantics.

mod graph;
mod io;
mod pose;
mod render;
mod task;

pub use graph::{
    generate_environment, multi_source_distances, shortest_distances, shortest_hops,
    EnvironmentGraph, Node,
};
pub use io::{load_environment, save_environment};
pub use pose::{
    facing_view, heading_delta, panoramic_actions, step, view_index, NavAction,
    PanoramicActions, Pose,
    ELEV_SLOTS, HEADING_SLOTS, NUM_NAV_SLOTS, NUM_VIEWS, SLOT_RAD, STOP_SLOT,
};
pub use render::{render_observation, ViewFeatureSet};
pub(crate) use render::splitmix64;
pub use task::{goal_set, is_success, min_goal_distance, Task};

use serde::{Deserialize, Serialize};

/// A point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dist(&self, other: &Vec3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Simulator-level constants shared by episodes, assistants and metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Success radius in meters.
    pub eps_success: f64,
    /// Attention radius in meters (zone-of-attention reach).
    pub eps_attn: f64,
    /// Step budget for training episodes.
    pub t_train: usize,
    /// Step budget for evaluation episodes.
    pub t_eval: usize,
    /// Feature dimension of each rendered view vector.
    pub feature_dim: usize,
    /// Scale of the per-view rendering perturbation.
    pub noise_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            eps_success: 2.0,
            eps_attn: 2.0,
            t_train: 20,
            t_eval: 50,
            feature_dim: 32,
            noise_scale: 0.05,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.eps_success <= 0.0 || self.eps_attn <= 0.0 {
            return Err(crate::Error::validation("radii must be > 0"));
        }
        if self.t_train < 1 || self.t_eval < 1 {
            return Err(crate::Error::validation("step budgets must be >= 1"));
        }
        if self.feature_dim == 0 {
            return Err(crate::Error::validation("feature_dim must be >= 1"));
        }
        Ok(())
    }
}

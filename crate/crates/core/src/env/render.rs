//! Synthetic view rendering.
//!
//! Each (node, view angle) pair renders to a pseudo-random unit vector
//! derived from the node's scene seed plus a small fixed-seed
//! perturbation. Rendering is a pure function of (graph, node), so
//! revisiting a node reproduces its features exactly while distinct nodes
//! are almost surely dissimilar.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EnvironmentGraph, SimConfig, NUM_VIEWS};

/// 36 feature vectors, one per view angle, indexed by view index.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeatureSet {
    views: Vec<Array1<f64>>,
}

impl ViewFeatureSet {
    pub fn view(&self, idx: usize) -> &Array1<f64> {
        &self.views[idx]
    }

    pub fn views(&self) -> &[Array1<f64>] {
        &self.views
    }

    pub fn dim(&self) -> usize {
        self.views[0].len()
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    // Box-Muller keeps us independent of distribution-crate versions.
    let mut out = Array1::zeros(dim);
    let mut i = 0;
    while i < dim {
        let u1: f64 = rand::Rng::gen_range(rng, f64::EPSILON..1.0);
        let u2: f64 = rand::Rng::gen_range(rng, 0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out[i] = r * theta.cos();
        i += 1;
        if i < dim {
            out[i] = r * theta.sin();
            i += 1;
        }
    }
    out
}

/// Renders the panoramic feature set at a node.
///
/// view = normalize(g1) + noise_scale * g2, with g1 seeded by the node's
/// scene seed and view index and g2 by a fixed constant, so the output
/// depends only on (graph, node, view index).
pub fn render_observation(g: &EnvironmentGraph, node: usize, cfg: &SimConfig) -> ViewFeatureSet {
    let scene_seed = g.nodes[node].scene_seed;
    let mut views = Vec::with_capacity(NUM_VIEWS);
    for view_idx in 0..NUM_VIEWS {
        let base_seed = splitmix64(scene_seed ^ splitmix64(view_idx as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        let mut v = gaussian_vector(&mut rng, cfg.feature_dim);
        let norm = v.dot(&v).sqrt().max(1e-12);
        v.mapv_inplace(|x| x / norm);
        // Fixed-seed perturbation, still keyed by (node, view).
        let noise_seed = splitmix64(base_seed ^ 0xa5a5_5a5a_0f0f_f0f0);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = gaussian_vector(&mut noise_rng, cfg.feature_dim);
        views.push(v + noise * cfg.noise_scale);
    }
    ViewFeatureSet { views }
}

//! Fixed vocabulary and the synthetic instruction grammar.
//!
//! A route instruction lists, per hop, a turn token (how the heading
//! changes relative to the previous hop) and a landmark token (derived
//! from the destination node's scene seed), and ends with `stop`. Task
//! commands are `find <object>`. Token ids are fixed constants so files,
//! checkpoints and encoders always agree.

use crate::env::{facing_view, EnvironmentGraph};
use crate::{Error, Result};

pub const TOK_LEFT: u32 = 0;
pub const TOK_SLIGHT_LEFT: u32 = 1;
pub const TOK_STRAIGHT: u32 = 2;
pub const TOK_SLIGHT_RIGHT: u32 = 3;
pub const TOK_RIGHT: u32 = 4;
pub const TOK_BACK: u32 = 5;
pub const TOK_STOP: u32 = 6;
pub const TOK_FIND: u32 = 7;
pub const OBJECT_TOKEN_BASE: u32 = 8;
pub const MAX_OBJECT_TYPES: usize = 32;
pub const LANDMARK_TOKEN_BASE: u32 = OBJECT_TOKEN_BASE + MAX_OBJECT_TYPES as u32;
pub const NUM_LANDMARKS: usize = 64;
pub const VOCAB_SIZE: usize = LANDMARK_TOKEN_BASE as usize + NUM_LANDMARKS;

/// Token id -> token string table.
pub fn vocabulary() -> Vec<String> {
    let mut v = vec![
        "left".to_string(),
        "slight_left".to_string(),
        "straight".to_string(),
        "slight_right".to_string(),
        "right".to_string(),
        "back".to_string(),
        "stop".to_string(),
        "find".to_string(),
    ];
    for k in 0..MAX_OBJECT_TYPES {
        v.push(format!("obj_{k}"));
    }
    for k in 0..NUM_LANDMARKS {
        v.push(format!("lm_{k}"));
    }
    v
}

/// Turn token for a heading change of `delta` grid slots (wrapped to
/// -5..=6; positive is counterclockwise, i.e. left).
pub fn turn_token(delta: i8) -> u32 {
    match delta {
        0 => TOK_STRAIGHT,
        1 | 2 => TOK_SLIGHT_LEFT,
        3..=5 => TOK_LEFT,
        6 => TOK_BACK,
        -1 | -2 => TOK_SLIGHT_RIGHT,
        _ => TOK_RIGHT,
    }
}

pub fn landmark_token(scene_seed: u64) -> u32 {
    LANDMARK_TOKEN_BASE + (scene_seed % NUM_LANDMARKS as u64) as u32
}

/// `find <object>` command tokens.
pub fn task_command(object_type: usize) -> Result<Vec<u32>> {
    if object_type >= MAX_OBJECT_TYPES {
        return Err(Error::contract(format!(
            "object type {object_type} exceeds the {MAX_OBJECT_TYPES}-type vocabulary"
        )));
    }
    Ok(vec![TOK_FIND, OBJECT_TOKEN_BASE + object_type as u32])
}

/// Emits the instruction for walking `path`, starting with heading
/// `start_heading` (which faces the first hop by construction). Per hop:
/// a turn token relative to the previous hop's heading, then the
/// destination's landmark token; terminated by `stop`. Deterministic.
pub fn synth_instruction(
    g: &EnvironmentGraph,
    start_heading: u8,
    path: &[usize],
) -> Vec<u32> {
    let mut tokens = Vec::with_capacity(2 * path.len().saturating_sub(1) + 1);
    let mut heading = start_heading;
    for hop in path.windows(2) {
        let (h, _) = facing_view(g, hop[0], hop[1]);
        let delta = crate::env::heading_delta(heading, h);
        tokens.push(turn_token(delta));
        tokens.push(landmark_token(g.nodes[hop[1]].scene_seed));
        heading = h;
    }
    tokens.push(TOK_STOP);
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentGraph, Node, Vec3};

    fn bend_graph() -> EnvironmentGraph {
        // A(0) -> B(1) straight along +x, then a 60-degree left bend to C(2).
        let turn = 2.0 * std::f64::consts::PI / 6.0;
        let nodes = vec![
            Node { id: 0, pos: Vec3::new(0.0, 0.0, 0.0), scene_seed: 10 },
            Node { id: 1, pos: Vec3::new(2.0, 0.0, 0.0), scene_seed: 11 },
            Node {
                id: 2,
                pos: Vec3::new(2.0 + 2.0 * turn.cos(), 2.0 * turn.sin(), 0.0),
                scene_seed: 12,
            },
        ];
        EnvironmentGraph::new(nodes, vec![(0, 1), (1, 2)], vec![(0, 2)]).unwrap()
    }

    #[test]
    fn one_hop_route_is_straight_landmark_stop() {
        let g = bend_graph();
        let (h, _) = crate::env::facing_view(&g, 0, 1);
        let tokens = synth_instruction(&g, h, &[0, 1]);
        assert_eq!(
            tokens,
            vec![TOK_STRAIGHT, landmark_token(11), TOK_STOP]
        );
    }

    #[test]
    fn grammar_is_deterministic() {
        let g = bend_graph();
        let (h, _) = crate::env::facing_view(&g, 0, 1);
        assert_eq!(
            synth_instruction(&g, h, &[0, 1, 2]),
            synth_instruction(&g, h, &[0, 1, 2])
        );
    }

    #[test]
    fn reverse_route_mirrors_turn_buckets() {
        let g = bend_graph();
        let (hf, _) = crate::env::facing_view(&g, 0, 1);
        let forward = synth_instruction(&g, hf, &[0, 1, 2]);
        assert_eq!(
            forward,
            vec![
                TOK_STRAIGHT,
                landmark_token(11),
                TOK_SLIGHT_LEFT,
                landmark_token(12),
                TOK_STOP
            ]
        );
        let (hr, _) = crate::env::facing_view(&g, 2, 1);
        let reverse = synth_instruction(&g, hr, &[2, 1, 0]);
        // Turn tokens are the bucket-mirrored sequence of the forward
        // route's reversal: straight stays straight, slight-left becomes
        // slight-right at the same bend.
        assert_eq!(
            reverse,
            vec![
                TOK_STRAIGHT,
                landmark_token(11),
                TOK_SLIGHT_RIGHT,
                landmark_token(10),
                TOK_STOP
            ]
        );
    }

    #[test]
    fn vocabulary_is_fixed() {
        let v = vocabulary();
        assert_eq!(v.len(), VOCAB_SIZE);
        assert_eq!(v[TOK_STOP as usize], "stop");
        assert_eq!(v[LANDMARK_TOKEN_BASE as usize], "lm_0");
        assert_eq!(task_command(3).unwrap(), vec![TOK_FIND, OBJECT_TOKEN_BASE + 3]);
        assert!(task_command(MAX_OBJECT_TYPES).is_err());
    }
}

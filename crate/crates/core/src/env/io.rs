//! Environment file format.
//!
//! ```json
//! {"nodes":[{"id":0,"pos":[x,y,z],"scene_seed":1}],
//!  "edges":[[0,1]],
//!  "objects":[{"type":0,"node":1}]}
//! ```
//!
//! The loader re-validates every graph invariant and reports JSON errors
//! with line/column positions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnvironmentGraph, Node, Vec3};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    pos: [f64; 3],
    scene_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ObjectRecord {
    #[serde(rename = "type")]
    object_type: usize,
    node: usize,
}

#[derive(Serialize, Deserialize)]
struct EnvFile {
    nodes: Vec<NodeRecord>,
    edges: Vec<(usize, usize)>,
    objects: Vec<ObjectRecord>,
}

pub fn save_environment(g: &EnvironmentGraph, path: &Path) -> Result<()> {
    let file = EnvFile {
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                pos: [n.pos.x, n.pos.y, n.pos.z],
                scene_seed: n.scene_seed,
            })
            .collect(),
        edges: g.edges.clone(),
        objects: g
            .objects
            .iter()
            .map(|&(object_type, node)| ObjectRecord { object_type, node })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("environment serializes");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_environment(path: &Path) -> Result<EnvironmentGraph> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: EnvFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    let nodes = file
        .nodes
        .into_iter()
        .map(|n| Node {
            id: n.id,
            pos: Vec3::new(n.pos[0], n.pos[1], n.pos[2]),
            scene_seed: n.scene_seed,
        })
        .collect();
    let objects = file
        .objects
        .into_iter()
        .map(|o| (o.object_type, o.node))
        .collect();
    EnvironmentGraph::new(nodes, file.edges, objects)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_environment;

    #[test]
    fn environment_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.json");
        let g = generate_environment(12, 3.5, 2, 77).unwrap();
        save_environment(&g, &path).unwrap();
        let loaded = load_environment(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&g).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
    }

    #[test]
    fn loader_rejects_invalid_graphs_with_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"nodes":[{"id":0,"pos":[0,0,0],"scene_seed":1},
                        {"id":1,"pos":[1,0,0],"scene_seed":2}],
                "edges":[[0,0]],
                "objects":[]}"#,
        )
        .unwrap();
        let err = load_environment(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("self-loop"), "diagnostic names the problem: {msg}");
        assert!(msg.contains("bad.json"), "diagnostic names the file: {msg}");
    }

    #[test]
    fn loader_reports_json_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{\"nodes\": [\n  {broken\n]}").unwrap();
        let err = load_environment(&path).unwrap_err();
        let msg = format!("{err:?}");
        assert!(msg.contains("line"), "serde error carries line info: {msg}");
    }
}

//! Route and vocabulary file formats.
//!
//! Routes file: a JSON list of
//! `{"start_heading": <radians>, "start_elevation": <radians>,
//!   "path": [node ids], "instruction": [token ids]}`.
//! Vocabulary file: a JSON list of token strings indexed by token id.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Route, RouteSystem};
use crate::env::{EnvironmentGraph, SLOT_RAD};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct RouteRecord {
    start_heading: f64,
    start_elevation: f64,
    path: Vec<usize>,
    instruction: Vec<u32>,
}

pub fn save_routes(rs: &RouteSystem, path: &Path) -> Result<()> {
    let records: Vec<RouteRecord> = rs
        .routes
        .iter()
        .map(|r| RouteRecord {
            start_heading: r.start_heading as f64 * SLOT_RAD,
            start_elevation: r.start_elevation as f64 * SLOT_RAD,
            path: r.path.clone(),
            instruction: r.instruction.clone(),
        })
        .collect();
    let text = serde_json::to_string(&records).expect("routes serialize");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_routes(path: &Path, g: &EnvironmentGraph, eps_attn: f64) -> Result<RouteSystem> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let records: Vec<RouteRecord> = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    let mut routes = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let heading = angle_to_heading_slot(rec.start_heading).ok_or_else(|| {
            Error::validation(format!(
                "{}: route #{i} heading {} off the pi/6 grid",
                path.display(),
                rec.start_heading
            ))
        })?;
        let elevation = angle_to_elevation_slot(rec.start_elevation).ok_or_else(|| {
            Error::validation(format!(
                "{}: route #{i} elevation {} off the grid",
                path.display(),
                rec.start_elevation
            ))
        })?;
        routes.push(Route {
            start_heading: heading,
            start_elevation: elevation,
            path: rec.path,
            instruction: rec.instruction,
        });
    }
    RouteSystem::new(routes, eps_attn, g)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

fn angle_to_heading_slot(psi: f64) -> Option<u8> {
    let k = (psi / SLOT_RAD).round();
    if (psi - k * SLOT_RAD).abs() > 1e-9 {
        return None;
    }
    let k = (k as i64).rem_euclid(12);
    Some(if k == 0 { 12 } else { k as u8 })
}

fn angle_to_elevation_slot(omega: f64) -> Option<i8> {
    let k = (omega / SLOT_RAD).round() as i64;
    if (omega - k as f64 * SLOT_RAD).abs() > 1e-9 || !(-1..=1).contains(&k) {
        return None;
    }
    Some(k as i8)
}

pub fn save_vocabulary(path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(&super::vocabulary()).expect("vocabulary serializes");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_vocabulary(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anna::build_route_system;
    use crate::env::{generate_environment, SimConfig};

    #[test]
    fn routes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("routes.json");
        let g = generate_environment(15, 3.5, 2, 4).unwrap();
        let cfg = SimConfig::default();
        let rs = build_route_system(&g, 0, &cfg).unwrap();
        save_routes(&rs, &path).unwrap();
        let loaded = load_routes(&path, &g, cfg.eps_attn).unwrap();
        assert_eq!(rs.routes.len(), loaded.routes.len());
        for (a, b) in rs.routes.iter().zip(&loaded.routes) {
            assert_eq!(a.start_heading, b.start_heading);
            assert_eq!(a.start_elevation, b.start_elevation);
            assert_eq!(a.path, b.path);
            assert_eq!(a.instruction, b.instruction);
        }
    }

    #[test]
    fn vocabulary_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        save_vocabulary(&path).unwrap();
        assert_eq!(load_vocabulary(&path).unwrap(), crate::anna::vocabulary());
    }
}

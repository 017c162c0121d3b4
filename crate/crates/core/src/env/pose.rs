//! Discrete camera poses and the panoramic action space.
//!
//! Headings live on a 12-slot grid (multiples of pi/6 in (0, 2pi]),
//! elevations on a 3-slot grid (-pi/6, 0, pi/6). A view angle is a
//! (heading, elevation) pair; view index = heading_index * 3 +
//! elevation_index. The navigation action space holds one slot per view
//! angle plus `Stop`, 37 slots total.

use serde::{Deserialize, Serialize};

use super::EnvironmentGraph;
use crate::{Error, Result};

pub const HEADING_SLOTS: usize = 12;
pub const ELEV_SLOTS: usize = 3;
pub const NUM_VIEWS: usize = HEADING_SLOTS * ELEV_SLOTS;
/// Canonical index of the `Stop` action.
pub const STOP_SLOT: usize = NUM_VIEWS;
pub const NUM_NAV_SLOTS: usize = NUM_VIEWS + 1;
/// Grid spacing, pi/6.
pub const SLOT_RAD: f64 = std::f64::consts::PI / 6.0;

/// Agent pose: node plus camera angles, both angles grid-constrained.
///
/// Internally angles are stored as integer slots so grid membership can
/// never drift; radian accessors derive from the slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pose {
    pub node: usize,
    /// Heading slot in 1..=12; heading psi = slot * pi/6, in (0, 2pi].
    heading: u8,
    /// Elevation slot in -1..=1; elevation omega = slot * pi/6.
    elevation: i8,
}

impl Pose {
    pub fn new(node: usize, heading_slot: u8, elevation_slot: i8) -> Result<Self> {
        if !(1..=HEADING_SLOTS as u8).contains(&heading_slot) {
            return Err(Error::contract(format!(
                "heading slot {heading_slot} outside 1..=12"
            )));
        }
        if !(-1..=1).contains(&elevation_slot) {
            return Err(Error::contract(format!(
                "elevation slot {elevation_slot} outside -1..=1"
            )));
        }
        Ok(Pose {
            node,
            heading: heading_slot,
            elevation: elevation_slot,
        })
    }

    /// Builds a pose from radians, requiring exact grid membership.
    pub fn from_radians(node: usize, psi: f64, omega: f64) -> Result<Self> {
        let h = radians_to_slot(psi).ok_or_else(|| {
            Error::contract(format!("heading {psi} is not a multiple of pi/6"))
        })?;
        let e = (omega / SLOT_RAD).round() as i64;
        if (omega - e as f64 * SLOT_RAD).abs() > 1e-9 || !(-1..=1).contains(&e) {
            return Err(Error::contract(format!(
                "elevation {omega} is not on the 3-slot grid"
            )));
        }
        Pose::new(node, h, e as i8)
    }

    pub fn heading_slot(&self) -> u8 {
        self.heading
    }

    pub fn elevation_slot(&self) -> i8 {
        self.elevation
    }

    /// Heading in radians, in (0, 2pi].
    pub fn psi(&self) -> f64 {
        self.heading as f64 * SLOT_RAD
    }

    /// Elevation in radians, in [-pi/6, pi/6].
    pub fn omega(&self) -> f64 {
        self.elevation as f64 * SLOT_RAD
    }
}

/// Maps radians to a heading slot in 1..=12 if they sit on the grid
/// (modulo 2pi), within 1e-9.
fn radians_to_slot(psi: f64) -> Option<u8> {
    let k = (psi / SLOT_RAD).round();
    if (psi - k * SLOT_RAD).abs() > 1e-9 {
        return None;
    }
    let k = (k as i64).rem_euclid(HEADING_SLOTS as i64);
    Some(if k == 0 { HEADING_SLOTS as u8 } else { k as u8 })
}

/// A navigation action: stay put, or rotate toward and move to a node.
///
/// Angle deltas are grid multiples, stored as slot counts. `to` is either
/// an adjacent node or the current node (rotation in place; used by the
/// episode protocol's forced actions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NavAction {
    Stop,
    Move {
        to: usize,
        /// Heading change in pi/6 units, wrapped to -5..=6.
        d_heading: i8,
        /// Elevation change in pi/6 units.
        d_elevation: i8,
    },
}

impl NavAction {
    pub fn move_to(to: usize, d_heading: i8, d_elevation: i8) -> Self {
        NavAction::Move {
            to,
            d_heading,
            d_elevation,
        }
    }

    /// Heading change in radians.
    pub fn d_psi(&self) -> f64 {
        match self {
            NavAction::Stop => 0.0,
            NavAction::Move { d_heading, .. } => *d_heading as f64 * SLOT_RAD,
        }
    }

    /// Elevation change in radians.
    pub fn d_omega(&self) -> f64 {
        match self {
            NavAction::Stop => 0.0,
            NavAction::Move { d_elevation, .. } => *d_elevation as f64 * SLOT_RAD,
        }
    }
}

/// Wrapped heading-slot change from `from` to `to`, in -5..=6 grid units.
pub fn heading_delta(from: u8, to: u8) -> i8 {
    wrap_heading_delta(to as i64 - from as i64)
}

/// Wraps a slot delta into -5..=6 (the unique grid representative of the
/// heading change, with a half-turn mapped to +6).
pub(crate) fn wrap_heading_delta(d: i64) -> i8 {
    let mut d = d.rem_euclid(HEADING_SLOTS as i64);
    if d > 6 {
        d -= HEADING_SLOTS as i64;
    }
    d as i8
}

/// Continuous bearing of `v` as seen from `u`: (heading radians in
/// (-pi, pi], elevation radians).
fn bearing(g: &EnvironmentGraph, u: usize, v: usize) -> (f64, f64) {
    let a = g.position(u);
    let b = g.position(v);
    let (dx, dy, dz) = (b.x - a.x, b.y - a.y, b.z - a.z);
    let heading = dy.atan2(dx);
    let horiz = (dx * dx + dy * dy).sqrt();
    let elevation = dz.atan2(horiz);
    (heading, elevation)
}

/// Nearest grid view for a continuous bearing: heading slot 1..=12 and
/// elevation slot clamped to -1..=1.
fn nearest_view(heading: f64, elevation: f64) -> (u8, i8) {
    let k = (heading / SLOT_RAD).round() as i64;
    let k = k.rem_euclid(HEADING_SLOTS as i64);
    let h = if k == 0 { HEADING_SLOTS as u8 } else { k as u8 };
    let e = ((elevation / SLOT_RAD).round() as i64).clamp(-1, 1) as i8;
    (h, e)
}

/// View slots (heading, elevation) facing node `v` from node `u`: pure
/// nearest-view rounding of the continuous bearing, ignoring slot
/// collisions.
pub fn facing_view(g: &EnvironmentGraph, u: usize, v: usize) -> (u8, i8) {
    let (h, e) = bearing(g, u, v);
    nearest_view(h, e)
}

pub fn view_index(heading_slot: u8, elevation_slot: i8) -> usize {
    (heading_slot as usize - 1) * ELEV_SLOTS + (elevation_slot + 1) as usize
}

fn view_of_index(idx: usize) -> (u8, i8) {
    debug_assert!(idx < NUM_VIEWS);
    ((idx / ELEV_SLOTS) as u8 + 1, (idx % ELEV_SLOTS) as i8 - 1)
}

/// Angular distance between a continuous bearing and a view center.
fn angular_distance(heading: f64, elevation: f64, slot: usize) -> f64 {
    let (h, e) = view_of_index(slot);
    let mut dh = heading - h as f64 * SLOT_RAD;
    let two_pi = 2.0 * std::f64::consts::PI;
    dh = dh.rem_euclid(two_pi);
    if dh > std::f64::consts::PI {
        dh -= two_pi;
    }
    let de = elevation - e as f64 * SLOT_RAD;
    (dh * dh + de * de).sqrt()
}

/// The per-pose action layout: at most one neighbor per view slot, plus
/// `Stop`.
#[derive(Debug, Clone)]
pub struct PanoramicActions {
    /// `slots[i]` is the move assigned to view slot `i`, if any.
    slots: Vec<Option<NavAction>>,
}

impl PanoramicActions {
    /// The action at a canonical slot index (0..=36; 36 is `Stop`).
    pub fn at_slot(&self, slot: usize) -> Option<NavAction> {
        if slot == STOP_SLOT {
            Some(NavAction::Stop)
        } else {
            self.slots.get(slot).copied().flatten()
        }
    }

    /// Valid-slot mask over the 37 canonical slots; `Stop` is always valid.
    pub fn mask(&self) -> Vec<bool> {
        let mut m: Vec<bool> = self.slots.iter().map(|s| s.is_some()).collect();
        m.push(true);
        m
    }

    /// All actions, `Stop` last.
    pub fn actions(&self) -> Vec<NavAction> {
        let mut out: Vec<NavAction> = self.slots.iter().filter_map(|s| *s).collect();
        out.push(NavAction::Stop);
        out
    }

    /// Canonical slot of the move targeting `node`, if assigned.
    pub fn slot_of_target(&self, node: usize) -> Option<usize> {
        self.slots.iter().position(|s| {
            matches!(s, Some(NavAction::Move { to, .. }) if *to == node)
        })
    }

    pub fn num_valid(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count() + 1
    }
}

/// Assigns each neighbor of `pose.node` to the view slot closest to its
/// bearing. On a collision the angularly closer neighbor keeps the slot
/// and the other is demoted to the nearest free slot (ties by smaller
/// slot index). `Stop` is always available.
pub fn panoramic_actions(g: &EnvironmentGraph, pose: &Pose) -> PanoramicActions {
    let mut slots: Vec<Option<NavAction>> = vec![None; NUM_VIEWS];
    // (neighbor, bearing, preferred slot, angular distance), neighbor order.
    let mut prefs: Vec<(usize, f64, f64, usize, f64)> = Vec::new();
    for &(v, _) in g.neighbors(pose.node) {
        let (bh, be) = bearing(g, pose.node, v);
        let (h, e) = nearest_view(bh, be);
        let slot = view_index(h, e);
        prefs.push((v, bh, be, slot, angular_distance(bh, be, slot)));
    }
    // Winners first: per contested slot keep the closest (ties by node id,
    // which is the iteration order).
    let mut losers: Vec<(usize, f64, f64)> = Vec::new();
    let mut best: Vec<Option<(f64, usize, f64, f64)>> = vec![None; NUM_VIEWS];
    for &(v, bh, be, slot, d) in &prefs {
        match best[slot] {
            None => best[slot] = Some((d, v, bh, be)),
            Some((bd, bv, bbh, bbe)) => {
                if d < bd {
                    losers.push((bv, bbh, bbe));
                    best[slot] = Some((d, v, bh, be));
                } else {
                    losers.push((v, bh, be));
                }
            }
        }
    }
    for (slot, entry) in best.iter().enumerate() {
        if let Some((_, v, _, _)) = entry {
            slots[slot] = Some(move_for_slot(pose, *v, slot));
        }
    }
    // Demote losers (in node-id order) to their nearest free slots.
    losers.sort_by_key(|&(v, _, _)| v);
    for (v, bh, be) in losers {
        let mut chosen: Option<(usize, f64)> = None;
        for slot in 0..NUM_VIEWS {
            if slots[slot].is_some() {
                continue;
            }
            let d = angular_distance(bh, be, slot);
            let better = match chosen {
                None => true,
                Some((_, bd)) => d < bd,
            };
            if better {
                chosen = Some((slot, d));
            }
        }
        if let Some((slot, _)) = chosen {
            slots[slot] = Some(move_for_slot(pose, v, slot));
        }
        // With degree <= 36 a free slot always exists.
    }
    PanoramicActions { slots }
}

fn move_for_slot(pose: &Pose, v: usize, slot: usize) -> NavAction {
    let (h, e) = view_of_index(slot);
    NavAction::Move {
        to: v,
        d_heading: wrap_heading_delta(h as i64 - pose.heading as i64),
        d_elevation: e - pose.elevation,
    }
}

/// Applies an action. `Stop` leaves the pose unchanged. A move's target
/// must be adjacent to the current node, or the node itself (rotation in
/// place); the new heading wraps on the grid and the elevation clamps to
/// [-pi/6, pi/6].
pub fn step(g: &EnvironmentGraph, pose: &Pose, action: &NavAction) -> Result<Pose> {
    match *action {
        NavAction::Stop => Ok(*pose),
        NavAction::Move {
            to,
            d_heading,
            d_elevation,
        } => {
            if to != pose.node && g.edge_length(pose.node, to).is_none() {
                return Err(Error::contract(format!(
                    "move target {to} is not adjacent to node {}",
                    pose.node
                )));
            }
            let h = wrap_heading_slot(pose.heading as i64 + d_heading as i64);
            let e = (pose.elevation as i64 + d_elevation as i64).clamp(-1, 1) as i8;
            Ok(Pose {
                node: to,
                heading: h,
                elevation: e,
            })
        }
    }
}

fn wrap_heading_slot(k: i64) -> u8 {
    let k = k.rem_euclid(HEADING_SLOTS as i64);
    if k == 0 {
        HEADING_SLOTS as u8
    } else {
        k as u8
    }
}

//! Ground-truth supervision.
//!
//! The navigation teacher is the metric shortest-path successor rule. The
//! help-request teacher is retrospective: it labels a completed episode
//! at once, using the realized future to decide whether the agent was
//! lost, combining that with distribution uncertainty and a
//! never-asked-here condition, and emits the reason vector for the
//! condition classifier. The curiosity set collects previously tried
//! non-reference actions at revisited (node, instruction) pairs.

mod trace;

pub use trace::{
    route_instruction_id, AskAction, EpisodeTrace, Mode, StepRecord, TASK_INSTRUCTION_ID,
};

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::env::{
    multi_source_distances, panoramic_actions, shortest_distances, EnvironmentGraph, NavAction,
    Pose, NUM_NAV_SLOTS, STOP_SLOT,
};
use crate::{Error, Result};

/// Help-request teacher configuration. The efficiency logarithm base is
/// the navigation action-space size, 37.
#[derive(Debug, Clone, Copy)]
pub struct TeacherConfig {
    /// Uncertainty threshold gamma in [0, 1].
    pub gamma: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig { gamma: 0.25 }
    }
}

/// What the navigation teacher steers toward.
#[derive(Debug, Clone, Copy)]
pub enum TeacherTarget<'a> {
    /// A specific node (subtask departure point).
    Node(usize),
    /// The task's goal set.
    GoalSet(&'a [usize]),
}

/// Shannon entropy of the navigation distribution in base 37, with
/// 0 * log 0 = 0. Always in [0, 1].
pub fn efficiency(p_nav: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in p_nav {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h / (NUM_NAV_SLOTS as f64).ln()
}

/// Reference navigation action: stop at the target (a goal node when
/// targeting the goal set), otherwise rotate-and-move to the shortest
/// path successor, ties by smallest successor id.
pub fn nav_teacher(g: &EnvironmentGraph, pose: &Pose, target: &TeacherTarget) -> NavAction {
    let dist = match target {
        TeacherTarget::Node(t) => shortest_distances(g, *t),
        TeacherTarget::GoalSet(goals) => multi_source_distances(g, goals),
    };
    if dist[pose.node] == 0.0 {
        return NavAction::Stop;
    }
    let successor = shortest_path_successor(g, pose.node, &dist)
        .expect("reachable target has a successor");
    let pan = panoramic_actions(g, pose);
    let slot = pan
        .slot_of_target(successor)
        .expect("every neighbor holds a slot");
    pan.at_slot(slot).unwrap()
}

/// Canonical slot of the teacher action (STOP_SLOT for stop).
pub fn nav_teacher_slot(g: &EnvironmentGraph, pose: &Pose, target: &TeacherTarget) -> usize {
    match nav_teacher(g, pose, target) {
        NavAction::Stop => STOP_SLOT,
        NavAction::Move { to, .. } => panoramic_actions(g, pose)
            .slot_of_target(to)
            .expect("successor is a neighbor"),
    }
}

/// Smallest-id neighbor on a shortest path toward the distance field's
/// sources.
fn shortest_path_successor(g: &EnvironmentGraph, v: usize, dist: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &(w, len) in g.neighbors(v) {
        if (dist[w] + len - dist[v]).abs() < 1e-9 {
            best = match best {
                None => Some(w),
                Some(b) => Some(b.min(w)),
            };
        }
    }
    best
}

fn argmax_slot(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Labels a completed trace: per-step reference navigation slots, the
/// retrospective help-request action, and the reason vector
/// (lost, uncertain_wrong, never_asked).
///
/// * `lost` at step t: no later step's node is strictly closer (metric
///   shortest path) to step t's reference point than step t's node is.
/// * `uncertain_wrong`: efficiency >= gamma and the argmax slot differs
///   from the teacher's.
/// * `never_asked`: no earlier step requested help at this node.
///
/// The teacher asks iff (lost or uncertain_wrong) and never_asked and the
/// step is inside a zone of attention.
pub fn retrospective_ask_teacher(
    trace: &mut EpisodeTrace,
    g: &EnvironmentGraph,
    goals: &[usize],
    cfg: &TeacherConfig,
) -> Result<()> {
    if trace.steps.is_empty() {
        return Err(Error::contract("cannot label an empty trace"));
    }
    let goal_dist = multi_source_distances(g, goals);
    let mut node_fields: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let n_steps = trace.steps.len();

    // Reference distance of every step's node under step t's reference.
    let ref_dist = |step: &StepRecord, fields: &mut BTreeMap<usize, Vec<f64>>, node: usize| {
        match step.target_node {
            Some(t) => {
                let field = fields
                    .entry(t)
                    .or_insert_with(|| shortest_distances(g, t));
                field[node]
            }
            None => goal_dist[node],
        }
    };

    for t in 0..n_steps {
        let step = trace.steps[t].clone();
        let target = match step.target_node {
            Some(t) => TeacherTarget::Node(t),
            None => TeacherTarget::GoalSet(goals),
        };
        let teacher_slot = nav_teacher_slot(g, &step.pose, &target);

        let here = ref_dist(&step, &mut node_fields, step.pose.node);
        let mut lost = true;
        for future in &trace.steps[t + 1..] {
            if ref_dist(&step, &mut node_fields, future.pose.node) < here {
                lost = false;
                break;
            }
        }

        let uncertain_wrong =
            efficiency(&step.p_nav) >= cfg.gamma && argmax_slot(&step.p_nav) != teacher_slot;

        let never_asked = !trace.steps[..t]
            .iter()
            .any(|s| s.ask_decision == AskAction::RequestHelp && s.pose.node == step.pose.node);

        let ask = if (lost || uncertain_wrong) && never_asked && step.in_zone {
            AskAction::RequestHelp
        } else {
            AskAction::DoNothing
        };

        let rec = &mut trace.steps[t];
        rec.teacher_nav_slot = Some(teacher_slot);
        rec.teacher_ask = Some(ask);
        rec.rho_star = Some([lost, uncertain_wrong, never_asked]);
    }
    Ok(())
}

/// The curiosity mistake set at step `t`: slots the agent itself chose at
/// an earlier visit to the same node under the same instruction, where
/// that choice disagreed with the teacher. Requires a labeled trace.
pub fn curiosity_set(trace: &EpisodeTrace, t: usize) -> BTreeSet<usize> {
    let here = &trace.steps[t];
    let mut set = BTreeSet::new();
    for s in &trace.steps[..t] {
        if s.pose.node != here.pose.node || s.instr_id != here.instr_id {
            continue;
        }
        let Some(slot) = s.nav_decision_slot else {
            continue;
        };
        let teacher = s
            .teacher_nav_slot
            .expect("curiosity_set requires a labeled trace");
        if slot != teacher {
            set.insert(slot);
        }
    }
    set
}

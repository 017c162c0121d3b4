//! Per-episode traces: everything the retrospective teachers, losses and
//! metrics need about what happened.

use serde::{Deserialize, Serialize};

use crate::env::{NavAction, Pose};

/// Instruction id of the main task command.
pub const TASK_INSTRUCTION_ID: u32 = 0;

/// Instruction id of a route's instruction (route identity doubles as
/// instruction identity).
pub fn route_instruction_id(route_index: usize) -> u32 {
    route_index as u32 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    MainTask,
    SubTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AskAction {
    DoNothing,
    RequestHelp,
}

/// One decision step. Distributions are recorded as plain probabilities;
/// the differentiable state lives beside the trace, not in it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub pose: Pose,
    /// Instruction consumed at this step.
    pub instr_id: u32,
    /// Mode at decision time.
    pub mode: Mode,
    /// Teacher reference point: departure node during a subtask, absent
    /// in main-task mode (the goal set is the reference there).
    pub target_node: Option<usize>,
    pub has_target_view: bool,
    pub in_zone: bool,
    /// Navigation distribution over the 37 canonical slots.
    pub p_nav: Vec<f64>,
    /// [P(do_nothing), P(request_help)].
    pub p_ask: [f64; 2],
    /// Predicted condition likelihoods, when the policy has a reason head.
    pub rho_hat: Option<[f64; 3]>,
    pub ask_decision: AskAction,
    /// Slot the agent itself chose; `None` on forced route-entry steps.
    pub nav_decision_slot: Option<usize>,
    /// Action actually applied to the pose.
    pub executed: NavAction,
    pub forced: bool,
    // --- filled retrospectively by the teachers ---
    pub teacher_nav_slot: Option<usize>,
    pub teacher_ask: Option<AskAction>,
    pub rho_star: Option<[bool; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    pub start: Pose,
    pub final_pose: Pose,
    /// Sum of traversed edge lengths in meters.
    pub travel_distance: f64,
}

impl EpisodeTrace {
    pub fn requests(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.ask_decision == AskAction::RequestHelp)
            .count()
    }

    pub fn is_labeled(&self) -> bool {
        self.steps
            .iter()
            .all(|s| s.teacher_ask.is_some() && s.teacher_nav_slot.is_some())
    }

    /// One JSON object per line, for offline inspection.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("step serializes"));
            out.push('\n');
        }
        out
    }
}

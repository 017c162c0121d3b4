//! Episode rollout.
//!
//! One step: the agent sees the observation, the navigation distribution
//! is computed, the help-request decision is made (request is impossible
//! outside zones of attention). A request forces the route-entry move and
//! switches the instruction to the route's; a stop during a subtask
//! forces an in-place stay and restores the task command with the goal
//! view as target; a stop during the main task ends the episode. Memory
//! resets are driven purely by instruction changes, which the networks
//! detect through the observation's instruction id.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anna::{respond, task_command, RouteSystem};
use crate::env::{
    heading_delta, panoramic_actions, render_observation, step, EnvironmentGraph, NavAction,
    PanoramicActions, Pose, SimConfig, Task, ViewFeatureSet, NUM_NAV_SLOTS, STOP_SLOT,
};
use crate::policy::{target_similarity, AskForward, NavForward};
use crate::teachers::{
    route_instruction_id, AskAction, EpisodeTrace, Mode, StepRecord, TASK_INSTRUCTION_ID,
};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSelect {
    Sample,
    Greedy,
}

/// What one agent step produced, beyond the distributions: the tapes for
/// backpropagation. Non-learned policies return `None`.
pub struct StepComputation {
    pub nav: NavForward,
    pub ask: Option<AskForward>,
}

/// Everything a policy may look at when deciding.
pub struct Observation<'a> {
    pub instr_id: u32,
    pub tokens: &'a [u32],
    pub cur_views: &'a ViewFeatureSet,
    pub tgt_views: Option<&'a ViewFeatureSet>,
    pub delta: &'a Array1<f64>,
    pub pan: &'a PanoramicActions,
    pub action_embs: &'a [Array1<f64>],
    pub mask: &'a [bool],
    pub last_action_emb: &'a Array1<f64>,
    pub in_zone: bool,
    pub pose: Pose,
    pub t: usize,
    pub mode: Mode,
    /// Departure node during a subtask (what the navigation teacher
    /// steers toward); `None` in main-task mode.
    pub target_node: Option<usize>,
}

pub struct Decision {
    /// Distribution over the 37 canonical slots; masked slots must be 0.
    pub p_nav: Vec<f64>,
    /// [P(do_nothing), P(request_help)]; re-masked by the rollout when
    /// outside every zone.
    pub p_ask: [f64; 2],
    pub rho_hat: Option<[f64; 3]>,
    pub computation: Option<StepComputation>,
}

pub trait AgentPolicy {
    /// Called once before each episode.
    fn begin_episode(&mut self);
    fn decide(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Decision>;
    /// Width of the action-embedding inputs this policy expects.
    fn orientation_compat(&self) -> bool {
        false
    }
}

pub struct RolloutOptions {
    pub select: ActionSelect,
    pub budget: usize,
    pub seed: u64,
}

fn select_slot(p: &[f64], select: ActionSelect, rng: &mut ChaCha8Rng) -> usize {
    match select {
        ActionSelect::Greedy => {
            let mut best = 0;
            for (i, &x) in p.iter().enumerate() {
                if x > p[best] {
                    best = i;
                }
            }
            best
        }
        ActionSelect::Sample => {
            let total: f64 = p.iter().sum();
            let u: f64 = rng.gen_range(0.0..1.0) * total;
            let mut cum = 0.0;
            let mut last_positive = 0;
            for (i, &x) in p.iter().enumerate() {
                if x <= 0.0 {
                    continue;
                }
                cum += x;
                last_positive = i;
                if u < cum {
                    return i;
                }
            }
            last_positive
        }
    }
}

/// Runs one episode. Returns the (unlabeled) trace and, step-aligned, the
/// per-step computation handles for backpropagation.
pub fn rollout_episode(
    env: &EnvironmentGraph,
    routes: &RouteSystem,
    task: &Task,
    agent: &mut dyn AgentPolicy,
    options: &RolloutOptions,
    sim: &SimConfig,
) -> Result<(EpisodeTrace, Vec<Option<StepComputation>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    agent.begin_episode();
    let compat = agent.orientation_compat();

    let task_tokens = task_command(task.object_type)?;
    let mut pose = task.start;
    let mut mode = Mode::MainTask;
    let mut instr_id = TASK_INSTRUCTION_ID;
    let mut instr_tokens = task_tokens.clone();
    let mut tgt_views: Option<ViewFeatureSet> = None;
    let mut target_node: Option<usize> = None;
    let mut pending_goal_view: Option<ViewFeatureSet> = None;
    let mut last_action_emb = Array1::zeros(sim.feature_dim + crate::policy::ORIENT_DIM);
    let mut travel = 0.0;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut comps: Vec<Option<StepComputation>> = Vec::new();
    let mut ended_by_stop = false;

    for t in 0..options.budget {
        let views = render_observation(env, pose.node, sim);
        let pan = panoramic_actions(env, &pose);
        let in_zone = crate::anna::in_zone(routes, env, &pose);
        let delta = target_similarity(Some(&views), tgt_views.as_ref());
        let (action_embs, mask) = crate::policy::action_embeddings(&pan, &views, compat);
        let obs = Observation {
            instr_id,
            tokens: &instr_tokens,
            cur_views: &views,
            tgt_views: tgt_views.as_ref(),
            delta: &delta,
            pan: &pan,
            action_embs: &action_embs,
            mask: &mask,
            last_action_emb: &last_action_emb,
            in_zone,
            pose,
            t,
            mode,
            target_node,
        };
        let decision = agent.decide(&obs, &mut rng)?;
        debug_assert_eq!(decision.p_nav.len(), NUM_NAV_SLOTS);

        let p_ask = if in_zone { decision.p_ask } else { [1.0, 0.0] };
        let ask_choice = if select_slot(&p_ask, options.select, &mut rng) == 1 {
            AskAction::RequestHelp
        } else {
            AskAction::DoNothing
        };

        let mut record = StepRecord {
            pose,
            instr_id,
            mode,
            target_node,
            has_target_view: tgt_views.is_some(),
            in_zone,
            p_nav: decision.p_nav.clone(),
            p_ask,
            rho_hat: decision.rho_hat,
            ask_decision: ask_choice,
            nav_decision_slot: None,
            executed: NavAction::Stop,
            forced: false,
            teacher_nav_slot: None,
            teacher_ask: None,
            rho_star: None,
        };

        let executed: NavAction;
        if ask_choice == AskAction::RequestHelp {
            let resp = respond(routes, env, &pose, &task.goals, sim)?;
            mode = Mode::SubTask;
            instr_id = route_instruction_id(resp.route_index);
            instr_tokens = resp.instruction.clone();
            target_node = Some(resp.departure_node);
            tgt_views = Some(resp.departure_view);
            pending_goal_view = Some(resp.goal_view);
            let route = &routes.routes[resp.route_index];
            executed = NavAction::move_to(
                route.path[0],
                heading_delta(pose.heading_slot(), route.start_heading),
                route.start_elevation - pose.elevation_slot(),
            );
            record.forced = true;
        } else {
            let slot = select_slot(&decision.p_nav, options.select, &mut rng);
            record.nav_decision_slot = Some(slot);
            if slot == STOP_SLOT {
                if mode == Mode::MainTask {
                    record.executed = NavAction::Stop;
                    steps.push(record);
                    comps.push(decision.computation);
                    ended_by_stop = true;
                    break;
                }
                // Depart the route: resume the main task.
                mode = Mode::MainTask;
                instr_id = TASK_INSTRUCTION_ID;
                instr_tokens = task_tokens.clone();
                target_node = None;
                tgt_views = pending_goal_view.clone();
                executed = NavAction::move_to(pose.node, 0, 0);
                record.forced = true;
            } else {
                executed = pan
                    .at_slot(slot)
                    .expect("sampling respects the slot mask");
            }
        }

        record.executed = executed;
        last_action_emb =
            crate::policy::executed_action_embedding(&executed, &pan, &views, &pose, compat);
        let next = step(env, &pose, &executed)?;
        if next.node != pose.node {
            travel += env
                .edge_length(pose.node, next.node)
                .expect("executed moves follow edges");
        }
        pose = next;
        steps.push(record);
        comps.push(decision.computation);
    }
    let _ = ended_by_stop;

    Ok((
        EpisodeTrace {
            steps,
            start: task.start,
            final_pose: pose,
            travel_distance: travel,
        },
        comps,
    ))
}

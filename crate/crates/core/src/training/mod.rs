//! Training: rollouts with sampled actions, retrospective labeling, loss
//! assembly, Adam updates, and periodic greedy evaluation. Episodes reset
//! independently; batch composition never couples agents, so evaluation
//! results do not depend on batching.

mod adam;
mod agent;
mod losses;
mod rollout;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use agent::LearnedAgent;
pub use losses::{compute_losses, episode_gradients, LossBreakdown};
pub use rollout::{
    rollout_episode, ActionSelect, AgentPolicy, Decision, Observation, RolloutOptions,
    StepComputation,
};

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::anna::RouteSystem;
use crate::env::{
    is_success, shortest_distances, EnvironmentGraph, SimConfig, Task,
};
use crate::policy::PolicyParameters;
use crate::teachers::{retrospective_ask_teacher, TeacherConfig};
use crate::{Error, Result};

/// One environment with its route system.
pub struct World {
    pub env_id: String,
    pub env: EnvironmentGraph,
    pub routes: RouteSystem,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Curiosity-encouraging weight.
    pub alpha: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub t_train: usize,
    pub t_eval: usize,
    pub seed: u64,
    /// Greedy evaluation cadence in iterations; 0 disables it.
    pub eval_every: usize,
    pub teacher: TeacherConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            learning_rate: 1e-4,
            iterations: 2000,
            batch_size: 32,
            t_train: 20,
            t_eval: 50,
            seed: 0,
            eval_every: 0,
            teacher: TeacherConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurveRow {
    pub iteration: usize,
    pub nav_nl: f64,
    pub curious: f64,
    pub ask_nl: f64,
    pub reason: f64,
    pub eval_sr: Option<f64>,
    pub eval_spl: Option<f64>,
}

pub struct TrainOutcome {
    pub params: PolicyParameters,
    pub curve: Vec<CurveRow>,
}

fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    crate::env::splitmix64(a ^ crate::env::splitmix64(b ^ crate::env::splitmix64(c ^ 0x9e37)))
}

fn world_index<'a>(worlds: &'a [World]) -> BTreeMap<&'a str, &'a World> {
    worlds.iter().map(|w| (w.env_id.as_str(), w)).collect()
}

/// Success rate and SPL of greedy rollouts over `tasks`, as fractions.
fn greedy_eval(
    worlds: &BTreeMap<&str, &World>,
    tasks: &[Task],
    params: &PolicyParameters,
    sim: &SimConfig,
    budget: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let results: Vec<Result<(bool, f64)>> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let world = worlds
                .get(task.env_id.as_str())
                .ok_or_else(|| Error::contract(format!("unknown environment '{}'", task.env_id)))?;
            let mut agent = LearnedAgent::new(params, 0.0);
            let options = RolloutOptions {
                select: ActionSelect::Greedy,
                budget,
                seed: mix_seed(seed, 0xe7a1, i as u64),
            };
            let (trace, _) =
                rollout_episode(&world.env, &world.routes, task, &mut agent, &options, sim)?;
            let success = is_success(&world.env, trace.final_pose.node, &task.goals, sim.eps_success);
            let spl = spl_term(&world.env, task, &trace.final_pose, trace.travel_distance, success);
            Ok((success, spl))
        })
        .collect();
    let mut sr = 0.0;
    let mut spl = 0.0;
    for r in results {
        let (s, w) = r?;
        if s {
            sr += 1.0;
        }
        spl += w;
    }
    let n = tasks.len().max(1) as f64;
    Ok((sr / n, spl / n))
}

/// Per-task SPL term: S * L / max(P, L), with L the shortest-path
/// distance from the start to the goal nearest the final location.
pub(crate) fn spl_term(
    env: &EnvironmentGraph,
    task: &Task,
    final_pose: &crate::env::Pose,
    travel: f64,
    success: bool,
) -> f64 {
    if !success {
        return 0.0;
    }
    let from_final = shortest_distances(env, final_pose.node);
    let nearest_goal = task
        .goals
        .iter()
        .copied()
        .min_by(|&a, &b| from_final[a].partial_cmp(&from_final[b]).unwrap())
        .expect("goal set non-empty");
    let from_start = shortest_distances(env, task.start.node);
    let l = from_start[nearest_goal];
    l / travel.max(l)
}

/// Full training run. Episodes within a batch run in parallel; gradients
/// reduce in episode order so results are independent of scheduling.
pub fn train(
    worlds: &[World],
    train_tasks: &[Task],
    eval_tasks: &[Task],
    mut params: PolicyParameters,
    cfg: &TrainConfig,
    sim: &SimConfig,
) -> Result<TrainOutcome> {
    if train_tasks.is_empty() {
        return Err(Error::contract("training requires a non-empty task set"));
    }
    let index = world_index(worlds);
    let mut adam = AdamState::new(&params);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let dropout = params.cfg.dropout;

    for iteration in 0..cfg.iterations {
        let episodes: Vec<Result<(crate::policy::GradStore, LossBreakdown)>> = (0..cfg.batch_size)
            .into_par_iter()
            .map(|b| {
                let ep_seed = mix_seed(cfg.seed, iteration as u64, b as u64);
                let task =
                    &train_tasks[(crate::env::splitmix64(ep_seed) % train_tasks.len() as u64) as usize];
                let world = index
                    .get(task.env_id.as_str())
                    .ok_or_else(|| Error::contract(format!("unknown environment '{}'", task.env_id)))?;
                let mut agent = LearnedAgent::new(&params, dropout);
                let options = RolloutOptions {
                    select: ActionSelect::Sample,
                    budget: cfg.t_train,
                    seed: ep_seed,
                };
                let (mut trace, comps) =
                    rollout_episode(&world.env, &world.routes, task, &mut agent, &options, sim)?;
                retrospective_ask_teacher(&mut trace, &world.env, &task.goals, &cfg.teacher)?;
                let mut grads = params.store.zeros_like();
                let loss = episode_gradients(&trace, &comps, cfg.alpha, &params, &mut grads)?;
                Ok((grads, loss))
            })
            .collect();

        let mut grads = params.store.zeros_like();
        let mut sums = [0.0f64; 4];
        for ep in episodes {
            let (g, loss) = ep?;
            grads.add_assign(&g);
            sums[0] += loss.nav_nl;
            sums[1] += loss.curious;
            sums[2] += loss.ask_nl;
            sums[3] += loss.reason;
        }
        let scale = 1.0 / cfg.batch_size as f64;
        grads.scale(scale);
        for s in &mut sums {
            *s *= scale;
        }
        let total = sums[0] + cfg.alpha * sums[1] + sums[2] + sums[3];
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at iteration {iteration}: {total}"
            )));
        }
        adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;

        let mut row = CurveRow {
            iteration,
            nav_nl: sums[0],
            curious: sums[1],
            ask_nl: sums[2],
            reason: sums[3],
            eval_sr: None,
            eval_spl: None,
        };
        if cfg.eval_every > 0 && (iteration + 1) % cfg.eval_every == 0 && !eval_tasks.is_empty() {
            let (sr, spl) = greedy_eval(&index, eval_tasks, &params, sim, cfg.t_eval, cfg.seed)?;
            row.eval_sr = Some(sr);
            row.eval_spl = Some(spl);
        }
        curve.push(row);
    }
    Ok(TrainOutcome { params, curve })
}

/// Learning-curve CSV (full precision; empty evaluation cells between
/// evaluation points).
pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("iteration,nav_nl,curious,ask_nl,reason,eval_sr,eval_spl\n");
    for r in rows {
        let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration,
            r.nav_nl,
            r.curious,
            r.ask_nl,
            r.reason,
            fmt(r.eval_sr),
            fmt(r.eval_spl)
        ));
    }
    out
}

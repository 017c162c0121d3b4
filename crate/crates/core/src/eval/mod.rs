//! Evaluation: metric computation, baseline policies, task datasets, and
//! the report pipeline used by the CLI.

mod baselines;
mod metrics;
mod tasks;

pub use baselines::{
    AskRule, AskWrapper, ForwardKPolicy, PerfectInterpretationPolicy, RandomWalkPolicy,
    ScriptedPolicy, ShortestPolicy,
};
pub use metrics::{
    compute_metrics, reason_metrics, replay_trace, ConditionMetrics, EvalItem, EvalMetrics,
};
pub use tasks::{
    generate_tasks, load_tasks, save_tasks, split_env_ids, TaskDataset, MAX_TASK_HOPS,
    MIN_TASK_HOPS,
};

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;

use crate::env::{SimConfig, Task};
use crate::policy::PolicyParameters;
use crate::teachers::{retrospective_ask_teacher, EpisodeTrace, TeacherConfig};
use crate::training::{
    rollout_episode, ActionSelect, AgentPolicy, LearnedAgent, RolloutOptions, World,
};
use crate::{Error, Result};

/// Evaluable policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyName {
    Learned,
    NoAsk,
    RandomAsk,
    AskEveryK,
    RandomWalk,
    ForwardK,
    Shortest,
    Perfect,
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "learned" => PolicyName::Learned,
            "no_ask" => PolicyName::NoAsk,
            "random_ask" => PolicyName::RandomAsk,
            "ask_every_k" => PolicyName::AskEveryK,
            "random_walk" => PolicyName::RandomWalk,
            "forward_k" => PolicyName::ForwardK,
            "shortest" => PolicyName::Shortest,
            "perfect" => PolicyName::Perfect,
            other => {
                return Err(Error::contract(format!(
                    "unknown policy '{other}' (expected learned|no_ask|random_ask|ask_every_k|random_walk|forward_k|shortest|perfect)"
                )))
            }
        })
    }
}

impl PolicyName {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyName::Learned => "learned",
            PolicyName::NoAsk => "no_ask",
            PolicyName::RandomAsk => "random_ask",
            PolicyName::AskEveryK => "ask_every_k",
            PolicyName::RandomWalk => "random_walk",
            PolicyName::ForwardK => "forward_k",
            PolicyName::Shortest => "shortest",
            PolicyName::Perfect => "perfect",
        }
    }

    pub fn needs_checkpoint(&self) -> bool {
        matches!(
            self,
            PolicyName::Learned
                | PolicyName::NoAsk
                | PolicyName::RandomAsk
                | PolicyName::AskEveryK
                | PolicyName::Perfect
        )
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub policy: PolicyName,
    /// Steps the forward baseline advances before stopping.
    pub forward_k: usize,
    /// Minimum steps between heuristic requests.
    pub ask_k: usize,
    /// Request probability of the random-ask heuristic.
    pub ask_prob: f64,
    /// Step budget override; 0 uses each task's own budget.
    pub budget: usize,
    pub seed: u64,
    pub teacher: TeacherConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            policy: PolicyName::Learned,
            forward_k: 7,
            ask_k: 5,
            ask_prob: 0.2,
            budget: 0,
            seed: 0,
            teacher: TeacherConfig::default(),
        }
    }
}

pub struct EvalOutcome {
    pub metrics: EvalMetrics,
    /// Labeled traces, task-aligned.
    pub traces: Vec<EpisodeTrace>,
}

fn build_policy<'a>(
    name: PolicyName,
    params: Option<&'a PolicyParameters>,
    world: &'a World,
    task: &'a Task,
    opts: &EvalOptions,
) -> Result<Box<dyn AgentPolicy + 'a>> {
    let learned = || -> Result<LearnedAgent<'a>> {
        let params = params.ok_or_else(|| {
            Error::contract(format!(
                "policy '{}' requires a checkpoint",
                name.as_str()
            ))
        })?;
        Ok(LearnedAgent::new(params, 0.0))
    };
    Ok(match name {
        PolicyName::Learned => Box::new(learned()?),
        PolicyName::NoAsk => Box::new(AskWrapper::new(learned()?, AskRule::Never)),
        PolicyName::RandomAsk => {
            Box::new(AskWrapper::new(learned()?, AskRule::Random(opts.ask_prob)))
        }
        PolicyName::AskEveryK => Box::new(AskWrapper::new(learned()?, AskRule::EveryK(opts.ask_k))),
        PolicyName::RandomWalk => Box::new(RandomWalkPolicy),
        PolicyName::ForwardK => Box::new(ForwardKPolicy::new(opts.forward_k)),
        PolicyName::Shortest => Box::new(ShortestPolicy {
            env: &world.env,
            goals: &task.goals,
        }),
        PolicyName::Perfect => Box::new(PerfectInterpretationPolicy {
            inner: learned()?,
            env: &world.env,
        }),
    })
}

/// Runs a policy over a task split with greedy action selection and
/// independent per-episode seeding, labels every trace, and aggregates
/// the metrics.
pub fn evaluate(
    worlds: &[World],
    tasks: &[Task],
    params: Option<&PolicyParameters>,
    opts: &EvalOptions,
    sim: &SimConfig,
) -> Result<EvalOutcome> {
    if tasks.is_empty() {
        return Err(Error::contract("no tasks in the requested split"));
    }
    let index: BTreeMap<&str, &World> = worlds.iter().map(|w| (w.env_id.as_str(), w)).collect();
    let traces: Vec<Result<EpisodeTrace>> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let world = index.get(task.env_id.as_str()).ok_or_else(|| {
                Error::contract(format!("unknown environment '{}'", task.env_id))
            })?;
            let mut policy = build_policy(opts.policy, params, world, task, opts)?;
            let options = RolloutOptions {
                select: ActionSelect::Greedy,
                budget: if opts.budget > 0 { opts.budget } else { task.budget },
                seed: crate::env::splitmix64(opts.seed ^ crate::env::splitmix64(i as u64)),
            };
            let (mut trace, _) =
                rollout_episode(&world.env, &world.routes, task, policy.as_mut(), &options, sim)?;
            retrospective_ask_teacher(&mut trace, &world.env, &task.goals, &opts.teacher)?;
            Ok(trace)
        })
        .collect();
    let traces: Vec<EpisodeTrace> = traces.into_iter().collect::<Result<_>>()?;
    let items: Vec<EvalItem> = traces
        .iter()
        .zip(tasks)
        .map(|(trace, task)| EvalItem {
            trace,
            task,
            env: &index[task.env_id.as_str()].env,
        })
        .collect();
    let metrics = compute_metrics(&items, sim)?;
    Ok(EvalOutcome { metrics, traces })
}

/// CSV header for report rows.
pub fn report_csv_header() -> String {
    let mut cols = vec![
        "split".to_string(),
        "policy".to_string(),
        "tasks".to_string(),
        "sr".to_string(),
        "spl".to_string(),
        "nav_error".to_string(),
        "requests_per_task".to_string(),
        "nav_mistake_repeat".to_string(),
        "help_request_repeat".to_string(),
    ];
    for cond in ["lost", "uncertain_wrong", "never_asked"] {
        for m in ["accuracy", "precision", "recall", "f1"] {
            cols.push(format!("{cond}_{m}"));
        }
    }
    cols.join(",")
}

/// One full-precision CSV row.
pub fn report_csv_row(split: &str, policy: &str, m: &EvalMetrics) -> String {
    let mut cols = vec![
        split.to_string(),
        policy.to_string(),
        m.tasks.to_string(),
        m.sr.to_string(),
        m.spl.to_string(),
        m.nav_error.to_string(),
        m.requests_per_task.to_string(),
        m.nav_mistake_repeat.to_string(),
        m.help_request_repeat.to_string(),
    ];
    match &m.reason {
        Some(conds) => {
            for c in conds {
                cols.push(c.accuracy.to_string());
                cols.push(c.precision.to_string());
                cols.push(c.recall.to_string());
                cols.push(c.f1.to_string());
            }
        }
        None => cols.extend(std::iter::repeat(String::new()).take(12)),
    }
    cols.join(",")
}

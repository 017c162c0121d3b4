//! Evaluation metrics: success rate, SPL, navigation error, request
//! counts, mistake/request repeat rates, and condition-prediction scores.

use crate::env::{is_success, min_goal_distance, step, EnvironmentGraph, Pose, SimConfig, Task};
use crate::teachers::{curiosity_set, AskAction, EpisodeTrace};
use crate::{Error, Result};

/// Binary classification scores for one help-request condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Aggregate metrics of one policy on one task split. Percentages are in
/// [0, 100].
#[derive(Debug, Clone)]
pub struct EvalMetrics {
    pub tasks: usize,
    pub sr: f64,
    pub spl: f64,
    pub nav_error: f64,
    pub requests_per_task: f64,
    pub nav_mistake_repeat: f64,
    pub help_request_repeat: f64,
    /// (lost, uncertain_wrong, never_asked); absent for policies without
    /// a reason head.
    pub reason: Option<[ConditionMetrics; 3]>,
}

/// One evaluated episode.
pub struct EvalItem<'a> {
    pub trace: &'a EpisodeTrace,
    pub task: &'a Task,
    pub env: &'a EnvironmentGraph,
}

/// Computes the full metric set over labeled traces (one per task).
pub fn compute_metrics(items: &[EvalItem], sim: &SimConfig) -> Result<EvalMetrics> {
    if items.is_empty() {
        return Err(Error::contract("no episodes to score"));
    }
    let mut successes = 0usize;
    let mut spl_sum = 0.0;
    let mut nav_err_sum = 0.0;
    let mut requests = 0usize;
    let mut nav_steps = 0usize;
    let mut nav_repeats = 0usize;
    let mut request_repeats = 0usize;
    let mut confusion = [[0usize; 4]; 3]; // [tp, fp, fn, tn] per condition
    let mut reason_steps = 0usize;

    for item in items {
        let trace = item.trace;
        if !trace.is_labeled() {
            return Err(Error::contract("metrics require teacher-labeled traces"));
        }
        let success = is_success(
            item.env,
            trace.final_pose.node,
            &item.task.goals,
            sim.eps_success,
        );
        if success {
            successes += 1;
        }
        spl_sum += crate::training::spl_term(
            item.env,
            item.task,
            &trace.final_pose,
            trace.travel_distance,
            success,
        );
        nav_err_sum += min_goal_distance(item.env, trace.final_pose.node, &item.task.goals);
        requests += trace.requests();

        for (t, step_rec) in trace.steps.iter().enumerate() {
            if let Some(slot) = step_rec.nav_decision_slot {
                nav_steps += 1;
                if curiosity_set(trace, t).contains(&slot) {
                    nav_repeats += 1;
                }
            }
            if step_rec.ask_decision == AskAction::RequestHelp {
                let revisit = trace.steps[..t]
                    .iter()
                    .any(|s| s.pose.node == step_rec.pose.node);
                if revisit {
                    request_repeats += 1;
                }
            }
            if let (Some(rho_hat), Some(rho_star)) = (step_rec.rho_hat, step_rec.rho_star) {
                reason_steps += 1;
                for c in 0..3 {
                    let pred = rho_hat[c] >= 0.5;
                    match (pred, rho_star[c]) {
                        (true, true) => confusion[c][0] += 1,
                        (true, false) => confusion[c][1] += 1,
                        (false, true) => confusion[c][2] += 1,
                        (false, false) => confusion[c][3] += 1,
                    }
                }
            }
        }
    }

    let n = items.len() as f64;
    let reason = if reason_steps > 0 {
        Some([
            condition_scores(confusion[0]),
            condition_scores(confusion[1]),
            condition_scores(confusion[2]),
        ])
    } else {
        None
    };
    Ok(EvalMetrics {
        tasks: items.len(),
        sr: 100.0 * successes as f64 / n,
        spl: 100.0 * spl_sum / n,
        nav_error: nav_err_sum / n,
        requests_per_task: requests as f64 / n,
        nav_mistake_repeat: if nav_steps == 0 {
            0.0
        } else {
            100.0 * nav_repeats as f64 / nav_steps as f64
        },
        help_request_repeat: if requests == 0 {
            0.0
        } else {
            100.0 * request_repeats as f64 / requests as f64
        },
        reason,
    })
}

fn condition_scores([tp, fp, fn_, tn]: [usize; 4]) -> ConditionMetrics {
    let total = (tp + fp + fn_ + tn) as f64;
    let accuracy = if total == 0.0 {
        0.0
    } else {
        (tp + tn) as f64 / total
    };
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ConditionMetrics {
        accuracy,
        precision,
        recall,
        f1,
    }
}

/// Standalone condition-prediction scorer over (predicted likelihoods,
/// true labels) pairs, thresholded at 0.5.
pub fn reason_metrics(pairs: &[([f64; 3], [bool; 3])]) -> [ConditionMetrics; 3] {
    let mut confusion = [[0usize; 4]; 3];
    for (rho_hat, rho_star) in pairs {
        for c in 0..3 {
            let pred = rho_hat[c] >= 0.5;
            match (pred, rho_star[c]) {
                (true, true) => confusion[c][0] += 1,
                (true, false) => confusion[c][1] += 1,
                (false, true) => confusion[c][2] += 1,
                (false, false) => confusion[c][3] += 1,
            }
        }
    }
    [
        condition_scores(confusion[0]),
        condition_scores(confusion[1]),
        condition_scores(confusion[2]),
    ]
}

/// Independent replay of a trace's executed actions through the
/// transition function; returns the resulting final pose.
pub fn replay_trace(env: &EnvironmentGraph, trace: &EpisodeTrace) -> Result<Pose> {
    let mut pose = trace.start;
    for rec in &trace.steps {
        if rec.pose != pose {
            return Err(Error::contract(format!(
                "trace records pose {:?} but replay reached {:?}",
                rec.pose, pose
            )));
        }
        pose = step(env, &pose, &rec.executed)?;
    }
    Ok(pose)
}

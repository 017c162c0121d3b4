//! Loss assembly over a labeled trace, plus gradient seeding into the
//! per-step tapes.

use ndarray::Array1;

use super::rollout::StepComputation;
use crate::policy::{GradStore, PolicyParameters};
use crate::teachers::{curiosity_set, AskAction, EpisodeTrace};
use crate::{Error, Result};

/// Additive decomposition of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub nav_nl: f64,
    pub curious: f64,
    pub ask_nl: f64,
    pub reason: f64,
    pub alpha: f64,
    pub total: f64,
}

fn safe_ln(p: f64) -> f64 {
    p.max(1e-300).ln()
}

fn ask_index(a: AskAction) -> usize {
    match a {
        AskAction::DoNothing => 0,
        AskAction::RequestHelp => 1,
    }
}

/// Loss values from a labeled trace. Navigation likelihood is averaged
/// over the steps where the agent itself chose (forced route entries are
/// environment mechanics, not decisions); the curiosity, ask and reason
/// terms are averaged over all steps, with an empty mistake set
/// contributing zero.
pub fn compute_losses(trace: &EpisodeTrace, alpha: f64) -> Result<LossBreakdown> {
    if !trace.is_labeled() {
        return Err(Error::contract("losses require a teacher-labeled trace"));
    }
    let t_total = trace.steps.len() as f64;
    let nav_steps: Vec<usize> = (0..trace.steps.len())
        .filter(|&t| trace.steps[t].nav_decision_slot.is_some())
        .collect();
    let mut nav_nl = 0.0;
    for &t in &nav_steps {
        let s = &trace.steps[t];
        nav_nl -= safe_ln(s.p_nav[s.teacher_nav_slot.unwrap()]);
    }
    if !nav_steps.is_empty() {
        nav_nl /= nav_steps.len() as f64;
    }

    let mut curious = 0.0;
    for t in 0..trace.steps.len() {
        let mistakes = curiosity_set(trace, t);
        if mistakes.is_empty() {
            continue;
        }
        let mut term = 0.0;
        for &a in &mistakes {
            term += safe_ln(trace.steps[t].p_nav[a]);
        }
        curious += term / mistakes.len() as f64;
    }
    curious /= t_total;

    let mut ask_nl = 0.0;
    let mut reason = 0.0;
    for s in &trace.steps {
        ask_nl -= safe_ln(s.p_ask[ask_index(s.teacher_ask.unwrap())]);
        if let (Some(rho_hat), Some(rho_star)) = (s.rho_hat, s.rho_star) {
            let mut bce = 0.0;
            for i in 0..3 {
                let y = if rho_star[i] { 1.0 } else { 0.0 };
                bce -= y * safe_ln(rho_hat[i]) + (1.0 - y) * safe_ln(1.0 - rho_hat[i]);
            }
            reason += bce / 3.0;
        }
    }
    ask_nl /= t_total;
    reason /= t_total;

    let total = nav_nl + alpha * curious + ask_nl + reason;
    Ok(LossBreakdown {
        nav_nl,
        curious,
        ask_nl,
        reason,
        alpha,
        total,
    })
}

/// Backpropagates the episode loss through every step tape, accumulating
/// parameter gradients, and returns the loss breakdown.
pub fn episode_gradients(
    trace: &EpisodeTrace,
    comps: &[Option<StepComputation>],
    alpha: f64,
    params: &PolicyParameters,
    grads: &mut GradStore,
) -> Result<LossBreakdown> {
    if comps.len() != trace.steps.len() {
        return Err(Error::contract("computation list misaligned with trace"));
    }
    let breakdown = compute_losses(trace, alpha)?;
    let t_total = trace.steps.len() as f64;
    let n_nav = trace
        .steps
        .iter()
        .filter(|s| s.nav_decision_slot.is_some())
        .count() as f64;

    for (t, comp) in comps.iter().enumerate() {
        let Some(comp) = comp else { continue };
        let step = &trace.steps[t];
        let slots = step.p_nav.len();
        let mut nav_seed = Array1::zeros(slots);
        if step.nav_decision_slot.is_some() {
            nav_seed[step.teacher_nav_slot.unwrap()] -= 1.0 / n_nav;
        }
        let mistakes = curiosity_set(trace, t);
        if !mistakes.is_empty() {
            let w = alpha / (t_total * mistakes.len() as f64);
            for &a in &mistakes {
                nav_seed[a] += w;
            }
        }
        if nav_seed.iter().any(|&x| x != 0.0) {
            comp.nav
                .tape
                .backward(vec![(comp.nav.log_p, nav_seed)], &params.store, grads);
        }
        if let Some(ask) = &comp.ask {
            let mut ask_seed = Array1::zeros(2);
            ask_seed[ask_index(step.teacher_ask.unwrap())] -= 1.0 / t_total;
            let mut reason_seed = Array1::zeros(3);
            let rho_star = step.rho_star.unwrap();
            for i in 0..3 {
                let y = if rho_star[i] { 1.0 } else { 0.0 };
                reason_seed[i] = (ask.rho_hat[i] - y) / (3.0 * t_total);
            }
            ask.tape.backward(
                vec![(ask.log_p, ask_seed), (ask.reason_scores, reason_seed)],
                &params.store,
                grads,
            );
        }
    }
    Ok(breakdown)
}

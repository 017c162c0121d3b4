//! Non-learning baselines, heuristic help-request policies, and the
//! skylines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvironmentGraph, NavAction, NUM_NAV_SLOTS, NUM_VIEWS, STOP_SLOT};
use crate::teachers::{nav_teacher_slot, Mode, TeacherTarget};
use crate::training::{AgentPolicy, Decision, LearnedAgent, Observation};
use crate::Result;

fn one_hot(slot: usize) -> Vec<f64> {
    let mut p = vec![0.0; NUM_NAV_SLOTS];
    p[slot] = 1.0;
    p
}

const NEVER_ASK: [f64; 2] = [1.0, 0.0];

/// Uniformly random navigation among the valid slots (stop included);
/// never requests help. Draws internally so greedy selection still walks
/// randomly.
pub struct RandomWalkPolicy;

impl AgentPolicy for RandomWalkPolicy {
    fn begin_episode(&mut self) {}

    fn decide(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Decision> {
        let valid: Vec<usize> = (0..NUM_NAV_SLOTS).filter(|&s| obs.mask[s]).collect();
        let slot = valid[rng.gen_range(0..valid.len())];
        Ok(Decision {
            p_nav: one_hot(slot),
            p_ask: NEVER_ASK,
            rho_hat: None,
            computation: None,
        })
    }
}

/// Moves toward the view slot closest to the current heading for `k`
/// moves, then stops. Never requests help.
pub struct ForwardKPolicy {
    pub k: usize,
    moves: usize,
}

impl ForwardKPolicy {
    pub fn new(k: usize) -> Self {
        ForwardKPolicy { k, moves: 0 }
    }
}

impl AgentPolicy for ForwardKPolicy {
    fn begin_episode(&mut self) {
        self.moves = 0;
    }

    fn decide(&mut self, obs: &Observation, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        if self.moves >= self.k {
            return Ok(Decision {
                p_nav: one_hot(STOP_SLOT),
                p_ask: NEVER_ASK,
                rho_hat: None,
                computation: None,
            });
        }
        // Smallest angular distance between the slot's view heading and
        // the current heading; ties fall to the smaller slot index.
        let mut best: Option<(usize, i8, i8)> = None;
        for slot in 0..NUM_VIEWS {
            if !obs.mask[slot] {
                continue;
            }
            if let Some(NavAction::Move {
                d_heading,
                d_elevation,
                ..
            }) = obs.pan.at_slot(slot)
            {
                let key = (d_heading.abs(), d_elevation.abs());
                let better = match best {
                    None => true,
                    Some((_, bh, be)) => key < (bh, be),
                };
                if better {
                    best = Some((slot, d_heading.abs(), d_elevation.abs()));
                }
            }
        }
        let slot = match best {
            Some((slot, _, _)) => {
                self.moves += 1;
                slot
            }
            None => STOP_SLOT,
        };
        Ok(Decision {
            p_nav: one_hot(slot),
            p_ask: NEVER_ASK,
            rho_hat: None,
            computation: None,
        })
    }
}

/// The skyline: follows the navigation teacher toward the goal set and
/// never requests help.
pub struct ShortestPolicy<'a> {
    pub env: &'a EnvironmentGraph,
    pub goals: &'a [usize],
}

impl AgentPolicy for ShortestPolicy<'_> {
    fn begin_episode(&mut self) {}

    fn decide(&mut self, obs: &Observation, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        let slot = nav_teacher_slot(self.env, &obs.pose, &TeacherTarget::GoalSet(self.goals));
        Ok(Decision {
            p_nav: one_hot(slot),
            p_ask: NEVER_ASK,
            rho_hat: None,
            computation: None,
        })
    }
}

/// How heuristic ask policies decide to request.
pub enum AskRule {
    Never,
    /// Request with this probability whenever inside a zone.
    Random(f64),
    /// Request at the first in-zone step at least `k` steps after the
    /// previous request (or episode start).
    EveryK(usize),
}

/// Wraps a navigation policy with a heuristic help-request rule.
pub struct AskWrapper<N: AgentPolicy> {
    pub nav: N,
    pub rule: AskRule,
    steps_since_request: usize,
}

impl<N: AgentPolicy> AskWrapper<N> {
    pub fn new(nav: N, rule: AskRule) -> Self {
        AskWrapper {
            nav,
            rule,
            steps_since_request: 0,
        }
    }
}

impl<N: AgentPolicy> AgentPolicy for AskWrapper<N> {
    fn begin_episode(&mut self) {
        self.nav.begin_episode();
        self.steps_since_request = 0;
    }

    fn decide(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Decision> {
        let mut decision = self.nav.decide(obs, rng)?;
        let ask = match self.rule {
            AskRule::Never => false,
            AskRule::Random(p) => obs.in_zone && rng.gen_range(0.0..1.0) < p,
            AskRule::EveryK(k) => obs.in_zone && self.steps_since_request >= k,
        };
        decision.p_ask = if ask { [0.0, 1.0] } else { [1.0, 0.0] };
        if ask {
            self.steps_since_request = 0;
        } else {
            self.steps_since_request += 1;
        }
        Ok(decision)
    }

    fn orientation_compat(&self) -> bool {
        self.nav.orientation_compat()
    }
}

/// The perfect-interpretation skyline: the learned help-request policy,
/// but the navigation teacher takes over while executing a subtask.
pub struct PerfectInterpretationPolicy<'a> {
    pub inner: LearnedAgent<'a>,
    pub env: &'a EnvironmentGraph,
}

impl AgentPolicy for PerfectInterpretationPolicy<'_> {
    fn begin_episode(&mut self) {
        self.inner.begin_episode();
    }

    fn decide(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Decision> {
        let mut decision = self.inner.decide(obs, rng)?;
        if obs.mode == Mode::SubTask {
            let target = obs
                .target_node
                .expect("subtask mode always has a departure target");
            let slot = nav_teacher_slot(self.env, &obs.pose, &TeacherTarget::Node(target));
            decision.p_nav = one_hot(slot);
        }
        Ok(decision)
    }

    fn orientation_compat(&self) -> bool {
        self.inner.orientation_compat()
    }
}

/// A scripted policy for protocol tests: fixed per-step navigation slots
/// and ask choices, uniform filler once the script runs out.
pub struct ScriptedPolicy {
    pub nav_slots: Vec<usize>,
    pub ask_steps: Vec<bool>,
    t: usize,
}

impl ScriptedPolicy {
    pub fn new(nav_slots: Vec<usize>, ask_steps: Vec<bool>) -> Self {
        ScriptedPolicy {
            nav_slots,
            ask_steps,
            t: 0,
        }
    }
}

impl AgentPolicy for ScriptedPolicy {
    fn begin_episode(&mut self) {
        self.t = 0;
    }

    fn decide(&mut self, _obs: &Observation, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        let slot = self.nav_slots.get(self.t).copied().unwrap_or(STOP_SLOT);
        let ask = self.ask_steps.get(self.t).copied().unwrap_or(false);
        self.t += 1;
        Ok(Decision {
            p_nav: one_hot(slot),
            p_ask: if ask { [0.0, 1.0] } else { [1.0, 0.0] },
            rho_hat: None,
            computation: None,
        })
    }
}

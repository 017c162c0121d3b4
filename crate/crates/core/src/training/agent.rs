//! The learned agent: both networks plus their per-episode memories.

use rand_chacha::ChaCha8Rng;

use super::rollout::{AgentPolicy, Decision, Observation, StepComputation};
use crate::policy::{ask_step, nav_step, NetMemory, PolicyParameters, StepInputs};
use crate::Result;

pub struct LearnedAgent<'a> {
    params: &'a PolicyParameters,
    /// Dropout rate; zero at evaluation.
    dropout: f64,
    nav_mem: NetMemory,
    ask_mem: NetMemory,
}

impl<'a> LearnedAgent<'a> {
    pub fn new(params: &'a PolicyParameters, dropout: f64) -> Self {
        LearnedAgent {
            params,
            dropout,
            nav_mem: NetMemory::new(&params.cfg),
            ask_mem: NetMemory::new(&params.cfg),
        }
    }

    pub fn nav_memory(&self) -> &NetMemory {
        &self.nav_mem
    }

    pub fn ask_memory(&self) -> &NetMemory {
        &self.ask_mem
    }
}

impl AgentPolicy for LearnedAgent<'_> {
    fn begin_episode(&mut self) {
        self.nav_mem = NetMemory::new(&self.params.cfg);
        self.ask_mem = NetMemory::new(&self.params.cfg);
    }

    fn decide(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Decision> {
        let nav_inputs = StepInputs {
            instr_id: obs.instr_id,
            tokens: obs.tokens,
            cur_views: obs.cur_views,
            tgt_views: obs.tgt_views,
            delta: obs.delta,
            last_action_emb: obs.last_action_emb,
            action_embs: obs.action_embs,
            mask: obs.mask,
            in_zone: obs.in_zone,
            p_nav: None,
        };
        let nav = nav_step(self.params, &mut self.nav_mem, &nav_inputs, self.dropout, rng)?;
        let p_nav = nav.p.clone();
        let ask_inputs = StepInputs {
            p_nav: Some(&p_nav),
            ..nav_inputs
        };
        let ask = ask_step(self.params, &mut self.ask_mem, &ask_inputs, self.dropout, rng)?;
        Ok(Decision {
            p_nav,
            p_ask: ask.p,
            rho_hat: Some(ask.rho_hat),
            computation: Some(StepComputation {
                nav,
                ask: Some(ask),
            }),
        })
    }

    fn orientation_compat(&self) -> bool {
        self.params.cfg.orientation_compat
    }
}

//! The hierarchical memory-augmented networks.
//!
//! Both networks share one skeleton: a text memory re-encoded whenever
//! the active instruction changes, an inter-task component that resets on
//! instruction changes, an intra-task component persisting for the whole
//! episode with a cosine-gated dissimilarity against near-identical past
//! states, and learned local/global time embeddings. They differ in the
//! output head and in the help-request network receiving the navigation
//! distribution as an extra intra-task input.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ad::{MemRef, NodeId, ParamStore, Tape};
use super::modules::{dot_attend, encode_tokens, ffn, inc_time, multi_attend, Regularizer};
use super::params::{HeadIds, NetIds, NetKind, PolicyConfig, PolicyParameters, ORIENT_DIM};
use crate::env::{NavAction, PanoramicActions, ViewFeatureSet, NUM_NAV_SLOTS, NUM_VIEWS};
use crate::{Error, Result};

/// Cosine threshold above which a past state counts as nearly identical.
pub const SIM_THRESHOLD: f64 = 0.9;

/// Mutable per-episode state of one network.
#[derive(Debug, Clone)]
pub struct NetMemory {
    hidden: usize,
    pub instr_id: Option<u32>,
    /// Encoded instruction vectors.
    pub text: Vec<Array1<f64>>,
    /// Inter-task attention memory (queries / outputs); cleared on every
    /// instruction change.
    pub inter_in: Vec<Array1<f64>>,
    pub inter_out: Vec<Array1<f64>>,
    /// Intra-task attention memory; persists for the whole episode.
    pub intra_in: Vec<Array1<f64>>,
    pub intra_out: Vec<Array1<f64>>,
    /// Previous local/global time embeddings (zero seeds at reset).
    pub eta_loc: Array1<f64>,
    pub eta_glob: Array1<f64>,
    pub h_inter_prev: Array1<f64>,
}

impl NetMemory {
    pub fn new(cfg: &PolicyConfig) -> Self {
        NetMemory {
            hidden: cfg.hidden,
            instr_id: None,
            text: Vec::new(),
            inter_in: Vec::new(),
            inter_out: Vec::new(),
            intra_in: Vec::new(),
            intra_out: Vec::new(),
            eta_loc: Array1::zeros(cfg.hidden),
            eta_glob: Array1::zeros(cfg.hidden),
            h_inter_prev: Array1::zeros(cfg.hidden),
        }
    }

    /// Clears everything keyed to the active instruction.
    fn reset_inter(&mut self) {
        self.inter_in.clear();
        self.inter_out.clear();
        self.eta_loc = Array1::zeros(self.hidden);
        self.h_inter_prev = Array1::zeros(self.hidden);
    }
}

/// Observation slice consumed by one network at one step.
pub struct StepInputs<'a> {
    pub instr_id: u32,
    pub tokens: &'a [u32],
    pub cur_views: &'a ViewFeatureSet,
    pub tgt_views: Option<&'a ViewFeatureSet>,
    /// Target-similarity vector, 36 entries (zeros without a target).
    pub delta: &'a Array1<f64>,
    /// Embedding of the previously executed action.
    pub last_action_emb: &'a Array1<f64>,
    /// 37 action embeddings in canonical slot order (zeros for stop and
    /// unassigned slots).
    pub action_embs: &'a [Array1<f64>],
    /// Valid-slot mask, 37 entries.
    pub mask: &'a [bool],
    pub in_zone: bool,
    /// Canonical navigation distribution, required by the ask network.
    pub p_nav: Option<&'a [f64]>,
}

pub struct InterStep {
    pub q_inter: NodeId,
    pub h_inter: NodeId,
    pub c_text: NodeId,
    pub c_cur: NodeId,
    pub c_tgt: NodeId,
}

/// Inter-task update: attends over the current view with the previous
/// inter state, queries the inter memory, then reads the text memory and
/// focuses the current/target views. Appends (q, h) to the inter memory.
#[allow(clippy::too_many_arguments)]
pub fn inter_task_step(
    tape: &mut Tape,
    ps: &ParamStore,
    net: &NetIds,
    cfg: &PolicyConfig,
    mem: &mut NetMemory,
    inputs: &StepInputs,
    text_nodes: Option<&[NodeId]>,
    eta_loc_new: NodeId,
    reg: &mut Regularizer,
) -> InterStep {
    let cur_rows: Vec<Array1<f64>> = inputs.cur_views.views().to_vec();
    let h_prev = tape.leaf(mem.h_inter_prev.clone());
    let c_inter = dot_attend(tape, h_prev, &cur_rows);
    let last_act = tape.leaf(inputs.last_action_emb.clone());
    let delta = tape.leaf(inputs.delta.clone());
    let packed = tape.concat(&[c_inter, last_act, delta]);
    let projected = tape.affine(ps, net.w_inter, None, packed);
    let q_inter = tape.add(projected, eta_loc_new);
    let h_inter = multi_attend(
        tape,
        ps,
        &net.inter_attn,
        cfg.n_heads,
        q_inter,
        MemRef::Const(mem.inter_in.clone()),
        MemRef::Const(mem.inter_out.clone()),
        reg,
    );
    let text_ref = match text_nodes {
        Some(ids) => MemRef::Nodes(ids.to_vec()),
        None => MemRef::Const(mem.text.clone()),
    };
    let attended = multi_attend(
        tape,
        ps,
        &net.text_attn,
        cfg.n_heads,
        h_inter,
        text_ref.clone(),
        text_ref,
        reg,
    );
    let c_text = ffn(tape, ps, &net.text_ffn, attended, reg);
    let c_cur = dot_attend(tape, c_text, &cur_rows);
    let c_tgt = match inputs.tgt_views {
        Some(tgt) => {
            let rows: Vec<Array1<f64>> = tgt.views().to_vec();
            dot_attend(tape, c_text, &rows)
        }
        None => tape.leaf(Array1::zeros(cfg.feature_dim)),
    };
    mem.inter_in.push(tape.value(q_inter).clone());
    mem.inter_out.push(tape.value(h_inter).clone());
    mem.h_inter_prev = tape.value(h_inter).clone();
    InterStep {
        q_inter,
        h_inter,
        c_text,
        c_cur,
        c_tgt,
    }
}

pub struct IntraStep {
    pub q_intra: NodeId,
    pub attended: NodeId,
    pub h_bar: NodeId,
    pub h_tilde: NodeId,
    pub beta: NodeId,
    pub h_intra: NodeId,
}

/// Intra-task update: h = h_bar - beta * h_tilde, where h_bar is the
/// feed-forward of self-attention over the episode memory and h_tilde is
/// the cosine-gated blend of nearly identical past states. Appends
/// (q, attention output) to the intra memory.
#[allow(clippy::too_many_arguments)]
pub fn intra_task_step(
    tape: &mut Tape,
    ps: &ParamStore,
    net: &NetIds,
    cfg: &PolicyConfig,
    mem: &mut NetMemory,
    inter: &InterStep,
    inputs: &StepInputs,
    eta_glob_new: NodeId,
    reg: &mut Regularizer,
) -> Result<IntraStep> {
    let delta = tape.leaf(inputs.delta.clone());
    let mut parts = vec![inter.c_text, inter.c_cur, inter.c_tgt, delta];
    if matches!(net.head, HeadIds::Ask { .. }) {
        let p_nav = inputs.p_nav.ok_or_else(|| {
            Error::contract("the help-request network requires the navigation distribution")
        })?;
        if p_nav.len() != NUM_NAV_SLOTS {
            return Err(Error::contract("navigation distribution must have 37 slots"));
        }
        parts.push(tape.leaf(Array1::from(p_nav.to_vec())));
    }
    let packed = tape.concat(&parts);
    let projected = tape.affine(ps, net.w_intra, None, packed);
    let q_intra = tape.add(projected, eta_glob_new);
    let attended = multi_attend(
        tape,
        ps,
        &net.intra_attn,
        cfg.n_heads,
        q_intra,
        MemRef::Const(mem.intra_in.clone()),
        MemRef::Const(mem.intra_out.clone()),
        reg,
    );
    let h_bar = ffn(tape, ps, &net.intra_ffn, attended, reg);
    let h_tilde = tape.sim_attend(
        q_intra,
        mem.intra_in.clone(),
        mem.intra_out.clone(),
        SIM_THRESHOLD,
        cfg.hidden,
    );
    let gate_in = tape.concat(&[h_bar, h_tilde]);
    let gate_lin = tape.affine(ps, net.w_gate, None, gate_in);
    let beta = tape.sigmoid(gate_lin);
    let scaled = tape.mul(beta, h_tilde);
    let h_intra = tape.sub(h_bar, scaled);
    mem.intra_in.push(tape.value(q_intra).clone());
    mem.intra_out.push(tape.value(attended).clone());
    Ok(IntraStep {
        q_intra,
        attended,
        h_bar,
        h_tilde,
        beta,
        h_intra,
    })
}

fn advance_time(
    tape: &mut Tape,
    ps: &ParamStore,
    net: &NetIds,
    mem: &NetMemory,
) -> (NodeId, NodeId) {
    let loc_prev = tape.leaf(mem.eta_loc.clone());
    let eta_loc = inc_time(tape, ps, &net.time_loc, loc_prev, loc_prev);
    let glob_prev = tape.leaf(mem.eta_glob.clone());
    let packed = tape.concat(&[eta_loc, glob_prev]);
    let eta_glob = inc_time(tape, ps, &net.time_glob, packed, glob_prev);
    (eta_loc, eta_glob)
}

/// Shared trunk: instruction bookkeeping, time update, inter and intra
/// components. Returns the intra state node.
#[allow(clippy::too_many_arguments)]
fn trunk(
    tape: &mut Tape,
    params: &PolicyParameters,
    kind: NetKind,
    mem: &mut NetMemory,
    inputs: &StepInputs,
    reg: &mut Regularizer,
) -> Result<IntraStep> {
    let ps = &params.store;
    let net = params.net(kind);
    let cfg = &params.cfg;
    let text_nodes = if mem.instr_id != Some(inputs.instr_id) {
        mem.reset_inter();
        mem.instr_id = Some(inputs.instr_id);
        let ids = encode_tokens(tape, ps, net, cfg, inputs.tokens, reg)?;
        mem.text = ids.iter().map(|&id| tape.value(id).clone()).collect();
        Some(ids)
    } else {
        None
    };
    let (eta_loc, eta_glob) = advance_time(tape, ps, net, mem);
    let inter = inter_task_step(
        tape,
        ps,
        net,
        cfg,
        mem,
        inputs,
        text_nodes.as_deref(),
        eta_loc,
        reg,
    );
    let intra = intra_task_step(tape, ps, net, cfg, mem, &inter, inputs, eta_glob, reg)?;
    mem.eta_loc = tape.value(eta_loc).clone();
    mem.eta_glob = tape.value(eta_glob).clone();
    Ok(intra)
}

pub struct NavForward {
    pub tape: Tape,
    /// Masked log-probabilities over the 37 canonical slots.
    pub log_p: NodeId,
    pub p: Vec<f64>,
}

/// Full navigation-network step.
pub fn nav_step(
    params: &PolicyParameters,
    mem: &mut NetMemory,
    inputs: &StepInputs,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NavForward> {
    let mut tape = Tape::new();
    let mut reg = Regularizer { rate: dropout, rng };
    let intra = trunk(&mut tape, params, NetKind::Nav, mem, inputs, &mut reg)?;
    let HeadIds::Nav { w_out, w_act } = params.nav.head else {
        unreachable!("navigation net has a navigation head");
    };
    let scores = tape.bilinear_scores(
        &params.store,
        w_out,
        w_act,
        intra.h_intra,
        inputs.action_embs.to_vec(),
    );
    let log_p = tape.log_softmax_masked(scores, inputs.mask.to_vec());
    let p = tape
        .value(log_p)
        .iter()
        .map(|&v| if v.is_finite() { v.exp() } else { 0.0 })
        .collect();
    Ok(NavForward { tape, log_p, p })
}

pub struct AskForward {
    pub tape: Tape,
    /// Masked log-probabilities over [do_nothing, request_help].
    pub log_p: NodeId,
    pub p: [f64; 2],
    /// Raw per-condition scores (pre-sigmoid), for the reason loss.
    pub reason_scores: NodeId,
    pub rho_hat: [f64; 3],
}

/// Full help-request-network step. Outside a zone of attention the
/// request action is masked to probability zero.
pub fn ask_step(
    params: &PolicyParameters,
    mem: &mut NetMemory,
    inputs: &StepInputs,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<AskForward> {
    let mut tape = Tape::new();
    let mut reg = Regularizer { rate: dropout, rng };
    let intra = trunk(&mut tape, params, NetKind::Ask, mem, inputs, &mut reg)?;
    let HeadIds::Ask {
        w_head,
        e_ask,
        e_reason,
    } = params.ask.head
    else {
        unreachable!("help-request net has an ask head");
    };
    let z = tape.affine(&params.store, w_head, None, intra.h_intra);
    let ask_scores = tape.affine(&params.store, e_ask, None, z);
    let log_p = tape.log_softmax_masked(ask_scores, vec![true, inputs.in_zone]);
    let p_vec = tape.value(log_p);
    let p = [
        p_vec[0].exp(),
        if p_vec[1].is_finite() { p_vec[1].exp() } else { 0.0 },
    ];
    let reason_scores = tape.affine(&params.store, e_reason, None, z);
    let rv = tape.value(reason_scores);
    let rho_hat = [sigmoid(rv[0]), sigmoid(rv[1]), sigmoid(rv[2])];
    Ok(AskForward {
        tape,
        log_p,
        p,
        reason_scores,
        rho_hat,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Standalone instruction encoding: one vector per token, deterministic.
pub fn encode_instruction(
    params: &PolicyParameters,
    kind: NetKind,
    tokens: &[u32],
) -> Result<Vec<Array1<f64>>> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut reg = Regularizer {
        rate: 0.0,
        rng: &mut rng,
    };
    let ids = encode_tokens(
        &mut tape,
        &params.store,
        params.net(kind),
        &params.cfg,
        tokens,
        &mut reg,
    )?;
    Ok(ids.into_iter().map(|id| tape.value(id).clone()).collect())
}

/// Row-max cosine similarity between current and target panoramas; the
/// zero vector when either view set is absent.
pub fn target_similarity(
    cur: Option<&ViewFeatureSet>,
    tgt: Option<&ViewFeatureSet>,
) -> Array1<f64> {
    let mut delta = Array1::zeros(NUM_VIEWS);
    let (Some(cur), Some(tgt)) = (cur, tgt) else {
        return delta;
    };
    for i in 0..NUM_VIEWS {
        let a = cur.view(i);
        let an = a.dot(a).sqrt().max(1e-12);
        let mut best = f64::NEG_INFINITY;
        for j in 0..NUM_VIEWS {
            let b = tgt.view(j);
            let bn = b.dot(b).sqrt().max(1e-12);
            best = best.max(a.dot(b) / (an * bn));
        }
        delta[i] = best;
    }
    delta
}

/// Orientation feature for a camera change, in grid slots.
fn orientation_feature(d_heading: i8, d_elevation: i8, compat: bool) -> [f64; ORIENT_DIM] {
    let dpsi = d_heading as f64 * crate::env::SLOT_RAD;
    let domega = d_elevation as f64 * crate::env::SLOT_RAD;
    if compat {
        // Published form repeats sin(d_omega) where cos belongs.
        [dpsi.sin(), dpsi.cos(), domega.sin(), domega.sin()]
    } else {
        [dpsi.sin(), dpsi.cos(), domega.sin(), domega.cos()]
    }
}

/// Action embeddings in canonical slot order: view feature of the slot
/// concatenated with the orientation feature; stop and unassigned slots
/// are zero vectors. Also returns the validity mask.
pub fn action_embeddings(
    pan: &PanoramicActions,
    views: &ViewFeatureSet,
    compat: bool,
) -> (Vec<Array1<f64>>, Vec<bool>) {
    let dim = views.dim() + ORIENT_DIM;
    let mut embs = Vec::with_capacity(NUM_NAV_SLOTS);
    for slot in 0..NUM_VIEWS {
        match pan.at_slot(slot) {
            Some(NavAction::Move {
                d_heading,
                d_elevation,
                ..
            }) => {
                let mut e = Array1::zeros(dim);
                e.slice_mut(ndarray::s![..views.dim()]).assign(views.view(slot));
                let orient = orientation_feature(d_heading, d_elevation, compat);
                for (k, &o) in orient.iter().enumerate() {
                    e[views.dim() + k] = o;
                }
                embs.push(e);
            }
            _ => embs.push(Array1::zeros(dim)),
        }
    }
    embs.push(Array1::zeros(dim)); // stop
    (embs, pan.mask())
}

/// Embedding of an executed action as seen from the pre-move pose: the
/// pre-move view in the action's direction (the post-rotation view for
/// in-place rotations) plus the orientation feature; zeros for stop.
pub fn executed_action_embedding(
    action: &NavAction,
    pan: &PanoramicActions,
    pre_views: &ViewFeatureSet,
    pre_pose: &crate::env::Pose,
    compat: bool,
) -> Array1<f64> {
    let dim = pre_views.dim() + ORIENT_DIM;
    match *action {
        NavAction::Stop => Array1::zeros(dim),
        NavAction::Move {
            to,
            d_heading,
            d_elevation,
        } => {
            let slot = if to != pre_pose.node {
                pan.slot_of_target(to)
            } else {
                None
            }
            .unwrap_or_else(|| {
                // Rotation in place (or a forced move whose target lost its
                // slot): use the view at the post-change camera angles.
                let h = wrap_slot(pre_pose.heading_slot() as i64 + d_heading as i64);
                let e = (pre_pose.elevation_slot() as i64 + d_elevation as i64).clamp(-1, 1);
                crate::env::view_index(h, e as i8)
            });
            let mut out = Array1::zeros(dim);
            out.slice_mut(ndarray::s![..pre_views.dim()])
                .assign(pre_views.view(slot));
            let orient = orientation_feature(d_heading, d_elevation, compat);
            for (k, &o) in orient.iter().enumerate() {
                out[pre_views.dim() + k] = o;
            }
            out
        }
    }
}

fn wrap_slot(k: i64) -> u8 {
    let k = k.rem_euclid(12);
    if k == 0 {
        12
    } else {
        k as u8
    }
}

//! Hierarchical memory-augmented policy networks with exact reverse-mode
//! gradients.

pub mod ad;
pub mod gradcheck;
mod modules;
mod net;
mod params;

pub use ad::{GradStore, MemRef, NodeId, ParamId, ParamStore, ParamValue, Tape};
pub use modules::{dot_attend, encode_tokens, ffn, inc_time, multi_attend, Regularizer};
pub use net::{
    action_embeddings, ask_step, encode_instruction, executed_action_embedding, inter_task_step,
    intra_task_step, nav_step, target_similarity, AskForward, InterStep, IntraStep, NavForward,
    NetMemory, StepInputs, SIM_THRESHOLD,
};
pub use params::{
    load_checkpoint, save_checkpoint, AttnIds, FfnIds, HeadIds, IncTimeIds, NetIds, NetKind,
    PolicyConfig, PolicyParameters, ORIENT_DIM,
};

//! Network configuration, the named parameter registry for both
//! networks, and the checkpoint format.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ad::{ParamId, ParamStore, ParamValue};
use crate::anna::VOCAB_SIZE;
use crate::env::{NUM_NAV_SLOTS, NUM_VIEWS};
use crate::{Error, Result};

/// Orientation feature width: sin/cos of the heading change plus two
/// elevation terms.
pub const ORIENT_DIM: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolicyConfig {
    pub hidden: usize,
    /// Rendered view feature dimension; must equal `hidden` because the
    /// dot-product attentions score hidden-state queries against raw view
    /// vectors.
    pub feature_dim: usize,
    pub n_heads: usize,
    /// Navigation action-embedding projection size.
    pub action_emb_dim: usize,
    /// Help-request/reason embedding size.
    pub ask_emb_dim: usize,
    pub vocab_size: usize,
    pub max_instr_len: usize,
    /// Dropout on attention and feed-forward outputs during training.
    pub dropout: f64,
    /// Reproduce the published orientation feature verbatim (duplicated
    /// sin of the elevation change) instead of the sin/cos pair.
    pub orientation_compat: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: 32,
            feature_dim: 32,
            n_heads: 2,
            action_emb_dim: 32,
            ask_emb_dim: 32,
            vocab_size: VOCAB_SIZE,
            max_instr_len: 50,
            dropout: 0.3,
            orientation_compat: false,
        }
    }
}

impl PolicyConfig {
    /// A tiny configuration for gradient-checking tests.
    pub fn tiny() -> Self {
        PolicyConfig {
            hidden: 8,
            feature_dim: 8,
            n_heads: 2,
            action_emb_dim: 8,
            ask_emb_dim: 8,
            dropout: 0.0,
            ..PolicyConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.hidden % self.n_heads != 0 {
            return Err(Error::validation(format!(
                "hidden size {} must be a positive multiple of n_heads {}",
                self.hidden, self.n_heads
            )));
        }
        if self.feature_dim != self.hidden {
            return Err(Error::validation(format!(
                "feature_dim {} must equal hidden {} (view vectors key the dot attentions)",
                self.feature_dim, self.hidden
            )));
        }
        if self.vocab_size == 0 || self.max_instr_len == 0 {
            return Err(Error::validation("vocab and instruction length must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout must be in [0, 1)"));
        }
        Ok(())
    }

    /// Width of an action embedding: view feature plus orientation.
    pub fn action_input_dim(&self) -> usize {
        self.feature_dim + ORIENT_DIM
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttnIds {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
}

impl AttnIds {
    fn register(ps: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, dim: usize) -> Self {
        AttnIds {
            wq: ps.add_mat(&format!("{prefix}.wq"), dim, dim, rng),
            wk: ps.add_mat(&format!("{prefix}.wk"), dim, dim, rng),
            wv: ps.add_mat(&format!("{prefix}.wv"), dim, dim, rng),
            wo: ps.add_mat(&format!("{prefix}.wo"), dim, dim, rng),
            ln_gain: ps.add_vec_ones(&format!("{prefix}.ln_gain"), dim),
            ln_bias: ps.add_vec_zeros(&format!("{prefix}.ln_bias"), dim),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
}

impl FfnIds {
    fn register(ps: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, dim: usize) -> Self {
        FfnIds {
            w1: ps.add_mat(&format!("{prefix}.w1"), 4 * dim, dim, rng),
            b1: ps.add_vec_zeros(&format!("{prefix}.b1"), 4 * dim),
            w2: ps.add_mat(&format!("{prefix}.w2"), dim, 4 * dim, rng),
            b2: ps.add_vec_zeros(&format!("{prefix}.b2"), dim),
            ln_gain: ps.add_vec_ones(&format!("{prefix}.ln_gain"), dim),
            ln_bias: ps.add_vec_zeros(&format!("{prefix}.ln_bias"), dim),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IncTimeIds {
    pub w: ParamId,
    pub b: ParamId,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
}

impl IncTimeIds {
    fn register(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        out_dim: usize,
        in_dim: usize,
    ) -> Self {
        IncTimeIds {
            w: ps.add_mat(&format!("{prefix}.w"), out_dim, in_dim, rng),
            // A zero bias would make the zero seed a fixed point of the
            // time operator (and ReLU would block its gradient).
            b: ps.add_vec_uniform(&format!("{prefix}.b"), out_dim, 0.5, rng),
            ln_gain: ps.add_vec_ones(&format!("{prefix}.ln_gain"), out_dim),
            ln_bias: ps.add_vec_zeros(&format!("{prefix}.ln_bias"), out_dim),
        }
    }
}

/// Output heads: bilinear action scores for navigation; projected
/// help-request/reason embeddings for the ask network.
#[derive(Debug, Clone, Copy)]
pub enum HeadIds {
    Nav { w_out: ParamId, w_act: ParamId },
    Ask {
        w_head: ParamId,
        e_ask: ParamId,
        e_reason: ParamId,
    },
}

/// Parameter ids of one network (navigation or help-request).
#[derive(Debug, Clone, Copy)]
pub struct NetIds {
    pub embed: ParamId,
    pub enc_attn: AttnIds,
    pub enc_ffn: FfnIds,
    pub w_inter: ParamId,
    pub inter_attn: AttnIds,
    pub text_attn: AttnIds,
    pub text_ffn: FfnIds,
    pub w_intra: ParamId,
    pub intra_attn: AttnIds,
    pub intra_ffn: FfnIds,
    pub w_gate: ParamId,
    pub time_loc: IncTimeIds,
    pub time_glob: IncTimeIds,
    pub head: HeadIds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Nav,
    Ask,
}

fn register_net(
    ps: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    cfg: &PolicyConfig,
    kind: NetKind,
) -> NetIds {
    let p = match kind {
        NetKind::Nav => "nav",
        NetKind::Ask => "ask",
    };
    let h = cfg.hidden;
    let f = cfg.feature_dim;
    let inter_in = f + cfg.action_input_dim() + NUM_VIEWS;
    let mut intra_in = h + 2 * f + NUM_VIEWS;
    if kind == NetKind::Ask {
        intra_in += NUM_NAV_SLOTS;
    }
    let head = match kind {
        NetKind::Nav => HeadIds::Nav {
            w_out: ps.add_mat(&format!("{p}.head.w_out"), cfg.action_emb_dim, h, rng),
            w_act: ps.add_mat(
                &format!("{p}.head.w_act"),
                cfg.action_emb_dim,
                cfg.action_input_dim(),
                rng,
            ),
        },
        NetKind::Ask => HeadIds::Ask {
            w_head: ps.add_mat(&format!("{p}.head.w_head"), cfg.ask_emb_dim, h, rng),
            e_ask: ps.add_mat(&format!("{p}.head.e_ask"), 2, cfg.ask_emb_dim, rng),
            e_reason: ps.add_mat(&format!("{p}.head.e_reason"), 3, cfg.ask_emb_dim, rng),
        },
    };
    NetIds {
        embed: ps.add_mat(&format!("{p}.enc.embed"), cfg.vocab_size, h, rng),
        enc_attn: AttnIds::register(ps, rng, &format!("{p}.enc.attn"), h),
        enc_ffn: FfnIds::register(ps, rng, &format!("{p}.enc.ffn"), h),
        w_inter: ps.add_mat(&format!("{p}.w_inter"), h, inter_in, rng),
        inter_attn: AttnIds::register(ps, rng, &format!("{p}.inter.attn"), h),
        text_attn: AttnIds::register(ps, rng, &format!("{p}.text.attn"), h),
        text_ffn: FfnIds::register(ps, rng, &format!("{p}.text.ffn"), h),
        w_intra: ps.add_mat(&format!("{p}.w_intra"), h, intra_in, rng),
        intra_attn: AttnIds::register(ps, rng, &format!("{p}.intra.attn"), h),
        intra_ffn: FfnIds::register(ps, rng, &format!("{p}.intra.ffn"), h),
        w_gate: ps.add_mat(&format!("{p}.w_gate"), h, 2 * h, rng),
        time_loc: IncTimeIds::register(ps, rng, &format!("{p}.time.loc"), h, h),
        time_glob: IncTimeIds::register(ps, rng, &format!("{p}.time.glob"), h, 2 * h),
        head,
    }
}

/// The complete parameter set: configuration plus both networks in one
/// flat named store.
#[derive(Debug, Clone)]
pub struct PolicyParameters {
    pub cfg: PolicyConfig,
    pub store: ParamStore,
    pub nav: NetIds,
    pub ask: NetIds,
}

impl PolicyParameters {
    pub fn new(cfg: PolicyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let nav = register_net(&mut store, &mut rng, &cfg, NetKind::Nav);
        let ask = register_net(&mut store, &mut rng, &cfg, NetKind::Ask);
        Ok(PolicyParameters {
            cfg,
            store,
            nav,
            ask,
        })
    }

    pub fn net(&self, kind: NetKind) -> &NetIds {
        match kind {
            NetKind::Nav => &self.nav,
            NetKind::Ask => &self.ask,
        }
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: PolicyConfig,
    params: Vec<ParamRecord>,
}

pub fn save_checkpoint(params: &PolicyParameters, path: &Path) -> Result<()> {
    let records = params
        .store
        .names()
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let value = params.store.value(i);
            let data = match value {
                ParamValue::Mat(m) => m.iter().copied().collect(),
                ParamValue::Vec(v) => v.to_vec(),
            };
            ParamRecord {
                name: name.clone(),
                shape: value.shape(),
                data,
            }
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config: params.cfg.clone(),
        params: records,
    };
    let text = serde_json::to_string(&file).expect("checkpoint serializes");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParameters> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::validation(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let mut params = PolicyParameters::new(file.config, 0)?;
    if file.params.len() != params.store.len() {
        return Err(Error::validation(format!(
            "checkpoint has {} parameters, model expects {}",
            file.params.len(),
            params.store.len()
        )));
    }
    for rec in file.params {
        let value = match rec.shape.len() {
            1 => {
                if rec.data.len() != rec.shape[0] {
                    return Err(Error::ShapeMismatch {
                        name: rec.name,
                        expected: format!("{:?}", rec.shape),
                        got: format!("[{}]", rec.data.len()),
                    });
                }
                ParamValue::Vec(ndarray::Array1::from(rec.data))
            }
            2 => {
                let m = ndarray::Array2::from_shape_vec((rec.shape[0], rec.shape[1]), rec.data)
                    .map_err(|_| Error::ShapeMismatch {
                        name: rec.name.clone(),
                        expected: format!("{:?}", rec.shape),
                        got: "wrong element count".to_string(),
                    })?;
                ParamValue::Mat(m)
            }
            _ => {
                return Err(Error::validation(format!(
                    "parameter '{}' has unsupported rank {}",
                    rec.name,
                    rec.shape.len()
                )))
            }
        };
        params.store.set_value(&rec.name, value)?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let params = PolicyParameters::new(PolicyConfig::tiny(), 42).unwrap();
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(params.cfg, loaded.cfg);
        for i in 0..params.store.len() {
            match (params.store.value(i), loaded.store.value(i)) {
                (ParamValue::Mat(a), ParamValue::Mat(b)) => assert_eq!(a, b),
                (ParamValue::Vec(a), ParamValue::Vec(b)) => assert_eq!(a, b),
                _ => panic!("layout changed through the checkpoint"),
            }
        }
        // And the serialized form itself is stable.
        let again = dir.path().join("ckpt2.json");
        save_checkpoint(&loaded, &again).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            std::fs::read_to_string(&again).unwrap()
        );
    }

    #[test]
    fn config_validation_catches_mismatches() {
        let mut cfg = PolicyConfig::default();
        cfg.feature_dim = 16;
        assert!(cfg.validate().is_err());
        let mut cfg = PolicyConfig::default();
        cfg.n_heads = 5;
        assert!(cfg.validate().is_err());
    }
}

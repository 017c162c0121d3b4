//! Composite building blocks on top of the tape: residual multi-head
//! attention, feed-forward sublayers, dot-product attention, the
//! time-incrementing operator, and the one-layer instruction encoder.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use super::ad::{MemRef, NodeId, ParamStore, Tape};
use super::params::{AttnIds, FfnIds, IncTimeIds, NetIds, PolicyConfig};
use crate::{Error, Result};

/// Training-time dropout. `rate == 0.0` draws nothing from the rng.
pub struct Regularizer<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Regularizer<'_> {
    fn apply(&mut self, tape: &mut Tape, x: NodeId) -> NodeId {
        tape.dropout(x, self.rate, self.rng)
    }
}

/// Multi-head attention with residual connection and layer norm. An empty
/// memory returns the layer-normed query (residual path only).
#[allow(clippy::too_many_arguments)]
pub fn multi_attend(
    tape: &mut Tape,
    ps: &ParamStore,
    ids: &AttnIds,
    n_heads: usize,
    q: NodeId,
    keys: MemRef,
    values: MemRef,
    reg: &mut Regularizer,
) -> NodeId {
    if keys.is_empty() {
        return tape.layer_norm(ps, ids.ln_gain, ids.ln_bias, q);
    }
    let attended =
        tape.multi_head_attention(ps, ids.wq, ids.wk, ids.wv, ids.wo, n_heads, q, keys, values);
    let attended = reg.apply(tape, attended);
    let summed = tape.add(q, attended);
    tape.layer_norm(ps, ids.ln_gain, ids.ln_bias, summed)
}

/// Position-wise feed-forward sublayer: LN(x + W2 relu(W1 x + b1) + b2),
/// hidden width 4x.
pub fn ffn(
    tape: &mut Tape,
    ps: &ParamStore,
    ids: &FfnIds,
    x: NodeId,
    reg: &mut Regularizer,
) -> NodeId {
    let inner = tape.affine(ps, ids.w1, Some(ids.b1), x);
    let inner = tape.relu(inner);
    let out = tape.affine(ps, ids.w2, Some(ids.b2), inner);
    let out = reg.apply(tape, out);
    let summed = tape.add(x, out);
    tape.layer_norm(ps, ids.ln_gain, ids.ln_bias, summed)
}

/// Time increment: LN(residual + relu(W x + b)). The local variant feeds
/// x = residual = previous local embedding; the global variant feeds
/// x = [local; previous global] with the previous global as residual.
pub fn inc_time(
    tape: &mut Tape,
    ps: &ParamStore,
    ids: &IncTimeIds,
    x: NodeId,
    residual: NodeId,
) -> NodeId {
    let lin = tape.affine(ps, ids.w, Some(ids.b), x);
    let act = tape.relu(lin);
    let summed = tape.add(residual, act);
    tape.layer_norm(ps, ids.ln_gain, ids.ln_bias, summed)
}

/// Parameter-free dot-product attention over a constant memory; returns
/// the convex combination of the memory rows.
pub fn dot_attend(tape: &mut Tape, q: NodeId, memory: &[Array1<f64>]) -> NodeId {
    let scores = tape.dot_set(q, memory.to_vec());
    let weights = tape.softmax(scores);
    tape.weighted_sum(weights, memory.to_vec())
}

/// Sinusoid position encoding row.
fn position_encoding(pos: usize, dim: usize) -> Array1<f64> {
    Array1::from_shape_fn(dim, |i| {
        let exponent = (2 * (i / 2)) as f64 / dim as f64;
        let angle = pos as f64 / 10000f64.powf(exponent);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// One-layer transformer encoder over an instruction: embedding plus
/// sinusoid positions, bidirectional self-attention, feed-forward. Emits
/// one node per token. Inputs longer than `max_instr_len` are truncated.
pub fn encode_tokens(
    tape: &mut Tape,
    ps: &ParamStore,
    net: &NetIds,
    cfg: &PolicyConfig,
    tokens: &[u32],
    reg: &mut Regularizer,
) -> Result<Vec<NodeId>> {
    if tokens.is_empty() {
        return Err(Error::contract("cannot encode an empty instruction"));
    }
    let tokens = &tokens[..tokens.len().min(cfg.max_instr_len)];
    let mut xs = Vec::with_capacity(tokens.len());
    for (pos, &tok) in tokens.iter().enumerate() {
        if tok as usize >= cfg.vocab_size {
            return Err(Error::UnknownToken(tok));
        }
        let e = tape.param_row(ps, net.embed, tok as usize);
        let p = tape.leaf(position_encoding(pos, cfg.hidden));
        xs.push(tape.add(e, p));
    }
    let attended: Vec<NodeId> = xs
        .iter()
        .map(|&x| {
            multi_attend(
                tape,
                ps,
                &net.enc_attn,
                cfg.n_heads,
                x,
                MemRef::Nodes(xs.clone()),
                MemRef::Nodes(xs.clone()),
                reg,
            )
        })
        .collect();
    Ok(attended
        .into_iter()
        .map(|a| ffn(tape, ps, &net.enc_ffn, a, reg))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::params::{NetKind, PolicyParameters};
    use rand::SeedableRng;

    #[test]
    fn dot_attend_is_convex_combination() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mem: Vec<Array1<f64>> = (0..5)
            .map(|_| Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let mut tape = Tape::new();
        let q = tape.leaf(Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0)));
        let scores = tape.dot_set(q, mem.clone());
        let w = tape.softmax(scores);
        let sum: f64 = tape.value(w).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(tape.value(w).iter().all(|&x| x >= 0.0));
        let out = tape.weighted_sum(w, mem.clone());
        // Output stays inside the bounding box of the memory rows.
        for d in 0..4 {
            let lo = mem.iter().map(|m| m[d]).fold(f64::INFINITY, f64::min);
            let hi = mem.iter().map(|m| m[d]).fold(f64::NEG_INFINITY, f64::max);
            let v = tape.value(out)[d];
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn inc_time_output_is_layer_normalized() {
        use rand::Rng;
        let params = PolicyParameters::new(PolicyConfig::tiny(), 3).unwrap();
        let net = params.net(NetKind::Nav);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let x = tape.leaf(Array1::from_shape_fn(params.cfg.hidden, |_| {
            rng.gen_range(-1.0..1.0)
        }));
        let out = inc_time(&mut tape, &params.store, &net.time_loc, x, x);
        let v = tape.value(out);
        let n = v.len() as f64;
        let mean = v.sum() / n;
        let var = v.mapv(|y| (y - mean) * (y - mean)).sum() / n;
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-2, "variance {var}");
        // Reapplication is reproducible bit for bit.
        let mut tape2 = Tape::new();
        let x2 = tape2.leaf(tape.value(x).clone());
        let out2 = inc_time(&mut tape2, &params.store, &net.time_loc, x2, x2);
        assert_eq!(tape.value(out), tape2.value(out2));
    }

    #[test]
    fn encoder_shapes_purity_and_position_sensitivity() {
        let params = PolicyParameters::new(PolicyConfig::tiny(), 11).unwrap();
        let net = params.net(NetKind::Nav);
        let encode = |tokens: &[u32]| -> Vec<Array1<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut reg = Regularizer { rate: 0.0, rng: &mut rng };
            let mut tape = Tape::new();
            let ids =
                encode_tokens(&mut tape, &params.store, net, &params.cfg, tokens, &mut reg)
                    .unwrap();
            ids.into_iter().map(|id| tape.value(id).clone()).collect()
        };
        // Single token: memory of size 1.
        assert_eq!(encode(&[2]).len(), 1);
        // Purity.
        let a = encode(&[2, 40, 6]);
        let b = encode(&[2, 40, 6]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
        // Swapping two tokens changes the output: positions are encoded.
        let swapped = encode(&[40, 2, 6]);
        assert!(a
            .iter()
            .zip(&swapped)
            .any(|(x, y)| (x - y).mapv(f64::abs).sum() > 1e-9));
        // Unknown token and empty input are rejected.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut reg = Regularizer { rate: 0.0, rng: &mut rng };
        let mut tape = Tape::new();
        assert!(encode_tokens(&mut tape, &params.store, net, &params.cfg, &[9999], &mut reg)
            .is_err());
        assert!(encode_tokens(&mut tape, &params.store, net, &params.cfg, &[], &mut reg)
            .is_err());
    }
}

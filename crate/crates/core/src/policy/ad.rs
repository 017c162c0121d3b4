//! Reverse-mode automatic differentiation over f64 vectors.
//!
//! Each decision step builds one `Tape`. Values flowing in from previous
//! steps (memories, time embeddings, rendered features) enter as constant
//! leaves, so a backward sweep yields the exact gradient of the per-step
//! computation with respect to every parameter — the truncated-backprop
//! semantics the trainer uses. Attention primitives are fused nodes with
//! hand-written backward passes; everything is checked against central
//! finite differences in the tests.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub enum ParamValue {
    Mat(Array2<f64>),
    Vec(Array1<f64>),
}

impl ParamValue {
    pub fn len(&self) -> usize {
        match self {
            ParamValue::Mat(m) => m.len(),
            ParamValue::Vec(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            ParamValue::Mat(m) => m.shape().to_vec(),
            ParamValue::Vec(v) => vec![v.len()],
        }
    }
}

/// Flat, named parameter store shared by both networks.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<ParamValue>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    fn register(&mut self, name: &str, value: ParamValue) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter '{name}'"
        );
        let id = self.values.len();
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    /// Xavier-uniform matrix parameter.
    pub fn add_mat(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let m = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound));
        self.register(name, ParamValue::Mat(m))
    }

    pub fn add_vec_zeros(&mut self, name: &str, dim: usize) -> ParamId {
        self.register(name, ParamValue::Vec(Array1::zeros(dim)))
    }

    /// Uniform vector parameter in (-bound, bound); used where a zero
    /// initialization would be a fixed point.
    pub fn add_vec_uniform(
        &mut self,
        name: &str,
        dim: usize,
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let v = Array1::from_shape_fn(dim, |_| rng.gen_range(-bound..bound));
        self.register(name, ParamValue::Vec(v))
    }

    pub fn add_vec_ones(&mut self, name: &str, dim: usize) -> ParamId {
        self.register(name, ParamValue::Vec(Array1::ones(dim)))
    }

    pub fn mat(&self, id: ParamId) -> &Array2<f64> {
        match &self.values[id.0] {
            ParamValue::Mat(m) => m,
            ParamValue::Vec(_) => panic!("parameter '{}' is a vector", self.names[id.0]),
        }
    }

    pub fn vec(&self, id: ParamId) -> &Array1<f64> {
        match &self.values[id.0] {
            ParamValue::Vec(v) => v,
            ParamValue::Mat(_) => panic!("parameter '{}' is a matrix", self.names[id.0]),
        }
    }

    pub fn id(&self, name: &str) -> ParamId {
        ParamId(*self.index.get(name).unwrap_or_else(|| panic!("unknown parameter '{name}'")))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, idx: usize) -> &ParamValue {
        &self.values[idx]
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut ParamValue {
        &mut self.values[idx]
    }

    pub fn set_value(&mut self, name: &str, value: ParamValue) -> Result<()> {
        let idx = *self
            .index
            .get(name)
            .ok_or_else(|| Error::validation(format!("unknown parameter '{name}'")))?;
        let expected = self.values[idx].shape();
        if expected != value.shape() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: format!("{expected:?}"),
                got: format!("{:?}", value.shape()),
            });
        }
        self.values[idx] = value;
        Ok(())
    }

    pub fn zeros_like(&self) -> GradStore {
        GradStore {
            values: self
                .values
                .iter()
                .map(|v| match v {
                    ParamValue::Mat(m) => ParamValue::Mat(Array2::zeros(m.raw_dim())),
                    ParamValue::Vec(v) => ParamValue::Vec(Array1::zeros(v.len())),
                })
                .collect(),
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulator with the same layout as its `ParamStore`.
#[derive(Debug, Clone)]
pub struct GradStore {
    values: Vec<ParamValue>,
}

impl GradStore {
    pub fn mat_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        match &mut self.values[id.0] {
            ParamValue::Mat(m) => m,
            ParamValue::Vec(_) => panic!("gradient slot is a vector"),
        }
    }

    pub fn vec_mut(&mut self, id: ParamId) -> &mut Array1<f64> {
        match &mut self.values[id.0] {
            ParamValue::Vec(v) => v,
            ParamValue::Mat(_) => panic!("gradient slot is a matrix"),
        }
    }

    pub fn value(&self, idx: usize) -> &ParamValue {
        &self.values[idx]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw contiguous view of one entry's data.
    pub fn slice_mut(&mut self, idx: usize) -> &mut [f64] {
        match &mut self.values[idx] {
            ParamValue::Mat(m) => m.as_slice_mut().expect("standard layout"),
            ParamValue::Vec(v) => v.as_slice_mut().expect("contiguous"),
        }
    }

    pub fn add_assign(&mut self, other: &GradStore) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            match (a, b) {
                (ParamValue::Mat(x), ParamValue::Mat(y)) => *x += y,
                (ParamValue::Vec(x), ParamValue::Vec(y)) => *x += y,
                _ => panic!("gradient layout mismatch"),
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            match v {
                ParamValue::Mat(m) => m.mapv_inplace(|x| x * c),
                ParamValue::Vec(v) => v.mapv_inplace(|x| x * c),
            }
        }
    }
}

/// Mutable view handed to backward closures.
pub struct Sink<'a> {
    node_grads: &'a mut [Option<Array1<f64>>],
    pub grads: &'a mut GradStore,
    pub params: &'a ParamStore,
}

impl Sink<'_> {
    pub fn add_node(&mut self, id: NodeId, contribution: &Array1<f64>) {
        match &mut self.node_grads[id] {
            Some(g) => *g += contribution,
            slot => *slot = Some(contribution.clone()),
        }
    }
}

type BackFn = Box<dyn Fn(&Array1<f64>, &[Array1<f64>], &mut Sink)>;

/// Key/value source for attention: constants (memory from earlier steps)
/// or nodes on the current tape (token vectors during encoding).
#[derive(Clone)]
pub enum MemRef {
    Const(Vec<Array1<f64>>),
    Nodes(Vec<NodeId>),
}

impl MemRef {
    pub fn len(&self) -> usize {
        match self {
            MemRef::Const(v) => v.len(),
            MemRef::Nodes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get<'a>(&'a self, i: usize, vals: &'a [Array1<f64>]) -> &'a Array1<f64> {
        match self {
            MemRef::Const(v) => &v[i],
            MemRef::Nodes(ids) => &vals[ids[i]],
        }
    }
}

const LN_EPS: f64 = 1e-5;

pub struct Tape {
    vals: Vec<Array1<f64>>,
    backs: Vec<Option<BackFn>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            vals: Vec::new(),
            backs: Vec::new(),
        }
    }

    fn push(&mut self, value: Array1<f64>, back: Option<BackFn>) -> NodeId {
        self.vals.push(value);
        self.backs.push(back);
        self.vals.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Array1<f64> {
        &self.vals[id]
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Constant leaf: no gradient flows into it.
    pub fn leaf(&mut self, value: Array1<f64>) -> NodeId {
        self.push(value, None)
    }

    /// A row of an embedding matrix.
    pub fn param_row(&mut self, ps: &ParamStore, mat: ParamId, row: usize) -> NodeId {
        let value = ps.mat(mat).row(row).to_owned();
        self.push(
            value,
            Some(Box::new(move |g, _vals, sink| {
                let mut r = sink.grads.mat_mut(mat).row_mut(row);
                r += g;
            })),
        )
    }

    /// y = W x (+ b).
    pub fn affine(&mut self, ps: &ParamStore, w: ParamId, b: Option<ParamId>, x: NodeId) -> NodeId {
        let wm = ps.mat(w);
        let mut y = wm.dot(&self.vals[x]);
        if let Some(b) = b {
            y += ps.vec(b);
        }
        self.push(
            y,
            Some(Box::new(move |g, vals, sink| {
                let xv = &vals[x];
                {
                    let dw = sink.grads.mat_mut(w);
                    for (i, &gi) in g.iter().enumerate() {
                        if gi != 0.0 {
                            let mut row = dw.row_mut(i);
                            row.scaled_add(gi, xv);
                        }
                    }
                }
                if let Some(b) = b {
                    *sink.grads.vec_mut(b) += g;
                }
                let dx = sink.params.mat(w).t().dot(g);
                sink.add_node(x, &dx);
            })),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = &self.vals[a] + &self.vals[b];
        self.push(
            y,
            Some(Box::new(move |g, _vals, sink| {
                sink.add_node(a, g);
                sink.add_node(b, g);
            })),
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = &self.vals[a] - &self.vals[b];
        self.push(
            y,
            Some(Box::new(move |g, _vals, sink| {
                sink.add_node(a, g);
                sink.add_node(b, &-g);
            })),
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = &self.vals[a] * &self.vals[b];
        self.push(
            y,
            Some(Box::new(move |g, vals, sink| {
                sink.add_node(a, &(g * &vals[b]));
                sink.add_node(b, &(g * &vals[a]));
            })),
        )
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let total: usize = parts.iter().map(|&p| self.vals[p].len()).sum();
        let mut y = Array1::zeros(total);
        let mut offset = 0;
        for &p in parts {
            let v = &self.vals[p];
            y.slice_mut(ndarray::s![offset..offset + v.len()])
                .assign(v);
            offset += v.len();
        }
        let parts: Vec<NodeId> = parts.to_vec();
        self.push(
            y,
            Some(Box::new(move |g, vals, sink| {
                let mut offset = 0;
                for &p in &parts {
                    let len = vals[p].len();
                    let slice = g.slice(ndarray::s![offset..offset + len]).to_owned();
                    sink.add_node(p, &slice);
                    offset += len;
                }
            })),
        )
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = self.vals[x].mapv(|v| v.max(0.0));
        self.push(
            y,
            Some(Box::new(move |g, vals, sink| {
                let mask = vals[x].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                sink.add_node(x, &(g * &mask));
            })),
        )
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self.vals[x].mapv(|v| 1.0 / (1.0 + (-v).exp()));
        let id = self.push(
            y,
            Some(Box::new(move |_, _, _| unreachable!("replaced below"))),
        );
        self.backs[id] = Some(Box::new(move |g, vals, sink| {
            let s = &vals[id];
            let ds = s.mapv(|v| v * (1.0 - v));
            sink.add_node(x, &(g * &ds));
        }));
        id
    }

    /// Inverted dropout: elementwise mask with kept entries scaled by
    /// 1/(1-rate). Identity when `rate == 0`.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut ChaCha8Rng) -> NodeId {
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let mask: Array1<f64> = Array1::from_shape_fn(self.vals[x].len(), |_| {
            if rng.gen_range(0.0..1.0) < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let y = &self.vals[x] * &mask;
        self.push(
            y,
            Some(Box::new(move |g, _vals, sink| {
                sink.add_node(x, &(g * &mask));
            })),
        )
    }

    /// y = gain * (x - mean)/sqrt(var + eps) + bias.
    pub fn layer_norm(
        &mut self,
        ps: &ParamStore,
        gain: ParamId,
        bias: ParamId,
        x: NodeId,
    ) -> NodeId {
        let xv = &self.vals[x];
        let n = xv.len() as f64;
        let mean = xv.sum() / n;
        let var = xv.mapv(|v| (v - mean) * (v - mean)).sum() / n;
        let sigma = (var + LN_EPS).sqrt();
        let xhat = xv.mapv(|v| (v - mean) / sigma);
        let y = &xhat * ps.vec(gain) + ps.vec(bias);
        self.push(
            y,
            Some(Box::new(move |g, _vals, sink| {
                *sink.grads.vec_mut(bias) += g;
                *sink.grads.vec_mut(gain) += &(g * &xhat);
                let gamma = sink.params.vec(gain);
                let dxhat = g * gamma;
                let m1 = dxhat.sum() / n;
                let m2 = (&dxhat * &xhat).sum() / n;
                let dx = xhat
                    .iter()
                    .zip(dxhat.iter())
                    .map(|(&xh, &dxh)| (dxh - m1 - xh * m2) / sigma)
                    .collect::<Array1<f64>>();
                sink.add_node(x, &dx);
            })),
        )
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = &self.vals[x];
        let max = xv.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps = xv.mapv(|v| (v - max).exp());
        let z = exps.sum();
        let y = exps / z;
        let id = self.push(y, None);
        self.backs[id] = Some(Box::new(move |g, vals, sink| {
            let y = &vals[id];
            let dot = g.dot(y);
            let dx = y * &(g - dot);
            sink.add_node(x, &dx);
        }));
        id
    }

    /// log softmax over the unmasked entries; masked entries are -inf
    /// (probability exactly zero). Gradient seeds on masked entries must
    /// be zero.
    pub fn log_softmax_masked(&mut self, x: NodeId, mask: Vec<bool>) -> NodeId {
        let xv = &self.vals[x];
        assert_eq!(xv.len(), mask.len());
        let mut max = f64::NEG_INFINITY;
        for (i, &v) in xv.iter().enumerate() {
            if mask[i] {
                max = max.max(v);
            }
        }
        let mut z = 0.0;
        for (i, &v) in xv.iter().enumerate() {
            if mask[i] {
                z += (v - max).exp();
            }
        }
        let lse = max + z.ln();
        let y = Array1::from_shape_fn(xv.len(), |i| {
            if mask[i] {
                xv[i] - lse
            } else {
                f64::NEG_INFINITY
            }
        });
        let id = self.push(y, None);
        self.backs[id] = Some(Box::new(move |g, vals, sink| {
            let y = &vals[id];
            let mut gsum = 0.0;
            for (i, &gi) in g.iter().enumerate() {
                if mask[i] {
                    gsum += gi;
                } else {
                    debug_assert_eq!(gi, 0.0, "gradient on a masked slot");
                }
            }
            let dx = Array1::from_shape_fn(g.len(), |i| {
                if mask[i] {
                    g[i] - y[i].exp() * gsum
                } else {
                    0.0
                }
            });
            sink.add_node(x, &dx);
        }));
        id
    }

    /// Scores of x against constant keys: s_i = x . k_i.
    pub fn dot_set(&mut self, x: NodeId, keys: Vec<Array1<f64>>) -> NodeId {
        let xv = &self.vals[x];
        let s = Array1::from_shape_fn(keys.len(), |i| keys[i].dot(xv));
        self.push(
            s,
            Some(Box::new(move |g, vals, sink| {
                let mut dx = Array1::zeros(vals[x].len());
                for (i, k) in keys.iter().enumerate() {
                    if g[i] != 0.0 {
                        dx.scaled_add(g[i], k);
                    }
                }
                sink.add_node(x, &dx);
            })),
        )
    }

    /// y = sum_i w_i v_i over constant values.
    pub fn weighted_sum(&mut self, w: NodeId, values: Vec<Array1<f64>>) -> NodeId {
        let wv = &self.vals[w];
        assert_eq!(wv.len(), values.len());
        let dim = values.first().map(|v| v.len()).unwrap_or(0);
        let mut y = Array1::zeros(dim);
        for (i, v) in values.iter().enumerate() {
            y.scaled_add(wv[i], v);
        }
        self.push(
            y,
            Some(Box::new(move |g, _vals, sink| {
                let dw = Array1::from_shape_fn(values.len(), |i| values[i].dot(g));
                sink.add_node(w, &dw);
            })),
        )
    }

    /// Fused multi-head attention core (no residual, no layer norm):
    /// projects q/keys/values, does scaled dot-product attention per head,
    /// concatenates and applies the output projection.
    #[allow(clippy::too_many_arguments)]
    pub fn multi_head_attention(
        &mut self,
        ps: &ParamStore,
        wq: ParamId,
        wk: ParamId,
        wv: ParamId,
        wo: ParamId,
        n_heads: usize,
        q: NodeId,
        keys: MemRef,
        vals_ref: MemRef,
    ) -> NodeId {
        let m = keys.len();
        assert!(m > 0, "attention over an empty memory");
        assert_eq!(m, vals_ref.len());
        let hidden = self.vals[q].len();
        assert_eq!(hidden % n_heads, 0);
        let dh = hidden / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let qp = ps.mat(wq).dot(&self.vals[q]);
        let mut kp: Vec<Array1<f64>> = Vec::with_capacity(m);
        let mut vp: Vec<Array1<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            kp.push(ps.mat(wk).dot(keys.get(i, &self.vals)));
            vp.push(ps.mat(wv).dot(vals_ref.get(i, &self.vals)));
        }
        let mut att: Vec<Array1<f64>> = Vec::with_capacity(n_heads);
        let mut mixed = Array1::zeros(hidden);
        for h in 0..n_heads {
            let lo = h * dh;
            let hi = lo + dh;
            let mut scores = Array1::zeros(m);
            for i in 0..m {
                let mut s = 0.0;
                for d in lo..hi {
                    s += qp[d] * kp[i][d];
                }
                scores[i] = s * scale;
            }
            let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut w = scores.mapv(|v| (v - max).exp());
            let z = w.sum();
            w.mapv_inplace(|v| v / z);
            for i in 0..m {
                for d in lo..hi {
                    mixed[d] += w[i] * vp[i][d];
                }
            }
            att.push(w);
        }
        let out = ps.mat(wo).dot(&mixed);

        let keys_b = keys.clone();
        let vals_b = vals_ref.clone();
        self.push(
            out,
            Some(Box::new(move |g, vals, sink| {
                // Output projection.
                {
                    let dwo = sink.grads.mat_mut(wo);
                    for (r, &gi) in g.iter().enumerate() {
                        if gi != 0.0 {
                            let mut row = dwo.row_mut(r);
                            row.scaled_add(gi, &mixed);
                        }
                    }
                }
                let dm = sink.params.mat(wo).t().dot(g);
                let mut dqp = Array1::zeros(hidden);
                let mut dkp: Vec<Array1<f64>> = vec![Array1::zeros(hidden); m];
                let mut dvp: Vec<Array1<f64>> = vec![Array1::zeros(hidden); m];
                for h in 0..n_heads {
                    let lo = h * dh;
                    let hi = lo + dh;
                    let w = &att[h];
                    // d mixed -> d weights, d value projections.
                    let mut dw = Array1::zeros(m);
                    for i in 0..m {
                        let mut acc = 0.0;
                        for d in lo..hi {
                            acc += dm[d] * vp[i][d];
                            dvp[i][d] += w[i] * dm[d];
                        }
                        dw[i] = acc;
                    }
                    // Softmax backward.
                    let dot = dw.dot(w);
                    let ds = w * &(dw - dot);
                    for i in 0..m {
                        let s = ds[i] * scale;
                        for d in lo..hi {
                            dqp[d] += s * kp[i][d];
                            dkp[i][d] += s * qp[d];
                        }
                    }
                }
                // Projections.
                {
                    let dwq = sink.grads.mat_mut(wq);
                    let qv = &vals[q];
                    for (r, &gi) in dqp.iter().enumerate() {
                        if gi != 0.0 {
                            let mut row = dwq.row_mut(r);
                            row.scaled_add(gi, qv);
                        }
                    }
                }
                let dq = sink.params.mat(wq).t().dot(&dqp);
                sink.add_node(q, &dq);
                for i in 0..m {
                    {
                        let kv = keys_b.get(i, vals).clone();
                        let dwk = sink.grads.mat_mut(wk);
                        for (r, &gi) in dkp[i].iter().enumerate() {
                            if gi != 0.0 {
                                let mut row = dwk.row_mut(r);
                                row.scaled_add(gi, &kv);
                            }
                        }
                    }
                    {
                        let vv = vals_b.get(i, vals).clone();
                        let dwv = sink.grads.mat_mut(wv);
                        for (r, &gi) in dvp[i].iter().enumerate() {
                            if gi != 0.0 {
                                let mut row = dwv.row_mut(r);
                                row.scaled_add(gi, &vv);
                            }
                        }
                    }
                    if let MemRef::Nodes(ids) = &keys_b {
                        let dk = sink.params.mat(wk).t().dot(&dkp[i]);
                        sink.add_node(ids[i], &dk);
                    }
                    if let MemRef::Nodes(ids) = &vals_b {
                        let dv = sink.params.mat(wv).t().dot(&dvp[i]);
                        sink.add_node(ids[i], &dv);
                    }
                }
            })),
        )
    }

    /// Cosine-gated attention: weights a_i/sum_j(a_j) for keys whose
    /// cosine similarity a_i to the query exceeds the threshold; zero
    /// output when nothing passes (or the memory is empty). Keys and
    /// values are constants; the gradient flows into the query only.
    pub fn sim_attend(
        &mut self,
        q: NodeId,
        keys: Vec<Array1<f64>>,
        values: Vec<Array1<f64>>,
        threshold: f64,
        out_dim: usize,
    ) -> NodeId {
        assert_eq!(keys.len(), values.len());
        let qv = &self.vals[q];
        let qnorm = qv.dot(qv).sqrt();
        let m = keys.len();
        if m == 0 || qnorm < 1e-12 {
            return self.leaf(Array1::zeros(out_dim));
        }
        let mut cos = Array1::zeros(m);
        let mut knorm = vec![0.0; m];
        for i in 0..m {
            knorm[i] = keys[i].dot(&keys[i]).sqrt().max(1e-12);
            cos[i] = qv.dot(&keys[i]) / (qnorm * knorm[i]);
        }
        let denom: f64 = cos.sum();
        let passing: Vec<usize> = (0..m).filter(|&i| cos[i] > threshold).collect();
        if passing.is_empty() {
            return self.leaf(Array1::zeros(out_dim));
        }
        let mut y = Array1::zeros(out_dim);
        for &i in &passing {
            y.scaled_add(cos[i] / denom, &values[i]);
        }
        let yv = y.clone();
        self.push(
            y,
            Some(Box::new(move |g, vals, sink| {
                let qv = &vals[q];
                let mut dq = Array1::zeros(qv.len());
                for i in 0..m {
                    // dy/da_i = [i passing] v_i / denom - y / denom.
                    let mut coeff = -yv.dot(g) / denom;
                    if passing.contains(&i) {
                        coeff += values[i].dot(g) / denom;
                    }
                    if coeff == 0.0 {
                        continue;
                    }
                    // da_i/dq = k_i/(|q||k_i|) - cos_i q / |q|^2.
                    let inv = 1.0 / (qnorm * knorm[i]);
                    let mut da = keys[i].mapv(|v| v * inv);
                    da.scaled_add(-cos[i] / (qnorm * qnorm), qv);
                    dq.scaled_add(coeff, &da);
                }
                sink.add_node(q, &dq);
            })),
        )
    }

    /// Bilinear action scores: s_a = (W_out h) . (W_act e_a) over a
    /// constant embedding set (zero rows for stop/unassigned slots).
    pub fn bilinear_scores(
        &mut self,
        ps: &ParamStore,
        w_out: ParamId,
        w_act: ParamId,
        h: NodeId,
        embeddings: Vec<Array1<f64>>,
    ) -> NodeId {
        let u = ps.mat(w_out).dot(&self.vals[h]);
        let proj: Vec<Array1<f64>> = embeddings.iter().map(|e| ps.mat(w_act).dot(e)).collect();
        let s = Array1::from_shape_fn(embeddings.len(), |i| u.dot(&proj[i]));
        self.push(
            s,
            Some(Box::new(move |g, vals, sink| {
                let mut du = Array1::zeros(u.len());
                for (i, p) in proj.iter().enumerate() {
                    if g[i] != 0.0 {
                        du.scaled_add(g[i], p);
                    }
                }
                {
                    let dwo = sink.grads.mat_mut(w_out);
                    let hv = &vals[h];
                    for (r, &gi) in du.iter().enumerate() {
                        if gi != 0.0 {
                            let mut row = dwo.row_mut(r);
                            row.scaled_add(gi, hv);
                        }
                    }
                }
                let dh = sink.params.mat(w_out).t().dot(&du);
                sink.add_node(h, &dh);
                let dwa = sink.grads.mat_mut(w_act);
                for (i, e) in embeddings.iter().enumerate() {
                    if g[i] == 0.0 {
                        continue;
                    }
                    for (r, &ur) in u.iter().enumerate() {
                        let c = g[i] * ur;
                        if c != 0.0 {
                            let mut row = dwa.row_mut(r);
                            row.scaled_add(c, e);
                        }
                    }
                }
            })),
        )
    }

    /// Reverse sweep from the given seed gradients, accumulating into
    /// `grads`.
    pub fn backward(
        &self,
        seeds: Vec<(NodeId, Array1<f64>)>,
        params: &ParamStore,
        grads: &mut GradStore,
    ) {
        let mut node_grads: Vec<Option<Array1<f64>>> = vec![None; self.vals.len()];
        for (id, g) in seeds {
            match &mut node_grads[id] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }
        for i in (0..self.vals.len()).rev() {
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            let Some(back) = &self.backs[i] else {
                continue;
            };
            let mut sink = Sink {
                node_grads: &mut node_grads,
                grads,
                params,
            };
            back(&g, &self.vals, &mut sink);
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

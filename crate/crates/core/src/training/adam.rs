//! Adam with bias correction.

use crate::policy::{GradStore, ParamValue, PolicyParameters};
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: GradStore,
    v: GradStore,
    t: u64,
}

impl AdamState {
    pub fn new(params: &PolicyParameters) -> Self {
        AdamState {
            m: params.store.zeros_like(),
            v: params.store.zeros_like(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

fn update_slice(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// One optimizer step. Aborts with a diagnostic naming the parameter if
/// any gradient entry is non-finite.
pub fn adam_step(
    params: &mut PolicyParameters,
    grads: &GradStore,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    for (idx, name) in params.store.names().to_vec().iter().enumerate() {
        let finite = match grads.value(idx) {
            ParamValue::Mat(m) => m.iter().all(|x| x.is_finite()),
            ParamValue::Vec(v) => v.iter().all(|x| x.is_finite()),
        };
        if !finite {
            return Err(Error::NonFinite(format!("gradient of '{name}'")));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for idx in 0..grads.len() {
        let g: Vec<f64> = match grads.value(idx) {
            ParamValue::Mat(m) => m.iter().copied().collect(),
            ParamValue::Vec(v) => v.iter().copied().collect(),
        };
        let p = match params.store.value_mut(idx) {
            ParamValue::Mat(m) => m.as_slice_mut().expect("standard layout"),
            ParamValue::Vec(v) => v.as_slice_mut().expect("contiguous"),
        };
        update_slice(
            p,
            &g,
            state.m.slice_mut(idx),
            state.v.slice_mut(idx),
            lr,
            bc1,
            bc2,
        );
    }
    Ok(())
}

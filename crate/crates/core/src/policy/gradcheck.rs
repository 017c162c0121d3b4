//! Central-finite-difference verification of analytic gradients, shared
//! by unit tests and the acceptance suite.

use super::ad::{GradStore, ParamValue};
use super::params::PolicyParameters;

/// Step size pinned for all checks.
pub const FD_STEP: f64 = 1e-4;
/// Maximum allowed relative error.
pub const FD_RTOL: f64 = 1e-4;
/// Magnitude floor below which differences are compared absolutely
/// (central differences bottom out near 1e-8 in 64-bit).
pub const FD_FLOOR: f64 = 1e-3;

/// Compares `grads` against central finite differences of `loss` over
/// every parameter entry. Returns the worst offender on failure.
pub fn check_gradients(
    params: &mut PolicyParameters,
    grads: &GradStore,
    mut loss: impl FnMut(&PolicyParameters) -> f64,
) -> Result<(), String> {
    let mut worst: Option<(String, f64, f64, f64)> = None;
    for idx in 0..params.store.len() {
        let n = params.store.value(idx).len();
        for k in 0..n {
            let read = |v: &ParamValue| match v {
                ParamValue::Mat(m) => m.as_slice().expect("standard layout")[k],
                ParamValue::Vec(v) => v[k],
            };
            let write = |v: &mut ParamValue, x: f64| match v {
                ParamValue::Mat(m) => m.as_slice_mut().expect("standard layout")[k] = x,
                ParamValue::Vec(v) => v[k] = x,
            };
            let orig = read(params.store.value(idx));
            write(params.store.value_mut(idx), orig + FD_STEP);
            let up = loss(params);
            write(params.store.value_mut(idx), orig - FD_STEP);
            let down = loss(params);
            write(params.store.value_mut(idx), orig);
            let fd = (up - down) / (2.0 * FD_STEP);
            let analytic = read(grads.value(idx));
            let denom = analytic.abs().max(fd.abs()).max(FD_FLOOR);
            let rel = (analytic - fd).abs() / denom;
            if rel > FD_RTOL {
                let name = format!("{}[{k}]", params.store.names()[idx]);
                if worst.as_ref().map(|w| rel > w.3).unwrap_or(true) {
                    worst = Some((name, analytic, fd, rel));
                }
            }
        }
    }
    match worst {
        None => Ok(()),
        Some((name, analytic, fd, rel)) => Err(format!(
            "{name}: analytic {analytic:.3e} vs finite-difference {fd:.3e} (relative error {rel:.3e})"
        )),
    }
}

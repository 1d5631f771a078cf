//! Finite-difference gradient checking.
//!
//! `numerical_grad` perturbs one parameter scalar at a time and evaluates the
//! loss twice (central differences), so it is independent of the backward
//! pass it is used to validate.

use std::collections::BTreeMap;

use super::{Gradients, Params, Tensor};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Differences below this are treated as matching regardless of relative
/// size; it sits well above f64 cancellation noise for losses of a few nats
/// and well below any real gradient error.
pub const ABS_FLOOR: f64 = 1e-7;

/// Central finite differences of `loss_fn` with respect to every scalar in
/// `params`.
pub fn numerical_grad<F>(params: &Params, mut loss_fn: F, step: f64) -> BTreeMap<String, Tensor>
where
    F: FnMut(&Params) -> f64,
{
    let mut scratch = params.clone();
    let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
    let mut out = BTreeMap::new();
    for name in names {
        let n = params.get(&name).unwrap().numel();
        let shape = params.get(&name).unwrap().shape().to_vec();
        let mut grad = vec![0.0; n];
        for (i, g) in grad.iter_mut().enumerate() {
            let orig = scratch.get(&name).unwrap().data()[i];
            scratch.get_mut(&name).unwrap().data_mut()[i] = orig + step;
            let plus = loss_fn(&scratch);
            scratch.get_mut(&name).unwrap().data_mut()[i] = orig - step;
            let minus = loss_fn(&scratch);
            scratch.get_mut(&name).unwrap().data_mut()[i] = orig;
            *g = (plus - minus) / (2.0 * step);
        }
        out.insert(name, Tensor::new(shape, grad).unwrap());
    }
    out
}

/// Worst-case comparison between analytic and numerical gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error among entries above the absolute floor.
    pub max_rel_err: f64,
    /// Largest absolute difference anywhere.
    pub max_abs_err: f64,
    /// Parameter name and flat index of the worst relative error.
    pub worst: Option<(String, usize)>,
    /// Total scalar gradients compared.
    pub compared: usize,
}

impl GradCheckReport {
    pub fn within(&self, rel_tol: f64) -> bool {
        self.max_rel_err < rel_tol
    }
}

/// Compare analytic gradients against a numerical reference. Parameters
/// missing from `analytic` are treated as all-zero gradients (parameters off
/// the loss path).
pub fn compare_gradients(
    analytic: &Gradients,
    numerical: &BTreeMap<String, Tensor>,
) -> GradCheckReport {
    let zero = |name: &str, n: usize| -> Vec<f64> {
        let _ = name;
        vec![0.0; n]
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: None,
        compared: 0,
    };
    for (name, num) in numerical {
        let ana: Vec<f64> = match analytic.get(name) {
            Some(t) => t.data().to_vec(),
            None => zero(name, num.numel()),
        };
        for (i, (&a, &n)) in ana.iter().zip(num.data()).enumerate() {
            report.compared += 1;
            let abs = (a - n).abs();
            if abs > report.max_abs_err {
                report.max_abs_err = abs;
            }
            if abs < ABS_FLOOR {
                continue;
            }
            let rel = abs / a.abs().max(n.abs());
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    report
}

/// Convenience wrapper: analytic gradients from `backward_fn` checked against
/// central differences of `loss_fn`.
pub fn check_gradients<F, G>(
    params: &Params,
    mut backward_fn: G,
    loss_fn: F,
    step: f64,
) -> GradCheckReport
where
    F: FnMut(&Params) -> f64,
    G: FnMut(&Params) -> Gradients,
{
    let analytic = backward_fn(params);
    let numerical = numerical_grad(params, loss_fn, step);
    compare_gradients(&analytic, &numerical)
}

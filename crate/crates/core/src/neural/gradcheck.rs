use super::params::NetworkParams;
use crate::Result;

/// A scalar loss at some parameter point. `relu_pattern` identifies the linear piece the
/// evaluation landed in; finite differences straddling a ReLU kink are not comparable.
pub struct LossEval {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub relu_pattern: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub n_params: usize,
    pub checked: usize,
    /// Parameters skipped because ±ε crossed a ReLU kink.
    pub kinked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

pub const FD_EPS: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

/// Central finite differences of `f` against its own analytic gradient, over every parameter.
/// `f(params, with_grad)` may leave `grad` empty when `with_grad` is false.
pub fn finite_difference_check(
    params: &NetworkParams,
    eps: f64,
    f: impl Fn(&NetworkParams, bool) -> Result<LossEval>,
) -> Result<GradcheckReport> {
    let base = f(params, true)?;
    let mut q = params.clone();
    let mut report = GradcheckReport {
        n_params: params.len(),
        checked: 0,
        kinked: 0,
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in 0..params.len() {
        let w = params.data[i];
        q.data[i] = w + eps;
        let up = f(&q, false)?;
        q.data[i] = w - eps;
        let down = f(&q, false)?;
        q.data[i] = w;
        if up.relu_pattern != base.relu_pattern || down.relu_pattern != base.relu_pattern {
            report.kinked += 1;
            continue;
        }
        let fd = (up.loss - down.loss) / (2.0 * eps);
        let an = base.grad[i];
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(REL_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

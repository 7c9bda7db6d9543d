use super::{Tape, Tensor, Var};
use crate::Result;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Worst entry found by [`check_gradients`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter and flat element index of the worst entry.
    pub param: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Number of entries compared.
    pub checked: usize,
}

/// Compares backward gradients of the scalar `f(params)` against central
/// differences `(f(p + eps) − f(p − eps)) / 2eps` for every entry. The
/// relative error uses the denominator `max(|a|, |b|, 1e-8)`.
///
/// `f` must be deterministic: fixed dropout masks, fixed batch.
pub fn check_gradients<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(&loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get_or_zeros(v)).collect();
    drop(grads);
    drop(vars);
    drop(tape);

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let tape = Tape::no_grad();
        let vars: Vec<Var> = probe.iter().map(|p| tape.constant(p.clone())).collect();
        f(&tape, &vars)?.value().item()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        param: 0,
        element: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        for ei in 0..grad.len() {
            let original = probe[pi].data()[ei];
            probe[pi].data_mut()[ei] = original + eps;
            let up = eval(&probe)?;
            probe[pi].data_mut()[ei] = original - eps;
            let down = eval(&probe)?;
            probe[pi].data_mut()[ei] = original;

            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data()[ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report = GradCheckReport {
                    max_rel_error: if rel.is_finite() { rel } else { f64::INFINITY },
                    param: pi,
                    element: ei,
                    analytic: a,
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}

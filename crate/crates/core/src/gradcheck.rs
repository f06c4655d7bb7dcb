//! Central finite differences, used as an independent oracle for tape
//! gradients.

use crate::error::MathError;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(L(p + h) - L(p - h)) / 2h`, truncation error `O(h^2)`.
    #[default]
    ThreePoint,
    /// `(-L(p + 2h) + 8L(p + h) - 8L(p - h) + L(p - 2h)) / 12h`, truncation
    /// error `O(h^4)`. Allows a larger step, which keeps round-off small
    /// for tiny gradients.
    FivePoint,
}

/// Three-point central differences for every element of every parameter
/// tensor. See [`finite_diff_grad_with`].
pub fn finite_diff_grad<F>(loss_fn: F, params: &[Tensor], eps: f64) -> Result<Vec<Tensor>, MathError>
where
    F: FnMut(&[Tensor]) -> f64,
{
    finite_diff_grad_with(loss_fn, params, eps, Stencil::ThreePoint)
}

/// Central differences with the given stencil. The loss is re-evaluated at
/// the base point before and after the sweep, and the first perturbation
/// of every tensor is evaluated twice; any mismatch means the loss is not
/// a pure function.
pub fn finite_diff_grad_with<F>(mut loss_fn: F, params: &[Tensor], eps: f64, stencil: Stencil) -> Result<Vec<Tensor>, MathError>
where
    F: FnMut(&[Tensor]) -> f64,
{
    if !(eps > 0.0) {
        return Err(MathError::BadStep(eps));
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let base = loss_fn(&work);
    if loss_fn(&work).to_bits() != base.to_bits() {
        return Err(MathError::NonDeterministic { param: 0, index: 0 });
    }

    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = Tensor::zeros(params[p].rows(), params[p].cols());
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            let mut at = |offset: f64, work: &mut Vec<Tensor>| {
                work[p].data_mut()[k] = orig + offset;
                loss_fn(work)
            };
            let plus = at(eps, &mut work);
            if k == 0 && at(eps, &mut work).to_bits() != plus.to_bits() {
                return Err(MathError::NonDeterministic { param: p, index: k });
            }
            let minus = at(-eps, &mut work);
            grad.data_mut()[k] = match stencil {
                Stencil::ThreePoint => (plus - minus) / (2.0 * eps),
                Stencil::FivePoint => {
                    let plus2 = at(2.0 * eps, &mut work);
                    let minus2 = at(-2.0 * eps, &mut work);
                    (8.0 * (plus - minus) - (plus2 - minus2)) / (12.0 * eps)
                }
            };
            work[p].data_mut()[k] = orig;
        }
        out.push(grad);
    }

    if loss_fn(&work).to_bits() != base.to_bits() {
        return Err(MathError::NonDeterministic { param: params.len(), index: 0 });
    }
    Ok(out)
}

/// Worst-case agreement between analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|a - n| / max(|a|, |n|)` over elements with `|a| >= small`.
    pub max_rel_err: f64,
    /// Largest `|a - n|` over elements with `|a| < small`.
    pub max_abs_err_small: f64,
    /// `(tensor, element)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
    pub elements: usize,
}

impl GradCheck {
    pub fn compare(analytic: &[Tensor], numeric: &[Tensor], small: f64) -> GradCheck {
        let mut report = GradCheck { max_rel_err: 0.0, max_abs_err_small: 0.0, worst: None, elements: 0 };
        for (t, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            for (k, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
                report.elements += 1;
                let diff = (av - nv).abs();
                if av.abs() < small {
                    report.max_abs_err_small = report.max_abs_err_small.max(diff);
                } else {
                    let rel = diff / av.abs().max(nv.abs());
                    if rel > report.max_rel_err {
                        report.max_rel_err = rel;
                        report.worst = Some((t, k));
                    }
                }
            }
        }
        report
    }

    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel_err <= rel_tol && self.max_abs_err_small <= abs_tol
    }
}

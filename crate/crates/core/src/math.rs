//! Plain (non-differentiable) numeric kernels shared by the tape and by
//! callers that only need forward values.

use crate::error::MathError;
use crate::tensor::{dot, norm, Tensor};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Result<Vec<f64>, MathError> {
    if x.is_empty() {
        return Err(MathError::Empty { op: "softmax" });
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(MathError::NonFinite { op: "softmax" });
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

/// Cosine similarity; zero when either operand has zero norm.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64, MathError> {
    if a.len() != b.len() {
        return Err(MathError::ShapeMismatch { op: "cosine_sim", left: (1, a.len()), right: (1, b.len()) });
    }
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Pairwise cosine similarity between the rows of `x`.
pub fn pairwise_cosine(x: &Tensor) -> Tensor {
    let n = x.rows();
    let norms: Vec<f64> = (0..n).map(|i| norm(x.row(i))).collect();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                (dot(x.row(i), x.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

#[inline]
pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Elementwise shrinkage: `x - tau` above the band, `x + tau` below it,
/// zero inside `[-tau, tau]`.
pub fn soft_threshold(x: &Tensor, tau: f64) -> Result<Tensor, MathError> {
    if tau < 0.0 || tau.is_nan() {
        return Err(MathError::NegativeThreshold(tau));
    }
    Ok(x.map(|v| soft_threshold_scalar(v, tau)))
}

/// Subgradient of the shrinkage with respect to its input: 1 outside the
/// dead band, 0 inside.
#[inline]
pub fn soft_threshold_dx(x: f64, tau: f64) -> f64 {
    if x > tau || x < -tau {
        1.0
    } else {
        0.0
    }
}

/// Derivative of the shrinkage with respect to the threshold.
#[inline]
pub fn soft_threshold_dtau(x: f64, tau: f64) -> f64 {
    if x > tau {
        -1.0
    } else if x < -tau {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in u {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = softmax(&[1000.0, 0.0]).unwrap();
        assert!((big[0] - 1.0).abs() < 1e-12 && big[1] < 1e-300 && big[1] >= 0.0);
        // exp(k)/sum, evaluated with mpmath at 30 digits
        let s = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expect = [0.090030573170380462, 0.24472847105479767, 0.66524095577482178];
        for (a, b) in s.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_errors() {
        assert!(matches!(softmax(&[]), Err(MathError::Empty { .. })));
        assert!(matches!(softmax(&[1.0, f64::NAN]), Err(MathError::NonFinite { .. })));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.7071067811865476).abs() < 1e-12);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine_sim(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold_scalar(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold_scalar(0.3, 0.5), 0.0);
        assert_eq!(soft_threshold_scalar(-2.0, 0.5), -1.5);
        assert_eq!(soft_threshold_scalar(0.5, 0.5), 0.0);
        assert_eq!(soft_threshold_scalar(-0.5, 0.5), 0.0);
        assert!(matches!(soft_threshold(&Tensor::zeros(1, 1), -0.1), Err(MathError::NegativeThreshold(_))));
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(x in prop::collection::vec(-50.0f64..50.0, 1..1000)) {
            let s = softmax(&x).unwrap();
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(s.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn softmax_shift_invariant(x in prop::collection::vec(-20.0f64..20.0, 1..50), c in -100.0f64..100.0) {
            let a = softmax(&x).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let b = softmax(&shifted).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn soft_threshold_is_odd_and_shrinks(x in -10.0f64..10.0, tau in 0.0f64..5.0) {
            let y = soft_threshold_scalar(x, tau);
            prop_assert_eq!(soft_threshold_scalar(-x, tau), -y);
            prop_assert!(y.abs() <= x.abs());
            prop_assert!(y == 0.0 || y.signum() == x.signum());
            let d = soft_threshold_dx(x, tau);
            prop_assert!(d == 0.0 || d == 1.0);
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::vec(0.1f64..5.0, 4),
            b in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let ab = cosine_sim(&a, &b).unwrap();
            let ba = cosine_sim(&b, &a).unwrap();
            let a2: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!((ab - cosine_sim(&a2, &b).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}

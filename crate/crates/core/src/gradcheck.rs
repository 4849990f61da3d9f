//! Central-difference gradient estimation, the reference every hand-written
//! backward pass in the crate is checked against.

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Smallest and largest accepted step.
pub const EPS_RANGE: (f64, f64) = (1e-7, 1e-3);

/// Gradient magnitudes below this are compared absolutely rather than
/// relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Per-element `(f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps)`.
pub fn finite_diff_grad<F>(f: F, x: &Tensor3, eps: f64) -> Result<Tensor3>
where
    F: Fn(&Tensor3) -> f64,
{
    check_eps(eps)?;
    let mut probe = x.clone();
    let mut grad = Tensor3::zeros(x.channels(), x.height(), x.width());
    for i in 0..x.data().len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite function value at element {i}"
            )));
        }
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// Same estimate over a flat parameter vector, restricted to `indices`.
pub fn finite_diff_slice<F>(f: F, x: &[f64], indices: &[usize], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    check_eps(eps)?;
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite function value at parameter {i}"
                )));
            }
            Ok((up - down) / (2.0 * eps))
        })
        .collect()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(EPS_RANGE.0..=EPS_RANGE.1).contains(&eps) {
        return Err(Error::Parameter(format!(
            "eps {eps} outside [{}, {}]",
            EPS_RANGE.0, EPS_RANGE.1
        )));
    }
    Ok(())
}

/// `|a − b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Largest [`relative_error`] over paired slices.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        let x = Tensor3::from_fn(2, 3, 3, |c, y, x| {
            (c as f64 - 0.5) * (y as f64 + 0.3 * x as f64)
        });
        let g = finite_diff_grad(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5).unwrap();
        for (gi, xi) in g.data().iter().zip(x.data()) {
            assert!((gi - 2.0 * xi).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor3::filled(1, 2, 2, 3.0);
        let g = finite_diff_grad(|_| 7.0, &x, 1e-4).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_eps_and_nan() {
        let x = Tensor3::filled(1, 1, 1, 1.0);
        assert!(matches!(
            finite_diff_grad(|_| 0.0, &x, 1e-2),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            finite_diff_grad(|_| 0.0, &x, 1e-9),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            finite_diff_grad(|_| f64::NAN, &x, 1e-5),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn slice_variant_matches_full() {
        let x = vec![0.5, -1.0, 2.0];
        let g = finite_diff_slice(|p| p[0] * p[1] + p[2].sin(), &x, &[0, 2], 1e-5).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-9);
        assert!((g[1] - 2.0f64.cos()).abs() < 1e-9);
    }
}

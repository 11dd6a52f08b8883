use alloc::vec::Vec;

/// Compares an analytic gradient against central finite differences.
///
/// `f` returns the scalar value and its analytic gradient at the given
/// parameters. The result is the maximum over coordinates of
/// `|analytic - central| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(f: F, params: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let base = probe[i];
        probe[i] = base + eps;
        let (up, _) = f(&probe);
        probe[i] = base - eps;
        let (down, _) = f(&probe);
        probe[i] = base;
        let numeric = (up - down) / (2.0 * eps);
        let err = libm::fabs(analytic[i] - numeric) / libm::fmax(1.0, libm::fabs(analytic[i]));
        worst = libm::fmax(worst, err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_function_is_exact() {
        let coeffs = [1.5, -2.0, 0.25, 3.0];
        let f = |p: &[f64]| {
            let v = p.iter().zip(&coeffs).map(|(a, b)| a * b).sum();
            (v, coeffs.to_vec())
        };
        assert!(finite_diff_check(f, &[0.1, 0.2, 0.3, 0.4], 1e-6) < 1e-10);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let f = |p: &[f64]| {
            let v = p[0] * p[0] + libm::sin(p[1]);
            // derivative of sin replaced by sin itself
            (v, vec![2.0 * p[0], libm::sin(p[1])])
        };
        assert!(finite_diff_check(f, &[0.5, 0.3], 1e-6) > 1e-2);
    }
}

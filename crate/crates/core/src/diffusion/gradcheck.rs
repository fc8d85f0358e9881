//! Central finite differences for checking hand-written gradients.

/// Step used by [`central_difference`].
pub const FD_STEP: f64 = 5e-4;

/// Gradients smaller than this in magnitude are compared absolutely, since a
/// relative error is meaningless around zero.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Fourth-order central difference
/// `(-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h` for every coordinate.
pub fn central_difference(mut x: Vec<f64>, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = FD_STEP;
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            let mut at = |offset: f64| {
                x[i] = orig + offset;
                f(&x)
            };
            let d = -at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h);
            x[i] = orig;
            d / (12.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Largest relative error over all coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Panics with the worst coordinate when the check fails.
pub fn assert_gradients_match(analytic: &[f64], numeric: &[f64], tol: f64) {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let err = relative_error(a, n);
        assert!(
            err <= tol,
            "gradient mismatch at coordinate {i}: analytic {a:e}, numeric {n:e}, rel err {err:e}"
        );
    }
}

//! Central finite differences, the oracle for every analytic backward pass.

/// `(f(p + h e_i) - f(p - h e_i)) / 2h` for every coordinate `i`.
pub fn numeric_gradient<F>(f: F, params: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..params.len()).collect();
    numeric_gradient_at(f, params, step, &coords)
}

/// Central differences restricted to `coords`; output is aligned with `coords`.
pub fn numeric_gradient_at<F>(mut f: F, params: &[f64], step: f64, coords: &[usize]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut p = params.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = p[i];
            p[i] = orig + step;
            let plus = f(&p);
            p[i] = orig - step;
            let minus = f(&p);
            p[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|)`, with the denominator floored so that two
/// vanishing gradients compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

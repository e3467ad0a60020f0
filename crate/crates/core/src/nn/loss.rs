use super::NnError;

fn check(x: &[f64], y: &[f64]) -> Result<(), NnError> {
    if x.len() != y.len() {
        return Err(NnError::Shape(format!(
            "loss: lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Sum of squared differences.
pub fn reconstruction_error(x: &[f64], reconstructed: &[f64]) -> Result<f64, NnError> {
    check(x, reconstructed)?;
    Ok(x.iter().zip(reconstructed).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Reconstruction error divided by the vector length.
pub fn mean_squared_error(x: &[f64], reconstructed: &[f64]) -> Result<f64, NnError> {
    Ok(reconstruction_error(x, reconstructed)? / x.len().max(1) as f64)
}

/// Gradient of [`mean_squared_error`] with respect to `reconstructed`.
pub fn mean_squared_error_grad(x: &[f64], reconstructed: &[f64]) -> Vec<f64> {
    let scale = 2.0 / x.len().max(1) as f64;
    x.iter()
        .zip(reconstructed)
        .map(|(a, b)| scale * (b - a))
        .collect()
}

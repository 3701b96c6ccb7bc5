use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Compares an analytic gradient against central finite differences.
///
/// Returns `max_i |g_fd - g_an| / max(1, |g_fd|, |g_an|)`.
pub fn gradient_check<F>(mut f: F, x: &[f64], analytic_grad: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if x.len() != analytic_grad.len() {
        return Err(Error::Shape(format!(
            "point has {} coordinates, gradient has {}",
            x.len(),
            analytic_grad.len()
        )));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        let fd = (up - down) / (2.0 * FD_STEP);
        let an = analytic_grad[i];
        let err = (fd - an).abs() / 1f64.max(fd.abs()).max(an.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

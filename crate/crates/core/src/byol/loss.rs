use crate::nn::{NnError, ParameterSet, Scalar};

use super::ByolError;

/// Magnitudes at or below this are treated as zero vectors.
pub const MIN_NORM: f64 = 1e-12;

fn norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.f64() * x.f64()).sum::<f64>().sqrt()
}

/// `|| p/|p| - z/|z| ||`, in `[0, 2]`.
pub fn byol_loss<T: Scalar>(p: &[T], z_target: &[T]) -> Result<f64, ByolError> {
    Ok(byol_loss_grad(p, z_target)?.0)
}

/// Loss and its gradient with respect to `p`. The target side gets no gradient.
///
/// With `a = p/|p|`, `d = a - z/|z|`, `L = |d|`: `dL/dp = (d/L - a (a . d/L)) / |p|`, taken as
/// zero where `L = 0`.
pub fn byol_loss_grad<T: Scalar>(p: &[T], z_target: &[T]) -> Result<(f64, Vec<T>), ByolError> {
    if p.len() != z_target.len() {
        return Err(ByolError::DimMismatch {
            prediction: p.len(),
            target: z_target.len(),
        });
    }
    let (np, nz) = (norm(p), norm(z_target));
    if np <= MIN_NORM || nz <= MIN_NORM {
        return Err(ByolError::ZeroVector);
    }
    let a: Vec<f64> = p.iter().map(|v| v.f64() / np).collect();
    let d: Vec<f64> = a
        .iter()
        .zip(z_target)
        .map(|(&ai, zi)| ai - zi.f64() / nz)
        .collect();
    let loss = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if loss == 0.0 {
        return Ok((0.0, vec![T::zero(); p.len()]));
    }
    let ad = a.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>() / loss;
    let grad = a
        .iter()
        .zip(&d)
        .map(|(&ai, &di)| T::of((di / loss - ai * ad) / np))
        .collect();
    Ok((loss, grad))
}

/// `xi <- tau * xi + (1 - tau) * theta`, elementwise; `theta` is untouched.
pub fn ema_update<T: Scalar>(theta: &ParameterSet<T>, xi: &mut ParameterSet<T>, tau: f64) -> Result<(), ByolError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(ByolError::InvalidConfig(format!("tau {tau} outside [0, 1]")));
    }
    xi.check_congruent(theta).map_err(ByolError::Nn)?;
    let (t, s) = (T::of(tau), T::of(1.0 - tau));
    for (x, th) in xi.params_mut().iter_mut().zip(theta.params()) {
        for (a, &b) in x.data.iter_mut().zip(&th.data) {
            *a = t * *a + s * b;
        }
    }
    Ok(())
}

impl From<NnError> for ByolError {
    fn from(e: NnError) -> Self {
        ByolError::Nn(e)
    }
}

use super::{NnError, ParameterSet, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: ParameterSet<T>,
    pub v: ParameterSet<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParameterSet<T>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update. A non-finite gradient aborts before anything changes.
    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &ParameterSet<T>) -> Result<(), NnError> {
        params.check_congruent(grads)?;
        params.check_congruent(&self.m)?;
        for g in grads.params() {
            if g.data.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient(g.name.clone()));
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(c.lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(c.eps);
        let zipped = params
            .params_mut()
            .iter_mut()
            .zip(grads.params())
            .zip(self.m.params_mut().iter_mut().zip(self.v.params_mut()));
        for ((p, g), (m, v)) in zipped {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + one_b1 * gi;
                v.data[i] = b2 * v.data[i] + one_b2 * gi * gi;
                let vhat = v.data[i] * inv_bc2;
                p.data[i] -= step_size * m.data[i] / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

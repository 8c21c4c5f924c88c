use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, NetworkSpec, NnError, ParameterSet, Tensor};

/// Relative errors below this denominator are measured against it instead.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Where the worst disagreement occurred, e.g. `"3.weight[17]"` or `"input[4]"`.
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            worst: String::new(),
            checked: 0,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64, at: impl FnOnce() -> String) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = err;
            self.worst = at();
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn name_of(params: &ParameterSet<f64>, mut i: usize) -> String {
    for p in params.params() {
        if i < p.data.len() {
            return format!("{}[{i}]", p.name);
        }
        i -= p.data.len();
    }
    format!("?[{i}]")
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// With `max_params = Some(k)` only `k` scalars, chosen by `seed`, are perturbed.
pub fn grad_check_params(
    params: &ParameterSet<f64>,
    analytic: &ParameterSet<f64>,
    mut loss: impl FnMut(&ParameterSet<f64>) -> f64,
    step: f64,
    max_params: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    params.check_congruent(analytic)?;
    let total = params.count();
    let indices: Vec<usize> = match max_params {
        Some(k) if k < total => {
            let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), total, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    };
    let mut report = GradCheckReport::new();
    let mut probe = params.clone();
    for i in indices {
        let orig = probe.scalar(i);
        *probe.scalar_mut(i) = orig + step;
        let up = loss(&probe);
        *probe.scalar_mut(i) = orig - step;
        let down = loss(&probe);
        *probe.scalar_mut(i) = orig;
        let numeric = (up - down) / (2.0 * step);
        report.record(analytic.scalar(i), numeric, || name_of(params, i));
    }
    Ok(report)
}

/// Gradient check of one network under a scalar loss of its output.
///
/// `loss` returns the loss value and its gradient with respect to the output. Both parameter
/// gradients and the input gradient are checked.
pub fn grad_check(
    spec: &NetworkSpec,
    params: &ParameterSet<f64>,
    input: &Tensor<f64>,
    loss: impl Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
    step: f64,
    max_params: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    let (y, trace) = forward(spec, params, input)?;
    let (_, gy) = loss(&y);
    let (grads, gx) = backward(spec, params, &trace, &gy)?;
    let eval = |p: &ParameterSet<f64>, x: &Tensor<f64>| -> f64 {
        let (y, _) = forward(spec, p, x).expect("shapes already validated");
        loss(&y).0
    };
    let report = grad_check_params(params, &grads, |p| eval(p, input), step, max_params, seed)?;

    let mut input_report = GradCheckReport::new();
    let mut probe = input.clone();
    for i in 0..input.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = eval(params, &probe);
        probe.data_mut()[i] = orig - step;
        let down = eval(params, &probe);
        probe.data_mut()[i] = orig;
        input_report.record(gx.data()[i], (up - down) / (2.0 * step), || format!("input[{i}]"));
    }
    Ok(report.merge(input_report))
}

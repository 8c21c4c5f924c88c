use rand::Rng;

use super::{NetworkSpec, NnError, Scalar};

/// A named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Weights and biases of one network, keyed `"<layer>.weight"` / `"<layer>.bias"`, in layer
/// order. Cloning produces an independent copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn from_params(params: Vec<Param<T>>) -> Result<Self, NnError> {
        for (i, p) in params.iter().enumerate() {
            if p.shape.iter().product::<usize>() != p.data.len() {
                return Err(NnError::Incongruent(format!("{}: data does not fill shape", p.name)));
            }
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(NnError::Incongruent(format!("duplicate name {}", p.name)));
            }
        }
        Ok(Self { params })
    }

    /// Kaiming-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut params = Vec::new();
        for (layer, wshape, bshape) in spec.param_shapes() {
            let fan_in: usize = wshape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            let n: usize = wshape.iter().product();
            let data = (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect();
            params.push(Param {
                name: format!("{layer}.weight"),
                shape: wshape,
                data,
            });
            let nb = bshape.iter().product();
            params.push(Param {
                name: format!("{layer}.bias"),
                shape: bshape,
                data: vec![T::zero(); nb],
            });
        }
        Self { params }
    }

    /// Zeros congruent to `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: vec![T::zero(); p.data.len()],
                })
                .collect(),
        }
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Weight and bias of a parameterized layer.
    pub fn layer(&self, layer: usize) -> Result<(&Param<T>, &Param<T>), NnError> {
        let w = format!("{layer}.weight");
        let idx = self
            .params
            .iter()
            .position(|p| p.name == w)
            .ok_or_else(|| NnError::Incongruent(format!("missing {w}")))?;
        self.params
            .get(idx + 1)
            .map(|b| (&self.params[idx], b))
            .ok_or_else(|| NnError::Incongruent(format!("missing {layer}.bias")))
    }

    pub fn layer_mut(&mut self, layer: usize) -> Result<(&mut Param<T>, &mut Param<T>), NnError> {
        let w = format!("{layer}.weight");
        let idx = self
            .params
            .iter()
            .position(|p| p.name == w)
            .ok_or_else(|| NnError::Incongruent(format!("missing {w}")))?;
        if idx + 1 >= self.params.len() {
            return Err(NnError::Incongruent(format!("missing {layer}.bias")));
        }
        let (a, b) = self.params.split_at_mut(idx + 1);
        Ok((&mut a[idx], &mut b[0]))
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    pub fn check_congruent(&self, other: &Self) -> Result<(), NnError> {
        if self.params.len() != other.params.len() {
            return Err(NnError::Incongruent(format!(
                "{} vs {} arrays",
                self.params.len(),
                other.params.len()
            )));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.shape != b.shape {
                return Err(NnError::Incongruent(format!(
                    "{} {:?} vs {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    /// Checks that names and shapes match what `spec` declares.
    pub fn check_spec(&self, spec: &NetworkSpec) -> Result<(), NnError> {
        let expected = spec.param_shapes();
        if expected.len() * 2 != self.params.len() {
            return Err(NnError::Incongruent(format!(
                "spec declares {} arrays, set holds {}",
                expected.len() * 2,
                self.params.len()
            )));
        }
        for ((layer, w, b), pair) in expected.iter().zip(self.params.chunks(2)) {
            if pair[0].name != format!("{layer}.weight")
                || pair[1].name != format!("{layer}.bias")
                || pair[0].shape != *w
                || pair[1].shape != *b
            {
                return Err(NnError::Incongruent(format!("layer {layer} parameters do not match spec")));
            }
        }
        Ok(())
    }

    /// Adds `scale * other` elementwise.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<(), NnError> {
        self.check_congruent(other)?;
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for p in &mut self.params {
            for x in &mut p.data {
                *x *= s;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }

    /// Iterates every scalar in storage order.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.params.iter().flat_map(|p| p.data.iter().copied())
    }

    /// Euclidean distance to a congruent set, accumulated in f64.
    pub fn distance(&self, other: &Self) -> f64 {
        self.values()
            .zip(other.values())
            .map(|(a, b)| (a.f64() - b.f64()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Flat view of scalar `i` (storage order) for perturbation.
    pub(crate) fn scalar_mut(&mut self, mut i: usize) -> &mut T {
        for p in &mut self.params {
            if i < p.data.len() {
                return &mut p.data[i];
            }
            i -= p.data.len();
        }
        panic!("scalar index out of range");
    }

    pub(crate) fn scalar(&self, mut i: usize) -> T {
        for p in &self.params {
            if i < p.data.len() {
                return p.data[i];
            }
            i -= p.data.len();
        }
        panic!("scalar index out of range");
    }
}

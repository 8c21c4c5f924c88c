use rand::Rng;

use crate::nn::{
    backward, forward, infer, AdamConfig, AdamState, NetworkSpec, NnError, ParameterSet, Scalar, Tensor,
};

use super::loss::byol_loss_grad;
use super::ByolError;

/// Specs of the encoder `f`, projector `g`, and predictor `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoder: NetworkSpec,
    pub projector: NetworkSpec,
    pub predictor: NetworkSpec,
}

impl Architecture {
    pub fn new(
        frames: usize,
        bins: usize,
        channels: &[usize],
        embedding_dim: usize,
        projector_hidden: usize,
        projection_dim: usize,
        predictor_hidden: usize,
    ) -> Result<Self, ByolError> {
        Ok(Self {
            encoder: NetworkSpec::encoder(frames, bins, channels, embedding_dim)?,
            projector: NetworkSpec::mlp(embedding_dim, projector_hidden, projection_dim)?,
            predictor: NetworkSpec::mlp(projection_dim, predictor_hidden, projection_dim)?,
        })
    }

    /// conv 32/64/64, 512-d embedding, 1024-wide heads, 128-d projection.
    pub fn default_for(frames: usize, bins: usize) -> Result<Self, ByolError> {
        Self::new(frames, bins, &[32, 64, 64], 512, 1024, 128, 1024)
    }

    pub fn segment_shape(&self) -> (usize, usize) {
        (self.encoder.input_shape[1], self.encoder.input_shape[2])
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.output_len()
    }

    pub fn validate(&self) -> Result<(), ByolError> {
        let chain = [
            (&self.encoder, &self.projector, "projector"),
            (&self.projector, &self.predictor, "predictor"),
        ];
        for (a, b, name) in chain {
            if b.input_shape != [a.output_len()] {
                return Err(ByolError::InvalidConfig(format!(
                    "{name} input {:?} does not follow output of size {}",
                    b.input_shape,
                    a.output_len()
                )));
            }
        }
        if self.predictor.output_len() != self.projector.output_len() {
            return Err(ByolError::InvalidConfig("predictor must map back to the projection size".into()));
        }
        Ok(())
    }
}

/// Online parameters θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Online<T> {
    pub f: ParameterSet<T>,
    pub g: ParameterSet<T>,
    pub q: ParameterSet<T>,
}

/// Target parameters ξ (no predictor).
#[derive(Debug, Clone, PartialEq)]
pub struct Target<T> {
    pub f: ParameterSet<T>,
    pub g: ParameterSet<T>,
}

impl<T: Scalar> Online<T> {
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        Self {
            f: ParameterSet::init(&arch.encoder, rng),
            g: ParameterSet::init(&arch.projector, rng),
            q: ParameterSet::init(&arch.predictor, rng),
        }
    }

    /// Independent copy of the encoder and projector.
    pub fn to_target(&self) -> Target<T> {
        Target {
            f: self.f.clone(),
            g: self.g.clone(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            f: self.f.zeros_like(),
            g: self.g.zeros_like(),
            q: self.q.zeros_like(),
        }
    }

    pub fn check(&self, arch: &Architecture) -> Result<(), NnError> {
        self.f.check_spec(&arch.encoder)?;
        self.g.check_spec(&arch.projector)?;
        self.q.check_spec(&arch.predictor)
    }

    pub fn cast<U: Scalar>(&self) -> Online<U> {
        Online {
            f: self.f.cast(),
            g: self.g.cast(),
            q: self.q.cast(),
        }
    }

    pub fn sets(&self) -> [&ParameterSet<T>; 3] {
        [&self.f, &self.g, &self.q]
    }
}

impl<T: Scalar> Target<T> {
    pub fn check(&self, arch: &Architecture) -> Result<(), NnError> {
        self.f.check_spec(&arch.encoder)?;
        self.g.check_spec(&arch.projector)
    }

    pub fn cast<U: Scalar>(&self) -> Target<U> {
        Target {
            f: self.f.cast(),
            g: self.g.cast(),
        }
    }
}

/// Adam moments for each online network.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineAdam<T> {
    pub f: AdamState<T>,
    pub g: AdamState<T>,
    pub q: AdamState<T>,
}

impl<T: Scalar> OnlineAdam<T> {
    pub fn new(online: &Online<T>, cfg: AdamConfig) -> Self {
        Self {
            f: AdamState::new(&online.f, cfg),
            g: AdamState::new(&online.g, cfg),
            q: AdamState::new(&online.q, cfg),
        }
    }

    pub fn step(&mut self, online: &mut Online<T>, grads: &Online<T>) -> Result<(), NnError> {
        // validate every gradient before touching any network
        for (set, name) in [(&grads.f, "f"), (&grads.g, "g"), (&grads.q, "q")] {
            for p in set.params() {
                if p.data.iter().any(|v| !v.is_finite()) {
                    return Err(NnError::NonFiniteGradient(format!("{name}.{}", p.name)));
                }
            }
        }
        self.f.step(&mut online.f, &grads.f)?;
        self.g.step(&mut online.g, &grads.g)?;
        self.q.step(&mut online.q, &grads.q)
    }
}

/// Value and online gradient of the symmetrized objective on one batch.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    /// Mean over the batch of `L(q(g(f(u))), g'(f'(u')))`.
    pub loss_forward: f64,
    /// Same with `u` and `u'` exchanged.
    pub loss_reverse: f64,
    pub loss_total: f64,
    /// Mean over dimensions of the across-batch std of the online representations.
    pub embedding_std: f64,
    pub grads: Online<T>,
}

/// Symmetrized BYOL objective.
///
/// The online path sees `[u; u']`, the target path `[u'; u]`, so row `i` of the first half
/// gives the forward loss and row `i` of the second half the reverse loss. The target path is
/// evaluated without a trace and contributes no gradient.
pub fn byol_objective<T: Scalar>(
    arch: &Architecture,
    online: &Online<T>,
    target: &Target<T>,
    u: &Tensor<T>,
    u_prime: &Tensor<T>,
) -> Result<Objective<T>, ByolError> {
    if u.shape() != u_prime.shape() {
        return Err(ByolError::BatchShape(format!(
            "views differ: {:?} vs {:?}",
            u.shape(),
            u_prime.shape()
        )));
    }
    let n = u.batch();
    let mut shape = u.shape().to_vec();
    shape[0] = 2 * n;
    let cat = |a: &Tensor<T>, b: &Tensor<T>| {
        let mut d = a.data().to_vec();
        d.extend_from_slice(b.data());
        Tensor::new(shape.clone(), d)
    };
    let online_in = cat(u, u_prime);
    let target_in = cat(u_prime, u);

    let (y, tf) = forward(&arch.encoder, &online.f, &online_in)?;
    let (z, tg) = forward(&arch.projector, &online.g, &y)?;
    let (p, tq) = forward(&arch.predictor, &online.q, &z)?;
    let z_t = infer(&arch.projector, &target.g, &infer(&arch.encoder, &target.f, &target_in)?)?;

    let dim = p.item_len();
    let scale = 1.0 / n as f64;
    let mut gp = Vec::with_capacity(p.len());
    let (mut fwd, mut rev) = (0.0, 0.0);
    for i in 0..2 * n {
        let (l, g) = byol_loss_grad(p.item(i), z_t.item(i))?;
        if i < n {
            fwd += l * scale;
        } else {
            rev += l * scale;
        }
        gp.extend(g.into_iter().map(|v| v * T::of(scale)));
    }
    debug_assert_eq!(gp.len(), 2 * n * dim);
    let gp = Tensor::new(p.shape().to_vec(), gp);
    let (gq, gz) = backward(&arch.predictor, &online.q, &tq, &gp)?;
    let (gg, gy) = backward(&arch.projector, &online.g, &tg, &gz)?;
    let (gf, _) = backward(&arch.encoder, &online.f, &tf, &gy)?;

    Ok(Objective {
        loss_forward: fwd,
        loss_reverse: rev,
        loss_total: fwd + rev,
        embedding_std: embedding_std(&y),
        grads: Online { f: gf, g: gg, q: gq },
    })
}

/// Population std of each column over the rows, averaged over columns.
pub fn embedding_std<T: Scalar>(y: &Tensor<T>) -> f64 {
    let (rows, cols) = (y.batch(), y.item_len());
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for c in 0..cols {
        let col = (0..rows).map(|r| y.data()[r * cols + c].f64());
        let mean = col.clone().sum::<f64>() / rows as f64;
        let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
        total += var.sqrt();
    }
    total / cols as f64
}

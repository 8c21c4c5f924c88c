use super::layers::*;
use super::{LayerSpec, NetworkSpec, NnError, ParameterSet, Scalar, Tensor};

/// Activations cached by [`forward`] for one backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    spec: NetworkSpec,
    batch: usize,
    /// Input to each layer.
    inputs: Vec<Vec<T>>,
    pool_idx: Vec<Option<Vec<u32>>>,
}

impl<T> Trace<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn check_input<T: Scalar>(spec: &NetworkSpec, input: &Tensor<T>) -> Result<usize, NnError> {
    let shape = input.shape();
    if shape.len() != spec.input_shape.len() + 1 || shape[1..] != spec.input_shape[..] || shape[0] == 0 {
        return Err(NnError::Input {
            got: shape.to_vec(),
            expected: spec.input_shape.clone(),
        });
    }
    Ok(shape[0])
}

fn run<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<T>,
    input: &Tensor<T>,
    keep: bool,
) -> Result<(Tensor<T>, Option<Trace<T>>), NnError> {
    let batch = check_input(spec, input)?;
    let shapes = spec.shapes()?;
    let mut x = input.data().to_vec();
    let mut inputs = Vec::new();
    let mut pool_idx = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let s = &shapes[i];
        let (y, idx) = match *layer {
            LayerSpec::Conv2d { out_channels } => {
                let (w, b) = params.layer(i)?;
                if w.shape != [out_channels, s[0], 3, 3] {
                    return Err(NnError::Shape {
                        layer: i,
                        kind: layer.name(),
                        detail: format!("weight shape {:?}", w.shape),
                    });
                }
                (conv_forward(&x, batch, s[0], s[1], s[2], &w.data, &b.data, out_channels), None)
            }
            LayerSpec::Relu => (x.iter().map(|&v| v.max(T::zero())).collect(), None),
            LayerSpec::MaxPool2 => {
                let (y, idx) = pool_forward(&x, batch, s[0], s[1], s[2]);
                (y, Some(idx))
            }
            LayerSpec::GlobalTimeMean => (time_mean_forward(&x, batch * s[0], s[1], s[2]), None),
            LayerSpec::Flatten => (x.clone(), None),
            LayerSpec::Linear { out_dim } => {
                let (w, b) = params.layer(i)?;
                if w.shape != [out_dim, s[0]] {
                    return Err(NnError::Shape {
                        layer: i,
                        kind: layer.name(),
                        detail: format!("weight shape {:?}", w.shape),
                    });
                }
                (linear_forward(&x, batch, s[0], &w.data, &b.data, out_dim), None)
            }
        };
        if keep {
            inputs.push(std::mem::replace(&mut x, y));
            pool_idx.push(idx);
        } else {
            x = y;
        }
    }
    let mut out_shape = vec![batch];
    out_shape.extend_from_slice(shapes.last().unwrap());
    let trace = keep.then(|| Trace {
        spec: spec.clone(),
        batch,
        inputs,
        pool_idx,
    });
    Ok((Tensor::new(out_shape, x), trace))
}

/// Runs the network on a batch `[N, ...input_shape]` and keeps what backward needs.
pub fn forward<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<T>,
    input: &Tensor<T>,
) -> Result<(Tensor<T>, Trace<T>), NnError> {
    let (y, t) = run(spec, params, input, true)?;
    Ok((y, t.expect("trace requested")))
}

/// Forward pass without caching activations.
pub fn infer<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<T>,
    input: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    Ok(run(spec, params, input, false)?.0)
}

/// Reverse pass. Returns parameter gradients congruent to `params` and the input gradient.
pub fn backward<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<T>,
    trace: &Trace<T>,
    grad_output: &Tensor<T>,
) -> Result<(ParameterSet<T>, Tensor<T>), NnError> {
    if trace.spec != *spec || trace.inputs.len() != spec.layers.len() {
        return Err(NnError::StaleTrace("trace was recorded for a different network".into()));
    }
    let shapes = spec.shapes()?;
    let mut expected = vec![trace.batch];
    expected.extend_from_slice(shapes.last().unwrap());
    if grad_output.shape() != expected.as_slice() {
        return Err(NnError::StaleTrace(format!(
            "gradient shape {:?}, forward produced {expected:?}",
            grad_output.shape()
        )));
    }
    let batch = trace.batch;
    let mut grads = params.zeros_like();
    let mut g = grad_output.data().to_vec();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let s = &shapes[i];
        let x = &trace.inputs[i];
        g = match *layer {
            LayerSpec::Conv2d { out_channels } => {
                let (w, _) = params.layer(i)?;
                let (gin, gw, gb) = conv_backward(x, &g, batch, s[0], s[1], s[2], &w.data, out_channels);
                let (pw, pb) = grads.layer_mut(i)?;
                pw.data = gw;
                pb.data = gb;
                gin
            }
            LayerSpec::Relu => x
                .iter()
                .zip(&g)
                .map(|(&xv, &gv)| if xv > T::zero() { gv } else { T::zero() })
                .collect(),
            LayerSpec::MaxPool2 => {
                let idx = trace.pool_idx[i]
                    .as_ref()
                    .ok_or_else(|| NnError::StaleTrace(format!("layer {i} has no pooling indices")))?;
                pool_backward(&g, idx, x.len())
            }
            LayerSpec::GlobalTimeMean => time_mean_backward(&g, batch * s[0], s[1], s[2]),
            LayerSpec::Flatten => g,
            LayerSpec::Linear { out_dim } => {
                let (w, _) = params.layer(i)?;
                let (gin, gw, gb) = linear_backward(x, &g, batch, s[0], &w.data, out_dim);
                let (pw, pb) = grads.layer_mut(i)?;
                pw.data = gw;
                pb.data = gb;
                gin
            }
        };
    }
    let mut in_shape = vec![batch];
    in_shape.extend_from_slice(&spec.input_shape);
    Ok((grads, Tensor::new(in_shape, g)))
}

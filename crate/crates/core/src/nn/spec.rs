use super::NnError;

/// One layer of a sequential network. Spatial tensors are laid out `[channels, frames, bins]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// 3x3 convolution, stride 1, zero padding 1.
    Conv2d { out_channels: usize },
    Relu,
    /// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
    MaxPool2,
    /// Mean over the frame axis: `[C, T, F] -> [C, F]`.
    GlobalTimeMean,
    Flatten,
    Linear { out_dim: usize },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2 => "maxpool",
            LayerSpec::GlobalTimeMean => "global_time_mean",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Linear { .. } => "linear",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. })
    }

    /// `(kind code, argument)` pair used by the checkpoint format.
    pub fn code(&self) -> (u32, u32) {
        match *self {
            LayerSpec::Conv2d { out_channels } => (0, out_channels as u32),
            LayerSpec::Relu => (1, 0),
            LayerSpec::MaxPool2 => (2, 0),
            LayerSpec::GlobalTimeMean => (3, 0),
            LayerSpec::Flatten => (4, 0),
            LayerSpec::Linear { out_dim } => (5, out_dim as u32),
        }
    }

    pub fn from_code(kind: u32, arg: u32) -> Option<Self> {
        Some(match kind {
            0 => LayerSpec::Conv2d {
                out_channels: arg as usize,
            },
            1 => LayerSpec::Relu,
            2 => LayerSpec::MaxPool2,
            3 => LayerSpec::GlobalTimeMean,
            4 => LayerSpec::Flatten,
            5 => LayerSpec::Linear {
                out_dim: arg as usize,
            },
            _ => return None,
        })
    }

    /// Output shape (without batch axis) for a given input shape.
    pub fn output_shape(&self, layer: usize, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let err = |detail: String| NnError::Shape {
            layer,
            kind: self.name(),
            detail,
        };
        match *self {
            LayerSpec::Conv2d { out_channels } => match input {
                [_, h, w] if out_channels > 0 => Ok(vec![out_channels, *h, *w]),
                _ => Err(err(format!("needs [C, T, F] input and >0 channels, got {input:?}"))),
            },
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool2 => match input {
                [c, h, w] if *h >= 2 && *w >= 2 => Ok(vec![*c, h / 2, w / 2]),
                _ => Err(err(format!("needs [C, T>=2, F>=2] input, got {input:?}"))),
            },
            LayerSpec::GlobalTimeMean => match input {
                [c, h, w] if *h >= 1 => Ok(vec![*c, *w]),
                _ => Err(err(format!("needs [C, T, F] input, got {input:?}"))),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Linear { out_dim } => match input {
                [_] if out_dim > 0 => Ok(vec![out_dim]),
                _ => Err(err(format!("needs a flat input and >0 outputs, got {input:?}"))),
            },
        }
    }
}

/// A sequential network: per-item input shape plus an ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        let spec = Self {
            input_shape,
            layers,
        };
        spec.shapes()?;
        Ok(spec)
    }

    /// Convolutional encoder: `conv(c)-relu-pool` per channel count, then mean over time,
    /// flatten, and a linear projection to `embedding_dim`.
    pub fn encoder(
        frames: usize,
        bins: usize,
        channels: &[usize],
        embedding_dim: usize,
    ) -> Result<Self, NnError> {
        let mut layers = Vec::new();
        for &c in channels {
            layers.extend([
                LayerSpec::Conv2d { out_channels: c },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
            ]);
        }
        layers.extend([
            LayerSpec::GlobalTimeMean,
            LayerSpec::Flatten,
            LayerSpec::Linear {
                out_dim: embedding_dim,
            },
        ]);
        Self::new(vec![1, frames, bins], layers)
    }

    /// `linear(hidden)-relu-linear(out)`.
    pub fn mlp(in_dim: usize, hidden: usize, out_dim: usize) -> Result<Self, NnError> {
        Self::new(
            vec![in_dim],
            vec![
                LayerSpec::Linear { out_dim: hidden },
                LayerSpec::Relu,
                LayerSpec::Linear { out_dim },
            ],
        )
    }

    /// Shape after each layer; `shapes()[0]` is the input shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::InvalidSpec(format!(
                "input shape {:?} must be non-empty with positive dims",
                self.input_shape
            )));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(i, shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.shapes().expect("validated at construction").pop().unwrap()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    /// Weight and bias shapes for each parameterized layer, in layer order.
    pub fn param_shapes(&self) -> Vec<(usize, Vec<usize>, Vec<usize>)> {
        let shapes = self.shapes().expect("validated at construction");
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, layer)| match *layer {
                LayerSpec::Conv2d { out_channels } => {
                    Some((i, vec![out_channels, shapes[i][0], 3, 3], vec![out_channels]))
                }
                LayerSpec::Linear { out_dim } => Some((i, vec![out_dim, shapes[i][0]], vec![out_dim])),
                _ => None,
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_encoder_shapes() {
        let spec = NetworkSpec::encoder(100, 64, &[32, 64, 64], 512).unwrap();
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[3], vec![32, 50, 32]);
        assert_eq!(shapes[9], vec![64, 12, 8]);
        assert_eq!(shapes[10], vec![64, 8]);
        assert_eq!(spec.output_shape(), vec![512]);
    }

    #[test]
    fn mismatched_chain_names_the_layer() {
        let err = NetworkSpec::new(vec![10], vec![LayerSpec::Relu, LayerSpec::MaxPool2]).unwrap_err();
        assert!(matches!(err, NnError::Shape { layer: 1, kind: "maxpool", .. }));
    }

    #[test]
    fn codes_roundtrip() {
        for l in [
            LayerSpec::Conv2d { out_channels: 7 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::GlobalTimeMean,
            LayerSpec::Flatten,
            LayerSpec::Linear { out_dim: 3 },
        ] {
            let (k, a) = l.code();
            assert_eq!(LayerSpec::from_code(k, a), Some(l));
        }
        assert_eq!(LayerSpec::from_code(9, 0), None);
    }
}

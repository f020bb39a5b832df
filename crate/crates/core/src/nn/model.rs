//! Model description: an ordered list of layer descriptors with a fixed
//! boundary between the shared (convolutional) stage and the local (dense)
//! stage.

use crate::error::{Error, Result};

/// Spatial shape of an activation: `(height, width, channels)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `(k - 1) / 2` on each side.
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
    },
    BatchNorm,
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Dense {
        units: usize,
    },
    Sigmoid,
}

impl LayerSpec {
    /// Number of parameters this layer contributes given its input shape.
    ///
    /// Batch norm carries four per-channel vectors: scale, shift, running
    /// mean, and running variance. The running statistics ride in the
    /// parameter vector (so they are averaged and transferred with the
    /// weights) but receive zero gradient.
    pub fn param_count(&self, input: Shape) -> usize {
        match self {
            LayerSpec::Conv2d {
                filters, kernel, ..
            } => filters * input.c * kernel.0 * kernel.1 + filters,
            LayerSpec::BatchNorm => 4 * input.c,
            LayerSpec::Dense { units } => units * input.len() + units,
            LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Sigmoid => 0,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self {
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let (kh, kw) = *kernel;
                if kh == 0 || kw == 0 || *stride == 0 || *filters == 0 {
                    return Err(Error::rejected("conv kernel/stride/filters must be > 0"));
                }
                let (ph, pw) = match padding {
                    Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
                    Padding::Valid => (0, 0),
                };
                if input.h + 2 * ph < kh || input.w + 2 * pw < kw {
                    return Err(Error::rejected(format!(
                        "conv kernel {kh}x{kw} larger than padded input {}x{}",
                        input.h, input.w
                    )));
                }
                Ok(Shape {
                    h: (input.h + 2 * ph - kh) / stride + 1,
                    w: (input.w + 2 * pw - kw) / stride + 1,
                    c: *filters,
                })
            }
            LayerSpec::MaxPool { window, stride } => {
                if *window == 0 || *stride == 0 {
                    return Err(Error::rejected("pool window/stride must be > 0"));
                }
                if input.h < *window || input.w < *window {
                    return Err(Error::rejected(format!(
                        "pool window {window} larger than input {}x{}",
                        input.h, input.w
                    )));
                }
                Ok(Shape {
                    h: (input.h - window) / stride + 1,
                    w: (input.w - window) / stride + 1,
                    c: input.c,
                })
            }
            LayerSpec::Dense { units } => {
                if *units == 0 {
                    return Err(Error::rejected("dense units must be > 0"));
                }
                Ok(Shape {
                    h: 1,
                    w: 1,
                    c: *units,
                })
            }
            LayerSpec::BatchNorm | LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input),
        }
    }
}

/// Where the 2x2 max-pools sit relative to the conv blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolPlacement {
    /// One pool after each conv + batchnorm + relu block.
    AfterEachBlock,
    /// A single pool after the last conv block.
    AfterStack,
}

/// Knobs for the standard conv-stack + dense-head architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input: Shape,
    pub conv_filters: Vec<usize>,
    pub kernel: (usize, usize),
    pub conv_stride: usize,
    pub padding: Padding,
    pub pool_placement: PoolPlacement,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub dense_units: usize,
    /// How many trailing dense layers (with their activations) form the
    /// local block. 2 keeps the whole dense head local; 1 keeps only the
    /// prediction layer; 0 shares everything.
    pub local_dense_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input: Shape { h: 32, w: 32, c: 1 },
            conv_filters: vec![32, 32, 64],
            kernel: (5, 5),
            conv_stride: 1,
            padding: Padding::Same,
            pool_placement: PoolPlacement::AfterEachBlock,
            pool_window: 2,
            pool_stride: 2,
            dense_units: 128,
            local_dense_layers: 2,
        }
    }
}

/// A validated model: layer list, per-layer shapes, and the stable index
/// that splits the shared stage from the local stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<LayerSpec>,
    input_shape: Shape,
    /// Input shape of every layer; `shapes[i]` feeds `layers[i]`,
    /// `shapes[len]` is the output shape.
    shapes: Vec<Shape>,
    /// First layer index of the local block.
    boundary: usize,
}

impl Model {
    /// Builds a model from an explicit layer list.
    ///
    /// `boundary` is the index of the first local layer; it must not fall
    /// inside the conv stage's parameterized prefix ordering (every dense
    /// layer is at or after it, every conv layer before it).
    pub fn new(layers: Vec<LayerSpec>, input_shape: Shape, boundary: usize) -> Result<Model> {
        if layers.is_empty() {
            return Err(Error::rejected("model has no layers"));
        }
        if boundary > layers.len() {
            return Err(Error::rejected("boundary beyond layer list"));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        let mut cur = input_shape;
        shapes.push(cur);
        for layer in &layers {
            cur = layer.output_shape(cur)?;
            shapes.push(cur);
        }
        let sigmoids = layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Sigmoid))
            .count();
        if sigmoids != 1 || !matches!(layers.last(), Some(LayerSpec::Sigmoid)) {
            return Err(Error::rejected("model needs exactly one terminal sigmoid"));
        }
        if cur.len() != 1 {
            return Err(Error::rejected(format!(
                "model must end in a single scalar, got {}x{}x{}",
                cur.h, cur.w, cur.c
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            let is_dense_stage = matches!(layer, LayerSpec::Dense { .. } | LayerSpec::Sigmoid);
            if is_dense_stage && i < boundary && boundary < layers.len() {
                return Err(Error::rejected("dense layer before the partition boundary"));
            }
            if matches!(
                layer,
                LayerSpec::Conv2d { .. } | LayerSpec::BatchNorm | LayerSpec::MaxPool { .. }
            ) && i >= boundary
            {
                return Err(Error::rejected("conv-stage layer after the boundary"));
            }
        }
        Ok(Model {
            layers,
            input_shape,
            shapes,
            boundary,
        })
    }

    /// Standard architecture: `[conv + bn + relu (+ pool)] x N`, then
    /// `dense(d) + relu + dense(1) + sigmoid`.
    pub fn from_config(cfg: &ModelConfig) -> Result<Model> {
        if cfg.conv_filters.is_empty() {
            return Err(Error::rejected("at least one conv layer required"));
        }
        let mut layers = Vec::new();
        let n_blocks = cfg.conv_filters.len();
        for (i, &filters) in cfg.conv_filters.iter().enumerate() {
            layers.push(LayerSpec::Conv2d {
                filters,
                kernel: cfg.kernel,
                stride: cfg.conv_stride,
                padding: cfg.padding,
            });
            layers.push(LayerSpec::BatchNorm);
            layers.push(LayerSpec::Relu);
            let pool_here = match cfg.pool_placement {
                PoolPlacement::AfterEachBlock => true,
                PoolPlacement::AfterStack => i + 1 == n_blocks,
            };
            if pool_here {
                layers.push(LayerSpec::MaxPool {
                    window: cfg.pool_window,
                    stride: cfg.pool_stride,
                });
            }
        }
        let first_dense = layers.len();
        layers.push(LayerSpec::Dense {
            units: cfg.dense_units,
        });
        layers.push(LayerSpec::Relu);
        let second_dense = layers.len();
        layers.push(LayerSpec::Dense { units: 1 });
        layers.push(LayerSpec::Sigmoid);

        let boundary = match cfg.local_dense_layers {
            0 => layers.len(),
            1 => second_dense,
            2 => first_dense,
            n => {
                return Err(Error::rejected(format!(
                    "local_dense_layers must be 0, 1 or 2, got {n}"
                )))
            }
        };
        Model::new(layers, cfg.input, boundary)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().unwrap()
    }

    /// Input shape of layer `i`.
    pub fn shape_in(&self, i: usize) -> Shape {
        self.shapes[i]
    }

    pub fn boundary(&self) -> usize {
        self.boundary
    }

    pub fn layer_param_count(&self, i: usize) -> usize {
        self.layers[i].param_count(self.shapes[i])
    }

    pub fn total_params(&self) -> usize {
        (0..self.layers.len()).map(|i| self.layer_param_count(i)).sum()
    }

    pub fn shared_param_count(&self) -> usize {
        (0..self.boundary).map(|i| self.layer_param_count(i)).sum()
    }

    pub fn local_param_count(&self) -> usize {
        (self.boundary..self.layers.len())
            .map(|i| self.layer_param_count(i))
            .sum()
    }
}

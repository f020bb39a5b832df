//! Flat parameter storage partitioned into a shared block (conv stage,
//! including batch-norm statistics) and a local block (dense head).

use rand::Rng;

use super::model::{LayerSpec, Model};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Shared,
    Local,
}

/// Where one layer's parameters live inside a `ParameterSet`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlice {
    pub block: Block,
    pub start: usize,
    pub len: usize,
}

/// Per-layer offsets mapping vector slices back to layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    slices: Vec<LayerSlice>,
    shared_len: usize,
    local_len: usize,
}

impl Layout {
    pub fn of(model: &Model) -> Layout {
        let mut slices = Vec::with_capacity(model.layers().len());
        let mut shared_len = 0;
        let mut local_len = 0;
        for i in 0..model.layers().len() {
            let len = model.layer_param_count(i);
            let (block, start) = if i < model.boundary() {
                let s = shared_len;
                shared_len += len;
                (Block::Shared, s)
            } else {
                let s = local_len;
                local_len += len;
                (Block::Local, s)
            };
            slices.push(LayerSlice { block, start, len });
        }
        Layout {
            slices,
            shared_len,
            local_len,
        }
    }

    pub fn layer(&self, i: usize) -> LayerSlice {
        self.slices[i]
    }

    pub fn shared_len(&self) -> usize {
        self.shared_len
    }

    pub fn local_len(&self) -> usize {
        self.local_len
    }

    pub fn total_len(&self) -> usize {
        self.shared_len + self.local_len
    }
}

/// Model parameters as two flat blocks plus the layout tying slices back
/// to layers. Gradients reuse this type (same layout, zero entries at
/// batch-norm running statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub shared: Vec<f64>,
    pub local: Vec<f64>,
    layout: Layout,
}

impl ParameterSet {
    pub fn zeros_like(model: &Model) -> ParameterSet {
        let layout = Layout::of(model);
        ParameterSet {
            shared: vec![0.0; layout.shared_len()],
            local: vec![0.0; layout.local_len()],
            layout,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn total_len(&self) -> usize {
        self.shared.len() + self.local.len()
    }

    pub fn layer(&self, i: usize) -> &[f64] {
        let s = self.layout.layer(i);
        match s.block {
            Block::Shared => &self.shared[s.start..s.start + s.len],
            Block::Local => &self.local[s.start..s.start + s.len],
        }
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.layout.layer(i);
        match s.block {
            Block::Shared => &mut self.shared[s.start..s.start + s.len],
            Block::Local => &mut self.local[s.start..s.start + s.len],
        }
    }

    /// Flat view: shared block then local block (which is layer order).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.total_len());
        flat.extend_from_slice(&self.shared);
        flat.extend_from_slice(&self.local);
        flat
    }

    pub fn all_finite(&self) -> bool {
        self.shared.iter().chain(self.local.iter()).all(|v| v.is_finite())
    }

    /// Iterates `(flat_index, value)` without materializing the flat vector.
    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.shared.iter().chain(self.local.iter()).copied()
    }

    pub fn get_flat(&self, i: usize) -> f64 {
        if i < self.shared.len() {
            self.shared[i]
        } else {
            self.local[i - self.shared.len()]
        }
    }

    pub fn get_flat_mut(&mut self, i: usize) -> &mut f64 {
        if i < self.shared.len() {
            &mut self.shared[i]
        } else {
            let j = i - self.shared.len();
            &mut self.local[j]
        }
    }

    /// Little-endian byte image of the local block; the confidentiality
    /// audit scans message payloads for these.
    pub fn local_bytes(&self) -> Vec<u8> {
        vec_bytes(&self.local)
    }

    pub fn shared_bytes(&self) -> Vec<u8> {
        vec_bytes(&self.shared)
    }
}

pub fn vec_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits a flat vector into shared/local blocks per the model's boundary.
pub fn partition_params(model: &Model, flat: &[f64]) -> Result<ParameterSet> {
    let layout = Layout::of(model);
    if flat.len() != layout.total_len() {
        return Err(Error::rejected(format!(
            "flat parameter length {} does not match model's {}",
            flat.len(),
            layout.total_len()
        )));
    }
    let (shared, local) = flat.split_at(layout.shared_len());
    Ok(ParameterSet {
        shared: shared.to_vec(),
        local: local.to_vec(),
        layout,
    })
}

/// One gradient-descent step: `theta - lr * grad`, elementwise over both
/// blocks. Pure; inputs are left untouched.
pub fn sgd_step(params: &ParameterSet, grad: &ParameterSet, lr: f64) -> Result<ParameterSet> {
    if params.shared.len() != grad.shared.len() || params.local.len() != grad.local.len() {
        return Err(Error::rejected("sgd_step: parameter/gradient shape mismatch"));
    }
    if lr <= 0.0 || !lr.is_finite() {
        return Err(Error::rejected("sgd_step: learning rate must be positive"));
    }
    let mut out = params.clone();
    step_block(&mut out.shared, &grad.shared, lr);
    step_block(&mut out.local, &grad.local, lr);
    Ok(out)
}

/// In-place step over one block; used by the training loops.
pub(crate) fn step_block(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Uniform fan-in initialization: weights in `+-1/sqrt(fan_in)`, biases 0,
/// batch-norm scale 1 / shift 0 / running mean 0 / running variance 1.
pub fn init_params(model: &Model, rng: &mut StreamRng) -> ParameterSet {
    let mut params = ParameterSet::zeros_like(model);
    for (i, layer) in model.layers().iter().enumerate() {
        let shape = model.shape_in(i);
        let slice = params.layer_mut(i);
        match layer {
            LayerSpec::Conv2d {
                filters, kernel, ..
            } => {
                let fan_in = (shape.c * kernel.0 * kernel.1) as f64;
                let bound = 1.0 / fan_in.sqrt();
                let n_weights = filters * shape.c * kernel.0 * kernel.1;
                for w in &mut slice[..n_weights] {
                    *w = rng.gen_range(-bound..bound);
                }
                // biases stay 0
            }
            LayerSpec::Dense { units } => {
                let fan_in = shape.len() as f64;
                let bound = 1.0 / fan_in.sqrt();
                let n_weights = units * shape.len();
                for w in &mut slice[..n_weights] {
                    *w = rng.gen_range(-bound..bound);
                }
            }
            LayerSpec::BatchNorm => {
                let c = shape.c;
                for v in &mut slice[..c] {
                    *v = 1.0; // gamma
                }
                // beta, running mean stay 0
                for v in &mut slice[3 * c..4 * c] {
                    *v = 1.0; // running variance
                }
            }
            LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Sigmoid => {}
        }
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{ModelConfig, Shape};
    use crate::rng::stream;
    use rand::Rng;

    fn toy_model() -> Model {
        let cfg = ModelConfig {
            input: Shape { h: 8, w: 8, c: 1 },
            conv_filters: vec![2],
            dense_units: 3,
            ..ModelConfig::default()
        };
        Model::from_config(&cfg).unwrap()
    }

    #[test]
    fn partition_counts_blocks() {
        // 10 conv-stage params + 4 dense-stage params
        let model = Model::new(
            vec![
                super::super::model::LayerSpec::Conv2d {
                    filters: 1,
                    kernel: (3, 3),
                    stride: 1,
                    padding: super::super::model::Padding::Valid,
                },
                super::super::model::LayerSpec::Dense { units: 1 },
                super::super::model::LayerSpec::Sigmoid,
            ],
            Shape { h: 3, w: 3, c: 1 },
            1,
        )
        .unwrap();
        assert_eq!(model.shared_param_count(), 10);
        assert_eq!(model.local_param_count(), 2);
        let flat: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let p = partition_params(&model, &flat).unwrap();
        assert_eq!(p.shared.len(), 10);
        assert_eq!(p.local.len(), 2);
        assert_eq!(p.to_flat(), flat);
    }

    #[test]
    fn partition_rejects_wrong_length() {
        let model = toy_model();
        let flat = vec![0.0; model.total_params() + 1];
        assert!(partition_params(&model, &flat).is_err());
    }

    #[test]
    fn flatten_round_trip_is_identity() {
        let model = toy_model();
        let mut rng = stream(3, "init", &[]);
        let flat: Vec<f64> = (0..model.total_params()).map(|_| rng.gen::<f64>()).collect();
        let p = partition_params(&model, &flat).unwrap();
        assert_eq!(p.to_flat(), flat);
    }

    #[test]
    fn sgd_step_examples() {
        let model = toy_model();
        let mut p = ParameterSet::zeros_like(&model);
        let mut g = ParameterSet::zeros_like(&model);
        p.shared[0] = 1.0;
        g.shared[0] = 2.0;
        let out = sgd_step(&p, &g, 0.5).unwrap();
        assert_eq!(out.shared[0], 0.0);
        // zero gradient is a fixed point
        let zero = ParameterSet::zeros_like(&model);
        assert_eq!(sgd_step(&p, &zero, 0.5).unwrap(), p);
        // elementwise arithmetic at the paper-scale rate
        let mut p2 = ParameterSet::zeros_like(&model);
        p2.shared[0] = 1.0;
        p2.shared[1] = -1.0;
        let mut g2 = ParameterSet::zeros_like(&model);
        g2.shared[0] = 0.1;
        g2.shared[1] = 0.1;
        let out2 = sgd_step(&p2, &g2, 1e-4).unwrap();
        assert!((out2.shared[0] - 0.99999).abs() < 1e-12);
        assert!((out2.shared[1] + 1.00001).abs() < 1e-12);
    }

    #[test]
    fn sgd_step_then_inverse_recovers_exactly() {
        // Exact recovery holds whenever |lr*g| stays below |theta| (the
        // subtraction and the re-addition then round to the same value),
        // which is the regime SGD at small rates operates in.
        let model = toy_model();
        let mut rng = stream(11, "init", &[]);
        let mut p = ParameterSet::zeros_like(&model);
        for v in p.shared.iter_mut().chain(p.local.iter_mut()) {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            *v = sign * rng.gen_range(0.5..1.5);
        }
        let mut g = ParameterSet::zeros_like(&model);
        for v in g.shared.iter_mut().chain(g.local.iter_mut()) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let stepped = sgd_step(&p, &g, 1e-4).unwrap();
        let mut neg = g.clone();
        for v in neg.shared.iter_mut().chain(neg.local.iter_mut()) {
            *v = -*v;
        }
        let back = sgd_step(&stepped, &neg, 1e-4).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn init_is_deterministic_per_stream() {
        let model = toy_model();
        let a = init_params(&model, &mut stream(5, "init", &[]));
        let b = init_params(&model, &mut stream(5, "init", &[]));
        assert_eq!(a, b);
        let c = init_params(&model, &mut stream(6, "init", &[]));
        assert_ne!(a, c);
    }
}

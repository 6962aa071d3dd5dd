use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::spec::{Encoder, NetworkSpec};

/// One named weight array, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }
}

/// All learnable arrays of one network, in a fixed order derived from the
/// [`NetworkSpec`]. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    /// Zero-filled arrays with the shapes `spec` requires.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let mut tensors = Vec::new();
        match spec.encoder {
            Encoder::Conv {
                channels,
                filters,
                kernel,
                ..
            } => {
                let o1 = spec.encoder.conv1_side();
                tensors.push(Tensor::zeros(
                    "enc.conv1.w",
                    &[filters, kernel, kernel, channels],
                ));
                tensors.push(Tensor::zeros("enc.conv1.b", &[filters]));
                tensors.push(Tensor::zeros(
                    "enc.conv2.w",
                    &[spec.rep_size, o1, o1, filters],
                ));
                tensors.push(Tensor::zeros("enc.conv2.b", &[spec.rep_size]));
            }
            Encoder::Dense { inputs } => {
                tensors.push(Tensor::zeros("enc.dense.w", &[spec.rep_size, inputs]));
                tensors.push(Tensor::zeros("enc.dense.b", &[spec.rep_size]));
            }
        }
        tensors.push(Tensor::zeros(
            "fc.w",
            &[spec.hidden, spec.rep_size + spec.aux_inputs],
        ));
        tensors.push(Tensor::zeros("fc.b", &[spec.hidden]));
        if let Some(m) = spec.memory {
            tensors.push(Tensor::zeros("lstm.wx", &[4 * m, spec.hidden]));
            tensors.push(Tensor::zeros("lstm.wh", &[4 * m, m]));
            tensors.push(Tensor::zeros("lstm.b", &[4 * m]));
        }
        tensors.push(Tensor::zeros("head.w", &[spec.actions, spec.trunk_width()]));
        tensors.push(Tensor::zeros("head.b", &[spec.actions]));
        Self { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![0.0; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// True when every tensor has the name and shape `spec` prescribes.
    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        let want = Self::zeros(spec);
        want.tensors.len() == self.tensors.len()
            && want.tensors.iter().zip(&self.tensors).all(|(a, b)| {
                a.name == b.name && a.shape == b.shape && b.data.len() == a.data.len()
            })
    }

    /// Per-tensor fan-in used by the initialiser.
    pub(crate) fn fan_in(spec: &NetworkSpec, name: &str) -> usize {
        match name {
            "enc.conv1.w" => match spec.encoder {
                Encoder::Conv {
                    channels, kernel, ..
                } => kernel * kernel * channels,
                Encoder::Dense { .. } => 0,
            },
            "enc.conv2.w" => match spec.encoder {
                Encoder::Conv { filters, .. } => {
                    let o1 = spec.encoder.conv1_side();
                    o1 * o1 * filters
                }
                Encoder::Dense { .. } => 0,
            },
            "enc.dense.w" => spec.encoder.input_len(),
            "fc.w" => spec.rep_size + spec.aux_inputs,
            "lstm.wx" | "lstm.wh" => spec.hidden + spec.memory.unwrap_or(0),
            "head.w" => spec.trunk_width(),
            _ => 0,
        }
    }
}

/// Recurrent carry (hidden and cell vectors); both empty for memoryless nets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl MemoryState {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let m = spec.memory.unwrap_or(0);
        Self {
            h: vec![0.0; m],
            c: vec![0.0; m],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
pub fn init_params<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> ParamSet {
    let mut params = ParamSet::zeros(spec);
    for t in &mut params.tensors {
        if t.name.ends_with(".b") {
            continue;
        }
        let fan_in = ParamSet::fan_in(spec, &t.name);
        if fan_in == 0 {
            continue;
        }
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        for w in &mut t.data {
            *w = rng.random_range(-bound..bound);
        }
    }
    params
}

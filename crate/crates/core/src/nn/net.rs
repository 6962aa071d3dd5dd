use alloc::vec;
use alloc::vec::Vec;

use super::params::{MemoryState, ParamSet};
use super::spec::{Encoder, NetworkSpec, ACTIONS};
use crate::{Error, Result};

pub type QValues = [f64; ACTIONS];

/// One regression record: the network input, the recurrent state it was
/// evaluated with, the action taken and its target value.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub memory: &'a MemoryState,
    pub action: usize,
    pub target: f64,
}

/// Positions of each layer's tensors inside a [`ParamSet`].
struct Slots {
    fc: usize,
    lstm: Option<usize>,
    head: usize,
}

impl Slots {
    fn of(spec: &NetworkSpec) -> Self {
        let fc = match spec.encoder {
            Encoder::Conv { .. } => 4,
            Encoder::Dense { .. } => 2,
        };
        let lstm = spec.memory.map(|_| fc + 2);
        let head = fc + 2 + if lstm.is_some() { 3 } else { 0 };
        Self { fc, lstm, head }
    }
}

#[derive(Default)]
struct Cache {
    z1: Vec<f64>,
    a1: Vec<f64>,
    zr: Vec<f64>,
    u: Vec<f64>,
    zf: Vec<f64>,
    hf: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    q: QValues,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `out = w · x + b` with `w` row-major `[out.len()][x.len()]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    if n == 0 {
        out.copy_from_slice(b);
        return;
    }
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n).zip(b)) {
        let mut acc = *bias;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *o = acc;
    }
}

/// Accumulates `dw += dz ⊗ x`, `db += dz` and, if requested, `dx = wᵀ dz`.
fn affine_back(
    w: &[f64],
    x: &[f64],
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let n = x.len();
    for (j, d) in dz.iter().enumerate() {
        db[j] += d;
        if *d == 0.0 || n == 0 {
            continue;
        }
        for (g, xi) in dw[j * n..(j + 1) * n].iter_mut().zip(x) {
            *g += d * xi;
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (j, d) in dz.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            for (g, wi) in dx.iter_mut().zip(&w[j * n..(j + 1) * n]) {
                *g += d * wi;
            }
        }
    }
}

fn check_inputs(spec: &NetworkSpec, input: &[f64], mem: &MemoryState) -> Result<()> {
    if input.len() != spec.input_len() {
        return Err(Error::Shape {
            what: "network input",
            expected: spec.input_len(),
            got: input.len(),
        });
    }
    let m = spec.memory.unwrap_or(0);
    if mem.h.len() != m || mem.c.len() != m {
        return Err(Error::Shape {
            what: "memory state",
            expected: m,
            got: mem.h.len(),
        });
    }
    Ok(())
}

#[allow(clippy::needless_range_loop)]
fn run(spec: &NetworkSpec, p: &ParamSet, input: &[f64], mem: &MemoryState, cache: &mut Cache) {
    let t = &p.tensors;
    let slots = Slots::of(spec);
    let obs_len = spec.encoder.input_len();
    let (obs, aux) = input.split_at(obs_len);

    // Encoder.
    cache.zr.resize(spec.rep_size, 0.0);
    match spec.encoder {
        Encoder::Conv {
            side,
            channels,
            filters,
            kernel,
            stride,
        } => {
            let o1 = spec.encoder.conv1_side();
            let (w1, b1) = (&t[0].data, &t[1].data);
            cache.z1.resize(o1 * o1 * filters, 0.0);
            cache.a1.resize(o1 * o1 * filters, 0.0);
            for oy in 0..o1 {
                for ox in 0..o1 {
                    for f in 0..filters {
                        let mut acc = b1[f];
                        for ky in 0..kernel {
                            let row = (oy * stride + ky) * side + ox * stride;
                            let wrow = (f * kernel + ky) * kernel;
                            for kx in 0..kernel {
                                let xi = &obs[(row + kx) * channels..(row + kx + 1) * channels];
                                let wi = &w1[(wrow + kx) * channels..(wrow + kx + 1) * channels];
                                for (a, b) in xi.iter().zip(wi) {
                                    acc += a * b;
                                }
                            }
                        }
                        let idx = (oy * o1 + ox) * filters + f;
                        cache.z1[idx] = acc;
                        cache.a1[idx] = relu(acc);
                    }
                }
            }
            affine(&t[2].data, &t[3].data, &cache.a1, &mut cache.zr);
        }
        Encoder::Dense { .. } => {
            affine(&t[0].data, &t[1].data, obs, &mut cache.zr);
        }
    }

    // Fully-connected layer over [rep, aux].
    cache.u.clear();
    cache.u.extend(cache.zr.iter().map(|v| relu(*v)));
    cache.u.extend_from_slice(aux);
    cache.zf.resize(spec.hidden, 0.0);
    affine(
        &t[slots.fc].data,
        &t[slots.fc + 1].data,
        &cache.u,
        &mut cache.zf,
    );
    cache.hf.clear();
    cache.hf.extend(cache.zf.iter().map(|v| relu(*v)));

    // Optional LSTM cell; gate blocks are ordered input, forget, cell, output.
    if let Some(l) = slots.lstm {
        let m = spec.memory.unwrap_or(0);
        let mut z = vec![0.0; 4 * m];
        affine(&t[l].data, &t[l + 2].data, &cache.hf, &mut z);
        let wh = &t[l + 1].data;
        for (j, zj) in z.iter_mut().enumerate() {
            for (w, h) in wh[j * m..(j + 1) * m].iter().zip(&mem.h) {
                *zj += w * h;
            }
        }
        cache.gates.resize(4 * m, 0.0);
        cache.c.resize(m, 0.0);
        cache.tanh_c.resize(m, 0.0);
        cache.h.resize(m, 0.0);
        for k in 0..m {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[m + k]);
            let g = libm::tanh(z[2 * m + k]);
            let o = sigmoid(z[3 * m + k]);
            cache.gates[k] = i;
            cache.gates[m + k] = f;
            cache.gates[2 * m + k] = g;
            cache.gates[3 * m + k] = o;
            let c = f * mem.c[k] + i * g;
            cache.c[k] = c;
            cache.tanh_c[k] = libm::tanh(c);
            cache.h[k] = o * cache.tanh_c[k];
        }
    }

    let trunk = if slots.lstm.is_some() {
        &cache.h
    } else {
        &cache.hf
    };
    affine(
        &t[slots.head].data,
        &t[slots.head + 1].data,
        trunk,
        &mut cache.q,
    );
}

#[allow(clippy::needless_range_loop)]
fn backprop(
    spec: &NetworkSpec,
    p: &ParamSet,
    input: &[f64],
    mem: &MemoryState,
    cache: &Cache,
    dq: &QValues,
    g: &mut ParamSet,
) {
    let t = &p.tensors;
    let slots = Slots::of(spec);
    let obs = &input[..spec.encoder.input_len()];

    let trunk = if slots.lstm.is_some() {
        &cache.h
    } else {
        &cache.hf
    };
    let mut dtrunk = vec![0.0; trunk.len()];
    {
        let (a, b) = g.tensors.split_at_mut(slots.head + 1);
        affine_back(
            &t[slots.head].data,
            trunk,
            dq,
            &mut a[slots.head].data,
            &mut b[0].data,
            Some(&mut dtrunk),
        );
    }

    let dhf = if let Some(l) = slots.lstm {
        let m = spec.memory.unwrap_or(0);
        let mut dz = vec![0.0; 4 * m];
        for k in 0..m {
            let (i, f, gg, o) = (
                cache.gates[k],
                cache.gates[m + k],
                cache.gates[2 * m + k],
                cache.gates[3 * m + k],
            );
            let dh = dtrunk[k];
            let dc = dh * o * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            dz[k] = dc * gg * i * (1.0 - i);
            dz[m + k] = dc * mem.c[k] * f * (1.0 - f);
            dz[2 * m + k] = dc * i * (1.0 - gg * gg);
            dz[3 * m + k] = dh * cache.tanh_c[k] * o * (1.0 - o);
        }
        let mut dhf = vec![0.0; spec.hidden];
        let (a, b) = g.tensors.split_at_mut(l + 1);
        let (wh_g, b_g) = b.split_at_mut(1);
        affine_back(
            &t[l].data,
            &cache.hf,
            &dz,
            &mut a[l].data,
            &mut b_g[0].data,
            Some(&mut dhf),
        );
        // Recurrent weights see the stored hidden state; the bias was already
        // accumulated above, so use a scratch bias here.
        let mut scratch = vec![0.0; 4 * m];
        affine_back(
            &t[l + 1].data,
            &mem.h,
            &dz,
            &mut wh_g[0].data,
            &mut scratch,
            None,
        );
        dhf
    } else {
        dtrunk
    };

    let dzf: Vec<f64> = dhf
        .iter()
        .zip(&cache.zf)
        .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
        .collect();
    let mut du = vec![0.0; cache.u.len()];
    {
        let (a, b) = g.tensors.split_at_mut(slots.fc + 1);
        affine_back(
            &t[slots.fc].data,
            &cache.u,
            &dzf,
            &mut a[slots.fc].data,
            &mut b[0].data,
            Some(&mut du),
        );
    }
    let dzr: Vec<f64> = du[..spec.rep_size]
        .iter()
        .zip(&cache.zr)
        .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
        .collect();

    match spec.encoder {
        Encoder::Conv {
            side,
            channels,
            filters,
            kernel,
            stride,
        } => {
            let o1 = spec.encoder.conv1_side();
            let mut da1 = vec![0.0; cache.a1.len()];
            {
                let (a, b) = g.tensors.split_at_mut(3);
                affine_back(
                    &t[2].data,
                    &cache.a1,
                    &dzr,
                    &mut a[2].data,
                    &mut b[0].data,
                    Some(&mut da1),
                );
            }
            let (a, b) = g.tensors.split_at_mut(1);
            let (dw1, db1) = (&mut a[0].data, &mut b[0].data);
            for oy in 0..o1 {
                for ox in 0..o1 {
                    for f in 0..filters {
                        let idx = (oy * o1 + ox) * filters + f;
                        if cache.z1[idx] <= 0.0 || da1[idx] == 0.0 {
                            continue;
                        }
                        let d = da1[idx];
                        db1[f] += d;
                        for ky in 0..kernel {
                            let row = (oy * stride + ky) * side + ox * stride;
                            let wrow = (f * kernel + ky) * kernel;
                            for kx in 0..kernel {
                                let xi = &obs[(row + kx) * channels..(row + kx + 1) * channels];
                                let gw =
                                    &mut dw1[(wrow + kx) * channels..(wrow + kx + 1) * channels];
                                for (gv, x) in gw.iter_mut().zip(xi) {
                                    *gv += d * x;
                                }
                            }
                        }
                    }
                }
            }
        }
        Encoder::Dense { .. } => {
            let (a, b) = g.tensors.split_at_mut(1);
            affine_back(&t[0].data, obs, &dzr, &mut a[0].data, &mut b[0].data, None);
        }
    }
}

/// Q-values for `input` and the successor recurrent state. Memoryless
/// networks return an empty state.
pub fn forward(
    spec: &NetworkSpec,
    params: &ParamSet,
    input: &[f64],
    mem: &MemoryState,
) -> Result<(QValues, MemoryState)> {
    check_inputs(spec, input, mem)?;
    let mut cache = Cache::default();
    run(spec, params, input, mem, &mut cache);
    let next = if spec.has_memory() {
        MemoryState {
            h: cache.h,
            c: cache.c,
        }
    } else {
        MemoryState::default()
    };
    Ok((cache.q, next))
}

fn check_batch(spec: &NetworkSpec, batch: &[Sample<'_>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for s in batch {
        check_inputs(spec, s.input, s.memory)?;
        if !s.target.is_finite() {
            return Err(Error::NonFinite("regression target"));
        }
        if s.action >= spec.actions {
            return Err(Error::Shape {
                what: "action index",
                expected: spec.actions,
                got: s.action,
            });
        }
    }
    Ok(())
}

/// Mean squared error between `q[action]` and `target` over the batch.
pub fn batch_loss(spec: &NetworkSpec, params: &ParamSet, batch: &[Sample<'_>]) -> Result<f64> {
    check_batch(spec, batch)?;
    let mut cache = Cache::default();
    let mut loss = 0.0;
    for s in batch {
        run(spec, params, s.input, s.memory, &mut cache);
        let e = cache.q[s.action] - s.target;
        loss += e * e;
    }
    Ok(loss / batch.len() as f64)
}

/// Batch loss and its gradient with respect to every parameter. Targets are
/// constants; stored memory states are treated as inputs.
pub fn loss_and_grads(
    spec: &NetworkSpec,
    params: &ParamSet,
    batch: &[Sample<'_>],
) -> Result<(f64, ParamSet)> {
    check_batch(spec, batch)?;
    let mut grads = params.zeros_like();
    let mut cache = Cache::default();
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        run(spec, params, s.input, s.memory, &mut cache);
        let e = cache.q[s.action] - s.target;
        loss += e * e;
        let mut dq = [0.0; ACTIONS];
        dq[s.action] = 2.0 * e / n;
        backprop(spec, params, s.input, s.memory, &cache, &dq, &mut grads);
    }
    Ok((loss / n, grads))
}

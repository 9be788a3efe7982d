//! Single LSTM layer unrolled over a sequence, with backpropagation
//! through time.
//!
//! Gate pre-activations are packed as `[f | i | g | o]` blocks of width
//! `hidden`: `z = x_t W_x + h_{t-1} W_h + b`. Then
//!
//! ```text
//! f = σ(z_f)   i = σ(z_i)   g = tanh(z_g)   o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ act(c_t)
//! ```
//!
//! `act` is `tanh` except where a layer is configured as a bounded output
//! stage, in which case it is the logistic function.

use super::layers::{as_sequence, sigmoid, Activation, Param};
use super::tensor::{gemm, Mat, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_input: Param,
    pub w_recurrent: Param,
    pub bias: Param,
    pub return_sequences: bool,
    pub cell_activation: Activation,
    cache: Option<Cache>,
}

/// All buffers are time-major: index `(t * batch + b) * width + j`.
#[derive(Debug, Clone)]
struct Cache {
    in_shape: Vec<usize>,
    batch: usize,
    steps: usize,
    x: Vec<f64>,
    gates: Vec<f64>,
    /// `c_0..=c_T`
    c: Vec<f64>,
    /// `h_0..=h_T`
    h: Vec<f64>,
    act_c: Vec<f64>,
}

/// Gate values for one `(batch, hidden)` slot.
pub struct GateValues {
    pub f: f64,
    pub i: f64,
    pub g: f64,
    pub o: f64,
}

impl Lstm {
    pub fn new(
        w_input: Tensor,
        w_recurrent: Tensor,
        bias: Tensor,
        return_sequences: bool,
        cell_activation: Activation,
    ) -> Result<Self> {
        let (&[_, g4], &[h, g4r], &[nb]) = (w_input.shape(), w_recurrent.shape(), bias.shape()) else {
            return Err(Error::shape("lstm weights must be W_x [in, 4h], W_h [h, 4h], b [4h]"));
        };
        if g4 != 4 * h || g4r != 4 * h || nb != 4 * h {
            return Err(Error::shape(format!("inconsistent lstm gate widths for hidden {h}")));
        }
        if !matches!(cell_activation, Activation::Tanh | Activation::Sigmoid) {
            return Err(Error::Validation(format!("lstm cell activation must be tanh or sigmoid, got {cell_activation}")));
        }
        Ok(Self {
            w_input: Param::trainable("w_input", w_input),
            w_recurrent: Param::trainable("w_recurrent", w_recurrent),
            bias: Param::trainable("bias", bias),
            return_sequences,
            cell_activation,
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.w_input.value.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.value.shape()[0]
    }

    /// One step for a whole batch: returns `(h_t, c_t)`.
    pub fn step(&self, x_t: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor)> {
        let (n_in, hid) = (self.inputs(), self.hidden());
        let b = x_t.batch();
        if x_t.shape() != [b, n_in] || h_prev.shape() != [b, hid] || c_prev.shape() != [b, hid] {
            return Err(Error::shape(format!(
                "lstm step expects x [{b}, {n_in}], h/c [{b}, {hid}]; got {:?}, {:?}, {:?}",
                x_t.shape(),
                h_prev.shape(),
                c_prev.shape()
            )));
        }
        let mut z = self.preactivation_rows(b);
        gemm(Mat::new(x_t.data(), b, n_in), Mat::new(self.w_input.value.data(), n_in, 4 * hid), 1.0, &mut z);
        gemm(Mat::new(h_prev.data(), b, hid), Mat::new(self.w_recurrent.value.data(), hid, 4 * hid), 1.0, &mut z);
        let mut h = vec![0.0; b * hid];
        let mut c = vec![0.0; b * hid];
        let mut act = vec![0.0; b * hid];
        activate_gates(&mut z, hid);
        self.cell_update(&z, c_prev.data(), &mut c, &mut act, &mut h, hid);
        Ok((Tensor::new(vec![b, hid], h)?, Tensor::new(vec![b, hid], c)?))
    }

    fn preactivation_rows(&self, rows: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(rows * self.bias.value.len());
        for _ in 0..rows {
            z.extend_from_slice(self.bias.value.data());
        }
        z
    }

    fn cell_update(&self, gates: &[f64], c_prev: &[f64], c: &mut [f64], act: &mut [f64], h: &mut [f64], hid: usize) {
        let act_fn = self.cell_activation;
        for (row, gate_row) in gates.chunks_exact(4 * hid).enumerate() {
            for j in 0..hid {
                let (f, i, g, o) = (gate_row[j], gate_row[hid + j], gate_row[2 * hid + j], gate_row[3 * hid + j]);
                let idx = row * hid + j;
                c[idx] = f * c_prev[idx] + i * g;
                act[idx] = act_fn.apply(c[idx]);
                h[idx] = o * act[idx];
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (b, steps, n_in) = as_sequence(x, "lstm")?;
        if n_in != self.inputs() {
            return Err(Error::shape(format!("lstm expects {} features per step, got {n_in}", self.inputs())));
        }
        if steps == 0 {
            return Err(Error::shape("lstm needs at least one timestep"));
        }
        let hid = self.hidden();
        let g4 = 4 * hid;

        let mut x_tm = vec![0.0; b * steps * n_in];
        for bi in 0..b {
            for t in 0..steps {
                let src = &x.data()[(bi * steps + t) * n_in..][..n_in];
                x_tm[(t * b + bi) * n_in..][..n_in].copy_from_slice(src);
            }
        }
        let mut gates = self.preactivation_rows(steps * b);
        gemm(
            Mat::new(&x_tm, steps * b, n_in),
            Mat::new(self.w_input.value.data(), n_in, g4),
            1.0,
            &mut gates,
        );
        let mut c = vec![0.0; (steps + 1) * b * hid];
        let mut h = vec![0.0; (steps + 1) * b * hid];
        let mut act_c = vec![0.0; steps * b * hid];
        let slab = b * hid;
        for t in 0..steps {
            let z = &mut gates[t * b * g4..(t + 1) * b * g4];
            gemm(
                Mat::new(&h[t * slab..(t + 1) * slab], b, hid),
                Mat::new(self.w_recurrent.value.data(), hid, g4),
                1.0,
                z,
            );
            activate_gates(z, hid);
            let (c_prev, c_next) = c.split_at_mut((t + 1) * slab);
            let (_, h_next) = h.split_at_mut((t + 1) * slab);
            self.cell_update(
                z,
                &c_prev[t * slab..],
                &mut c_next[..slab],
                &mut act_c[t * slab..(t + 1) * slab],
                &mut h_next[..slab],
                hid,
            );
        }

        let out = if self.return_sequences {
            let mut y = vec![0.0; b * steps * hid];
            for t in 0..steps {
                for bi in 0..b {
                    let src = &h[((t + 1) * b + bi) * hid..][..hid];
                    y[(bi * steps + t) * hid..][..hid].copy_from_slice(src);
                }
            }
            Tensor::new(vec![b, steps, hid], y)?
        } else {
            Tensor::new(vec![b, hid], h[steps * slab..].to_vec())?
        };
        self.cache = Some(Cache { in_shape: x.shape().to_vec(), batch: b, steps, x: x_tm, gates, c, h, act_c });
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let hid = self.hidden();
        let n_in = self.inputs();
        let g4 = 4 * hid;
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Contract("lstm: backward called before forward".into()))?;
        let (b, steps) = (cache.batch, cache.steps);
        let expected: &[usize] = if self.return_sequences { &[b, steps, hid] } else { &[b, hid] };
        if grad.shape() != expected {
            return Err(Error::shape(format!("lstm grad {:?}, expected {expected:?}", grad.shape())));
        }
        let slab = b * hid;
        let w_h = self.w_recurrent.value.data();
        let act_fn = self.cell_activation;

        let mut dz_all = vec![0.0; steps * b * g4];
        let mut dh_next = vec![0.0; slab];
        let mut dc_next = vec![0.0; slab];
        for t in (0..steps).rev() {
            let mut dh = dh_next.clone();
            if self.return_sequences {
                for bi in 0..b {
                    let src = &grad.data()[(bi * steps + t) * hid..][..hid];
                    dh[bi * hid..(bi + 1) * hid].iter_mut().zip(src).for_each(|(d, g)| *d += g);
                }
            } else if t == steps - 1 {
                dh.iter_mut().zip(grad.data()).for_each(|(d, g)| *d += g);
            }
            let gates = &cache.gates[t * b * g4..(t + 1) * b * g4];
            let c_prev = &cache.c[t * slab..(t + 1) * slab];
            let act = &cache.act_c[t * slab..(t + 1) * slab];
            let dz = &mut dz_all[t * b * g4..(t + 1) * b * g4];
            for bi in 0..b {
                for j in 0..hid {
                    let gi = bi * g4;
                    let (f, i, g, o) = (gates[gi + j], gates[gi + hid + j], gates[gi + 2 * hid + j], gates[gi + 3 * hid + j]);
                    let idx = bi * hid + j;
                    let a = act[idx];
                    let d_act = match act_fn {
                        Activation::Sigmoid => a * (1.0 - a),
                        _ => 1.0 - a * a,
                    };
                    let d_o = dh[idx] * a;
                    let dc = dc_next[idx] + dh[idx] * o * d_act;
                    dz[gi + j] = dc * c_prev[idx] * f * (1.0 - f);
                    dz[gi + hid + j] = dc * g * i * (1.0 - i);
                    dz[gi + 2 * hid + j] = dc * i * (1.0 - g * g);
                    dz[gi + 3 * hid + j] = d_o * o * (1.0 - o);
                    dc_next[idx] = dc * f;
                }
            }
            let h_prev = &cache.h[t * slab..(t + 1) * slab];
            if let Some(gw) = self.w_recurrent.grad.as_mut() {
                gemm(Mat::new(h_prev, b, hid).t(), Mat::new(dz, b, g4), 1.0, gw);
            }
            gemm(Mat::new(dz, b, g4), Mat::new(w_h, hid, g4).t(), 0.0, &mut dh_next);
        }

        if let Some(gw) = self.w_input.grad.as_mut() {
            gemm(Mat::new(&cache.x, steps * b, n_in).t(), Mat::new(&dz_all, steps * b, g4), 1.0, gw);
        }
        if let Some(gb) = self.bias.grad.as_mut() {
            for row in dz_all.chunks_exact(g4) {
                gb.iter_mut().zip(row).for_each(|(acc, g)| *acc += g);
            }
        }
        let mut dx_tm = vec![0.0; steps * b * n_in];
        gemm(
            Mat::new(&dz_all, steps * b, g4),
            Mat::new(self.w_input.value.data(), n_in, g4).t(),
            0.0,
            &mut dx_tm,
        );
        let mut dx = vec![0.0; b * steps * n_in];
        for t in 0..steps {
            for bi in 0..b {
                let src = &dx_tm[(t * b + bi) * n_in..][..n_in];
                dx[(bi * steps + t) * n_in..][..n_in].copy_from_slice(src);
            }
        }
        Tensor::new(cache.in_shape.clone(), dx)
    }

    /// Gate activations of the last forward pass at `(t, batch, j)`.
    pub fn cached_gates(&self, t: usize, batch: usize, j: usize) -> Option<GateValues> {
        let cache = self.cache.as_ref()?;
        let hid = self.hidden();
        let base = (t * cache.batch + batch) * 4 * hid;
        let g = &cache.gates;
        Some(GateValues { f: g[base + j], i: g[base + hid + j], g: g[base + 2 * hid + j], o: g[base + 3 * hid + j] })
    }
}

fn activate_gates(z: &mut [f64], hid: usize) {
    for row in z.chunks_exact_mut(4 * hid) {
        let (fi, rest) = row.split_at_mut(2 * hid);
        let (g, o) = rest.split_at_mut(hid);
        fi.iter_mut().chain(o.iter_mut()).for_each(|v| *v = sigmoid(*v));
        g.iter_mut().for_each(|v| *v = v.tanh());
    }
}

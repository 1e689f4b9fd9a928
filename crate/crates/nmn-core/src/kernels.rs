//! Dense numeric kernels shared by the no-gradient forward path and the tape.
//!
//! Both paths must produce bitwise-identical values (rollout-time outputs are
//! later reproduced during updates), so every forward formula lives here and
//! nowhere else. Dot products are unrolled into four independent
//! accumulators; without this the strict IEEE evaluation order serialises the
//! additions and the recurrent layers dominate the run time.

use crate::error::{Error, Result};

/// Activation kinds used by the architectures.
///
/// `SRelu` is the saturated rectified linear unit `min(1, max(-1, x))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    SRelu,
    Relu,
    Sigmoid,
    Identity,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::SRelu => x.clamp(-1.0, 1.0),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed in terms of the pre-activation `x` and the output
    /// `y = apply(x)`.
    ///
    /// At the sReLU kinks (|x| = 1) and the ReLU kink (x = 0) the boundary is
    /// assigned to the linear region (derivative 1).
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::SRelu => {
                if (-1.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "srelu" => Ok(Activation::SRelu),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation kind: {other}"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)`, evaluated without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[i] += c * a[i]`.
#[inline]
pub fn axpy(c: f64, a: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), out.len());
    for (o, x) in out.iter_mut().zip(a) {
        *o += c * x;
    }
}

/// `out = W x + b` for a row-major `W` with shape `(out_dim, in_dim)`.
#[inline]
pub fn matvec_bias(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = b[i] + dot(&w[i * n_in..(i + 1) * n_in], x);
    }
}

/// `out += W' g` expressed as row-wise axpys so `W` is read contiguously.
#[inline]
pub fn matvec_transpose_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let n_in = out.len();
    for (i, gi) in g.iter().enumerate() {
        if *gi != 0.0 {
            axpy(*gi, &w[i * n_in..(i + 1) * n_in], out);
        }
    }
}

/// Rank-one accumulation `dW += g x'` for a row-major `dW`.
#[inline]
pub fn outer_acc(g: &[f64], x: &[f64], dw: &mut [f64]) {
    let n_in = x.len();
    for (i, gi) in g.iter().enumerate() {
        if *gi != 0.0 {
            axpy(*gi, x, &mut dw[i * n_in..(i + 1) * n_in]);
        }
    }
}

/// Forward pass of a dense layer `y = act(Wx + b)`, keeping the
/// pre-activations for the backward pass.
pub fn dense_into(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    act: Activation,
    pre: &mut [f64],
    out: &mut [f64],
) {
    matvec_bias(w, b, x, pre);
    for (o, p) in out.iter_mut().zip(pre.iter()) {
        *o = act.apply(*p);
    }
}

/// Saved intermediates of one GRU step, needed by its backward pass.
#[derive(Debug, Clone, Default)]
pub struct GruScratch {
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub candidate: Vec<f64>,
    /// `reset (.) h_prev`, the input to the candidate's recurrent term.
    pub gated_h: Vec<f64>,
}

impl GruScratch {
    pub fn with_dim(h: usize) -> Self {
        GruScratch {
            update: vec![0.0; h],
            reset: vec![0.0; h],
            candidate: vec![0.0; h],
            gated_h: vec![0.0; h],
        }
    }
}

/// Weight views of one GRU layer. Matrices are row-major with shapes
/// `wz/wr/wc: (h, in)` and `uz/ur/uc: (h, h)`.
#[derive(Clone, Copy)]
pub struct GruWeights<'a> {
    pub wz: &'a [f64],
    pub uz: &'a [f64],
    pub bz: &'a [f64],
    pub wr: &'a [f64],
    pub ur: &'a [f64],
    pub br: &'a [f64],
    pub wc: &'a [f64],
    pub uc: &'a [f64],
    pub bc: &'a [f64],
}

/// One step of the standard gated recurrent unit:
///
/// ```text
/// z = sigmoid(Wz x + Uz h + bz)
/// r = sigmoid(Wr x + Ur h + br)
/// c = tanh(Wc x + Uc (r (.) h) + bc)
/// h' = (1 - z) (.) h + z (.) c
/// ```
pub fn gru_step_into(
    w: GruWeights<'_>,
    x: &[f64],
    h_prev: &[f64],
    scratch: &mut GruScratch,
    h_next: &mut [f64],
) {
    let h = h_prev.len();
    let n_in = x.len();
    for i in 0..h {
        let a = w.bz[i] + dot(&w.wz[i * n_in..(i + 1) * n_in], x) + dot(&w.uz[i * h..(i + 1) * h], h_prev);
        scratch.update[i] = sigmoid(a);
        let a = w.br[i] + dot(&w.wr[i * n_in..(i + 1) * n_in], x) + dot(&w.ur[i * h..(i + 1) * h], h_prev);
        scratch.reset[i] = sigmoid(a);
    }
    for i in 0..h {
        scratch.gated_h[i] = scratch.reset[i] * h_prev[i];
    }
    for i in 0..h {
        let a = w.bc[i]
            + dot(&w.wc[i * n_in..(i + 1) * n_in], x)
            + dot(&w.uc[i * h..(i + 1) * h], &scratch.gated_h);
        scratch.candidate[i] = a.tanh();
    }
    for i in 0..h {
        h_next[i] = (1.0 - scratch.update[i]) * h_prev[i] + scratch.update[i] * scratch.candidate[i];
    }
}

/// Forward pass of a neuromodulated dense layer.
///
/// Every neuron `i` owns an incoming weight row `w[i]` plus two modulation
/// vectors `ws[i], wb[i]` of the signal length `k`. Its output is
/// `act(s_i * u_i + b_i)` with `u_i = w[i].x`, `s_i = z.ws[i]`,
/// `b_i = z.wb[i]`. The scale/offset pair is what the neuromodulatory signal
/// steers; there is no separate bias term.
#[allow(clippy::too_many_arguments)]
pub fn mod_dense_into(
    w: &[f64],
    ws: &[f64],
    wb: &[f64],
    z: &[f64],
    x: &[f64],
    act: Activation,
    raw: &mut [f64],
    scale: &mut [f64],
    offset: &mut [f64],
    pre: &mut [f64],
    out: &mut [f64],
) {
    let n_in = x.len();
    let k = z.len();
    for i in 0..out.len() {
        raw[i] = dot(&w[i * n_in..(i + 1) * n_in], x);
        scale[i] = dot(&ws[i * k..(i + 1) * k], z);
        offset[i] = dot(&wb[i * k..(i + 1) * k], z);
        pre[i] = scale[i] * raw[i] + offset[i];
        out[i] = act.apply(pre[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srelu_clamps_and_keeps_linear_region() {
        assert_eq!(Activation::SRelu.apply(0.5), 0.5);
        assert_eq!(Activation::SRelu.apply(2.0), 1.0);
        assert_eq!(Activation::SRelu.apply(-3.0), -1.0);
    }

    #[test]
    fn srelu_subgradient_includes_kinks() {
        assert_eq!(Activation::SRelu.derivative(1.0, 1.0), 1.0);
        assert_eq!(Activation::SRelu.derivative(-1.0, -1.0), 1.0);
        assert_eq!(Activation::SRelu.derivative(1.0 + 1e-12, 1.0), 0.0);
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.25).collect();
        let b: Vec<f64> = (0..13).map(|i| (13 - i) as f64 * -0.5).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn unknown_activation_is_a_config_error() {
        assert!(Activation::parse("selu").is_err());
    }
}

//! Reverse-mode gradient tape for the operations the architectures need.
//!
//! The tape evaluates eagerly: creating a node runs its forward kernel and
//! stores the outputs (plus whatever the backward pass will need) in a flat
//! arena. `backward` walks the nodes once in reverse creation order — the
//! creation order is already topological — accumulating adjoints over every
//! path, and collects per-parameter gradients aligned with a
//! [`ParameterStore`].
//!
//! Truncated BPTT is realised at record time: the sequence runners feed the
//! recurrent state back in as a fresh constant (`detach`) every `T` steps, so
//! gradients cannot propagate across the cut. With `T` at least the sequence
//! length this degenerates to full BPTT, with `T = 1` to single-step
//! backprop.
//!
//! A tape lives for one update phase (one actor epoch or one critic
//! minibatch) and is recycled with [`Tape::reset`]; forward passes during
//! environment rollouts bypass the tape entirely and use the same kernels in
//! [`crate::kernels`], which keeps the two paths bitwise identical.

use crate::error::{Error, Result};
use crate::kernels::{self, Activation, GruWeights};
use crate::store::{Gradients, ParameterStore};

const LN_2PI: f64 = 1.8378770664093453;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

#[derive(Debug, Clone, Copy)]
struct Span {
    off: usize,
    len: usize,
}

/// References to the nine weight arrays of one GRU layer on the tape.
#[derive(Debug, Clone, Copy)]
pub struct GruParamIds {
    pub wz: NodeId,
    pub uz: NodeId,
    pub bz: NodeId,
    pub wr: NodeId,
    pub ur: NodeId,
    pub br: NodeId,
    pub wc: NodeId,
    pub uc: NodeId,
    pub bc: NodeId,
}

#[derive(Debug)]
enum Op {
    Const,
    Param {
        slot: usize,
    },
    Dense {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        act: Activation,
        pre: Span,
    },
    ModDense {
        x: NodeId,
        w: NodeId,
        ws: NodeId,
        wb: NodeId,
        z: NodeId,
        act: Activation,
        /// Saved `[raw | scale | offset | pre]`, each of the output length.
        aux: Span,
    },
    GruStep {
        x: NodeId,
        h_prev: NodeId,
        p: GruParamIds,
        /// Saved `[update | reset | candidate]` gate vectors.
        gates: Span,
    },
    SoftplusShift {
        x: NodeId,
    },
    Slice {
        x: NodeId,
        start: usize,
    },
    GaussLogLik {
        mu: NodeId,
        sigma: NodeId,
        /// The (constant) action the likelihood is evaluated at.
        action: Span,
    },
    GaussKl {
        mu_q: NodeId,
        sigma_q: NodeId,
        /// Snapshot distribution `[mu_p | sigma_p]`.
        reference: Span,
    },
    RatioAdv {
        ln_pi: NodeId,
    },
    SqErr {
        pred: NodeId,
        target: f64,
    },
    Sum {
        ids: (usize, usize),
    },
    LinComb {
        ids: (usize, usize),
    },
    HingeSq {
        x: NodeId,
        knee: f64,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
}

struct Node {
    op: Op,
    out: Span,
}

/// Gradient tape. See the module docs for the lifecycle.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<f64>,
    list_ids: Vec<NodeId>,
    list_coefs: Vec<f64>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Clears all nodes but keeps allocations for reuse.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.vals.clear();
        self.list_ids.clear();
        self.list_coefs.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let s = self.nodes[id.0 as usize].out;
        &self.vals[s.off..s.off + s.len]
    }

    /// Scalar value of a length-one node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let s = self.nodes[id.0 as usize].out;
        debug_assert_eq!(s.len, 1);
        self.vals[s.off]
    }

    fn alloc(&mut self, len: usize) -> Span {
        let off = self.vals.len();
        self.vals.resize(off + len, 0.0);
        Span { off, len }
    }

    fn push(&mut self, op: Op, out: Span) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, out });
        id
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.0 as usize].out.len
    }

    pub fn constant(&mut self, values: &[f64]) -> NodeId {
        let span = self.alloc(values.len());
        self.vals[span.off..span.off + span.len].copy_from_slice(values);
        self.push(Op::Const, span)
    }

    /// New constant node carrying the current values of `id`; gradients do
    /// not flow past it.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let src = self.nodes[id.0 as usize].out;
        let span = self.alloc(src.len);
        self.vals.copy_within(src.off..src.off + src.len, span.off);
        self.push(Op::Const, span)
    }

    /// Leaf referencing a parameter entry; its values are copied onto the
    /// tape so the store may be mutated after the phase.
    pub fn param(&mut self, store: &ParameterStore, slot: usize) -> NodeId {
        let entry = store.entry(slot);
        let span = self.alloc(entry.data.len());
        self.vals[span.off..span.off + span.len].copy_from_slice(&entry.data);
        self.push(Op::Param { slot }, span)
    }

    /// `act(Wx + b)` with a row-major `(out, in)` weight matrix.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId, act: Activation) -> Result<NodeId> {
        let n_in = self.len_of(x);
        let n_out = self.len_of(b);
        if self.len_of(w) != n_in * n_out {
            return Err(Error::dimension("dense weights", n_in * n_out, self.len_of(w)));
        }
        if self.value(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense input".into()));
        }
        let pre = self.alloc(n_out);
        let out = self.alloc(n_out);
        // Split-borrow the arena around the kernel call.
        let (xs, ws, bs) = (
            self.nodes[x.0 as usize].out,
            self.nodes[w.0 as usize].out,
            self.nodes[b.0 as usize].out,
        );
        {
            let vals = &mut self.vals;
            for i in 0..n_out {
                let row = &vals[ws.off + i * n_in..ws.off + (i + 1) * n_in];
                let xv = &vals[xs.off..xs.off + n_in];
                let p = vals[bs.off + i] + kernels::dot(row, xv);
                vals[pre.off + i] = p;
                vals[out.off + i] = act.apply(p);
            }
        }
        Ok(self.push(Op::Dense { x, w, b, act, pre }, out))
    }

    /// Neuromodulated dense layer; see [`kernels::mod_dense_into`].
    pub fn mod_dense(
        &mut self,
        x: NodeId,
        w: NodeId,
        ws: NodeId,
        wb: NodeId,
        z: NodeId,
        n_out: usize,
        act: Activation,
    ) -> Result<NodeId> {
        let n_in = self.len_of(x);
        let k = self.len_of(z);
        if self.len_of(w) != n_out * n_in {
            return Err(Error::dimension("modulated weights", n_out * n_in, self.len_of(w)));
        }
        if self.len_of(ws) != n_out * k || self.len_of(wb) != n_out * k {
            return Err(Error::dimension("modulation vectors", n_out * k, self.len_of(ws)));
        }
        let aux = self.alloc(4 * n_out);
        let out = self.alloc(n_out);
        let (xs, wsp, wss, wbs, zs) = (
            self.nodes[x.0 as usize].out,
            self.nodes[w.0 as usize].out,
            self.nodes[ws.0 as usize].out,
            self.nodes[wb.0 as usize].out,
            self.nodes[z.0 as usize].out,
        );
        {
            let vals = &mut self.vals;
            for i in 0..n_out {
                let raw = kernels::dot(
                    &vals[wsp.off + i * n_in..wsp.off + (i + 1) * n_in],
                    &vals[xs.off..xs.off + n_in],
                );
                let scale = kernels::dot(
                    &vals[wss.off + i * k..wss.off + (i + 1) * k],
                    &vals[zs.off..zs.off + k],
                );
                let offset = kernels::dot(
                    &vals[wbs.off + i * k..wbs.off + (i + 1) * k],
                    &vals[zs.off..zs.off + k],
                );
                let p = scale * raw + offset;
                vals[aux.off + i] = raw;
                vals[aux.off + n_out + i] = scale;
                vals[aux.off + 2 * n_out + i] = offset;
                vals[aux.off + 3 * n_out + i] = p;
                vals[out.off + i] = act.apply(p);
            }
        }
        Ok(self.push(
            Op::ModDense {
                x,
                w,
                ws,
                wb,
                z,
                act,
                aux,
            },
            out,
        ))
    }

    /// One GRU step; the returned node is the next hidden state.
    pub fn gru_step(&mut self, x: NodeId, h_prev: NodeId, p: GruParamIds) -> Result<NodeId> {
        let h = self.len_of(h_prev);
        let n_in = self.len_of(x);
        if self.len_of(p.wz) != h * n_in || self.len_of(p.uz) != h * h {
            return Err(Error::dimension("gru weights", h * n_in, self.len_of(p.wz)));
        }
        let gates = self.alloc(3 * h);
        let out = self.alloc(h);
        let spans = GruSpans::collect(self, x, h_prev, p);
        {
            let vals = &mut self.vals;
            for i in 0..h {
                let a = vals[spans.bz.off + i]
                    + kernels::dot(&vals[spans.wz.off + i * n_in..spans.wz.off + (i + 1) * n_in], &vals[spans.x.off..spans.x.off + n_in])
                    + kernels::dot(&vals[spans.uz.off + i * h..spans.uz.off + (i + 1) * h], &vals[spans.h.off..spans.h.off + h]);
                vals[gates.off + i] = kernels::sigmoid(a);
                let a = vals[spans.br.off + i]
                    + kernels::dot(&vals[spans.wr.off + i * n_in..spans.wr.off + (i + 1) * n_in], &vals[spans.x.off..spans.x.off + n_in])
                    + kernels::dot(&vals[spans.ur.off + i * h..spans.ur.off + (i + 1) * h], &vals[spans.h.off..spans.h.off + h]);
                vals[gates.off + h + i] = kernels::sigmoid(a);
            }
            // Candidate needs the reset-gated state, which depends on the full
            // reset vector, hence the second loop.
            for i in 0..h {
                let mut a = vals[spans.bc.off + i]
                    + kernels::dot(&vals[spans.wc.off + i * n_in..spans.wc.off + (i + 1) * n_in], &vals[spans.x.off..spans.x.off + n_in]);
                let urow = spans.uc.off + i * h;
                let mut acc = [0.0f64; 4];
                let chunks = h / 4;
                for c in 0..chunks {
                    let j = c * 4;
                    acc[0] += vals[urow + j] * vals[gates.off + h + j] * vals[spans.h.off + j];
                    acc[1] += vals[urow + j + 1] * vals[gates.off + h + j + 1] * vals[spans.h.off + j + 1];
                    acc[2] += vals[urow + j + 2] * vals[gates.off + h + j + 2] * vals[spans.h.off + j + 2];
                    acc[3] += vals[urow + j + 3] * vals[gates.off + h + j + 3] * vals[spans.h.off + j + 3];
                }
                for j in chunks * 4..h {
                    acc[0] += vals[urow + j] * vals[gates.off + h + j] * vals[spans.h.off + j];
                }
                a += (acc[0] + acc[1]) + (acc[2] + acc[3]);
                vals[gates.off + 2 * h + i] = a.tanh();
            }
            for i in 0..h {
                let zg = vals[gates.off + i];
                vals[out.off + i] =
                    (1.0 - zg) * vals[spans.h.off + i] + zg * vals[gates.off + 2 * h + i];
            }
        }
        Ok(self.push(Op::GruStep { x, h_prev, p, gates }, out))
    }

    /// Elementwise `softplus(x) + floor`; used to keep sigma positive.
    pub fn softplus_shift(&mut self, x: NodeId, floor: f64) -> NodeId {
        let n = self.len_of(x);
        let out = self.alloc(n);
        let xs = self.nodes[x.0 as usize].out;
        for i in 0..n {
            self.vals[out.off + i] = kernels::softplus(self.vals[xs.off + i]) + floor;
        }
        self.push(Op::SoftplusShift { x }, out)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start + len > self.len_of(x) {
            return Err(Error::dimension("slice", self.len_of(x), start + len));
        }
        let out = self.alloc(len);
        let xs = self.nodes[x.0 as usize].out;
        self.vals.copy_within(xs.off + start..xs.off + start + len, out.off);
        Ok(self.push(Op::Slice { x, start }, out))
    }

    /// Log-density of a diagonal Gaussian at a fixed action.
    pub fn gauss_log_lik(&mut self, mu: NodeId, sigma: NodeId, action: &[f64]) -> Result<NodeId> {
        let m = action.len();
        if self.len_of(mu) != m || self.len_of(sigma) != m {
            return Err(Error::dimension("gaussian log-likelihood", m, self.len_of(mu)));
        }
        let act = self.alloc(m);
        self.vals[act.off..act.off + m].copy_from_slice(action);
        let out = self.alloc(1);
        let (ms, ss) = (self.nodes[mu.0 as usize].out, self.nodes[sigma.0 as usize].out);
        let mut acc = -(m as f64) * 0.5 * LN_2PI;
        for i in 0..m {
            let s = self.vals[ss.off + i];
            let d = (action[i] - self.vals[ms.off + i]) / s;
            acc -= s.ln() + 0.5 * d * d;
        }
        self.vals[out.off] = acc;
        Ok(self.push(Op::GaussLogLik { mu, sigma, action: act }, out))
    }

    /// `KL(p || q)` between diagonal Gaussians where `p` is a constant
    /// snapshot and `q` is the differentiable current policy.
    pub fn gauss_kl(
        &mut self,
        mu_p: &[f64],
        sigma_p: &[f64],
        mu_q: NodeId,
        sigma_q: NodeId,
    ) -> Result<NodeId> {
        let m = mu_p.len();
        if sigma_p.len() != m || self.len_of(mu_q) != m || self.len_of(sigma_q) != m {
            return Err(Error::dimension("gaussian kl", m, self.len_of(mu_q)));
        }
        let reference = self.alloc(2 * m);
        self.vals[reference.off..reference.off + m].copy_from_slice(mu_p);
        self.vals[reference.off + m..reference.off + 2 * m].copy_from_slice(sigma_p);
        let out = self.alloc(1);
        let (ms, ss) = (self.nodes[mu_q.0 as usize].out, self.nodes[sigma_q.0 as usize].out);
        let mut acc = 0.0;
        for i in 0..m {
            let sp = sigma_p[i];
            let sq = self.vals[ss.off + i];
            let dm = self.vals[ms.off + i] - mu_p[i];
            acc += (sq / sp).ln() + (sp * sp + dm * dm) / (2.0 * sq * sq) - 0.5;
        }
        self.vals[out.off] = acc;
        Ok(self.push(Op::GaussKl { mu_q, sigma_q, reference }, out))
    }

    /// `advantage * exp(ln_pi - ln_ref)`, one likelihood-ratio term of the
    /// surrogate policy loss.
    pub fn ratio_advantage(&mut self, ln_pi: NodeId, ln_ref: f64, advantage: f64) -> NodeId {
        let out = self.alloc(1);
        self.vals[out.off] = advantage * (self.scalar(ln_pi) - ln_ref).exp();
        self.push(Op::RatioAdv { ln_pi }, out)
    }

    /// `(pred - target)^2` for a scalar prediction node.
    pub fn squared_error(&mut self, pred: NodeId, target: f64) -> Result<NodeId> {
        if self.len_of(pred) != 1 {
            return Err(Error::dimension("squared error", 1, self.len_of(pred)));
        }
        let out = self.alloc(1);
        let d = self.scalar(pred) - target;
        self.vals[out.off] = d * d;
        Ok(self.push(Op::SqErr { pred, target }, out))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, ids: &[NodeId]) -> NodeId {
        let start = self.list_ids.len();
        self.list_ids.extend_from_slice(ids);
        let out = self.alloc(1);
        let mut acc = 0.0;
        for id in ids {
            acc += self.scalar(*id);
        }
        self.vals[out.off] = acc;
        self.push(Op::Sum { ids: (start, ids.len()) }, out)
    }

    /// Linear combination of scalar nodes.
    pub fn lin_comb(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        let start = self.list_ids.len();
        for (id, c) in terms {
            self.list_ids.push(*id);
            self.list_coefs.push(*c);
        }
        let out = self.alloc(1);
        let mut acc = 0.0;
        for (id, c) in terms {
            acc += c * self.scalar(*id);
        }
        self.vals[out.off] = acc;
        self.push(Op::LinComb { ids: (start, terms.len()) }, out)
    }

    /// `max(0, x - knee)^2`, the squared hinge penalty.
    pub fn hinge_sq(&mut self, x: NodeId, knee: f64) -> NodeId {
        let out = self.alloc(1);
        let e = (self.scalar(x) - knee).max(0.0);
        self.vals[out.off] = e * e;
        self.push(Op::HingeSq { x, knee }, out)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let n = self.len_of(x);
        let out = self.alloc(n);
        let xs = self.nodes[x.0 as usize].out;
        for i in 0..n {
            self.vals[out.off + i] = c * self.vals[xs.off + i];
        }
        self.push(Op::Scale { x, c }, out)
    }

    /// Accumulates `d loss / d param` for every parameter of `store` reachable
    /// from `loss`, summing over all tape paths.
    pub fn backward(&mut self, loss: NodeId, store: &ParameterStore) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::State("backward called twice on a consumed tape".into()));
        }
        if self.len_of(loss) != 1 {
            return Err(Error::dimension("backward loss", 1, self.len_of(loss)));
        }
        if !self.scalar(loss).is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        self.consumed = true;

        let mut grads = vec![0.0f64; self.vals.len()];
        let seed = self.nodes[loss.0 as usize].out;
        grads[seed.off] = 1.0;

        let mut out = Gradients::zeros_like(store);
        for idx in (0..=loss.0 as usize).rev() {
            let node = &self.nodes[idx];
            let g_span = node.out;
            if grads[g_span.off..g_span.off + g_span.len].iter().all(|&g| g == 0.0) {
                continue;
            }
            self.backward_node(idx, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn backward_node(&self, idx: usize, grads: &mut [f64], param_grads: &mut Gradients) {
        let node = &self.nodes[idx];
        let out = node.out;
        match &node.op {
            Op::Const => {}
            Op::Param { slot } => {
                let dst = &mut param_grads.by_slot[*slot];
                for i in 0..out.len {
                    dst[i] += grads[out.off + i];
                }
            }
            Op::Dense { x, w, b, act, pre } => {
                let xs = self.nodes[x.0 as usize].out;
                let ws = self.nodes[w.0 as usize].out;
                let bs = self.nodes[b.0 as usize].out;
                let n_in = xs.len;
                for i in 0..out.len {
                    let g = grads[out.off + i];
                    if g == 0.0 {
                        continue;
                    }
                    let dp = g * act.derivative(self.vals[pre.off + i], self.vals[out.off + i]);
                    if dp == 0.0 {
                        continue;
                    }
                    grads[bs.off + i] += dp;
                    let row = ws.off + i * n_in;
                    for j in 0..n_in {
                        grads[row + j] += dp * self.vals[xs.off + j];
                        grads[xs.off + j] += dp * self.vals[row + j];
                    }
                }
            }
            Op::ModDense {
                x,
                w,
                ws,
                wb,
                z,
                act,
                aux,
            } => {
                let xs = self.nodes[x.0 as usize].out;
                let wsp = self.nodes[w.0 as usize].out;
                let wss = self.nodes[ws.0 as usize].out;
                let wbs = self.nodes[wb.0 as usize].out;
                let zs = self.nodes[z.0 as usize].out;
                let n_in = xs.len;
                let k = zs.len;
                let n_out = out.len;
                for i in 0..n_out {
                    let g = grads[out.off + i];
                    if g == 0.0 {
                        continue;
                    }
                    let raw = self.vals[aux.off + i];
                    let scale = self.vals[aux.off + n_out + i];
                    let pre = self.vals[aux.off + 3 * n_out + i];
                    let dp = g * act.derivative(pre, self.vals[out.off + i]);
                    if dp == 0.0 {
                        continue;
                    }
                    let ds = dp * raw;
                    let du = dp * scale;
                    let wrow = wsp.off + i * n_in;
                    for j in 0..n_in {
                        grads[wrow + j] += du * self.vals[xs.off + j];
                        grads[xs.off + j] += du * self.vals[wrow + j];
                    }
                    let srow = wss.off + i * k;
                    let brow = wbs.off + i * k;
                    for j in 0..k {
                        let zv = self.vals[zs.off + j];
                        grads[srow + j] += ds * zv;
                        grads[brow + j] += dp * zv;
                        grads[zs.off + j] += ds * self.vals[srow + j] + dp * self.vals[brow + j];
                    }
                }
            }
            Op::GruStep { x, h_prev, p, gates } => {
                self.backward_gru(*x, *h_prev, *p, *gates, out, grads);
            }
            Op::SoftplusShift { x } => {
                let xs = self.nodes[x.0 as usize].out;
                for i in 0..out.len {
                    grads[xs.off + i] += grads[out.off + i] * kernels::sigmoid(self.vals[xs.off + i]);
                }
            }
            Op::Slice { x, start } => {
                let xs = self.nodes[x.0 as usize].out;
                for i in 0..out.len {
                    grads[xs.off + start + i] += grads[out.off + i];
                }
            }
            Op::GaussLogLik { mu, sigma, action } => {
                let g = grads[out.off];
                let ms = self.nodes[mu.0 as usize].out;
                let ss = self.nodes[sigma.0 as usize].out;
                for i in 0..action.len {
                    let s = self.vals[ss.off + i];
                    let d = self.vals[action.off + i] - self.vals[ms.off + i];
                    grads[ms.off + i] += g * d / (s * s);
                    grads[ss.off + i] += g * (d * d / (s * s * s) - 1.0 / s);
                }
            }
            Op::GaussKl { mu_q, sigma_q, reference } => {
                let g = grads[out.off];
                let ms = self.nodes[mu_q.0 as usize].out;
                let ss = self.nodes[sigma_q.0 as usize].out;
                let m = ms.len;
                for i in 0..m {
                    let mp = self.vals[reference.off + i];
                    let sp = self.vals[reference.off + m + i];
                    let sq = self.vals[ss.off + i];
                    let dm = self.vals[ms.off + i] - mp;
                    grads[ms.off + i] += g * dm / (sq * sq);
                    grads[ss.off + i] += g * (1.0 / sq - (sp * sp + dm * dm) / (sq * sq * sq));
                }
            }
            Op::RatioAdv { ln_pi, .. } => {
                let ls = self.nodes[ln_pi.0 as usize].out;
                grads[ls.off] += grads[out.off] * self.vals[out.off];
            }
            Op::SqErr { pred, target } => {
                let ps = self.nodes[pred.0 as usize].out;
                grads[ps.off] += grads[out.off] * 2.0 * (self.vals[ps.off] - target);
            }
            Op::Sum { ids } => {
                let g = grads[out.off];
                for id in &self.list_ids[ids.0..ids.0 + ids.1] {
                    let s = self.nodes[id.0 as usize].out;
                    grads[s.off] += g;
                }
            }
            Op::LinComb { ids } => {
                let g = grads[out.off];
                for (id, c) in self.list_ids[ids.0..ids.0 + ids.1]
                    .iter()
                    .zip(&self.list_coefs[ids.0..ids.0 + ids.1])
                {
                    let s = self.nodes[id.0 as usize].out;
                    grads[s.off] += g * c;
                }
            }
            Op::HingeSq { x, knee } => {
                let xs = self.nodes[x.0 as usize].out;
                let e = (self.vals[xs.off] - knee).max(0.0);
                grads[xs.off] += grads[out.off] * 2.0 * e;
            }
            Op::Scale { x, c } => {
                let xs = self.nodes[x.0 as usize].out;
                for i in 0..out.len {
                    grads[xs.off + i] += grads[out.off + i] * c;
                }
            }
        }
    }

    fn backward_gru(
        &self,
        x: NodeId,
        h_prev: NodeId,
        p: GruParamIds,
        gates: Span,
        out: Span,
        grads: &mut [f64],
    ) {
        let xs = self.nodes[x.0 as usize].out;
        let hs = self.nodes[h_prev.0 as usize].out;
        let h = hs.len;
        let n_in = xs.len;
        let spans = GruSpans::collect(self, x, h_prev, p);

        // Adjoints of the three pre-activations.
        let mut daz = vec![0.0; h];
        let mut dar = vec![0.0; h];
        let mut dac = vec![0.0; h];
        let mut dgh = vec![0.0; h];

        for i in 0..h {
            let g = grads[out.off + i];
            let zg = self.vals[gates.off + i];
            let cand = self.vals[gates.off + 2 * h + i];
            let hv = self.vals[hs.off + i];
            let dz = g * (cand - hv);
            let dc = g * zg;
            grads[hs.off + i] += g * (1.0 - zg);
            daz[i] = dz * zg * (1.0 - zg);
            dac[i] = dc * (1.0 - cand * cand);
        }
        // Candidate term: ac = Wc x + Uc (r (.) h) + bc.
        for (i, &d) in dac.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grads[spans.bc.off + i] += d;
            let wrow = spans.wc.off + i * n_in;
            for j in 0..n_in {
                grads[wrow + j] += d * self.vals[xs.off + j];
                grads[xs.off + j] += d * self.vals[wrow + j];
            }
            let urow = spans.uc.off + i * h;
            for j in 0..h {
                let ghj = self.vals[gates.off + h + j] * self.vals[hs.off + j];
                grads[urow + j] += d * ghj;
                dgh[j] += d * self.vals[urow + j];
            }
        }
        for i in 0..h {
            let r = self.vals[gates.off + h + i];
            let dr = dgh[i] * self.vals[hs.off + i];
            grads[hs.off + i] += dgh[i] * r;
            dar[i] = dr * r * (1.0 - r);
        }
        // Gate terms: az = Wz x + Uz h + bz and likewise for the reset gate.
        for (d, (wspan, uspan, bspan)) in [
            (&daz, (spans.wz, spans.uz, spans.bz)),
            (&dar, (spans.wr, spans.ur, spans.br)),
        ] {
            for (i, &di) in d.iter().enumerate() {
                if di == 0.0 {
                    continue;
                }
                grads[bspan.off + i] += di;
                let wrow = wspan.off + i * n_in;
                for j in 0..n_in {
                    grads[wrow + j] += di * self.vals[xs.off + j];
                    grads[xs.off + j] += di * self.vals[wrow + j];
                }
                let urow = uspan.off + i * h;
                for j in 0..h {
                    grads[urow + j] += di * self.vals[hs.off + j];
                    grads[hs.off + j] += di * self.vals[urow + j];
                }
            }
        }
    }
}

/// Output spans of a GRU step's operands, gathered once per call.
struct GruSpans {
    x: Span,
    h: Span,
    wz: Span,
    uz: Span,
    bz: Span,
    wr: Span,
    ur: Span,
    br: Span,
    wc: Span,
    uc: Span,
    bc: Span,
}

impl GruSpans {
    fn collect(tape: &Tape, x: NodeId, h_prev: NodeId, p: GruParamIds) -> Self {
        let s = |id: NodeId| tape.nodes[id.0 as usize].out;
        GruSpans {
            x: s(x),
            h: s(h_prev),
            wz: s(p.wz),
            uz: s(p.uz),
            bz: s(p.bz),
            wr: s(p.wr),
            ur: s(p.ur),
            br: s(p.br),
            wc: s(p.wc),
            uc: s(p.uc),
            bc: s(p.bc),
        }
    }
}

/// Convenience wrapper: evaluate `no-grad` GRU kernels against a store, used
/// by tests to compare tape and kernel paths.
pub fn gru_weights_from_store<'a>(store: &'a ParameterStore, prefix: &str) -> Result<GruWeights<'a>> {
    Ok(GruWeights {
        wz: &store.by_name(&format!("{prefix}.wz"))?.data,
        uz: &store.by_name(&format!("{prefix}.uz"))?.data,
        bz: &store.by_name(&format!("{prefix}.bz"))?.data,
        wr: &store.by_name(&format!("{prefix}.wr"))?.data,
        ur: &store.by_name(&format!("{prefix}.ur"))?.data,
        br: &store.by_name(&format!("{prefix}.br"))?.data,
        wc: &store.by_name(&format!("{prefix}.wc"))?.data,
        uc: &store.by_name(&format!("{prefix}.uc"))?.data,
        bc: &store.by_name(&format!("{prefix}.bc"))?.data,
    })
}

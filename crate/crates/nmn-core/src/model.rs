//! NMN and baseline-RNN actor/critic networks.
//!
//! Both variants share a recurrent trunk over the interaction feedback. They
//! differ in how the trunk's output reaches the action:
//!
//! * **RNN**: the trunk consumes `[x_t, a_{t-1}, r_{t-1}]` and feeds an MLP
//!   head that emits the output directly.
//! * **NMN**: the trunk consumes only the feedback triple
//!   `[x_{t-1}, a_{t-1}, r_{t-1}]` and emits the neuromodulatory signal `z`;
//!   a separate feed-forward main network consumes `x_t`, with every neuron
//!   (output layer included) using the modulated activation
//!   `sigma(z'ws * x + z'wb)`. One `z` is shared by all modulated neurons of
//!   a step, so the extra parameter count is `2k` per neuron.
//!
//! Actor heads emit `[mu | sigma_raw]` per action dimension with
//! `sigma = softplus(sigma_raw) + floor`; critic heads emit a single value.
//! Actor and critic are always two independent models — no parameter is
//! shared between them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian::{ActionBounds, GaussianPolicyOutput};
use crate::kernels::{self, Activation, GruScratch, GruWeights};
use crate::store::ParameterStore;
use crate::tape::{GruParamIds, NodeId, Tape};

/// The three benchmark task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    B1,
    B2,
    B3,
}

impl Benchmark {
    pub fn obs_dim(self) -> usize {
        match self {
            Benchmark::B1 => 1,
            Benchmark::B2 => 2,
            Benchmark::B3 => 4,
        }
    }

    pub fn action_dim(self) -> usize {
        1
    }

    pub fn action_bounds(self) -> Vec<ActionBounds> {
        match self {
            Benchmark::B1 => vec![ActionBounds::symmetric(20.0)],
            Benchmark::B2 | Benchmark::B3 => vec![ActionBounds::UNBOUNDED],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "b1" | "1" => Ok(Benchmark::B1),
            "b2" | "2" => Ok(Benchmark::B2),
            "b3" | "3" => Ok(Benchmark::B3),
            other => Err(Error::Config(format!("unknown benchmark: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Nmn,
    Rnn,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nmn" => Ok(Variant::Nmn),
            "rnn" => Ok(Variant::Rnn),
            other => Err(Error::Config(format!("unknown variant: {other}"))),
        }
    }
}

/// Which output the network produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Policy,
    Value,
}

/// Main-network activation family. `Default` follows the per-benchmark
/// architecture tables (sReLU for benchmark 1, ReLU for benchmarks 2/3);
/// the other two force the family everywhere for the robustness studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationFamily {
    Default,
    SRelu,
    Sigmoid,
}

/// Architecture size preset. `Full` is the per-benchmark reference
/// architecture; `Compact` is a reduced variant with the same wiring for
/// desk-scale experiments on the larger benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchPreset {
    Full,
    Compact,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub benchmark: Benchmark,
    pub variant: Variant,
    pub head: Head,
    pub activation_family: ActivationFamily,
    /// Number of main-network hidden layers (0, 1 or 4 in the robustness
    /// study); `None` keeps the per-benchmark default.
    pub depth_override: Option<usize>,
    pub preset: ArchPreset,
    /// Additive floor keeping sigma strictly positive.
    pub sigma_floor: f64,
}

impl ModelConfig {
    pub fn new(benchmark: Benchmark, variant: Variant, head: Head) -> Self {
        ModelConfig {
            benchmark,
            variant,
            head,
            activation_family: ActivationFamily::Default,
            depth_override: None,
            preset: ArchPreset::Full,
            sigma_floor: 1e-4,
        }
    }
}

/// Concrete layer dimensions after resolving config against the benchmark.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ResolvedArch {
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Input width of the recurrent trunk (`obs + action + reward`).
    pub trunk_in: usize,
    pub gru: Vec<usize>,
    /// Width of the dense layer after the trunk; for the NMN this is the
    /// signal length `k`.
    pub feedback_out: usize,
    pub main_hidden: Vec<usize>,
    pub main_act: Activation,
    pub out_dim: usize,
}

fn resolve_arch(cfg: &ModelConfig) -> ResolvedArch {
    let obs_dim = cfg.benchmark.obs_dim();
    let action_dim = cfg.benchmark.action_dim();
    let (gru, feedback_out, default_hidden, default_act): (Vec<usize>, usize, Vec<usize>, Activation) =
        match (cfg.benchmark, cfg.preset) {
            (Benchmark::B1, ArchPreset::Full) => (vec![50], 20, vec![10], Activation::SRelu),
            (Benchmark::B2 | Benchmark::B3, ArchPreset::Full) => {
                (vec![100, 75], 45, vec![30, 10], Activation::Relu)
            }
            (Benchmark::B1, ArchPreset::Compact) => (vec![24], 12, vec![8], Activation::SRelu),
            (Benchmark::B2 | Benchmark::B3, ArchPreset::Compact) => {
                (vec![32], 16, vec![16, 8], Activation::Relu)
            }
        };
    let main_act = match cfg.activation_family {
        ActivationFamily::Default => default_act,
        ActivationFamily::SRelu => Activation::SRelu,
        ActivationFamily::Sigmoid => Activation::Sigmoid,
    };
    let main_hidden = match cfg.depth_override {
        None => default_hidden,
        Some(depth) => vec![default_hidden.first().copied().unwrap_or(10); depth],
    };
    let out_dim = match cfg.head {
        Head::Policy => 2 * action_dim,
        Head::Value => 1,
    };
    ResolvedArch {
        obs_dim,
        action_dim,
        trunk_in: obs_dim + action_dim + 1,
        gru,
        feedback_out,
        main_hidden,
        main_act,
        out_dim,
    }
}

struct GruSlots {
    wz: usize,
    uz: usize,
    bz: usize,
    wr: usize,
    ur: usize,
    br: usize,
    wc: usize,
    uc: usize,
    bc: usize,
}

struct DenseSlots {
    w: usize,
    b: usize,
}

struct ModSlots {
    w: usize,
    ws: usize,
    wb: usize,
}

enum HeadSlots {
    Rnn { layers: Vec<DenseSlots> },
    Nmn { layers: Vec<ModSlots> },
}

/// A wired network plus its parameter store.
pub struct Model {
    pub config: ModelConfig,
    pub arch: ResolvedArch,
    store: ParameterStore,
    gru_slots: Vec<GruSlots>,
    fb: DenseSlots,
    head: HeadSlots,
}

/// Per-episode recurrent state: one hidden vector per GRU layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RecState {
    pub h: Vec<Vec<f64>>,
}

/// Reusable forward-pass buffers.
pub struct Scratch {
    trunk_in: Vec<f64>,
    gru: Vec<GruScratch>,
    h_next: Vec<Vec<f64>>,
    fb_pre: Vec<f64>,
    fb_out: Vec<f64>,
    stage_a: Vec<f64>,
    stage_b: Vec<f64>,
    raw: Vec<f64>,
    scale: Vec<f64>,
    offset: Vec<f64>,
    pre: Vec<f64>,
}

/// Everything one step of a network emits.
#[derive(Debug, Clone)]
pub struct StepOut {
    /// Raw head output: `[mu | sigma_raw]` for actors, `[value]` for critics.
    pub head: Vec<f64>,
    /// Neuromodulatory signal (NMN only).
    pub z: Option<Vec<f64>>,
    /// Per-neuron effective scales `z'ws[i]` of the first modulated hidden
    /// layer (NMN only); used by the analysis tooling.
    pub first_layer_scale: Option<Vec<f64>>,
    pub first_layer_offset: Option<Vec<f64>>,
}

impl Model {
    /// Builds the wired network for `config`, drawing initial weights from
    /// `rng` (uniform Xavier for weight matrices, zeros for biases and
    /// modulation offsets).
    pub fn build(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Model> {
        let arch = resolve_arch(&config);
        let mut store = ParameterStore::new();

        let xavier = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| -> Vec<f64> {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            (0..rows * cols).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect()
        };

        let mut gru_slots = Vec::new();
        let mut in_dim = arch.trunk_in;
        for (l, &h) in arch.gru.iter().enumerate() {
            let p = format!("gru{l}");
            let mat = |store: &mut ParameterStore, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize| {
                store.insert(&format!("{p}.{name}"), vec![rows, cols], xavier(rng, rows, cols))
            };
            let wz = mat(&mut store, rng, "wz", h, in_dim)?;
            let uz = mat(&mut store, rng, "uz", h, h)?;
            let bz = store.insert(&format!("{p}.bz"), vec![h], vec![0.0; h])?;
            let wr = mat(&mut store, rng, "wr", h, in_dim)?;
            let ur = mat(&mut store, rng, "ur", h, h)?;
            let br = store.insert(&format!("{p}.br"), vec![h], vec![0.0; h])?;
            let wc = mat(&mut store, rng, "wc", h, in_dim)?;
            let uc = mat(&mut store, rng, "uc", h, h)?;
            let bc = store.insert(&format!("{p}.bc"), vec![h], vec![0.0; h])?;
            gru_slots.push(GruSlots { wz, uz, bz, wr, ur, br, wc, uc, bc });
            in_dim = h;
        }

        let fb_w = store.insert(
            "fb.w",
            vec![arch.feedback_out, in_dim],
            xavier(rng, arch.feedback_out, in_dim),
        )?;
        let fb_b = store.insert("fb.b", vec![arch.feedback_out], vec![0.0; arch.feedback_out])?;
        let fb = DenseSlots { w: fb_w, b: fb_b };

        let head = match config.variant {
            Variant::Rnn => {
                let mut layers = Vec::new();
                let mut d = arch.feedback_out;
                for (j, &n) in arch.main_hidden.iter().chain(std::iter::once(&arch.out_dim)).enumerate() {
                    let name = if j == arch.main_hidden.len() { "out".to_string() } else { format!("head{j}") };
                    let w = store.insert(&format!("{name}.w"), vec![n, d], xavier(rng, n, d))?;
                    let b = store.insert(&format!("{name}.b"), vec![n], vec![0.0; n])?;
                    layers.push(DenseSlots { w, b });
                    d = n;
                }
                HeadSlots::Rnn { layers }
            }
            Variant::Nmn => {
                let k = arch.feedback_out;
                let mut layers = Vec::new();
                let mut d = arch.obs_dim;
                for (j, &n) in arch.main_hidden.iter().chain(std::iter::once(&arch.out_dim)).enumerate() {
                    let name = if j == arch.main_hidden.len() { "out".to_string() } else { format!("mod{j}") };
                    let w = store.insert(&format!("{name}.w"), vec![n, d], xavier(rng, n, d))?;
                    // The scale vectors act as weights onto z; the offset
                    // vectors start at zero like biases.
                    let ws = store.insert(&format!("{name}.ws"), vec![n, k], {
                        let bound = (6.0 / (k + 1) as f64).sqrt();
                        (0..n * k).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect()
                    })?;
                    let wb = store.insert(&format!("{name}.wb"), vec![n, k], vec![0.0; n * k])?;
                    layers.push(ModSlots { w, ws, wb });
                    d = n;
                }
                HeadSlots::Nmn { layers }
            }
        };

        Ok(Model {
            config,
            arch,
            store,
            gru_slots,
            fb,
            head,
        })
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    /// Restores parameter values (and moments) from a serialised store.
    pub fn load_store(&mut self, mut store: ParameterStore) -> Result<()> {
        store.rebuild_index();
        if store.len() != self.store.len() {
            return Err(Error::dimension("checkpoint entries", self.store.len(), store.len()));
        }
        for slot in 0..store.len() {
            let (have, want) = (store.entry(slot), self.store.entry(slot));
            if have.name != want.name || have.shape != want.shape {
                return Err(Error::Config(format!(
                    "checkpoint entry {} does not match architecture entry {}",
                    have.name, want.name
                )));
            }
        }
        self.store = store;
        Ok(())
    }

    /// Signal length `k` (NMN only).
    pub fn signal_len(&self) -> Option<usize> {
        match self.config.variant {
            Variant::Nmn => Some(self.arch.feedback_out),
            Variant::Rnn => None,
        }
    }

    /// Total trainable scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Scalar parameters introduced by the modulation (`2k` per main-network
    /// neuron); zero for the RNN variant.
    pub fn modulation_parameter_count(&self) -> usize {
        match &self.head {
            HeadSlots::Rnn { .. } => 0,
            HeadSlots::Nmn { layers } => layers
                .iter()
                .map(|m| self.store.entry(m.ws).len() + self.store.entry(m.wb).len())
                .sum(),
        }
    }

    /// Number of neurons in the main network (hidden layers plus output).
    pub fn main_neuron_count(&self) -> usize {
        self.arch.main_hidden.iter().sum::<usize>() + self.arch.out_dim
    }

    pub fn initial_state(&self) -> RecState {
        RecState {
            h: self.arch.gru.iter().map(|&h| vec![0.0; h]).collect(),
        }
    }

    pub fn scratch(&self) -> Scratch {
        let max_main = self
            .arch
            .main_hidden
            .iter()
            .chain(std::iter::once(&self.arch.out_dim))
            .chain(std::iter::once(&self.arch.feedback_out))
            .copied()
            .max()
            .unwrap_or(1);
        Scratch {
            trunk_in: vec![0.0; self.arch.trunk_in],
            gru: self.arch.gru.iter().map(|&h| GruScratch::with_dim(h)).collect(),
            h_next: self.arch.gru.iter().map(|&h| vec![0.0; h]).collect(),
            fb_pre: vec![0.0; self.arch.feedback_out],
            fb_out: vec![0.0; self.arch.feedback_out],
            stage_a: vec![0.0; max_main.max(self.arch.obs_dim)],
            stage_b: vec![0.0; max_main.max(self.arch.obs_dim)],
            raw: vec![0.0; max_main],
            scale: vec![0.0; max_main],
            offset: vec![0.0; max_main],
            pre: vec![0.0; max_main],
        }
    }

    fn gru_weights(&self, l: usize) -> GruWeights<'_> {
        let s = &self.gru_slots[l];
        GruWeights {
            wz: &self.store.entry(s.wz).data,
            uz: &self.store.entry(s.uz).data,
            bz: &self.store.entry(s.bz).data,
            wr: &self.store.entry(s.wr).data,
            ur: &self.store.entry(s.ur).data,
            br: &self.store.entry(s.br).data,
            wc: &self.store.entry(s.wc).data,
            uc: &self.store.entry(s.uc).data,
            bc: &self.store.entry(s.bc).data,
        }
    }

    fn trunk_input(&self, out: &mut [f64], prev_obs: &[f64], obs: &[f64], prev_action: &[f64], prev_reward: f64) {
        // RNN trunks see the current observation, NMN trunks the previous one.
        let first = match self.config.variant {
            Variant::Rnn => obs,
            Variant::Nmn => prev_obs,
        };
        out[..first.len()].copy_from_slice(first);
        out[first.len()..first.len() + prev_action.len()].copy_from_slice(prev_action);
        out[first.len() + prev_action.len()] = prev_reward;
    }

    /// Advances the network by one step without recording gradients.
    ///
    /// At `t = 0` pass zeros for the previous observation/action/reward.
    /// `z_override`, when set on an NMN, replaces the emitted signal while
    /// the recurrent trunk keeps updating its state.
    pub fn step(
        &self,
        prev_obs: &[f64],
        prev_action: &[f64],
        prev_reward: f64,
        obs: &[f64],
        state: &mut RecState,
        ws: &mut Scratch,
        z_override: Option<&[f64]>,
    ) -> Result<StepOut> {
        if obs.len() != self.arch.obs_dim {
            return Err(Error::dimension("observation", self.arch.obs_dim, obs.len()));
        }
        if z_override.is_some() && self.config.variant == Variant::Rnn {
            return Err(Error::Variant("z override is only defined for the NMN variant".into()));
        }
        self.trunk_input(&mut ws.trunk_in, prev_obs, obs, prev_action, prev_reward);

        let mut x: &[f64] = &ws.trunk_in;
        for l in 0..self.arch.gru.len() {
            let (h_prev, h_next, scratch) = (&state.h[l], &mut ws.h_next[l], &mut ws.gru[l]);
            kernels::gru_step_into(self.gru_weights(l), x, h_prev, scratch, h_next);
            state.h[l].copy_from_slice(h_next);
            x = &state.h[l];
        }
        kernels::dense_into(
            &self.store.entry(self.fb.w).data,
            &self.store.entry(self.fb.b).data,
            x,
            Activation::Relu,
            &mut ws.fb_pre,
            &mut ws.fb_out,
        );

        match &self.head {
            HeadSlots::Rnn { layers } => {
                ws.stage_a[..self.arch.feedback_out].copy_from_slice(&ws.fb_out);
                let mut d = self.arch.feedback_out;
                for (j, slots) in layers.iter().enumerate() {
                    let n = self.store.entry(slots.b).len();
                    let act = if j == layers.len() - 1 { Activation::Identity } else { self.arch.main_act };
                    let (src, dst) = (&ws.stage_a[..d], &mut ws.stage_b[..n]);
                    kernels::dense_into(
                        &self.store.entry(slots.w).data,
                        &self.store.entry(slots.b).data,
                        src,
                        act,
                        &mut ws.pre[..n],
                        dst,
                    );
                    ws.stage_a[..n].copy_from_slice(&ws.stage_b[..n]);
                    d = n;
                }
                let head = ws.stage_a[..d].to_vec();
                self.check_finite(&head)?;
                Ok(StepOut { head, z: None, first_layer_scale: None, first_layer_offset: None })
            }
            HeadSlots::Nmn { layers } => {
                let z: Vec<f64> = match z_override {
                    Some(z) => {
                        if z.len() != self.arch.feedback_out {
                            return Err(Error::dimension("z override", self.arch.feedback_out, z.len()));
                        }
                        z.to_vec()
                    }
                    None => ws.fb_out.clone(),
                };
                let mut first_scale = None;
                let mut first_offset = None;
                ws.stage_a[..self.arch.obs_dim].copy_from_slice(obs);
                let mut d = self.arch.obs_dim;
                for (j, slots) in layers.iter().enumerate() {
                    let n = self.store.entry(slots.w).shape[0];
                    let act = if j == layers.len() - 1 { Activation::Identity } else { self.arch.main_act };
                    {
                        let (src, dst) = (&ws.stage_a[..d], &mut ws.stage_b[..n]);
                        kernels::mod_dense_into(
                            &self.store.entry(slots.w).data,
                            &self.store.entry(slots.ws).data,
                            &self.store.entry(slots.wb).data,
                            &z,
                            src,
                            act,
                            &mut ws.raw[..n],
                            &mut ws.scale[..n],
                            &mut ws.offset[..n],
                            &mut ws.pre[..n],
                            dst,
                        );
                    }
                    if j == 0 {
                        first_scale = Some(ws.scale[..n].to_vec());
                        first_offset = Some(ws.offset[..n].to_vec());
                    }
                    ws.stage_a[..n].copy_from_slice(&ws.stage_b[..n]);
                    d = n;
                }
                let head = ws.stage_a[..d].to_vec();
                self.check_finite(&head)?;
                Ok(StepOut {
                    head,
                    z: Some(z),
                    first_layer_scale: first_scale,
                    first_layer_offset: first_offset,
                })
            }
        }
    }

    fn check_finite(&self, head: &[f64]) -> Result<()> {
        if head.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{} output layer",
                match self.config.head {
                    Head::Policy => "actor",
                    Head::Value => "critic",
                }
            )));
        }
        Ok(())
    }

    /// Interprets an actor head output as a Gaussian policy.
    pub fn policy_from_head(&self, head: &[f64]) -> Result<GaussianPolicyOutput> {
        let m = self.arch.action_dim;
        debug_assert_eq!(head.len(), 2 * m);
        let mu = head[..m].to_vec();
        let sigma = head[m..].iter().map(|&s| kernels::softplus(s) + self.config.sigma_floor).collect();
        GaussianPolicyOutput::new(mu, sigma)
    }

    /// Creates the parameter nodes of this model on a tape.
    pub fn tape_params(&self, tape: &mut Tape) -> TapeParams {
        let gru = self
            .gru_slots
            .iter()
            .map(|s| GruParamIds {
                wz: tape.param(&self.store, s.wz),
                uz: tape.param(&self.store, s.uz),
                bz: tape.param(&self.store, s.bz),
                wr: tape.param(&self.store, s.wr),
                ur: tape.param(&self.store, s.ur),
                br: tape.param(&self.store, s.br),
                wc: tape.param(&self.store, s.wc),
                uc: tape.param(&self.store, s.uc),
                bc: tape.param(&self.store, s.bc),
            })
            .collect();
        let fb = (tape.param(&self.store, self.fb.w), tape.param(&self.store, self.fb.b));
        let head = match &self.head {
            HeadSlots::Rnn { layers } => TapeHead::Rnn(
                layers
                    .iter()
                    .map(|l| (tape.param(&self.store, l.w), tape.param(&self.store, l.b)))
                    .collect(),
            ),
            HeadSlots::Nmn { layers } => TapeHead::Nmn(
                layers
                    .iter()
                    .map(|l| {
                        (
                            tape.param(&self.store, l.w),
                            tape.param(&self.store, l.ws),
                            tape.param(&self.store, l.wb),
                            self.store.entry(l.w).shape[0],
                        )
                    })
                    .collect(),
            ),
        };
        TapeParams { gru, fb, head }
    }

    /// Records one step on the tape. The recurrent state nodes are advanced
    /// in place; truncation is realised by the caller detaching them at
    /// window boundaries.
    pub fn tape_step(
        &self,
        tape: &mut Tape,
        params: &TapeParams,
        prev_obs: &[f64],
        prev_action: &[f64],
        prev_reward: f64,
        obs: &[f64],
        state: &mut Vec<NodeId>,
        z_override: Option<&[f64]>,
    ) -> Result<TapeStepOut> {
        let mut trunk_in = vec![0.0; self.arch.trunk_in];
        self.trunk_input(&mut trunk_in, prev_obs, obs, prev_action, prev_reward);
        let mut x = tape.constant(&trunk_in);
        for (l, gp) in params.gru.iter().enumerate() {
            let next = tape.gru_step(x, state[l], *gp)?;
            state[l] = next;
            x = next;
        }
        let z_node = tape.dense(x, params.fb.0, params.fb.1, Activation::Relu)?;

        let head = match &params.head {
            TapeHead::Rnn(layers) => {
                let mut y = z_node;
                for (j, (w, b)) in layers.iter().enumerate() {
                    let act = if j == layers.len() - 1 { Activation::Identity } else { self.arch.main_act };
                    y = tape.dense(y, *w, *b, act)?;
                }
                y
            }
            TapeHead::Nmn(layers) => {
                let z_in = match z_override {
                    Some(z) => tape.constant(z),
                    None => z_node,
                };
                let mut y = tape.constant(obs);
                for (j, (w, ws, wb, n)) in layers.iter().enumerate() {
                    let act = if j == layers.len() - 1 { Activation::Identity } else { self.arch.main_act };
                    y = tape.mod_dense(y, *w, *ws, *wb, z_in, *n, act)?;
                }
                y
            }
        };

        match self.config.head {
            Head::Policy => {
                let m = self.arch.action_dim;
                let mu = tape.slice(head, 0, m)?;
                let sigma_raw = tape.slice(head, m, m)?;
                let sigma = tape.softplus_shift(sigma_raw, self.config.sigma_floor);
                Ok(TapeStepOut { head, mu: Some(mu), sigma: Some(sigma), z: z_node })
            }
            Head::Value => Ok(TapeStepOut { head, mu: None, sigma: None, z: z_node }),
        }
    }

    /// Initial recurrent state as constant tape nodes.
    pub fn tape_initial_state(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.arch.gru.iter().map(|&h| tape.constant(&vec![0.0; h])).collect()
    }
}

pub enum TapeHead {
    Rnn(Vec<(NodeId, NodeId)>),
    Nmn(Vec<(NodeId, NodeId, NodeId, usize)>),
}

pub struct TapeParams {
    pub gru: Vec<GruParamIds>,
    pub fb: (NodeId, NodeId),
    pub head: TapeHead,
}

pub struct TapeStepOut {
    pub head: NodeId,
    pub mu: Option<NodeId>,
    pub sigma: Option<NodeId>,
    /// The trunk's emitted signal node (before any override).
    pub z: NodeId,
}

/// The neuromodulated activation `sigma(z'(x ws + wb))` for a single neuron.
///
/// The effective per-neuron scale is `z'ws` and the offset `z'wb`; a zero
/// signal silences the neuron to the constant `sigma(0)`.
pub fn nmn_activation(x: f64, z: &[f64], w_s: &[f64], w_b: &[f64], sigma: Activation) -> Result<f64> {
    if z.len() != w_s.len() || z.len() != w_b.len() {
        return Err(Error::dimension("nmn activation", z.len(), w_s.len().max(w_b.len())));
    }
    Ok(sigma.apply(kernels::dot(z, w_s) * x + kernels::dot(z, w_b)))
}

/// Serialisable model snapshot (architecture config plus parameters).
#[derive(serde::Serialize, serde::Deserialize)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub params: ParameterStore,
}

impl ModelCheckpoint {
    pub fn of(model: &Model) -> Self {
        ModelCheckpoint {
            config: model.config.clone(),
            params: model.store().clone(),
        }
    }

    /// Rebuilds the model; the stored parameters replace the fresh init.
    pub fn restore(self) -> Result<Model> {
        let mut rng = crate::rng::stream_rng(0, 0);
        let mut model = Model::build(self.config, &mut rng)?;
        model.load_store(self.params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn build(benchmark: Benchmark, variant: Variant, head: Head) -> Model {
        let mut rng = stream_rng(42, 0);
        Model::build(ModelConfig::new(benchmark, variant, head), &mut rng).unwrap()
    }

    #[test]
    fn nmn_activation_examples() {
        // k = 1 identity modulation reduces to the plain activation.
        let y = nmn_activation(0.5, &[1.0], &[1.0], &[0.0], Activation::SRelu).unwrap();
        assert_eq!(y, 0.5);
        // A zero signal silences the neuron for any x.
        for x in [-3.0, 0.0, 7.0] {
            let y = nmn_activation(x, &[0.0, 0.0], &[2.0, -1.0], &[0.3, 0.4], Activation::Sigmoid).unwrap();
            assert_eq!(y, 0.5); // sigmoid(0)
        }
        // Hand-evaluated dot products.
        let y = nmn_activation(2.0, &[1.0, -1.0], &[2.0, 1.0], &[0.5, 0.5], Activation::Identity).unwrap();
        assert!((y - 2.0).abs() < 1e-15);
    }

    #[test]
    fn nmn_activation_checks_lengths() {
        assert!(nmn_activation(0.0, &[1.0], &[1.0, 2.0], &[0.0], Activation::Identity).is_err());
    }

    #[test]
    fn bench1_nmn_signal_has_length_20() {
        let m = build(Benchmark::B1, Variant::Nmn, Head::Policy);
        assert_eq!(m.signal_len(), Some(20));
        assert_eq!(m.arch.main_hidden, vec![10]);
    }

    #[test]
    fn bench1_rnn_head_matches_reference_stack() {
        let m = build(Benchmark::B1, Variant::Rnn, Head::Value);
        assert_eq!(m.arch.gru, vec![50]);
        assert_eq!(m.arch.feedback_out, 20);
        assert_eq!(m.arch.main_hidden, vec![10]);
        assert_eq!(m.modulation_parameter_count(), 0);
    }

    #[test]
    fn modulation_parameters_are_2k_per_neuron() {
        for benchmark in [Benchmark::B1, Benchmark::B2, Benchmark::B3] {
            for head in [Head::Policy, Head::Value] {
                let m = build(benchmark, Variant::Nmn, head);
                let k = m.signal_len().unwrap();
                assert_eq!(m.modulation_parameter_count(), 2 * k * m.main_neuron_count());
            }
        }
    }

    #[test]
    fn same_seed_builds_identical_models() {
        let a = build(Benchmark::B1, Variant::Nmn, Head::Policy);
        let b = build(Benchmark::B1, Variant::Nmn, Head::Policy);
        for (ea, eb) in a.store().iter().zip(b.store().iter()) {
            assert_eq!(ea.data, eb.data);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = build(Benchmark::B1, Variant::Nmn, Head::Policy);
        let run = || {
            let mut st = m.initial_state();
            let mut ws = m.scratch();
            let out = m
                .step(&[0.0], &[0.0], 0.0, &[1.25], &mut st, &mut ws, None)
                .unwrap();
            out.head
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
    }

    #[test]
    fn nmn_signal_ignores_current_observation() {
        // z is computed from the feedback triple only (the current
        // observation enters the main network exclusively).
        let m = build(Benchmark::B1, Variant::Nmn, Head::Policy);
        let mut ws = m.scratch();
        let mut s1 = m.initial_state();
        let z1 = m.step(&[0.3], &[1.0], -2.0, &[5.0], &mut s1, &mut ws, None).unwrap().z.unwrap();
        let mut s2 = m.initial_state();
        let z2 = m.step(&[0.3], &[1.0], -2.0, &[-5.0], &mut s2, &mut ws, None).unwrap().z.unwrap();
        assert_eq!(z1, z2);
    }

    #[test]
    fn frozen_z_keeps_scales_constant_but_output_follows_obs() {
        let m = build(Benchmark::B1, Variant::Nmn, Head::Policy);
        let mut ws = m.scratch();
        let mut st = m.initial_state();
        let frozen = m.step(&[0.0], &[0.0], 0.0, &[1.0], &mut st, &mut ws, None).unwrap().z.unwrap();

        let mut outs = Vec::new();
        let mut scales = Vec::new();
        let mut prev_obs = vec![1.0];
        for t in 1..4 {
            let obs = vec![0.1 * t as f64];
            let out = m
                .step(&prev_obs, &[0.5], -1.0, &obs, &mut st, &mut ws, Some(&frozen))
                .unwrap();
            outs.push(out.head.clone());
            scales.push(out.first_layer_scale.unwrap());
            prev_obs = obs;
        }
        assert_ne!(outs[0], outs[1]);
        assert_eq!(scales[0], scales[1]);
        assert_eq!(scales[1], scales[2]);
    }

    #[test]
    fn z_override_on_rnn_is_a_variant_error() {
        let m = build(Benchmark::B1, Variant::Rnn, Head::Policy);
        let mut ws = m.scratch();
        let mut st = m.initial_state();
        let err = m.step(&[0.0], &[0.0], 0.0, &[1.0], &mut st, &mut ws, Some(&[0.0; 20]));
        assert!(matches!(err, Err(Error::Variant(_))));
    }

    #[test]
    fn actor_and_critic_parameters_are_independent() {
        let mut actor = build(Benchmark::B1, Variant::Nmn, Head::Policy);
        let critic = build(Benchmark::B1, Variant::Nmn, Head::Value);
        let mut ws = critic.scratch();
        let mut st = critic.initial_state();
        let before = critic.step(&[0.0], &[0.0], 0.0, &[1.0], &mut st, &mut ws, None).unwrap().head;

        for slot in 0..actor.store().len() {
            for v in actor.store_mut().entry_mut(slot).data.iter_mut() {
                *v += 1.0;
            }
        }
        let mut st = critic.initial_state();
        let after = critic.step(&[0.0], &[0.0], 0.0, &[1.0], &mut st, &mut ws, None).unwrap().head;
        assert_eq!(before, after);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_outputs() {
        let m = build(Benchmark::B2, Variant::Nmn, Head::Policy);
        let json = serde_json::to_string(&ModelCheckpoint::of(&m)).unwrap();
        let restored: ModelCheckpoint = serde_json::from_str(&json).unwrap();
        let r = restored.restore().unwrap();

        let eval = |m: &Model| {
            let mut st = m.initial_state();
            let mut ws = m.scratch();
            m.step(&[0.1, -0.2], &[0.4], -2.0, &[0.5, 0.6], &mut st, &mut ws, None)
                .unwrap()
                .head
        };
        assert_eq!(eval(&m), eval(&r));
    }

    #[test]
    fn depth_override_changes_main_depth() {
        let mut cfg = ModelConfig::new(Benchmark::B1, Variant::Nmn, Head::Policy);
        cfg.depth_override = Some(4);
        let mut rng = stream_rng(1, 0);
        let m = Model::build(cfg, &mut rng).unwrap();
        assert_eq!(m.arch.main_hidden, vec![10, 10, 10, 10]);
    }
}

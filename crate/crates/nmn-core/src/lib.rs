//! Meta-reinforcement-learning workbench built around neuro-modulated
//! networks (NMN) and their recurrent baselines.
//!
//! An NMN splits an agent into two networks: a recurrent *neuromodulatory*
//! network that digests the interaction history `[x_{t-1}, a_{t-1}, r_{t-1}]`
//! into a signal `z`, and a feed-forward *main* network whose activation
//! functions are reparameterised by `z` through
//! `sigma_nmn(x, z) = sigma(z'ws * x + z'wb)`. The baseline replaces the
//! modulation with a plain recurrent stack feeding an MLP.
//!
//! The crate contains everything needed to train and audit such agents:
//!
//! * [`tape`] / [`store`] / [`adam`] — a minimal dense compute kernel with
//!   reverse-mode gradients, truncated BPTT and the Adam optimiser,
//! * [`model`] — the NMN / RNN actor-critic architectures and checkpoints,
//! * [`envs`] — the three benchmark task distributions and episode runner,
//! * [`trainer`] — GAE-based advantage actor-critic with KL-penalised
//!   proximal updates, adaptive penalty weight and a critic replay buffer,
//! * [`oracle`] — the closed-form Bayes-optimal policy for benchmark 1,
//!   used as a correctness anchor,
//! * [`analysis`] — neuromodulation-signal recording and the z-freezing
//!   experiment,
//! * [`runio`] — deterministic run-directory artifacts (CSV / JSONL /
//!   checkpoints).

pub mod adam;
pub mod analysis;
pub mod envs;
pub mod error;
pub mod gaussian;
pub mod kernels;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod runio;
pub mod store;
pub mod tape;
pub mod trainer;

pub use error::{Error, Result};

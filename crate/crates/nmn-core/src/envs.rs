//! The three benchmark task distributions and their per-task MDP dynamics.
//!
//! A task is a latent parameter vector `alpha` drawn at the start of every
//! episode; the agent only ever sees observations and rewards, so it must
//! identify the task within the episode.
//!
//! * **Benchmark 1**: 1-D target hunting. The target sits at `p` in
//!   `[-5 - alpha, 5 - alpha]`, the agent observes the biased position
//!   `x = p + alpha` with `alpha ~ U[-10, 10]` and earns 10 for actions
//!   within 1 of `p` (which re-samples the target), `-|a - p|` otherwise.
//! * **Benchmark 2**: 2-D navigation under wind. The target sits at
//!   `(alpha1, alpha2)`; each step moves the agent by its chosen direction
//!   plus a wind direction `alpha3 + n`, `n ~ U[-pi/4, pi/4]`, a quarter
//!   unit each; coordinates wrap on the `[-2, 2]` torus. Standing in the
//!   target (checked before moving) pays 100 and teleports the agent,
//!   anything else pays -2.
//! * **Benchmark 3**: like benchmark 2 without wind but with two targets;
//!   `alpha5` picks which one pays +100 and which -50. Reaching either
//!   teleports the agent; every other step pays 0.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Benchmark;

/// Target radius shared by benchmarks 2 and 3.
const TARGET_RADIUS: f64 = 0.4;

/// Behavioural switches for documented ambiguities in the benchmark
/// definitions. Defaults follow the corrected readings.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct EnvParams {
    /// Benchmark 2 per-step miss reward (-2 by default; one description
    /// uses -0.2).
    pub bench2_miss_reward: f64,
    /// Draw benchmark-2 initial coordinates from `U[-1.5pi, 1.5pi]` as
    /// literally printed instead of the in-arena `U[-1.5, 1.5]`.
    pub bench2_literal_init: bool,
    /// Route benchmark-3 rewards as the literal formulas `100 * alpha5` /
    /// `-50 * alpha5` instead of swapping which target is positive.
    pub bench3_literal_routing: bool,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            bench2_miss_reward: -2.0,
            bench2_literal_init: false,
            bench3_literal_routing: false,
        }
    }
}

/// The latent task parameter defining one MDP of the distribution.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskSample {
    pub benchmark: Benchmark,
    /// Length 1 (benchmark 1), 3 (benchmark 2) or 5 (benchmark 3, the last
    /// component in {-1, +1}).
    pub alpha: Vec<f64>,
}

impl TaskSample {
    /// Flips which benchmark-3 target carries the positive reward.
    pub fn switch_references(&mut self) -> Result<()> {
        if self.benchmark != Benchmark::B3 {
            return Err(Error::Config("reference switching exists only on benchmark 3".into()));
        }
        self.alpha[4] = -self.alpha[4];
        Ok(())
    }
}

/// Benchmark-specific internal state plus the observation exposed to the
/// agent.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvState {
    B1 { target: f64 },
    B2 { ux: f64, uy: f64 },
    B3 { ux: f64, uy: f64 },
}

impl EnvState {
    pub fn observation(&self, task: &TaskSample) -> Vec<f64> {
        match self {
            EnvState::B1 { target } => vec![target + task.alpha[0]],
            EnvState::B2 { ux, uy } => vec![task.alpha[0] - ux, task.alpha[1] - uy],
            EnvState::B3 { ux, uy } => vec![
                task.alpha[0] - ux,
                task.alpha[1] - uy,
                task.alpha[2] - ux,
                task.alpha[3] - uy,
            ],
        }
    }
}

/// Draws a task from the benchmark's distribution.
pub fn sample_task(benchmark: Benchmark, rng: &mut ChaCha8Rng) -> TaskSample {
    let alpha = match benchmark {
        Benchmark::B1 => vec![uniform(rng, -10.0, 10.0)],
        Benchmark::B2 => vec![
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -std::f64::consts::PI, std::f64::consts::PI),
        ],
        Benchmark::B3 => {
            let mut a = vec![
                uniform(rng, -1.0, 1.0),
                uniform(rng, -1.0, 1.0),
                uniform(rng, -1.0, 1.0),
                uniform(rng, -1.0, 1.0),
            ];
            a.push(if rng.gen::<bool>() { 1.0 } else { -1.0 });
            a
        }
    };
    TaskSample { benchmark, alpha }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws the initial environment state for a task.
pub fn reset(task: &TaskSample, params: &EnvParams, rng: &mut ChaCha8Rng) -> EnvState {
    match task.benchmark {
        Benchmark::B1 => {
            let a = task.alpha[0];
            EnvState::B1 { target: uniform(rng, -5.0 - a, 5.0 - a) }
        }
        Benchmark::B2 => {
            let half = if params.bench2_literal_init { 1.5 * std::f64::consts::PI } else { 1.5 };
            EnvState::B2 {
                ux: uniform(rng, -half, half),
                uy: uniform(rng, -half, half),
            }
        }
        Benchmark::B3 => EnvState::B3 {
            ux: uniform(rng, -1.5, 1.5),
            uy: uniform(rng, -1.5, 1.5),
        },
    }
}

/// Torus wrap onto `[-2, 2]` (one step of at most 0.5 never needs more than
/// a single correction).
fn wrap(u: f64) -> f64 {
    if u > 2.0 {
        u - 4.0
    } else if u < -2.0 {
        u + 4.0
    } else {
        u
    }
}

/// One benchmark-1 step. A hit (`|a - p| < 1`) pays 10 and re-samples the
/// target; otherwise the target stays and the miss distance is the penalty.
pub fn bench1_step(state: &EnvState, action: f64, task: &TaskSample, rng: &mut ChaCha8Rng) -> (EnvState, f64) {
    let EnvState::B1 { target } = state else {
        panic!("bench1_step on non-benchmark-1 state")
    };
    let a = task.alpha[0];
    if (action - target).abs() < 1.0 {
        (EnvState::B1 { target: uniform(rng, -5.0 - a, 5.0 - a) }, 10.0)
    } else {
        (EnvState::B1 { target: *target }, -(action - target).abs())
    }
}

/// One benchmark-2 step. Membership of the *pre-move* position decides the
/// reward; on a hit the position is re-sampled, otherwise the agent moves by
/// its action plus the wind and wraps on the torus.
pub fn bench2_step(
    state: &EnvState,
    action: f64,
    task: &TaskSample,
    params: &EnvParams,
    rng: &mut ChaCha8Rng,
) -> (EnvState, f64) {
    let EnvState::B2 { ux, uy } = state else {
        panic!("bench2_step on non-benchmark-2 state")
    };
    let (tx, ty) = (task.alpha[0], task.alpha[1]);
    let d2 = (ux - tx) * (ux - tx) + (uy - ty) * (uy - ty);
    if d2 <= TARGET_RADIUS * TARGET_RADIUS {
        let next = EnvState::B2 {
            ux: uniform(rng, -1.5, 1.5),
            uy: uniform(rng, -1.5, 1.5),
        };
        (next, 100.0)
    } else {
        let n = uniform(rng, -std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4);
        let wind = task.alpha[2] + n;
        let next = EnvState::B2 {
            ux: wrap(ux + 0.25 * (action.sin() + wind.sin())),
            uy: wrap(uy + 0.25 * (action.cos() + wind.cos())),
        };
        (next, params.bench2_miss_reward)
    }
}

/// One benchmark-3 step. Standing in either target (pre-move) teleports the
/// agent and pays the target's reward, with `alpha5` choosing which target
/// is the +100 one; ties go to the nearer centre. Otherwise the agent moves
/// by `0.25 * (sin(a pi), cos(a pi))` on the torus for a reward of 0.
pub fn bench3_step(
    state: &EnvState,
    action: f64,
    task: &TaskSample,
    params: &EnvParams,
    rng: &mut ChaCha8Rng,
) -> (EnvState, f64) {
    let EnvState::B3 { ux, uy } = state else {
        panic!("bench3_step on non-benchmark-3 state")
    };
    let d1 = (ux - task.alpha[0]).powi(2) + (uy - task.alpha[1]).powi(2);
    let d2 = (ux - task.alpha[2]).powi(2) + (uy - task.alpha[3]).powi(2);
    let in1 = d1 <= TARGET_RADIUS * TARGET_RADIUS;
    let in2 = d2 <= TARGET_RADIUS * TARGET_RADIUS;
    if in1 || in2 {
        let first = if in1 && in2 { d1 <= d2 } else { in1 };
        let sign = task.alpha[4];
        let reward = if params.bench3_literal_routing {
            if first {
                100.0 * sign
            } else {
                -50.0 * sign
            }
        } else {
            // Swap semantics: one target pays +100 and the other -50, with
            // alpha5 selecting which is which.
            match (first, sign > 0.0) {
                (true, true) | (false, false) => 100.0,
                _ => -50.0,
            }
        };
        let next = EnvState::B3 {
            ux: uniform(rng, -1.5, 1.5),
            uy: uniform(rng, -1.5, 1.5),
        };
        (next, reward)
    } else {
        let ang = action * std::f64::consts::PI;
        let next = EnvState::B3 {
            ux: wrap(ux + 0.25 * ang.sin()),
            uy: wrap(uy + 0.25 * ang.cos()),
        };
        (next, 0.0)
    }
}

/// Dispatches to the benchmark's step function. `action` is the executed
/// (already clipped) action vector.
pub fn env_step(
    state: &EnvState,
    action: &[f64],
    task: &TaskSample,
    params: &EnvParams,
    rng: &mut ChaCha8Rng,
) -> (EnvState, f64) {
    match task.benchmark {
        Benchmark::B1 => bench1_step(state, action[0], task, rng),
        Benchmark::B2 => bench2_step(state, action[0], task, params, rng),
        Benchmark::B3 => bench3_step(state, action[0], task, params, rng),
    }
}

/// What an agent reports for one step of a rollout.
#[derive(Debug, Clone)]
pub struct AgentStep {
    pub action: Vec<f64>,
    /// Unclipped Gaussian draw (equals `action` for deterministic agents).
    pub raw: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub value: f64,
    pub z: Option<Vec<f64>>,
}

/// A policy that can be rolled out by [`run_episodes`].
pub trait RolloutAgent {
    /// Called before every episode; resets recurrent state.
    fn begin_episode(&mut self);

    /// Chooses the action for step `t` given the current observation and the
    /// previous transition.
    fn act(
        &mut self,
        t: usize,
        obs: &[f64],
        prev_obs: &[f64],
        prev_action: &[f64],
        prev_reward: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<AgentStep>;

    /// Value estimate of the final history (after the last transition);
    /// `None` for agents without a critic.
    fn final_value(
        &mut self,
        _obs: &[f64],
        _prev_obs: &[f64],
        _prev_action: &[f64],
        _prev_reward: f64,
    ) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// One episode's trajectory `[x0, a0, r0, x1, ...]` plus auxiliary per-step
/// logs. After `L` steps it holds `L + 1` states and `L` actions/rewards;
/// entries are append-only.
#[derive(Debug, Clone)]
pub struct History {
    pub alpha: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub raws: Vec<Vec<f64>>,
    pub mus: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
    /// Critic values of `h_0 .. h_L` (length `L + 1`) when the agent has a
    /// critic, empty otherwise.
    pub values: Vec<f64>,
    pub zs: Vec<Vec<f64>>,
}

impl History {
    pub fn undiscounted_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Plays `count` episodes of `steps` transitions each. Episode `i` draws its
/// own RNG stream `base_episode + i` from the master seed, so batches can be
/// replayed (or distributed) deterministically.
pub fn run_episodes<A: RolloutAgent>(
    agent: &mut A,
    benchmark: Benchmark,
    params: &EnvParams,
    count: usize,
    steps: usize,
    master_seed: u64,
    base_episode: u64,
    eval_streams: bool,
) -> Result<Vec<History>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let episode = base_episode + i as u64;
        let mut rng = if eval_streams {
            crate::rng::eval_episode_rng(master_seed, episode)
        } else {
            crate::rng::episode_rng(master_seed, episode)
        };
        let h = run_single_episode(agent, benchmark, params, steps, &mut rng)
            .map_err(|e| e.in_episode(episode as usize))?;
        out.push(h);
    }
    Ok(out)
}

fn run_single_episode<A: RolloutAgent>(
    agent: &mut A,
    benchmark: Benchmark,
    params: &EnvParams,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<History> {
    let task = sample_task(benchmark, rng);
    let mut state = reset(&task, params, rng);
    agent.begin_episode();

    let obs_dim = benchmark.obs_dim();
    let act_dim = benchmark.action_dim();
    let mut h = History {
        alpha: task.alpha.clone(),
        states: Vec::with_capacity(steps + 1),
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        raws: Vec::with_capacity(steps),
        mus: Vec::with_capacity(steps),
        sigmas: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps + 1),
        zs: Vec::new(),
    };

    let mut prev_obs = vec![0.0; obs_dim];
    let mut prev_action = vec![0.0; act_dim];
    let mut prev_reward = 0.0;
    let mut obs = state.observation(&task);
    h.states.push(obs.clone());

    for t in 0..steps {
        let step = agent.act(t, &obs, &prev_obs, &prev_action, prev_reward, rng)?;
        h.values.push(step.value);
        let (next_state, reward) = env_step(&state, &step.action, &task, params, rng);
        state = next_state;

        prev_obs = obs;
        obs = state.observation(&task);
        h.states.push(obs.clone());
        h.rewards.push(reward);
        h.raws.push(step.raw);
        h.mus.push(step.mu);
        h.sigmas.push(step.sigma);
        if let Some(z) = step.z {
            h.zs.push(z);
        }
        prev_action = step.action.clone();
        h.actions.push(step.action);
        prev_reward = reward;
    }
    match agent.final_value(&obs, &prev_obs, &prev_action, prev_reward)? {
        Some(v) => h.values.push(v),
        None => h.values.clear(),
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    struct ZeroAgent;
    impl RolloutAgent for ZeroAgent {
        fn begin_episode(&mut self) {}
        fn act(
            &mut self,
            _t: usize,
            _obs: &[f64],
            _prev_obs: &[f64],
            _prev_action: &[f64],
            _prev_reward: f64,
            _rng: &mut ChaCha8Rng,
        ) -> Result<AgentStep> {
            Ok(AgentStep {
                action: vec![0.0],
                raw: vec![0.0],
                mu: vec![0.0],
                sigma: vec![1.0],
                value: 0.0,
                z: None,
            })
        }
    }

    #[test]
    fn bench1_task_distribution_moments() {
        let mut rng = stream_rng(3, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..n {
            let t = sample_task(Benchmark::B1, &mut rng);
            sum += t.alpha[0];
            lo = lo.min(t.alpha[0]);
            hi = hi.max(t.alpha[0]);
        }
        assert!((sum / n as f64).abs() < 0.1);
        assert!(lo >= -10.0 && hi <= 10.0);
    }

    #[test]
    fn bench3_sign_component_is_a_fair_coin() {
        let mut rng = stream_rng(4, 0);
        let n = 100_000;
        let mut plus = 0usize;
        for _ in 0..n {
            let t = sample_task(Benchmark::B3, &mut rng);
            assert!(t.alpha[4] == 1.0 || t.alpha[4] == -1.0);
            if t.alpha[4] == 1.0 {
                plus += 1;
            }
        }
        let freq = plus as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn task_sampling_is_deterministic() {
        let a = sample_task(Benchmark::B2, &mut stream_rng(9, 2));
        let b = sample_task(Benchmark::B2, &mut stream_rng(9, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn bench1_observation_stays_centred() {
        // alpha = 10 puts the target in [-15, -5] and the observation back
        // into [-5, 5].
        let task = TaskSample { benchmark: Benchmark::B1, alpha: vec![10.0] };
        let mut rng = stream_rng(5, 0);
        for _ in 0..1000 {
            let s = reset(&task, &EnvParams::default(), &mut rng);
            let EnvState::B1 { target } = s else { unreachable!() };
            assert!((-15.0..=-5.0).contains(&target));
            let x = s.observation(&task)[0];
            assert!((-5.0..=5.0).contains(&x));
        }
    }

    #[test]
    fn bench1_rewards_follow_the_distance_rule() {
        let task = TaskSample { benchmark: Benchmark::B1, alpha: vec![2.0] };
        let mut rng = stream_rng(6, 0);
        let s = EnvState::B1 { target: 1.5 };
        let (_, r) = bench1_step(&s, 1.5, &task, &mut rng);
        assert_eq!(r, 10.0);
        let (s2, r) = bench1_step(&s, 4.5, &task, &mut rng);
        assert_eq!(r, -3.0);
        assert_eq!(s2, s);
        // Boundary |a - p| = 1 is a miss (strict inequality).
        let (_, r) = bench1_step(&s, 2.5, &task, &mut rng);
        assert_eq!(r, -1.0);
    }

    #[test]
    fn bench2_hit_and_wrap() {
        let params = EnvParams::default();
        let task = TaskSample {
            benchmark: Benchmark::B2,
            alpha: vec![0.3, -0.2, 0.0],
        };
        let mut rng = stream_rng(7, 0);
        // Standing inside the target pays 100 and teleports.
        let (s2, r) = bench2_step(&EnvState::B2 { ux: 0.3, uy: -0.2 }, 1.0, &task, &params, &mut rng);
        assert_eq!(r, 100.0);
        let EnvState::B2 { ux, uy } = s2 else { unreachable!() };
        assert!(ux.abs() <= 1.5 && uy.abs() <= 1.5);

        // Wind aligned with the action doubles the step; a_t = alpha3 = 0
        // moves straight up by 0.25 * (cos 0 + cos n) and the x coordinate
        // wraps when pushed past 2.
        let task_far = TaskSample {
            benchmark: Benchmark::B2,
            alpha: vec![-1.0, -1.0, std::f64::consts::FRAC_PI_2],
        };
        let (s2, r) = bench2_step(
            &EnvState::B2 { ux: 1.95, uy: 0.0 },
            std::f64::consts::FRAC_PI_2,
            &task_far,
            &params,
            &mut rng,
        );
        assert_eq!(r, -2.0);
        let EnvState::B2 { ux, .. } = s2 else { unreachable!() };
        assert!(ux < -1.5, "expected wrap to the opposite edge, got {ux}");
    }

    #[test]
    fn bench2_displacement_formula() {
        // With alpha3 = 0, a = 0 and n forced to ~0 the move is (0, ~0.5).
        let params = EnvParams::default();
        let task = TaskSample { benchmark: Benchmark::B2, alpha: vec![5.0, 5.0, 0.0] };
        let mut best = f64::INFINITY;
        for seed in 0..200 {
            let mut rng = stream_rng(seed, 1);
            let (s2, _) = bench2_step(&EnvState::B2 { ux: 0.0, uy: 0.0 }, 0.0, &task, &params, &mut rng);
            let EnvState::B2 { ux, uy } = s2 else { unreachable!() };
            // n ~ U[-pi/4, pi/4]; displacement = 0.25*(sin0+sin n, cos0+cos n).
            best = best.min((uy - 0.5).abs() + ux.abs());
            assert!(ux.abs() <= 0.25 * (std::f64::consts::FRAC_PI_4).sin() + 1e-12);
            assert!(uy <= 0.5 + 1e-12 && uy >= 0.25 * (1.0 + (std::f64::consts::FRAC_PI_4).cos()) - 1e-12);
        }
        assert!(best < 0.02, "no draw came close to the zero-noise move");
    }

    #[test]
    fn bench3_routing_and_tie_rule() {
        let params = EnvParams::default();
        let mut rng = stream_rng(8, 0);
        // Disjoint targets; agent inside target 1 only.
        let mut task = TaskSample {
            benchmark: Benchmark::B3,
            alpha: vec![0.0, 0.0, 1.5, 1.5, 1.0],
        };
        let (_, r) = bench3_step(&EnvState::B3 { ux: 0.1, uy: 0.0 }, 0.0, &task, &params, &mut rng);
        assert_eq!(r, 100.0);
        task.alpha[4] = -1.0;
        let (_, r) = bench3_step(&EnvState::B3 { ux: 0.1, uy: 0.0 }, 0.0, &task, &params, &mut rng);
        assert_eq!(r, -50.0);

        // Overlapping targets: the nearer centre wins.
        let task = TaskSample {
            benchmark: Benchmark::B3,
            alpha: vec![0.0, 0.0, 0.3, 0.0, 1.0],
        };
        let (_, r) = bench3_step(&EnvState::B3 { ux: 0.25, uy: 0.0 }, 0.0, &task, &params, &mut rng);
        assert_eq!(r, -50.0, "closer to target 2, which pays -50 when alpha5 = +1");

        // Movement: a = 0.5 gives displacement (0.25, 0).
        let task = TaskSample {
            benchmark: Benchmark::B3,
            alpha: vec![1.5, 1.5, -1.5, -1.5, 1.0],
        };
        let (s2, r) = bench3_step(&EnvState::B3 { ux: 0.0, uy: 0.0 }, 0.5, &task, &params, &mut rng);
        assert_eq!(r, 0.0);
        let EnvState::B3 { ux, uy } = s2 else { unreachable!() };
        assert!((ux - 0.25).abs() < 1e-15 && uy.abs() < 1e-15);
    }

    #[test]
    fn bench3_literal_routing_flag() {
        let params = EnvParams {
            bench3_literal_routing: true,
            ..EnvParams::default()
        };
        let mut rng = stream_rng(8, 1);
        let task = TaskSample {
            benchmark: Benchmark::B3,
            alpha: vec![0.0, 0.0, 1.5, 1.5, -1.0],
        };
        let (_, r) = bench3_step(&EnvState::B3 { ux: 0.0, uy: 0.0 }, 0.0, &task, &params, &mut rng);
        assert_eq!(r, -100.0);
    }

    #[test]
    fn episodes_have_exact_shapes_and_replay_identically() {
        let mut agent = ZeroAgent;
        let run = || {
            run_episodes(
                &mut ZeroAgent,
                Benchmark::B1,
                &EnvParams::default(),
                3,
                17,
                99,
                0,
                false,
            )
            .unwrap()
        };
        let hs = run();
        for h in &hs {
            assert_eq!(h.states.len(), 18);
            assert_eq!(h.actions.len(), 17);
            assert_eq!(h.rewards.len(), 17);
            assert!(h.rewards.iter().all(|&r| r <= 10.0));
        }
        let hs2 = run();
        for (a, b) in hs.iter().zip(&hs2) {
            assert_eq!(a.states, b.states);
            assert_eq!(a.rewards, b.rewards);
        }
        // Same master seed, different base index: different tasks.
        let other = run_episodes(&mut agent, Benchmark::B1, &EnvParams::default(), 3, 17, 99, 10, false).unwrap();
        assert_ne!(hs[0].alpha, other[0].alpha);
    }
}

//! Reproducible Monte Carlo for the walk.
//!
//! Replica `i` draws from its own xoshiro256++ stream seeded with
//! [`replica_seed`]`(seed, i)`, and replicas are grouped into fixed blocks of
//! [`BLOCK_REPLICAS`]. Per-block results are combined in block order, so output does
//! not depend on the number of worker threads.

mod first_return;
mod stats;

pub use first_return::{first_return_times, FirstReturnSample, FirstReturnSummary};
pub use stats::{
    chi_square_test, kolmogorov_distance, normal_cdf, summaries_csv, summary_csv_header, CheckpointStats,
    CheckpointSummary, ChiSquareOutcome, REPORTED_ORDERS,
};

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deviations::Normalization;
use crate::error::{ErwError, Result};
use crate::params::{ErwParams, RegimeTag};

/// Replicas per deterministic work unit.
pub const BLOCK_REPLICAS: u64 = 1024;
/// Replicas advanced together by the conditional-law kernel.
const LANES: usize = 8;
/// Longest horizon the replay dynamics accepts by default.
pub const DEFAULT_REPLAY_MEMORY_CAP: u64 = 100_000;

/// Which transition mechanism drives the simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// `P(X_{n+1} = +1 | S_n) = (1 + α S_n/n)/2`; constant memory.
    #[default]
    ConditionalLaw,
    /// Recall a uniformly chosen past step, repeat it with probability `p`, else flip it.
    MemoryReplay,
}

impl Dynamics {
    pub fn as_str(self) -> &'static str {
        match self {
            Dynamics::ConditionalLaw => "conditional_law",
            Dynamics::MemoryReplay => "memory_replay",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub params: ErwParams,
    pub horizon: u64,
    pub replicas: u64,
    pub seed: u64,
    pub dynamics: Dynamics,
    /// Extra times at which positions are recorded; the horizon is always recorded.
    pub checkpoints: Vec<u64>,
    /// Keep every terminal position in replica order.
    pub keep_terminal_samples: bool,
    pub replay_memory_cap: u64,
}

impl SimConfig {
    pub fn new(params: ErwParams, horizon: u64, replicas: u64, seed: u64) -> Self {
        Self {
            params,
            horizon,
            replicas,
            seed,
            dynamics: Dynamics::ConditionalLaw,
            checkpoints: Vec::new(),
            keep_terminal_samples: false,
            replay_memory_cap: DEFAULT_REPLAY_MEMORY_CAP,
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: &[u64]) -> Self {
        self.checkpoints = checkpoints.to_vec();
        self
    }

    pub fn with_dynamics(mut self, dynamics: Dynamics) -> Self {
        self.dynamics = dynamics;
        self
    }

    /// Sorted, deduplicated recording times including the horizon.
    pub fn recording_times(&self) -> Result<Vec<u64>> {
        self.validate()?;
        let mut t = self.checkpoints.clone();
        t.push(self.horizon);
        t.sort_unstable();
        t.dedup();
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(ErwError::Contract("replicas must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(ErwError::Contract("horizon must be at least 1".into()));
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c == 0 || c > self.horizon) {
            return Err(ErwError::Contract(format!("checkpoint {c} lies outside [1, {}]", self.horizon)));
        }
        if self.dynamics == Dynamics::MemoryReplay && self.horizon > self.replay_memory_cap {
            return Err(ErwError::ResourceCap(format!(
                "replay dynamics stores the whole path; horizon {} exceeds the memory cap of {} steps",
                self.horizon, self.replay_memory_cap
            )));
        }
        Ok(())
    }

    fn blocks(&self) -> impl IndexedParallelIterator<Item = (u64, u64)> + '_ {
        let count = self.replicas.div_ceil(BLOCK_REPLICAS) as usize;
        (0..count).into_par_iter().map(move |b| {
            let first = b as u64 * BLOCK_REPLICAS;
            (first, BLOCK_REPLICAS.min(self.replicas - first))
        })
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream seed of replica `index`: `mix64(seed ^ mix64(index + 0x9e3779b97f4a7c15))`.
pub fn replica_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

pub fn replica_rng(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(replica_seed(seed, index))
}

#[inline(always)]
fn uniform(r: u64) -> f64 {
    (r >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Scale used to normalize `S_n`: `sqrt(n/(1-2α))` below the critical point,
/// `sqrt(n log n)` at it (with `1` at `n = 1`), and `n^α` above it.
pub fn normalizing_scale(params: &ErwParams, n: u64) -> f64 {
    let alpha = params.alpha_f64();
    match params.regime() {
        RegimeTag::Diffusive => Normalization::Subcritical.scale(alpha, n).sqrt(),
        RegimeTag::Critical if n == 1 => 1.0,
        RegimeTag::Critical => Normalization::Critical.scale(alpha, n).sqrt(),
        RegimeTag::Superdiffusive => (n as f64).powf(alpha),
    }
}

/// Histograms of `S_n` at each recording time plus optional raw terminal positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunningStats {
    checkpoints: Vec<CheckpointStats>,
    terminal: Option<Vec<i64>>,
}

impl RunningStats {
    pub fn new(times: &[u64], keep_terminal_samples: bool) -> Self {
        Self {
            checkpoints: times.iter().map(|&n| CheckpointStats::new(n)).collect(),
            terminal: keep_terminal_samples.then(Vec::new),
        }
    }

    pub fn count(&self) -> u64 {
        self.checkpoints.last().map_or(0, CheckpointStats::count)
    }

    pub fn checkpoints(&self) -> &[CheckpointStats] {
        &self.checkpoints
    }

    pub fn checkpoint(&self, n: u64) -> Option<&CheckpointStats> {
        self.checkpoints.iter().find(|c| c.n() == n)
    }

    pub fn terminal(&self) -> &CheckpointStats {
        self.checkpoints.last().expect("at least one recording time")
    }

    /// Terminal positions in replica order, if they were kept.
    pub fn terminal_samples(&self) -> Option<&[i64]> {
        self.terminal.as_deref()
    }

    /// Records one replica's positions at all recording times, in time order.
    pub fn record_path(&mut self, positions: &[i64]) {
        for (c, &s) in self.checkpoints.iter_mut().zip(positions) {
            c.record(s);
        }
        if let (Some(t), Some(&s)) = (self.terminal.as_mut(), positions.last()) {
            t.push(s);
        }
    }

    /// Appends `other`. Histogram counts add exactly; raw samples are concatenated
    /// with `self` first.
    pub fn merge(&mut self, other: &RunningStats) -> Result<()> {
        if self.checkpoints.len() != other.checkpoints.len() {
            return Err(ErwError::Contract("recording times differ".into()));
        }
        for (a, b) in self.checkpoints.iter_mut().zip(&other.checkpoints) {
            a.merge(b)?;
        }
        match (self.terminal.as_mut(), other.terminal.as_ref()) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (None, None) => {}
            _ => return Err(ErwError::Contract("only one side keeps terminal samples".into())),
        }
        Ok(())
    }

    pub fn summaries(&self, params: &ErwParams) -> Vec<CheckpointSummary> {
        self.checkpoints.iter().map(|c| CheckpointSummary::from_stats(c, normalizing_scale(params, c.n()))).collect()
    }

    /// Normalized terminal positions in replica order, if they were kept.
    pub fn normalized_terminal_samples(&self, params: &ErwParams) -> Option<Vec<f64>> {
        let n = self.terminal().n();
        let scale = normalizing_scale(params, n);
        self.terminal.as_ref().map(|t| t.iter().map(|&s| s as f64 / scale).collect())
    }
}

/// Raw terminal sample as little-endian `f64` values.
pub fn terminal_dump_bytes(samples: &[f64]) -> Vec<u8> {
    samples.iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Runs the configured dynamics.
pub fn simulate(config: &SimConfig) -> Result<RunningStats> {
    match config.dynamics {
        Dynamics::ConditionalLaw => simulate_terminal(config),
        Dynamics::MemoryReplay => simulate_replay(config),
    }
}

fn run_blocks<F>(config: &SimConfig, times: &[u64], block: F) -> Result<RunningStats>
where
    F: Fn(u64, u64, &mut RunningStats) + Sync,
{
    let keep = config.keep_terminal_samples;
    config
        .blocks()
        .map(|(first, len)| {
            let mut stats = RunningStats::new(times, keep);
            block(first, len, &mut stats);
            Ok(stats)
        })
        .try_reduce(
            || RunningStats::new(times, keep),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )
}

/// Conditional-law simulation: `X_1 = +1` with probability `q`, then
/// `X_{n+1} = +1` with probability `(1 + α S_n/n)/2`.
pub fn simulate_terminal(config: &SimConfig) -> Result<RunningStats> {
    if config.dynamics != Dynamics::ConditionalLaw {
        return Err(ErwError::Contract("simulate_terminal needs the conditional-law dynamics".into()));
    }
    let times = config.recording_times()?;
    let kernel = ConditionalKernel::new(&config.params);
    run_blocks(config, &times, |first, len, stats| kernel.run_block(config.seed, first, len, &times, stats))
}

/// Replay simulation; stores each replica's full path.
pub fn simulate_replay(config: &SimConfig) -> Result<RunningStats> {
    if config.dynamics != Dynamics::MemoryReplay {
        return Err(ErwError::Contract("simulate_replay needs the replay dynamics".into()));
    }
    let times = config.recording_times()?;
    let law = ReplayLaw::from_params(&config.params);
    run_blocks(config, &times, |first, len, stats| {
        let mut history = Vec::with_capacity(config.horizon as usize);
        let mut positions = Vec::with_capacity(times.len());
        for i in first..first + len {
            let mut rng = replica_rng(config.seed, i);
            positions.clear();
            let mut next = 0;
            law.run(config.horizon, &mut rng, &mut history, |n, s| {
                if n == times[next] {
                    positions.push(s);
                    next += 1;
                }
                true
            });
            stats.record_path(&positions);
        }
    })
}

/// Step probabilities of the conditional law in floating point.
#[derive(Clone, Copy, Debug)]
struct ConditionalKernel {
    alpha: f64,
    q: f64,
}

impl ConditionalKernel {
    fn new(params: &ErwParams) -> Self {
        Self { alpha: params.alpha_f64(), q: (1.0 + params.beta_f64()) / 2.0 }
    }

    fn run_block(&self, seed: u64, first: u64, len: u64, times: &[u64], stats: &mut RunningStats) {
        let horizon = *times.last().expect("nonempty");
        let mut positions = vec![[0i64; LANES]; times.len()];
        let mut start = 0;
        while start < len {
            let active = LANES.min((len - start) as usize);
            let mut rngs: [Xoshiro256PlusPlus; LANES] =
                std::array::from_fn(|l| replica_rng(seed, first + start + l as u64));
            let mut s = [0i64; LANES];
            for l in 0..LANES {
                s[l] = if uniform(rngs[l].next_u64()) < self.q { 1 } else { -1 };
            }
            let mut next = 0;
            if times[0] == 1 {
                positions[0] = s;
                next = 1;
            }
            for n in 1..horizon {
                let slope = 0.5 * self.alpha / n as f64;
                for l in 0..LANES {
                    let up = uniform(rngs[l].next_u64()) < 0.5 + slope * s[l] as f64;
                    s[l] += 2 * up as i64 - 1;
                }
                if n + 1 == times[next] {
                    positions[next] = s;
                    next += 1;
                }
            }
            let mut path = vec![0i64; times.len()];
            for l in 0..active {
                for (t, p) in positions.iter().enumerate() {
                    path[t] = p[l];
                }
                stats.record_path(&path);
            }
            start += LANES as u64;
        }
    }
}

/// Literal memory dynamics with raw probabilities, usable outside the validated parameter range
/// (for example `p = 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplayLaw {
    /// Probability of repeating the recalled step.
    pub p: f64,
    /// Probability that the first step is `+1`.
    pub q: f64,
}

impl ReplayLaw {
    pub fn from_params(params: &ErwParams) -> Self {
        Self { p: (1.0 + params.alpha_f64()) / 2.0, q: (1.0 + params.beta_f64()) / 2.0 }
    }

    /// Runs one path to `horizon`, calling `visit(n, S_n)` after every step until it
    /// returns `false`. `history` is scratch space.
    pub fn run<R, F>(&self, horizon: u64, rng: &mut R, history: &mut Vec<i8>, mut visit: F)
    where
        R: RngCore,
        F: FnMut(u64, i64) -> bool,
    {
        history.clear();
        if horizon == 0 {
            return;
        }
        let first: i8 = if uniform(rng.next_u64()) < self.q { 1 } else { -1 };
        history.push(first);
        let mut s = first as i64;
        if !visit(1, s) {
            return;
        }
        for n in 1..horizon {
            let recalled = history[rng.random_range(0..n) as usize];
            let step = if uniform(rng.next_u64()) < self.p { recalled } else { -recalled };
            history.push(step);
            s += step as i64;
            if !visit(n + 1, s) {
                return;
            }
        }
    }
}

//! Time of the first return to the origin, censored at the horizon.

use rand::RngCore;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{replica_rng, uniform, Dynamics, ReplayLaw, SimConfig, LANES};
use crate::error::{ErwError, Result};

/// `time` is the first `n > 0` with `S_n = 0`, or the horizon when `censored`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstReturnSample {
    pub time: u64,
    pub censored: bool,
}

/// First-return samples of one run together with the censoring point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstReturnSummary {
    pub horizon: u64,
    pub samples: Vec<FirstReturnSample>,
}

impl FirstReturnSummary {
    /// Mean of `min(R, h)` for any `h` up to the horizon.
    pub fn censored_mean(&self, h: u64) -> Result<f64> {
        if h == 0 || h > self.horizon || self.samples.is_empty() {
            return Err(ErwError::Contract(format!(
                "censoring point {h} must lie in [1, {}] with a nonempty sample",
                self.horizon
            )));
        }
        let total: u128 = self.samples.iter().map(|s| s.time.min(h) as u128).sum();
        Ok(total as f64 / self.samples.len() as f64)
    }

    /// Fraction of replicas that returned by time `h`.
    pub fn returned_fraction(&self, h: u64) -> f64 {
        let hits = self.samples.iter().filter(|s| !s.censored && s.time <= h).count();
        hits as f64 / self.samples.len() as f64
    }
}

/// Samples the first return time of each replica. Uses the same replica streams as
/// [`super::simulate`], so the step sequences coincide with a terminal run.
pub fn first_return_times(config: &SimConfig) -> Result<FirstReturnSummary> {
    config.validate()?;
    let blocks: Vec<Vec<FirstReturnSample>> = config
        .blocks()
        .map(|(first, len)| match config.dynamics {
            Dynamics::ConditionalLaw => conditional_block(config, first, len),
            Dynamics::MemoryReplay => replay_block(config, first, len),
        })
        .collect();
    Ok(FirstReturnSummary { horizon: config.horizon, samples: blocks.concat() })
}

fn conditional_block(config: &SimConfig, first: u64, len: u64) -> Vec<FirstReturnSample> {
    let alpha = config.params.alpha_f64();
    let q = (1.0 + config.params.beta_f64()) / 2.0;
    let horizon = config.horizon;
    let mut out = Vec::with_capacity(len as usize);
    let mut start = 0;
    while start < len {
        let active = LANES.min((len - start) as usize);
        let mut rngs: [Xoshiro256PlusPlus; LANES] =
            std::array::from_fn(|l| replica_rng(config.seed, first + start + l as u64));
        let mut s = [0i64; LANES];
        for l in 0..LANES {
            s[l] = if uniform(rngs[l].next_u64()) < q { 1 } else { -1 };
        }
        let mut hit = [0u64; LANES];
        let mut open = active;
        for n in 1..horizon {
            let slope = 0.5 * alpha / n as f64;
            for l in 0..LANES {
                let up = uniform(rngs[l].next_u64()) < 0.5 + slope * s[l] as f64;
                s[l] += 2 * up as i64 - 1;
            }
            for l in 0..active {
                if s[l] == 0 && hit[l] == 0 {
                    hit[l] = n + 1;
                    open -= 1;
                }
            }
            if open == 0 {
                break;
            }
        }
        out.extend(
            hit[..active]
                .iter()
                .map(|&t| FirstReturnSample { time: if t == 0 { horizon } else { t }, censored: t == 0 }),
        );
        start += LANES as u64;
    }
    out
}

fn replay_block(config: &SimConfig, first: u64, len: u64) -> Vec<FirstReturnSample> {
    let law = ReplayLaw::from_params(&config.params);
    let mut history = Vec::with_capacity(config.horizon as usize);
    (first..first + len)
        .map(|i| {
            let mut rng = replica_rng(config.seed, i);
            let mut hit = None;
            law.run(config.horizon, &mut rng, &mut history, |n, s| {
                if s == 0 {
                    hit = Some(n);
                }
                hit.is_none()
            });
            match hit {
                Some(t) => FirstReturnSample { time: t, censored: false },
                None => FirstReturnSample { time: config.horizon, censored: true },
            }
        })
        .collect()
}

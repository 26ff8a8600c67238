//! Mergeable accumulators for simulated positions.
//!
//! Positions are integers, so each checkpoint keeps an exact histogram of `S_n`.
//! Merging adds counts, which makes it associative and commutative with no rounding;
//! power sums and the Kolmogorov distance are derived from the histogram on demand.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::deviations::fmt_f64;
use crate::error::{ErwError, Result};
use crate::moments::ratio_to_f64;

/// Highest normalized moment reported per checkpoint.
pub const REPORTED_ORDERS: u32 = 12;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Exact counts of `S_n` at one time `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointStats {
    n: u64,
    /// Index of `counts[0]` in `(S_n + n) / 2` units.
    lo: u64,
    counts: Vec<u64>,
    total: u64,
}

impl CheckpointStats {
    pub fn new(n: u64) -> Self {
        Self { n, lo: 0, counts: Vec::new(), total: 0 }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    /// Adds one observation. Panics if `s` is not a reachable position at time `n`.
    pub fn record(&mut self, s: i64) {
        let idx = self.index(s);
        self.add(idx, 1);
    }

    fn index(&self, s: i64) -> u64 {
        assert!(
            s.unsigned_abs() <= self.n && (s + self.n as i64) % 2 == 0,
            "position {s} is unreachable at time {}",
            self.n
        );
        ((s + self.n as i64) / 2) as u64
    }

    fn add(&mut self, idx: u64, c: u64) {
        if c == 0 {
            return;
        }
        if self.counts.is_empty() {
            self.lo = idx;
            self.counts.push(0);
        } else if idx < self.lo {
            let grow = (self.lo - idx) as usize;
            self.counts.splice(0..0, std::iter::repeat_n(0, grow));
            self.lo = idx;
        } else if idx >= self.lo + self.counts.len() as u64 {
            self.counts.resize((idx - self.lo + 1) as usize, 0);
        }
        self.counts[(idx - self.lo) as usize] += c;
        self.total += c;
    }

    /// Adds all counts from `other`. Both must refer to the same time.
    pub fn merge(&mut self, other: &CheckpointStats) -> Result<()> {
        if self.n != other.n {
            return Err(ErwError::Contract(format!("cannot merge checkpoints at n = {} and n = {}", self.n, other.n)));
        }
        if other.counts.is_empty() {
            return Ok(());
        }
        if self.counts.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        let hi = (self.lo + self.counts.len() as u64).max(other.lo + other.counts.len() as u64);
        let lo = self.lo.min(other.lo);
        if lo < self.lo {
            self.counts.splice(0..0, std::iter::repeat_n(0, (self.lo - lo) as usize));
            self.lo = lo;
        }
        self.counts.resize((hi - self.lo) as usize, 0);
        for (i, &c) in other.counts.iter().enumerate() {
            self.counts[(other.lo - self.lo) as usize + i] += c;
        }
        self.total += other.total;
        Ok(())
    }

    /// `(S_n, count)` pairs with nonzero count in increasing order of position.
    pub fn support(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        let n = self.n as i64;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(i, &c)| (2 * (self.lo as i64 + i as i64) - n, c))
    }

    /// Exact `Σ S^k` over all observations.
    pub fn power_sum(&self, k: u32) -> BigInt {
        let mut acc = BigInt::zero();
        for (s, c) in self.support() {
            acc += BigInt::from(s).pow(k) * c;
        }
        acc
    }

    /// Empirical `E[S_n^k]` (exact power sum, single rounding).
    pub fn raw_moment(&self, k: u32) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        ratio_to_f64(&self.power_sum(k), &BigInt::from(self.total))
    }

    /// Empirical `E[(S_n/scale)^k]`.
    pub fn normalized_moment(&self, k: u32, scale: f64) -> f64 {
        self.raw_moment(k) / scale.powi(k as i32)
    }

    /// Standard error of `normalized_moment(k, scale)`: `sqrt((m_2k - m_k^2)/R)`.
    pub fn standard_error(&self, k: u32, scale: f64) -> f64 {
        let mk = self.normalized_moment(k, scale);
        let m2k = self.normalized_moment(2 * k, scale);
        ((m2k - mk * mk).max(0.0) / self.total as f64).sqrt()
    }

    /// Kolmogorov distance between the law of `S_n/scale` and the standard normal.
    pub fn kolmogorov_distance(&self, scale: f64) -> f64 {
        let total = self.total as f64;
        let mut below = 0u64;
        let mut d: f64 = 0.0;
        for (s, c) in self.support() {
            let phi = normal_cdf(s as f64 / scale);
            let before = below as f64 / total;
            below += c;
            let after = below as f64 / total;
            d = d.max((after - phi).abs()).max((phi - before).abs());
        }
        d
    }

    /// Empirical probabilities keyed by position.
    pub fn frequencies(&self) -> BTreeMap<i64, f64> {
        let total = self.total as f64;
        self.support().map(|(s, c)| (s, c as f64 / total)).collect()
    }
}

/// Kolmogorov distance `sup_x |F_N(x) - Φ(x)|` of a sorted sample, checked on both
/// sides of every jump of the empirical CDF.
pub fn kolmogorov_distance(sorted: &[f64]) -> Result<f64> {
    if sorted.is_empty() {
        return Err(ErwError::Contract("empty sample".into()));
    }
    if sorted.windows(2).any(|w| w[0] > w[1]) || sorted.iter().any(|x| x.is_nan()) {
        return Err(ErwError::Contract("sample must be sorted and free of NaN".into()));
    }
    let total = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let phi = normal_cdf(x);
        d = d.max((phi - i as f64 / total).abs()).max((j as f64 / total - phi).abs());
        i = j;
    }
    Ok(d)
}

/// Moment table for one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub n: u64,
    pub count: u64,
    pub scale: f64,
    /// `E[(S_n/scale)^k]` for `k = 1..=12`.
    pub moments: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub kolmogorov_distance: f64,
}

impl CheckpointSummary {
    pub fn from_stats(stats: &CheckpointStats, scale: f64) -> Self {
        let orders = 1..=REPORTED_ORDERS;
        Self {
            n: stats.n(),
            count: stats.count(),
            scale,
            moments: orders.clone().map(|k| stats.normalized_moment(k, scale)).collect(),
            standard_errors: orders.map(|k| stats.standard_error(k, scale)).collect(),
            kolmogorov_distance: stats.kolmogorov_distance(scale),
        }
    }

    pub fn moment(&self, k: u32) -> f64 {
        self.moments[k as usize - 1]
    }

    pub fn standard_error(&self, k: u32) -> f64 {
        self.standard_errors[k as usize - 1]
    }
}

/// `n,count,m1..m12,ks,se1..se12`.
pub fn summary_csv_header() -> String {
    let mut h = String::from("n,count");
    for k in 1..=REPORTED_ORDERS {
        let _ = write!(h, ",m{k}");
    }
    h.push_str(",ks");
    for k in 1..=REPORTED_ORDERS {
        let _ = write!(h, ",se{k}");
    }
    h
}

pub fn summaries_csv(rows: &[CheckpointSummary]) -> String {
    let mut out = summary_csv_header();
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.n, r.count);
        for m in &r.moments {
            let _ = write!(out, ",{}", fmt_f64(*m));
        }
        let _ = write!(out, ",{}", fmt_f64(r.kolmogorov_distance));
        for s in &r.standard_errors {
            let _ = write!(out, ",{}", fmt_f64(*s));
        }
        out.push('\n');
    }
    out
}

/// Pearson goodness-of-fit result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub degrees_of_freedom: u64,
    pub p_value: f64,
}

/// Pearson test of the observed histogram against an exact law. Adjacent cells
/// are pooled until each pooled cell expects at least 5 observations.
pub fn chi_square_test(stats: &CheckpointStats, law: &BTreeMap<i64, BigRational>) -> Result<ChiSquareOutcome> {
    let total = stats.count() as f64;
    if total == 0.0 {
        return Err(ErwError::Contract("no observations".into()));
    }
    let observed: BTreeMap<i64, u64> = stats.support().collect();
    if observed.keys().any(|s| !law.contains_key(s)) {
        return Ok(ChiSquareOutcome { statistic: f64::INFINITY, degrees_of_freedom: 0, p_value: 0.0 });
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut e_acc, mut o_acc) = (0.0, 0.0);
    for (s, p) in law {
        e_acc += p.to_f64().unwrap_or(0.0) * total;
        o_acc += *observed.get(s).unwrap_or(&0) as f64;
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            e_acc = 0.0;
            o_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => cells.push((o_acc, e_acc)),
        }
    }
    if cells.len() < 2 {
        return Ok(ChiSquareOutcome { statistic: 0.0, degrees_of_freedom: 0, p_value: 1.0 });
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() as u64 - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| ErwError::Contract(e.to_string()))?;
    Ok(ChiSquareOutcome { statistic, degrees_of_freedom: dof, p_value: dist.sf(statistic) })
}

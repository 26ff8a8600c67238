//! Closed-form predictions for the decay of the moment deviations, plus the
//! supporting scale functions (variance growth, Berry–Esseen bound shapes,
//! partial-sum normalizations).

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::deviations::fmt_f64;
use crate::error::{ErwError, Result};
use crate::params::{ErwParams, RegimeTag};
use crate::special::{c_alpha, double_factorial_odd, gamma_ratio, reciprocal_gamma, EULER_GAMMA};
use crate::summation::{compensated_sum, NeumaierSum};

/// How a deviation decays: `n^(-exponent)` or `(log n)^(-exponent)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "exponent")]
pub enum Decay {
    PowerOfN(f64),
    PowerOfLogN(f64),
}

impl Decay {
    pub fn exponent(self) -> f64 {
        match self {
            Decay::PowerOfN(e) | Decay::PowerOfLogN(e) => e,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Decay::PowerOfN(_) => "power_of_n",
            Decay::PowerOfLogN(_) => "power_of_log_n",
        }
    }

    pub fn factor(self, n: u64) -> f64 {
        let x = n as f64;
        match self {
            Decay::PowerOfN(e) => x.powf(-e),
            Decay::PowerOfLogN(e) => x.ln().powf(-e),
        }
    }
}

/// Which asymptotic branch a prediction comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Odd order, `α < 1/2`.
    OddSubcritical,
    /// Odd order, `α = 1/2`.
    OddCritical,
    /// Order 2, `-1 < α < 1/2`, `α != 0, -1/2`.
    Second,
    /// Order 2 at `α = 0` (all `n`) or `α = -1/2` (`n >= 2`): the deviation vanishes.
    SecondDegenerate,
    /// Order `2m`, `m >= 2`, `-1 < α <= 0`: rate `1/n` with coefficient `m(m-1)/2 c(α)`.
    EvenNonpositive,
    /// Order `2m`, `m >= 2`, `0 < α < 1/2`.
    EvenPositive,
    /// Even order at `α = 1/2`.
    EvenCritical,
}

/// Leading-order prediction for the deviation of one order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub alpha: f64,
    pub beta: f64,
    pub order: u32,
    pub regime: RegimeTag,
    pub branch: Branch,
    pub coefficient: f64,
    pub decay: Decay,
    /// Raised when the deviation is exactly zero from `zero_from` on.
    pub identically_zero: bool,
    pub zero_from: u64,
}

impl RatePrediction {
    /// Polynomial decay exponent `γ`, if the decay is polynomial and the deviation is not identically zero.
    pub fn gamma_exponent(&self) -> Option<f64> {
        match (self.identically_zero, self.decay) {
            (false, Decay::PowerOfN(e)) => Some(e),
            _ => None,
        }
    }

    /// Leading term `coefficient × decay(n)`, or `0` on the identically-zero branch.
    pub fn evaluate(&self, n: u64) -> f64 {
        if self.identically_zero && n >= self.zero_from {
            0.0
        } else {
            self.coefficient * self.decay.factor(n)
        }
    }
}

/// Leading term of the `k`-th moment deviation for `-1 < α <= 1/2`.
///
/// Odd orders: `E[(S_n/σ_n)^k]`. Even orders: `E[(S_n/σ_n)^k]/(k-1)!! - 1`.
pub fn predict_rate(params: &ErwParams, k: u32) -> Result<RatePrediction> {
    if k == 0 {
        return Err(ErwError::Contract("order must be at least 1".into()));
    }
    let regime = params.regime();
    if regime == RegimeTag::Superdiffusive {
        return Err(ErwError::OutOfScope("rate predictions cover -1 < alpha <= 1/2 only".into()));
    }
    let alpha = params.alpha_f64();
    let beta = params.beta_f64();
    let m = k.div_ceil(2);
    let df = double_factorial_odd(m) as f64;
    let mut zero_from = 0;
    let (branch, coefficient, decay) = if k % 2 == 1 {
        if regime == RegimeTag::Critical {
            (Branch::OddCritical, 2.0 * beta / PI.sqrt() * df, Decay::PowerOfLogN(0.5))
        } else {
            (
                Branch::OddSubcritical,
                beta * (1.0 - 2.0 * alpha).sqrt() * reciprocal_gamma(1.0 + alpha) * df,
                Decay::PowerOfN((1.0 - 2.0 * alpha) / 2.0),
            )
        }
    } else if regime == RegimeTag::Critical {
        (Branch::EvenCritical, m as f64 * EULER_GAMMA, Decay::PowerOfLogN(1.0))
    } else if m == 1 {
        let decay = Decay::PowerOfN(1.0 - 2.0 * alpha);
        if params.alpha_is(0, 1) {
            zero_from = 1;
            (Branch::SecondDegenerate, 0.0, decay)
        } else if params.alpha_is(-1, 2) {
            zero_from = 2;
            (Branch::SecondDegenerate, 0.0, decay)
        } else {
            (Branch::Second, -reciprocal_gamma(2.0 * alpha), decay)
        }
    } else if params.alpha_nonpositive() {
        let c = c_alpha(params.alpha())?.to_f64().expect("bounded");
        let pairs = (m * (m - 1) / 2) as f64;
        (Branch::EvenNonpositive, pairs * c, Decay::PowerOfN(1.0))
    } else {
        (Branch::EvenPositive, -(m as f64) * reciprocal_gamma(2.0 * alpha), Decay::PowerOfN(1.0 - 2.0 * alpha))
    };
    Ok(RatePrediction {
        alpha,
        beta,
        order: k,
        regime,
        branch,
        coefficient,
        decay,
        identically_zero: branch == Branch::SecondDegenerate,
        zero_from,
    })
}

pub const PREDICTION_CSV_HEADER: &str = "alpha,order,gamma_exponent,coefficient,decay_kind";

/// CSV with columns `alpha,order,gamma_exponent,coefficient,decay_kind`.
/// Identically-zero cells carry an empty exponent and decay kind `identically_zero`.
pub fn predictions_csv(preds: &[RatePrediction]) -> String {
    let mut out = String::from(PREDICTION_CSV_HEADER);
    out.push('\n');
    for p in preds {
        let (exp, kind) = if p.identically_zero {
            (String::new(), "identically_zero")
        } else {
            (fmt_f64(p.decay.exponent()), p.decay.kind())
        };
        let _ = writeln!(out, "{},{},{},{},{}", fmt_f64(p.alpha), p.order, exp, fmt_f64(p.coefficient), kind);
    }
    out
}

/// Leading growth of `E[S_n^2]`: `n/(1-2α)`, `n log n`, or `n^(2α) / ((2α-1) Γ(2α))`.
pub fn variance_asymptote(params: &ErwParams, n: u64) -> f64 {
    let x = n as f64;
    let alpha = params.alpha_f64();
    match params.regime() {
        RegimeTag::Diffusive => x / (1.0 - 2.0 * alpha),
        RegimeTag::Critical => x * x.ln(),
        RegimeTag::Superdiffusive => x.powf(2.0 * alpha) * reciprocal_gamma(2.0 * alpha) / (2.0 * alpha - 1.0),
    }
}

/// Shape of the Kolmogorov-distance bound without its constant:
/// `log n / sqrt n` for `α <= 0`, `log n / n^((1-2α)/2)` for `0 <= α < 1/2`,
/// `log log n / sqrt(log n)` for `α = 1/2`. Both subcritical branches agree at `α = 0`.
pub fn berry_esseen_shape(params: &ErwParams, n: u64) -> Result<f64> {
    if n < 3 {
        return Err(ErwError::Contract("the bound shape needs n >= 3".into()));
    }
    let x = n as f64;
    let alpha = params.alpha_f64();
    match params.regime() {
        RegimeTag::Superdiffusive => Err(ErwError::OutOfScope("bound covers alpha <= 1/2".into())),
        RegimeTag::Critical => Ok(x.ln().ln() / x.ln().sqrt()),
        RegimeTag::Diffusive if params.alpha_nonpositive() => Ok(x.ln() / x.sqrt()),
        RegimeTag::Diffusive => Ok(x.ln() / x.powf((1.0 - 2.0 * alpha) / 2.0)),
    }
}

/// `(s_n^2, σ_n^2)` with `s_n^2 = Σ_{i=1}^n Γ(i)^2/Γ(i+α)^2` by direct summation and
/// `σ_n^2 = Γ(n)^2/Γ(n+α)^2 × (n/(1-2α) or n log n)`.
///
/// `|sqrt(s_n^2/σ_n^2) - 1|` decays like `1/n` (`α < 0`), `n^(2α-1)` (`0 < α < 1/2`),
/// or `1/log n` (`α = 1/2`).
pub fn variance_sum_remainder(params: &ErwParams, n: u64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(ErwError::Contract("n must be at least 2".into()));
    }
    if params.regime() == RegimeTag::Superdiffusive {
        return Err(ErwError::OutOfScope("alpha must be at most 1/2".into()));
    }
    let alpha = params.alpha_f64();
    let term = |i: u64| -> Result<f64> {
        let r = gamma_ratio(0.0, alpha, i)?;
        Ok(r * r)
    };
    let mut s = NeumaierSum::new();
    for i in 1..=n {
        s.add(term(i)?);
    }
    let x = n as f64;
    let scale = if params.is_critical() { x * x.ln() } else { x / (1.0 - 2.0 * alpha) };
    Ok((s.value(), term(n)? * scale))
}

/// [`variance_sum_remainder`] on every point of an increasing grid in one pass.
pub fn variance_sum_series(params: &ErwParams, grid: &[u64]) -> Result<Vec<(u64, f64, f64)>> {
    crate::grid::validate_grid(grid, 2)?;
    if params.regime() == RegimeTag::Superdiffusive {
        return Err(ErwError::OutOfScope("alpha must be at most 1/2".into()));
    }
    let alpha = params.alpha_f64();
    let mut s = NeumaierSum::new();
    let mut i = 0u64;
    let mut out = Vec::with_capacity(grid.len());
    for &n in grid {
        let mut last = 0.0;
        while i < n {
            i += 1;
            let r = gamma_ratio(0.0, alpha, i)?;
            last = r * r;
            s.add(last);
        }
        if last == 0.0 {
            let r = gamma_ratio(0.0, alpha, n)?;
            last = r * r;
        }
        let x = n as f64;
        let scale = if params.is_critical() { x * x.ln() } else { x / (1.0 - 2.0 * alpha) };
        out.push((n, s.value(), last * scale));
    }
    Ok(out)
}

/// `|sqrt(s_n^2 / σ_n^2) - 1|`.
pub fn variance_sum_ratio_error(params: &ErwParams, n: u64) -> Result<f64> {
    let (s2, sigma2) = variance_sum_remainder(params, n)?;
    Ok(((s2 / sigma2).sqrt() - 1.0).abs())
}

/// `(m / (log n)^m) Σ_{j=1}^n (log j)^(m-1) / j`, which equals `1 + O((log n)^-m)`.
pub fn log_power_sum(m: u32, n: u64) -> Result<f64> {
    if m == 0 || n < 2 {
        return Err(ErwError::Contract("need m >= 1 and n >= 2".into()));
    }
    let lg = (n as f64).ln();
    let sum = compensated_sum((1..=n).map(|j| {
        let x = j as f64;
        x.ln().powi(m as i32 - 1) / x
    }));
    Ok(m as f64 / lg.powi(m as i32) * sum)
}

/// `Σ_{k<=n} a_k / Σ_{k<=n} b_k`, the discrete L'Hôpital quotient.
pub fn partial_sum_ratio<A, B>(a: A, b: B, n: u64) -> f64
where
    A: Fn(u64) -> f64,
    B: Fn(u64) -> f64,
{
    compensated_sum((1..=n).map(&a)) / compensated_sum((1..=n).map(&b))
}

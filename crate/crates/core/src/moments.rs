//! Exact moments `E[S_n^k]`.
//!
//! The moments obey a closed linear recursion in `n` that couples each order to
//! every lower order of the same parity:
//!
//! ```text
//! E[S_{n+1}^{2m-1}] =     Σ_{l=1..m} (C(2m-1,2l-1) + α/n C(2m-1,2l-2)) E[S_n^{2l-1}]
//! E[S_{n+1}^{2m}]   = 1 + Σ_{l=1..m} (C(2m,2l)     + α/n C(2m,2l-1))   E[S_n^{2l}]
//! ```
//!
//! The exact path keeps all orders over one common integer denominator
//! `D_n = d b^{n-1} (n-1)!` (with `α = a/b`, `β = c/d`), so a step is a handful
//! of big-integer multiply-adds and no gcd is ever taken until a value is read.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{ErwError, Result};
use crate::params::ErwParams;
use crate::special::{a_n, gamma_ratio, negative_integer, reciprocal_gamma, BinomialTable};
use crate::summation::compensated_sum;

/// Highest moment order computed by default.
pub const DEFAULT_MAX_ORDER: u32 = 12;
/// Default cap on the bit length of the common denominator.
pub const DEFAULT_BIT_CAP: u64 = 4_000_000;
/// Largest `n` accepted by [`brute_force_distribution`].
pub const BRUTE_FORCE_MAX_N: u64 = 14;

/// Exact values `E[S_n^k]` for `k = 1..=K` at one time `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    params: ErwParams,
    n: u64,
    numerators: Vec<BigInt>,
    denominator: BigInt,
}

impl MomentVector {
    /// The moments of `S_1 = X_1`: `β` for odd orders and `1` for even orders.
    pub fn initial(params: &ErwParams, max_order: u32) -> Self {
        assert!(max_order >= 1, "max_order must be at least 1");
        let beta = params.beta();
        let numerators =
            (1..=max_order).map(|k| if k % 2 == 1 { beta.numer().clone() } else { beta.denom().clone() }).collect();
        Self { params: params.clone(), n: 1, numerators, denominator: beta.denom().clone() }
    }

    /// Builds a vector from explicit values. Every order `1..=K` must be present.
    pub fn from_map(params: &ErwParams, n: u64, values: &BTreeMap<u32, BigRational>) -> Result<Self> {
        if n == 0 {
            return Err(ErwError::Contract("moments are indexed from n = 1".into()));
        }
        let max_order = values.keys().next_back().copied().unwrap_or(0);
        if max_order == 0 {
            return Err(ErwError::Contract("no moment orders supplied".into()));
        }
        if let Some(k) = (1..=max_order).find(|k| !values.contains_key(k)) {
            return Err(ErwError::Contract(format!(
                "order {k} is missing; the recursion couples every order to all lower orders"
            )));
        }
        let denominator = values.values().fold(BigInt::one(), |acc, v| num_integer::Integer::lcm(&acc, v.denom()));
        let numerators = values.values().map(|v| v.numer() * (&denominator / v.denom())).collect();
        Ok(Self { params: params.clone(), n, numerators, denominator })
    }

    pub fn params(&self) -> &ErwParams {
        &self.params
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn max_order(&self) -> u32 {
        self.numerators.len() as u32
    }

    /// `E[S_n^k]`, reduced.
    pub fn value(&self, k: u32) -> BigRational {
        assert!(k >= 1 && k <= self.max_order(), "order {k} not held");
        BigRational::new(self.numerators[k as usize - 1].clone(), self.denominator.clone())
    }

    pub fn value_f64(&self, k: u32) -> f64 {
        ratio_to_f64(&self.numerators[k as usize - 1], &self.denominator)
    }

    pub fn values(&self) -> Vec<BigRational> {
        (1..=self.max_order()).map(|k| self.value(k)).collect()
    }

    /// Bit length of the shared denominator; the resource guard watches this.
    pub fn denominator_bits(&self) -> u64 {
        self.denominator.bits()
    }
}

/// `num / den` as a float without overflowing when both are huge.
pub(crate) fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if let (Some(a), Some(b)) = (num.to_f64(), den.to_f64()) {
        if a.is_finite() && b.is_finite() && b != 0.0 {
            return a / b;
        }
    }
    let shift = den.bits().max(num.bits()).saturating_sub(1000);
    let a = (num >> shift).to_f64().unwrap_or(0.0);
    let b = (den >> shift).to_f64().unwrap_or(f64::INFINITY);
    a / b
}

/// Precomputed binomials and parameter pieces for repeated stepping.
#[derive(Clone, Debug)]
pub struct MomentStepper {
    binom: BinomialTable,
    a: BigInt,
    b: BigInt,
}

impl MomentStepper {
    pub fn new(params: &ErwParams, max_order: u32) -> Self {
        Self {
            binom: BinomialTable::new(max_order as usize),
            a: params.alpha().numer().clone(),
            b: params.alpha().denom().clone(),
        }
    }

    /// Advances `mv` from time `n` to `n + 1`.
    pub fn step(&self, mv: &MomentVector) -> MomentVector {
        let n = mv.n;
        let max_order = mv.max_order();
        let bn = &self.b * BigInt::from(n);
        let denominator = &mv.denominator * &bn;
        let mut numerators = Vec::with_capacity(max_order as usize);
        for k in 1..=max_order {
            let even = k % 2 == 0;
            let m = k.div_ceil(2) as i64;
            let mut acc = if even { denominator.clone() } else { BigInt::zero() };
            for l in 1..=m {
                let (lower, c1, c2) = if even {
                    (2 * l, self.binom.get(k as usize, 2 * l), self.binom.get(k as usize, 2 * l - 1))
                } else {
                    (2 * l - 1, self.binom.get(k as usize, 2 * l - 1), self.binom.get(k as usize, 2 * l - 2))
                };
                let coef = c1 * &bn + c2 * &self.a;
                if !coef.is_zero() {
                    acc += coef * &mv.numerators[lower as usize - 1];
                }
            }
            numerators.push(acc);
        }
        MomentVector { params: mv.params.clone(), n: n + 1, numerators, denominator }
    }
}

/// One step of the exact moment recursion: all orders at `n` to all orders at `n + 1`.
pub fn step_moments(mv: &MomentVector) -> MomentVector {
    MomentStepper::new(&mv.params, mv.max_order()).step(mv)
}

/// Limits for [`exact_moment`] and [`exact_moments`].
#[derive(Clone, Copy, Debug)]
pub struct ExactConfig {
    pub max_order: u32,
    pub bit_cap: u64,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self { max_order: DEFAULT_MAX_ORDER, bit_cap: DEFAULT_BIT_CAP }
    }
}

/// Exact moments of orders `1..=max_order` at time `n`, iterating from `n = 1`.
pub fn exact_moments(params: &ErwParams, n: u64, max_order: u32, bit_cap: u64) -> Result<MomentVector> {
    if n == 0 {
        return Err(ErwError::Contract("n must be at least 1".into()));
    }
    if max_order == 0 {
        return Err(ErwError::Contract("order must be at least 1".into()));
    }
    let predicted = predicted_denominator_bits(params, n);
    if predicted > bit_cap {
        return Err(ErwError::ResourceCap(format!(
            "exact moments at n = {n} need about {predicted} bits per value (cap {bit_cap}); use the float path"
        )));
    }
    let stepper = MomentStepper::new(params, max_order);
    let mut mv = MomentVector::initial(params, max_order);
    while mv.n < n {
        mv = stepper.step(&mv);
    }
    Ok(mv)
}

fn predicted_denominator_bits(params: &ErwParams, n: u64) -> u64 {
    let b_bits = params.alpha().denom().bits() as f64;
    let d_bits = params.beta().denom().bits() as f64;
    let log2_fact = if n > 1 {
        crate::special::ln_gamma_signed(n as f64).map(|(l, _)| l).unwrap_or(0.0) / std::f64::consts::LN_2
    } else {
        0.0
    };
    (d_bits + (n as f64 - 1.0) * b_bits + log2_fact).ceil() as u64
}

/// Exact `E[S_n^k]`.
pub fn exact_moment(params: &ErwParams, n: u64, k: u32, config: ExactConfig) -> Result<BigRational> {
    if k == 0 || k > config.max_order {
        return Err(ErwError::Contract(format!("order {k} outside 1..={}", config.max_order)));
    }
    Ok(exact_moments(params, n, k, config.bit_cap)?.value(k))
}

/// `E[S_n] = β a_n`.
pub fn first_moment(params: &ErwParams, n: u64) -> BigRational {
    params.beta() * a_n(params, n)
}

/// `Γ(n+δ) / (Γ(n) Γ(δ)) = δ prod_{j=1}^{n-1} (1 + δ/j)`, with `1/Γ` vanishing at poles.
pub(crate) fn gamma_quotient(delta: f64, delta_exact: &BigRational, n: u64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    if let Some(k) = negative_integer(delta_exact) {
        if n > k {
            return 0.0;
        }
        return delta * (1..n).map(|j| 1.0 + delta / j as f64).product::<f64>();
    }
    gamma_ratio(delta, 0.0, n).expect("no pole off the integers") * reciprocal_gamma(delta)
}

/// `E[S_n^2]` from its closed form:
/// `n/(1-2α) + Γ(n+2α)/((2α-1) Γ(n) Γ(2α))` for `α != 1/2`, `n H_n` for `α = 1/2`.
pub fn second_moment_closed_form(params: &ErwParams, n: u64) -> f64 {
    assert!(n >= 1, "n must be at least 1");
    let x = n as f64;
    if params.is_critical() {
        return x * compensated_sum((1..=n).map(|l| 1.0 / l as f64));
    }
    let alpha = params.alpha_f64();
    let two_alpha = params.alpha() * BigInt::from(2);
    x / (1.0 - 2.0 * alpha) + gamma_quotient(2.0 * alpha, &two_alpha, n) / (2.0 * alpha - 1.0)
}

/// The closed form evaluated in exact rationals (the gamma quotient is a finite product).
pub fn second_moment_closed_form_exact(params: &ErwParams, n: u64) -> BigRational {
    assert!(n >= 1, "n must be at least 1");
    let nn = BigRational::from_integer(BigInt::from(n));
    if params.is_critical() {
        let h: BigRational = (1..=n)
            .map(|l| BigRational::new(BigInt::one(), BigInt::from(l)))
            .fold(BigRational::zero(), |acc, t| acc + t);
        return nn * h;
    }
    let one = BigRational::one();
    let two_alpha = params.alpha() * BigInt::from(2);
    let mut quotient = two_alpha.clone();
    for j in 1..n {
        quotient *= &one + &two_alpha / BigInt::from(j);
    }
    &nn / (&one - &two_alpha) + quotient / (&two_alpha - &one)
}

/// Exact law of `S_n` by enumerating all `2^n` sign paths.
///
/// Each path's probability is built from first principles: `q` or `1-q` for the
/// first step and `(1 + x_{j+1} α s_j / j) / 2` for every later step.
pub fn brute_force_distribution(params: &ErwParams, n: u64) -> Result<BTreeMap<i64, BigRational>> {
    if n == 0 {
        return Err(ErwError::Contract("n must be at least 1".into()));
    }
    if n > BRUTE_FORCE_MAX_N {
        return Err(ErwError::ResourceCap(format!("path enumeration is limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")));
    }
    let alpha = params.alpha().clone();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let q = params.q();
    let mut law = BTreeMap::new();
    let mut stack: Vec<(u64, i64, BigRational)> = Vec::new();
    stack.push((1, 1, q.clone()));
    stack.push((1, -1, BigRational::one() - q));
    while let Some((len, s, prob)) = stack.pop() {
        if prob.is_zero() {
            continue;
        }
        if len == n {
            *law.entry(s).or_insert_with(BigRational::zero) += prob;
            continue;
        }
        let drift = &alpha * BigInt::from(s) / BigInt::from(len);
        for x in [1i64, -1] {
            let step =
                if x == 1 { (BigRational::one() + &drift) * &half } else { (BigRational::one() - &drift) * &half };
            stack.push((len + 1, s + x, &prob * step));
        }
    }
    Ok(law)
}

/// `E[S_n^k]` from [`brute_force_distribution`].
pub fn brute_force_moment(params: &ErwParams, n: u64, k: u32) -> Result<BigRational> {
    let law = brute_force_distribution(params, n)?;
    Ok(moment_of_law(&law, k))
}

pub(crate) fn moment_of_law(law: &BTreeMap<i64, BigRational>, k: u32) -> BigRational {
    law.iter().fold(BigRational::zero(), |acc, (s, p)| acc + p * BigInt::from(*s).pow(k))
}

/// Floating-point moments `E[S_n^k]`, `k = 1..=K`, by the same recursion.
/// Used for times beyond the reach of the exact path.
#[derive(Clone, Debug)]
pub struct FloatMoments {
    alpha: f64,
    n: u64,
    values: Vec<f64>,
    coeffs: Vec<Vec<(usize, f64, f64)>>,
}

impl FloatMoments {
    pub fn new(params: &ErwParams, max_order: u32) -> Self {
        let binom = BinomialTable::new(max_order as usize);
        let beta = params.beta_f64();
        let values = (1..=max_order).map(|k| if k % 2 == 1 { beta } else { 1.0 }).collect();
        let coeffs = (1..=max_order as i64)
            .map(|k| {
                let m = (k + 1) / 2;
                (1..=m)
                    .map(|l| {
                        let lower = if k % 2 == 0 { 2 * l } else { 2 * l - 1 };
                        let c1 = binom.get_f64(k as usize, lower);
                        let c2 = binom.get_f64(k as usize, lower - 1);
                        (lower as usize - 1, c1, c2)
                    })
                    .collect()
            })
            .collect();
        Self { alpha: params.alpha_f64(), n: 1, values, coeffs }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `E[S_n^k]`.
    pub fn value(&self, k: u32) -> f64 {
        self.values[k as usize - 1]
    }

    pub fn step(&mut self) {
        let r = self.alpha / self.n as f64;
        let next: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, terms)| {
                let base = if idx % 2 == 1 { 1.0 } else { 0.0 };
                base + terms.iter().map(|&(lower, c1, c2)| (c1 + r * c2) * self.values[lower]).sum::<f64>()
            })
            .collect();
        self.values = next;
        self.n += 1;
    }

    pub fn advance_to(&mut self, n: u64) {
        while self.n < n {
            self.step();
        }
    }
}

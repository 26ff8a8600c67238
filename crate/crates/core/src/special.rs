//! Gamma-function utilities and the scalar constants shared by every module.
//!
//! `1/Γ(s)` is taken to be exactly `0` at `s = 0, -1, -2, ...`; that convention
//! is what produces the identically-zero branches of the second-moment deviation.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use statrs::function::gamma as sg;

use crate::error::{ErwError, Result};
use crate::params::{ratio, ErwParams};

/// Euler–Mascheroni constant.
#[allow(clippy::excessive_precision)]
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;

fn is_nonpositive_integer(s: f64) -> bool {
    s <= 0.0 && s.fract() == 0.0
}

/// `1/Γ(s)`, exactly zero at the poles of Γ.
pub fn reciprocal_gamma(s: f64) -> f64 {
    if is_nonpositive_integer(s) {
        return 0.0;
    }
    if s.fract() == 0.0 && s <= 21.0 {
        return 1.0 / (1..s as u64).map(|k| k as f64).product::<f64>();
    }
    if s > 170.0 {
        return (-sg::ln_gamma(s)).exp();
    }
    1.0 / sg::gamma(s)
}

/// `(ln |Γ(x)|, sign Γ(x))`. Poles are a domain error.
pub fn ln_gamma_signed(x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(ErwError::Domain(format!("gamma argument {x} is not finite")));
    }
    if is_nonpositive_integer(x) {
        return Err(ErwError::Domain(format!("gamma has a pole at {x}")));
    }
    if x > 0.0 {
        return Ok((sg::ln_gamma(x), 1.0));
    }
    // Γ(x) Γ(1-x) = π / sin(πx)
    let s = (PI * x).sin();
    Ok((PI.ln() - s.abs().ln() - sg::ln_gamma(1.0 - x), s.signum()))
}

/// `Γ(n+a) / Γ(n+b)`, evaluated through log-gamma so that it stays finite for
/// large `n`. Approaches `n^(a-b)` as `n` grows.
pub fn gamma_ratio(a: f64, b: f64, n: u64) -> Result<f64> {
    let x = n as f64;
    if a == b {
        ln_gamma_signed(x + a)?;
        return Ok(1.0);
    }
    if x + a.min(b) >= STIRLING_CUTOFF {
        return Ok(ln_gamma_ratio_stirling(x, a, b).exp());
    }
    let (ln_num, s_num) = ln_gamma_signed(x + a)?;
    let (ln_den, s_den) = ln_gamma_signed(x + b)?;
    Ok(s_num * s_den * (ln_num - ln_den).exp())
}

const STIRLING_CUTOFF: f64 = 30.0;

/// `ln Γ(x+a) - ln Γ(x+b)` from the difference of two Stirling series. Taking
/// the difference term by term keeps full relative precision where subtracting
/// two `ln Γ` values of size `x ln x` would not.
fn ln_gamma_ratio_stirling(x: f64, a: f64, b: f64) -> f64 {
    // B_{2k} / (2k (2k-1))
    const SERIES: [f64; 5] = [1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0];
    let (za, zb) = (x + a, x + b);
    let main = (a - b) * x.ln() + (za - 0.5) * (a / x).ln_1p() - (zb - 0.5) * (b / x).ln_1p() - (a - b);
    let (ia, ib) = (za.recip(), zb.recip());
    let (ia2, ib2) = (ia * ia, ib * ib);
    let (mut pa, mut pb) = (ia, ib);
    let mut corr = 0.0;
    for c in SERIES {
        corr += c * (pa - pb);
        pa *= ia2;
        pb *= ib2;
    }
    main + corr
}

/// `a_n = prod_{j=1}^{n-1} (1 + alpha/j)` as an exact rational.
pub fn a_n(params: &ErwParams, n: u64) -> BigRational {
    assert!(n >= 1, "a_n is defined for n >= 1");
    let alpha = params.alpha();
    let (a, b) = (alpha.numer(), alpha.denom());
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for j in 1..n {
        let jb = b * BigInt::from(j);
        num *= &jb + a;
        den *= jb;
    }
    BigRational::new(num, den)
}

/// `a_n` in floating point via `Γ(n+α) / (Γ(n) Γ(1+α))`; valid for every `n`.
pub fn a_n_f64(alpha: f64, n: u64) -> f64 {
    assert!(n >= 1, "a_n is defined for n >= 1");
    if n == 1 {
        return 1.0;
    }
    // n + alpha > 0 whenever n >= 2 and alpha > -1
    gamma_ratio(alpha, 0.0, n).expect("n + alpha is positive") * reciprocal_gamma(1.0 + alpha)
}

/// The singular-index offset `j0(δ)` and limiting constant `A_δ` with
/// `prod_{j=j0+1}^{n-1} (1 + δ/j) ~ A_δ n^δ`.
pub fn j0_and_a(delta: &BigRational) -> (u64, f64) {
    if let Some(k) = negative_integer(delta) {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        (k, fact)
    } else {
        (0, reciprocal_gamma(1.0 + delta.to_f64().expect("finite delta")))
    }
}

/// `Some(k)` when `delta = -k` for a positive integer `k`.
pub(crate) fn negative_integer(delta: &BigRational) -> Option<u64> {
    if delta.is_integer() && delta.is_negative() {
        (-delta.to_integer()).to_u64()
    } else {
        None
    }
}

/// `prod_{j=j0(δ)+1}^{n-1} (1 + δ/j)` in floating point, through log-gamma.
pub fn shifted_product(delta: &BigRational, n: u64) -> f64 {
    let d = delta.to_f64().expect("finite delta");
    match negative_integer(delta) {
        Some(k) => {
            if n <= k + 1 {
                return 1.0;
            }
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            gamma_ratio(d, 0.0, n).expect("n - k is positive") * fact
        }
        None => {
            if n <= 1 {
                return 1.0;
            }
            match gamma_ratio(d, 0.0, n) {
                Ok(r) => r * reciprocal_gamma(1.0 + d),
                // n + δ hit a pole below the singular index; the product has a zero factor
                Err(_) => 0.0,
            }
        }
    }
}

/// `k`-th moment of the standard normal: `0` for odd `k`, `(k-1)!!` for even `k`.
pub fn mu_k(k: u32) -> u64 {
    assert!(k >= 1, "moment order starts at 1");
    if k % 2 == 1 {
        0
    } else {
        double_factorial_odd(k / 2)
    }
}

/// `(2m-1)!! = 1 * 3 * ... * (2m-1)`; equals `1` for `m = 0`.
pub fn double_factorial_odd(m: u32) -> u64 {
    (1..=m as u64).map(|j| 2 * j - 1).product()
}

/// `c(α) = -2(2α² + 1) / (3(1 - 4α))`, the even-order coefficient for `α <= 0`.
pub fn c_alpha(alpha: &BigRational) -> Result<BigRational> {
    if alpha.is_positive() {
        return Err(ErwError::Domain(format!("c(alpha) is used only for -1 < alpha <= 0, got {alpha}")));
    }
    let two = ratio(2, 1);
    let num = -&two * (&two * alpha * alpha + BigRational::one());
    let den = ratio(3, 1) * (BigRational::one() - ratio(4, 1) * alpha);
    Ok(num / den)
}

/// Exact binomial coefficients `C(n, k)` for `0 <= k <= n <= max_n`.
#[derive(Clone, Debug)]
pub struct BinomialTable {
    rows: Vec<Vec<BigInt>>,
}

impl BinomialTable {
    pub fn new(max_n: usize) -> Self {
        let mut rows: Vec<Vec<BigInt>> = Vec::with_capacity(max_n + 1);
        for n in 0..=max_n {
            let mut row = vec![BigInt::one(); n + 1];
            for k in 1..n {
                row[k] = &rows[n - 1][k - 1] + &rows[n - 1][k];
            }
            rows.push(row);
        }
        Self { rows }
    }

    /// `C(n, k)`, zero outside `0 <= k <= n`.
    pub fn get(&self, n: usize, k: i64) -> BigInt {
        if k < 0 || k as usize > n {
            BigInt::zero()
        } else {
            self.rows[n][k as usize].clone()
        }
    }

    pub fn get_f64(&self, n: usize, k: i64) -> f64 {
        self.get(n, k).to_f64().expect("small binomial")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn reciprocal_gamma_values() {
        assert_eq!(reciprocal_gamma(0.0), 0.0);
        assert_eq!(reciprocal_gamma(-3.0), 0.0);
        assert!(rel(reciprocal_gamma(1.0), 1.0) < 1e-15);
        // 1/sqrt(pi) from mpmath
        assert!(rel(reciprocal_gamma(0.5), 0.564_189_583_547_756_3) < 1e-14);
        for s in [0.1, 0.5, 1.5, 3.7, -0.5, -2.5] {
            assert!(rel(reciprocal_gamma(s) * sg::gamma(s), 1.0) < 1e-12, "s = {s}");
        }
    }

    #[test]
    fn gamma_ratio_values() {
        assert_eq!(gamma_ratio(0.3, 0.3, 10).unwrap(), 1.0);
        assert!(rel(gamma_ratio(1.0, 0.0, 7).unwrap(), 7.0) < 1e-13);
        let r = gamma_ratio(0.5, 0.0, 1_000_000).unwrap();
        assert!(rel(r, 1e3) < 1e-4);
        // mpmath: Γ(1e6 + 1/2) / Γ(1e6) / 1e3
        assert!(rel(r / 1e3, 0.999_999_875_000_007_8) < 1e-10);
        assert!(gamma_ratio(-2.0, 0.0, 2).is_err());
        // negative non-integer argument: Γ(-0.5) / Γ(1) = -2 sqrt(pi)
        let neg = gamma_ratio(-1.5, 0.0, 1).unwrap();
        assert!(rel(neg, -2.0 * PI.sqrt()) < 1e-13);
    }

    #[test]
    fn a_n_exact_values() {
        let p = ErwParams::from_ratios(1, 4, 0, 1).unwrap();
        assert_eq!(a_n(&p, 1), BigRational::one());
        assert_eq!(a_n(&p, 2), ratio(5, 4));
        let half = ErwParams::from_ratios(1, 2, 0, 1).unwrap();
        assert_eq!(a_n(&half, 3), ratio(15, 8));
        assert!(rel(a_n_f64(0.5, 3), 15.0 / 8.0) < 1e-14);
        let exact = a_n(&p, 200).to_f64().unwrap();
        assert!(rel(a_n_f64(0.25, 200), exact) < 1e-12);
    }

    #[test]
    fn a_n_asymptote() {
        for (num, den) in [(-1, 2), (1, 4), (1, 2)] {
            let alpha = num as f64 / den as f64;
            let n = 1_000_000u64;
            let v = a_n_f64(alpha, n) * sg::gamma(1.0 + alpha) / (n as f64).powf(alpha);
            assert!((v - 1.0).abs() < 1e-3, "alpha = {alpha}");
        }
    }

    #[test]
    fn j0_and_a_values() {
        assert_eq!(j0_and_a(&ratio(-2, 1)), (2, 2.0));
        assert_eq!(j0_and_a(&ratio(0, 1)), (0, 1.0));
        let (j0, a) = j0_and_a(&ratio(2, 5));
        assert_eq!(j0, 0);
        // mpmath: 1/Γ(7/5)
        assert!(rel(a, 1.127_060_497_986_027_7) < 1e-13);
    }

    #[test]
    fn shifted_product_matches_direct_loop_and_limit() {
        for (num, den) in [(-5, 2), (-2, 1), (-1, 2), (0, 1), (1, 3), (1, 2)] {
            let delta = ratio(num, den);
            let d = num as f64 / den as f64;
            let (j0, a) = j0_and_a(&delta);
            // direct product oracle at moderate n
            let n = 500u64;
            let direct: f64 = (j0 + 1..n).map(|j| 1.0 + d / j as f64).product();
            assert!(rel(shifted_product(&delta, n), direct) < 1e-11, "delta = {delta}");
            let big = 1_000_000u64;
            let v = shifted_product(&delta, big) / (a * (big as f64).powf(d));
            assert!((v - 1.0).abs() < 1e-3, "delta = {delta}");
        }
    }

    #[test]
    fn normal_moments() {
        assert_eq!(mu_k(5), 0);
        assert_eq!(mu_k(4), 3);
        assert_eq!(mu_k(6), 15);
        assert_eq!(mu_k(12), 10395);
    }

    #[test]
    fn c_alpha_values() {
        assert_eq!(c_alpha(&ratio(0, 1)).unwrap(), ratio(-2, 3));
        assert_eq!(c_alpha(&ratio(-1, 2)).unwrap(), ratio(-1, 3));
        assert_eq!(c_alpha(&ratio(-1, 1)).unwrap(), ratio(-2, 5));
        assert!(c_alpha(&ratio(-1, 2)).unwrap() > c_alpha(&ratio(-1, 1)).unwrap());
        assert!(c_alpha(&ratio(1, 4)).is_err());
        assert!(c_alpha(&ratio(1, 10)).is_err());
    }

    #[test]
    fn c_alpha_peaks_at_minus_half() {
        let best =
            (0..100).map(|i| ratio(-99 + i, 100)).max_by(|a, b| c_alpha(a).unwrap().cmp(&c_alpha(b).unwrap())).unwrap();
        assert_eq!(best, ratio(-1, 2));
    }

    #[test]
    fn binomials() {
        let t = BinomialTable::new(24);
        assert_eq!(t.get(24, 12), BigInt::from(2_704_156u64));
        assert_eq!(t.get(5, -1), BigInt::zero());
        assert_eq!(t.get(5, 6), BigInt::zero());
    }
}

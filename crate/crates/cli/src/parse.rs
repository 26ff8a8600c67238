//! Argument literals: exact rationals, counts like `10^6`, comma lists.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// A rational read from the command line, plus a warning when it came from a decimal
/// that binary floating point cannot hold exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalArg {
    pub value: BigRational,
    pub warning: Option<String>,
}

/// Accepts `p/q`, integers and plain decimals (`0.25`, `-.5`). Decimals are read exactly.
pub fn parse_rational(text: &str) -> Result<RationalArg, String> {
    let t = text.trim();
    if let Some((num, den)) = t.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| format!("invalid numerator in {text:?}"))?;
        let den: BigInt = den.trim().parse().map_err(|_| format!("invalid denominator in {text:?}"))?;
        if den.is_zero() {
            return Err(format!("zero denominator in {text:?}"));
        }
        return Ok(RationalArg { value: BigRational::new(num, den), warning: None });
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    let digits_ok = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    if (int_part.is_empty() && frac_part.is_empty()) || !digits_ok(int_part) || !digits_ok(frac_part) {
        return Err(format!("{text:?} is not a rational: use p/q or a decimal"));
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: BigInt = digits.trim_start_matches('0').parse().unwrap_or_default();
    if neg {
        num = -num;
    }
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    let value = BigRational::new(num, den);
    let warning = (!is_dyadic(&value))
        .then(|| format!("{text} has no exact binary floating-point form; using the exact rational {value}"));
    Ok(RationalArg { value, warning })
}

fn is_dyadic(r: &BigRational) -> bool {
    let mut d = r.denom().clone();
    let two = BigInt::from(2);
    while (&d % &two).is_zero() {
        d /= &two;
    }
    d.is_one()
}

/// Accepts `1000`, `1_000`, `10^3`, `1e3`.
pub fn parse_count(text: &str) -> Result<u64, String> {
    let t: String = text.trim().chars().filter(|&c| c != '_').collect();
    let bad = || format!("{text:?} is not a nonnegative integer (forms: 1000, 10^3, 1e3)");
    if let Some((base, exp)) = t.split_once('^') {
        let b: u64 = base.parse().map_err(|_| bad())?;
        let e: u32 = exp.parse().map_err(|_| bad())?;
        return b.checked_pow(e).ok_or_else(bad);
    }
    if let Some((mant, exp)) = t.split_once(['e', 'E']) {
        let m: u64 = mant.parse().map_err(|_| bad())?;
        let e: u32 = exp.parse().map_err(|_| bad())?;
        return 10u64.checked_pow(e).and_then(|p| p.checked_mul(m)).ok_or_else(bad);
    }
    t.parse().map_err(|_| bad())
}

pub fn parse_list<T>(text: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    text.split(',').filter(|s| !s.trim().is_empty()).map(|s| item(s.trim())).collect()
}

pub fn parse_orders(text: &str) -> Result<Vec<u32>, String> {
    parse_list(text, |s| s.parse::<u32>().map_err(|_| format!("invalid order {s:?}")))
}

pub fn parse_counts(text: &str) -> Result<Vec<u64>, String> {
    parse_list(text, parse_count)
}

/// `"num/den"`, or just the integer when the denominator is 1.
pub fn render_rational(r: &BigRational) -> String {
    r.to_string()
}

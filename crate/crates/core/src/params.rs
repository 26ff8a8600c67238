//! Model parameters of the elephant random walk.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{ErwError, Result};

/// Memory parameter `alpha = 2p - 1` and first-step bias `beta = 2q - 1`,
/// both carried as exact rationals.
///
/// `-1 < alpha < 1` and `-1 <= beta <= 1` hold for every constructed value.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ErwParams {
    alpha: BigRational,
    beta: BigRational,
}

/// Which of the three asymptotic regimes `alpha` falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeTag {
    /// `alpha < 1/2`: variance grows like `n / (1 - 2 alpha)`.
    Diffusive,
    /// `alpha = 1/2`: variance grows like `n log n`.
    Critical,
    /// `alpha > 1/2`.
    Superdiffusive,
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegimeTag::Diffusive => "diffusive",
            RegimeTag::Critical => "critical",
            RegimeTag::Superdiffusive => "superdiffusive",
        };
        f.write_str(s)
    }
}

pub(crate) fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl ErwParams {
    pub fn new(alpha: BigRational, beta: BigRational) -> Result<Self> {
        let one = BigRational::one();
        if alpha <= -one.clone() || alpha >= one {
            return Err(ErwError::Domain(format!("alpha must lie in (-1,1), got {alpha}")));
        }
        if beta < -one.clone() || beta > one {
            return Err(ErwError::Domain(format!("beta must lie in [-1,1], got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    /// Convenience constructor from `alpha = an/ad`, `beta = bn/bd`.
    pub fn from_ratios(an: i64, ad: i64, bn: i64, bd: i64) -> Result<Self> {
        if ad == 0 || bd == 0 {
            return Err(ErwError::Domain("zero denominator".into()));
        }
        Self::new(ratio(an, ad), ratio(bn, bd))
    }

    /// Builds parameters from the memory probability `p` and first-step probability `q`.
    pub fn from_probabilities(p: BigRational, q: BigRational) -> Result<Self> {
        let two = BigRational::from_integer(BigInt::from(2));
        let one = BigRational::one();
        Self::new(&two * p - &one, two * q - one)
    }

    pub fn alpha(&self) -> &BigRational {
        &self.alpha
    }

    pub fn beta(&self) -> &BigRational {
        &self.beta
    }

    /// `p = (1 + alpha) / 2`, the probability of repeating the remembered step.
    pub fn p(&self) -> BigRational {
        (BigRational::one() + &self.alpha) / BigInt::from(2)
    }

    /// `q = (1 + beta) / 2`, the probability that the first step is `+1`.
    pub fn q(&self) -> BigRational {
        (BigRational::one() + &self.beta) / BigInt::from(2)
    }

    pub fn alpha_f64(&self) -> f64 {
        self.alpha.to_f64().expect("alpha is bounded")
    }

    pub fn beta_f64(&self) -> f64 {
        self.beta.to_f64().expect("beta is bounded")
    }

    pub fn regime(&self) -> RegimeTag {
        let half = ratio(1, 2);
        match self.alpha.cmp(&half) {
            std::cmp::Ordering::Less => RegimeTag::Diffusive,
            std::cmp::Ordering::Equal => RegimeTag::Critical,
            std::cmp::Ordering::Greater => RegimeTag::Superdiffusive,
        }
    }

    pub fn is_critical(&self) -> bool {
        self.regime() == RegimeTag::Critical
    }

    /// True when the first step is unbiased, so every odd moment vanishes.
    pub fn is_symmetric(&self) -> bool {
        self.beta.is_zero()
    }

    pub fn alpha_is(&self, num: i64, den: i64) -> bool {
        self.alpha == ratio(num, den)
    }

    pub(crate) fn alpha_nonpositive(&self) -> bool {
        !self.alpha.is_positive()
    }
}

impl fmt::Debug for ErwParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ErwParams {{ alpha: {}, beta: {} }}", self.alpha, self.beta)
    }
}

impl fmt::Display for ErwParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "alpha={}, beta={}", self.alpha, self.beta)
    }
}

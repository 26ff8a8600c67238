//! Exact moments, moment central-limit rates and Monte Carlo verification for
//! the elephant random walk.
//!
//! The walk starts with `X_1 = +1` with probability `q = (1+β)/2`; afterwards
//! step `n+1` is `+1` with probability `(1 + α S_n / n) / 2`.
//!
//! * [`params`] and [`special`]: model parameters, gamma utilities, constants.
//! * [`moments`]: exact rational moments `E[S_n^k]` and a path-enumeration oracle.
//! * [`deviations`]: normalized moment deviations computed by their own recursions.
//! * [`asymptotics`]: closed-form rate predictions and bound shapes.
//! * [`sim`]: reproducible parallel Monte Carlo.
//! * [`rates`]: log–log exponent fitting and the α-crossover scan.

pub mod asymptotics;
pub mod deviations;
pub mod error;
pub mod grid;
pub mod moments;
pub mod params;
pub mod rates;
pub mod sim;
pub mod special;
pub mod summation;

pub use error::{ErwError, Result};
pub use params::{ErwParams, RegimeTag};

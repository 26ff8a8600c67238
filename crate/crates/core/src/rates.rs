//! Empirical decay exponents from deviation series and the α-crossover table.

use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{predict_rate, Decay};
use crate::deviations::{even_deviations, fmt_f64, odd_deviations, DeviationSeries};
use crate::error::{ErwError, Result};
use crate::grid::{geometric_grid, POINTS_PER_DECADE};
use crate::params::{ratio, ErwParams};

/// Fewest grid points a fit accepts.
pub const MIN_FIT_POINTS: usize = 10;
pub const DEFAULT_N_MAX: u64 = 1_000_000;
/// `(numerator, denominator)` pairs of the default α grid.
pub const DEFAULT_ALPHA_GRID: [(i64, i64); 9] =
    [(-9, 10), (-3, 4), (-1, 2), (-1, 4), (-1, 10), (0, 1), (1, 10), (1, 4), (2, 5)];
pub const DEFAULT_ORDERS: [u32; 6] = [1, 2, 3, 4, 5, 6];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `|value| ≈ c n^(-γ)`.
    Power,
    /// `|value| ≈ c (log n)^(-γ)`.
    LogPower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub exponent: f64,
    /// Signed: carries the sign of the fitted values.
    pub coefficient: f64,
    pub n_lo: u64,
    pub n_hi: u64,
    pub points: usize,
    pub residual_rms: f64,
}

/// `[n_max/100, n_max]`.
pub fn default_window(n_max: u64) -> (u64, u64) {
    ((n_max / 100).max(1), n_max)
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (a, b, (ss / k).sqrt())
}

fn fit_points<T>(points: &[(u64, f64)], window: (u64, u64), kind: FitKind, transform: T) -> Result<FitResult>
where
    T: Fn(u64) -> f64,
{
    let (lo, hi) = window;
    if lo >= hi {
        return Err(ErwError::Contract(format!("fit window [{lo}, {hi}] is empty")));
    }
    let inside: Vec<(u64, f64)> = points.iter().copied().filter(|&(n, _)| n >= lo && n <= hi).collect();
    if inside.len() < MIN_FIT_POINTS {
        return Err(ErwError::Contract(format!(
            "fit window [{lo}, {hi}] holds {} points; at least {MIN_FIT_POINTS} are needed",
            inside.len()
        )));
    }
    let sign = inside[0].1.signum();
    if inside.iter().any(|&(_, v)| v == 0.0 || !v.is_finite() || v.signum() != sign) {
        return Err(ErwError::Degenerate(format!("values vanish or change sign inside [{lo}, {hi}]")));
    }
    let xs: Vec<f64> = inside.iter().map(|&(n, _)| transform(n)).collect();
    let ys: Vec<f64> = inside.iter().map(|&(_, v)| v.abs().ln()).collect();
    let (a, b, rms) = least_squares(&xs, &ys);
    Ok(FitResult {
        kind,
        exponent: -b,
        coefficient: sign * a.exp(),
        n_lo: inside[0].0,
        n_hi: inside[inside.len() - 1].0,
        points: inside.len(),
        residual_rms: rms,
    })
}

/// Fits `|value| = c n^(-γ)` on `(n, value)` pairs inside `window`.
pub fn fit_power_points(points: &[(u64, f64)], window: (u64, u64)) -> Result<FitResult> {
    fit_points(points, window, FitKind::Power, |n| (n as f64).ln())
}

/// Fits `|value| = c (log n)^(-γ)`; needs `n >= 2` throughout the window.
pub fn fit_log_points(points: &[(u64, f64)], window: (u64, u64)) -> Result<FitResult> {
    if window.0 < 2 {
        return Err(ErwError::Contract("log-rate windows must start at n >= 2".into()));
    }
    fit_points(points, window, FitKind::LogPower, |n| (n as f64).ln().ln())
}

pub fn fit_power_exponent(series: &DeviationSeries, window: (u64, u64)) -> Result<FitResult> {
    fit_power_points(&series.points().collect::<Vec<_>>(), window)
}

/// Log-power fit for a series at `α = 1/2`.
pub fn fit_log_rate(series: &DeviationSeries, window: (u64, u64)) -> Result<FitResult> {
    if !series.params.is_critical() {
        return Err(ErwError::Domain("log-rate fits apply to alpha = 1/2".into()));
    }
    fit_log_points(&series.points().collect::<Vec<_>>(), window)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    pub alpha_grid: Vec<BigRational>,
    pub orders: Vec<u32>,
    pub n_max: u64,
    pub window: Option<(u64, u64)>,
    /// Used for odd orders; even deviations do not depend on it.
    pub beta: BigRational,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            alpha_grid: DEFAULT_ALPHA_GRID.iter().map(|&(a, b)| ratio(a, b)).collect(),
            orders: DEFAULT_ORDERS.to_vec(),
            n_max: DEFAULT_N_MAX,
            window: None,
            beta: ratio(1, 1),
        }
    }
}

impl ScanConfig {
    pub fn window(&self) -> (u64, u64) {
        self.window.unwrap_or_else(|| default_window(self.n_max))
    }
}

/// One `(α, order)` cell of the crossover table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub alpha: f64,
    pub order: u32,
    pub gamma_hat: Option<f64>,
    pub gamma_predicted: Option<f64>,
    pub coefficient_hat: Option<f64>,
    pub coefficient_predicted: f64,
    /// Empty, `identically_zero`, `log_rate`, or `fit_refused: <reason>`.
    pub flags: String,
    pub fit: Option<FitResult>,
}

impl ScanCell {
    pub fn is_degenerate(&self) -> bool {
        self.flags == "identically_zero"
    }
}

fn scan_alpha(alpha: &BigRational, cfg: &ScanConfig) -> Result<Vec<ScanCell>> {
    let params = ErwParams::new(alpha.clone(), cfg.beta.clone())?;
    let window = cfg.window();
    let start = if params.is_critical() { window.0.max(2) } else { window.0 };
    let grid = geometric_grid(start, cfg.n_max.max(window.1), POINTS_PER_DECADE)?;
    let max_even = cfg.orders.iter().filter(|k| *k % 2 == 0).max().map(|k| k / 2);
    let max_odd = cfg.orders.iter().filter(|k| *k % 2 == 1).max().map(|k| k.div_ceil(2));
    let mut series: Vec<DeviationSeries> = Vec::new();
    if let Some(m) = max_even {
        series.extend(even_deviations(&params, m, &grid)?);
    }
    if let Some(m) = max_odd {
        series.extend(odd_deviations(&params, m, &grid)?);
    }
    cfg.orders
        .iter()
        .map(|&k| {
            let pred = predict_rate(&params, k)?;
            let s = series.iter().find(|s| s.order == k).expect("order computed");
            let mut cell = ScanCell {
                alpha: alpha.to_f64().expect("bounded"),
                order: k,
                gamma_hat: None,
                gamma_predicted: (!pred.identically_zero).then(|| pred.decay.exponent()),
                coefficient_hat: None,
                coefficient_predicted: pred.coefficient,
                flags: String::new(),
                fit: None,
            };
            if pred.identically_zero {
                cell.flags = "identically_zero".into();
                return Ok(cell);
            }
            let fit = match pred.decay {
                Decay::PowerOfN(_) => fit_power_exponent(s, window),
                Decay::PowerOfLogN(_) => {
                    cell.flags = "log_rate".into();
                    fit_log_rate(s, window)
                }
            };
            match fit {
                Ok(f) => {
                    cell.gamma_hat = Some(f.exponent);
                    cell.coefficient_hat = Some(f.coefficient);
                    cell.fit = Some(f);
                }
                Err(e) => cell.flags = format!("fit_refused: {e}"),
            }
            Ok(cell)
        })
        .collect()
}

/// Fits every `(α, order)` cell in parallel over `α`; rows come out α-major in grid order.
pub fn crossover_scan(cfg: &ScanConfig) -> Result<Vec<ScanCell>> {
    if cfg.orders.is_empty() || cfg.orders.iter().any(|&k| k == 0 || k > 12) {
        return Err(ErwError::Contract("orders must lie in 1..=12".into()));
    }
    let half = ratio(1, 2);
    if cfg.alpha_grid.iter().any(|a| *a > half || *a <= ratio(-1, 1)) {
        return Err(ErwError::OutOfScope("the scan covers -1 < alpha <= 1/2".into()));
    }
    let per_alpha: Vec<Vec<ScanCell>> = cfg.alpha_grid.par_iter().map(|a| scan_alpha(a, cfg)).collect::<Result<_>>()?;
    Ok(per_alpha.concat())
}

pub const SCAN_CSV_HEADER: &str = "alpha,order,gamma_hat,gamma_predicted,coefficient_hat,coefficient_predicted,flags";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Crossover table as CSV; flags containing commas are quoted.
pub fn scan_csv(cells: &[ScanCell]) -> String {
    let mut out = String::from(SCAN_CSV_HEADER);
    out.push('\n');
    for c in cells {
        let flags = if c.flags.contains([',', '"']) {
            format!("\"{}\"", c.flags.replace('"', "\"\""))
        } else {
            c.flags.clone()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(c.alpha),
            c.order,
            opt(c.gamma_hat),
            opt(c.gamma_predicted),
            opt(c.coefficient_hat),
            fmt_f64(c.coefficient_predicted),
            flags
        );
    }
    out
}

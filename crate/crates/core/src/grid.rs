//! Sampling grids over time.

use crate::error::{ErwError, Result};

/// Default density of [`geometric_grid`].
pub const POINTS_PER_DECADE: u32 = 40;

/// Strictly increasing integer times from `n_min` to `n_max` (both included),
/// roughly evenly spaced in `log n`. Rounding collisions at small `n` are dropped.
pub fn geometric_grid(n_min: u64, n_max: u64, per_decade: u32) -> Result<Vec<u64>> {
    if n_min == 0 || n_min > n_max || per_decade == 0 {
        return Err(ErwError::Contract(format!(
            "invalid grid request [{n_min}, {n_max}] with {per_decade} points per decade"
        )));
    }
    let lo = (n_min as f64).log10();
    let hi = (n_max as f64).log10();
    let steps = ((hi - lo) * per_decade as f64).ceil() as u64;
    let mut out: Vec<u64> = Vec::with_capacity(steps as usize + 2);
    out.push(n_min);
    for i in 1..=steps {
        let t = 10f64.powf(lo + i as f64 / per_decade as f64).round() as u64;
        let t = t.clamp(n_min, n_max);
        if t > *out.last().unwrap() {
            out.push(t);
        }
    }
    if *out.last().unwrap() != n_max {
        out.push(n_max);
    }
    Ok(out)
}

/// Checks that a caller-supplied grid is strictly increasing and starts at `min_n` or later.
pub fn validate_grid(grid: &[u64], min_n: u64) -> Result<()> {
    if grid.is_empty() {
        return Err(ErwError::Contract("empty grid".into()));
    }
    if grid[0] < min_n {
        return Err(ErwError::Contract(format!("grid starts at {} but must start at n >= {min_n}", grid[0])));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ErwError::Contract("grid must be strictly increasing".into()));
    }
    Ok(())
}

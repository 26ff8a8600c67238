//! Normalized moment deviations computed by their own recursions.
//!
//! For `α < 1/2` the even deviation is
//! `M_n^(2m) = E[(S_n / sqrt(n/(1-2α)))^(2m)] / (2m-1)!! - 1`, which satisfies the
//! first-order system `M_{n+1} = f_n + h_n + g_n M_n`. At `α = 1/2` the normalization is
//! `sqrt(n log n)` and the moments are tracked through `L_n = E[S_n^(2m)] / C(n+m-1, n-1)`.
//! Either way the deviation is never formed as a difference of two huge numbers.

use std::fmt::Write as _;
use std::io;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{ErwError, Result};
use crate::grid::validate_grid;
use crate::moments::{gamma_quotient, FloatMoments};
use crate::params::{ErwParams, RegimeTag};
use crate::special::{double_factorial_odd, negative_integer, BinomialTable};
use crate::summation::NeumaierSum;

/// Which normalization a [`DeviationSeries`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Divide `S_n` by `sqrt(n / (1 - 2α))`.
    Subcritical,
    /// Divide `S_n` by `sqrt(n log n)`.
    Critical,
}

impl Normalization {
    pub fn for_params(params: &ErwParams) -> Result<Self> {
        match params.regime() {
            RegimeTag::Diffusive => Ok(Normalization::Subcritical),
            RegimeTag::Critical => Ok(Normalization::Critical),
            RegimeTag::Superdiffusive => {
                Err(ErwError::OutOfScope("deviations are only defined for alpha <= 1/2".into()))
            }
        }
    }

    /// Variance scale `σ_n^2`: `n / (1 - 2α)` or `n log n`.
    pub fn scale(self, alpha: f64, n: u64) -> f64 {
        let x = n as f64;
        match self {
            Normalization::Subcritical => x / (1.0 - 2.0 * alpha),
            Normalization::Critical => x * x.ln(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Subcritical => "subcritical",
            Normalization::Critical => "critical",
        }
    }
}

/// Deviation values of one order sampled on a time grid.
///
/// Even orders hold `E[(S_n/σ_n)^k] / (k-1)!! - 1`; odd orders hold `E[(S_n/σ_n)^k]`
/// (the normal moment being zero).
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationSeries {
    pub params: ErwParams,
    pub order: u32,
    pub grid: Vec<u64>,
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl DeviationSeries {
    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.grid.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at grid time `n`, if sampled.
    pub fn at(&self, n: u64) -> Option<f64> {
        self.grid.binary_search(&n).ok().map(|i| self.values[i])
    }

    pub fn last(&self) -> (u64, f64) {
        (*self.grid.last().unwrap(), *self.values.last().unwrap())
    }

    pub const CSV_HEADER: &'static str = "n,order,value,normalization";

    /// CSV rows (without header): `n,order,value,normalization`.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (n, v) in self.points() {
            let _ = writeln!(out, "{n},{},{},{}", self.order, fmt_f64(v), self.normalization.as_str());
        }
        out
    }

    pub fn write_csv<W: io::Write>(series: &[DeviationSeries], mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in series {
            w.write_all(s.csv_rows().as_bytes())?;
        }
        Ok(())
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// `M_n^(2) = -Γ(n+2α) / (Γ(n+1) Γ(2α))`, exactly zero for `α = 0`, and for
/// `α = -1/2` once `n >= 2`.
pub fn deviation_second_exact(params: &ErwParams, n: u64) -> Result<f64> {
    if params.regime() != RegimeTag::Diffusive {
        return Err(ErwError::Domain("the closed second-moment deviation needs alpha < 1/2".into()));
    }
    if n == 0 {
        return Err(ErwError::Contract("n must be at least 1".into()));
    }
    let two_alpha = params.alpha() * BigInt::from(2);
    Ok(-gamma_quotient(2.0 * params.alpha_f64(), &two_alpha, n) / n as f64)
}

/// `s_n^(2l) / s_{n+1}^(2m)` with `s_n^(2l) = (n/(1-2α))^l (2l-1)!!` and `s^(0) = 1`.
fn scale_ratio(one_minus_2a: f64, l: u32, m: u32, n: f64) -> f64 {
    let df = double_factorial_odd(l) as f64 / double_factorial_odd(m) as f64;
    let x = n / (n + 1.0);
    df * one_minus_2a.powi((m - l) as i32) * x.powi(l as i32) * (n + 1.0).powi(l as i32 - m as i32)
}

/// Coefficients of `M_{n+1}^(2m) = f_n + h_n + g_n M_n^(2m)` at one step.
///
/// `f_n = Σ_{l<m} weights[l-1] * M_n^(2l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecursionCoefficients {
    pub n: u64,
    pub m: u32,
    pub weights: Vec<f64>,
    pub g: f64,
    pub h: f64,
}

impl RecursionCoefficients {
    pub fn f(&self, lower: &[f64]) -> f64 {
        self.weights.iter().zip(lower).map(|(w, m)| w * m).sum()
    }
}

/// Step coefficients for order `2m` at time `n` (subcritical normalization).
///
/// `h_n` is evaluated from its definition after cancelling the two leading
/// terms algebraically: `(1 + 2mα/n) n^m + m(1-2α) n^(m-1) = n^m + m n^(m-1)`,
/// leaving `-Σ_{i>=2} C(m,i) n^(m-i) / (n+1)^m` plus the lower-order terms.
pub fn recursion_coefficients(alpha: f64, m: u32, n: u64, binom: &BinomialTable) -> RecursionCoefficients {
    let x = n as f64;
    let one_minus_2a = 1.0 - 2.0 * alpha;
    let r = alpha / x;
    let two_m = 2 * m as usize;
    let coef = |l: u32| binom.get_f64(two_m, 2 * l as i64) + r * binom.get_f64(two_m, 2 * l as i64 - 1);
    let weights = (1..m).map(|l| coef(l) * scale_ratio(one_minus_2a, l, m, x)).collect();
    let g = (x / (x + 1.0)).powi(m as i32) * (1.0 + 2.0 * m as f64 * r);

    let mut h = NeumaierSum::new();
    let xp1 = x + 1.0;
    for i in 2..=m {
        let c = binom.get_f64(m as usize, i as i64);
        h.add(-c * (x / xp1).powi((m - i) as i32) / xp1.powi(i as i32));
    }
    if m >= 2 {
        h.add(r * binom.get_f64(two_m, two_m as i64 - 3) * scale_ratio(one_minus_2a, m - 1, m, x));
        for l in 0..=m - 2 {
            h.add(coef(l) * scale_ratio(one_minus_2a, l, m, x));
        }
    }
    RecursionCoefficients { n, m, weights, g, h: h.value() }
}

/// `h_n^(2m)` straight from its definition, in exact rationals. Test oracle for
/// the rearranged float form.
pub fn h_coefficient_exact(params: &ErwParams, m: u32, n: u64) -> BigRational {
    let binom = BinomialTable::new(2 * m as usize);
    let alpha = params.alpha();
    let one = BigRational::from_integer(BigInt::from(1));
    let one_minus_2a = &one - alpha * BigInt::from(2);
    let nn = BigRational::from_integer(BigInt::from(n));
    let s = |l: u32, t: &BigRational| -> BigRational {
        (t / &one_minus_2a).pow(l as i32) * BigInt::from(double_factorial_odd(l))
    };
    let s_next = s(m, &(&nn + &one));
    let mut acc = one.clone();
    for l in 1..=m {
        let c = BigRational::from_integer(binom.get(2 * m as usize, 2 * l as i64))
            + alpha / &nn * binom.get(2 * m as usize, 2 * l as i64 - 1);
        acc += c * s(l, &nn);
    }
    acc / s_next - one
}

/// Joint forward iteration of the even deviations `M^(2)`, …, `M^(2m)` for `α < 1/2`.
#[derive(Clone, Debug)]
pub struct SubcriticalEngine {
    alpha: f64,
    m: u32,
    n: u64,
    values: Vec<f64>,
    binom: BinomialTable,
}

impl SubcriticalEngine {
    pub fn new(params: &ErwParams, m: u32) -> Result<Self> {
        match params.regime() {
            RegimeTag::Diffusive => {}
            RegimeTag::Critical => return Err(ErwError::Contract("alpha = 1/2 uses the critical recursion".into())),
            RegimeTag::Superdiffusive => return Err(ErwError::OutOfScope("deviations need alpha <= 1/2".into())),
        }
        if m == 0 {
            return Err(ErwError::Contract("m must be at least 1".into()));
        }
        let alpha = params.alpha_f64();
        // S_1^2 = 1, so M_1^(2l) = (1-2α)^l / (2l-1)!! - 1
        let values = (1..=m).map(|l| initial_even_deviation(params, l)).collect();
        Ok(Self { alpha, m, n: 1, values, binom: BinomialTable::new(2 * m as usize) })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `M_n^(2l)` for `l = 1..=m`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step(&mut self) {
        let old = self.values.clone();
        for l in 1..=self.m {
            let c = recursion_coefficients(self.alpha, l, self.n, &self.binom);
            let idx = l as usize - 1;
            self.values[idx] = c.f(&old[..idx]) + c.h + c.g * old[idx];
        }
        self.n += 1;
    }

    pub fn advance_to(&mut self, n: u64) {
        while self.n < n {
            self.step();
        }
    }
}

fn initial_even_deviation(params: &ErwParams, l: u32) -> f64 {
    let one = BigRational::from_integer(BigInt::from(1));
    let base = &one - params.alpha() * BigInt::from(2);
    let v = base.pow(l as i32) / BigInt::from(double_factorial_odd(l)) - one;
    v.to_f64().expect("bounded")
}

fn series(
    params: &ErwParams,
    order: u32,
    grid: &[u64],
    values: Vec<f64>,
    normalization: Normalization,
) -> DeviationSeries {
    DeviationSeries { params: params.clone(), order, grid: grid.to_vec(), values, normalization }
}

/// Even deviations of orders `2, 4, …, 2m` on `grid` for `-1 < α < 1/2`.
pub fn even_deviations_subcritical(params: &ErwParams, m: u32, grid: &[u64]) -> Result<Vec<DeviationSeries>> {
    validate_grid(grid, 1)?;
    let mut engine = SubcriticalEngine::new(params, m)?;
    let mut samples = vec![Vec::with_capacity(grid.len()); m as usize];
    for &n in grid {
        engine.advance_to(n);
        for (l, s) in samples.iter_mut().enumerate() {
            s.push(engine.values()[l]);
        }
    }
    Ok(samples
        .into_iter()
        .enumerate()
        .map(|(l, v)| series(params, 2 * (l as u32 + 1), grid, v, Normalization::Subcritical))
        .collect())
}

/// The deviation `M^(2m)` for `-1 < α < 1/2` on `grid`; lower orders are computed jointly.
pub fn deviation_recursion_subcritical(params: &ErwParams, m: u32, grid: &[u64]) -> Result<DeviationSeries> {
    Ok(even_deviations_subcritical(params, m, grid)?.pop().expect("m >= 1"))
}

/// `M^(2m) = M_{j0+1} ḡ_n + F_n + H_n`: the homogeneous part, the part driven by
/// lower orders, and the part driven by the inhomogeneity `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubcriticalParts {
    pub m: u32,
    pub j0: u64,
    pub grid: Vec<u64>,
    pub homogeneous: Vec<f64>,
    pub f_part: Vec<f64>,
    pub h_part: Vec<f64>,
    /// `h_n^(2m)` at each grid point.
    pub h: Vec<f64>,
}

/// Splits `M^(2m)` into its three parts. The sums start after the singular index
/// `j0(2mα)`, where `g` vanishes.
pub fn subcritical_decomposition(params: &ErwParams, m: u32, grid: &[u64]) -> Result<SubcriticalParts> {
    let delta = params.alpha() * BigInt::from(2 * m);
    let j0 = negative_integer(&delta).unwrap_or(0);
    validate_grid(grid, j0 + 1)?;
    let mut engine = SubcriticalEngine::new(params, m)?;
    engine.advance_to(j0 + 1);
    let alpha = params.alpha_f64();
    let binom = BinomialTable::new(2 * m as usize);
    let idx = m as usize - 1;
    let start = engine.values()[idx];
    let (mut gbar, mut f_part, mut h_part) = (1.0, 0.0, 0.0);
    let mut out = SubcriticalParts {
        m,
        j0,
        grid: grid.to_vec(),
        homogeneous: Vec::with_capacity(grid.len()),
        f_part: Vec::with_capacity(grid.len()),
        h_part: Vec::with_capacity(grid.len()),
        h: Vec::with_capacity(grid.len()),
    };
    for &target in grid {
        while engine.n() < target {
            let n = engine.n();
            let c = recursion_coefficients(alpha, m, n, &binom);
            let f = c.f(&engine.values()[..idx]);
            f_part = f + c.g * f_part;
            h_part = c.h + c.g * h_part;
            gbar *= c.g;
            engine.step();
        }
        out.homogeneous.push(start * gbar);
        out.f_part.push(f_part);
        out.h_part.push(h_part);
        out.h.push(recursion_coefficients(alpha, m, target, &binom).h);
    }
    Ok(out)
}

/// Joint forward iteration of `L_n^(2l) = E[S_n^(2l)] / C(n+l-1, n-1)`, `l = 1..=m`,
/// at `α = 1/2`, together with the running sums behind `I`, `J`, `K` for order `2m`.
#[derive(Clone, Debug)]
pub struct CriticalEngine {
    m: u32,
    n: u64,
    l_values: Vec<NeumaierSum>,
    binom: BinomialTable,
    i_sum: NeumaierSum,
    j_sum: NeumaierSum,
    k_sum: NeumaierSum,
}

/// `C(n+l-1, n-1) = n (n+1) ⋯ (n+l-1) / l!`.
fn rising_binomial(n: u64, l: u32) -> f64 {
    let x = n as f64;
    (0..l).map(|i| (x + i as f64) / (i as f64 + 1.0)).product()
}

/// `t_n^(2l) = (n log n)^l (2l-1)!! / C(n+l-1, n-1)`.
pub fn critical_scale(n: u64, l: u32) -> f64 {
    let x = n as f64;
    let lg = x.ln();
    double_factorial_odd(l) as f64 * (0..l).map(|i| x * lg * (i as f64 + 1.0) / (x + i as f64)).product::<f64>()
}

impl CriticalEngine {
    pub fn new(params: &ErwParams, m: u32) -> Result<Self> {
        if !params.is_critical() {
            return Err(ErwError::Contract("the critical recursion needs alpha = 1/2".into()));
        }
        if m == 0 {
            return Err(ErwError::Contract("m must be at least 1".into()));
        }
        let mut l_values = vec![NeumaierSum::new(); m as usize];
        for v in &mut l_values {
            v.add(1.0);
        }
        let mut i_sum = NeumaierSum::new();
        i_sum.add(1.0);
        Ok(Self {
            m,
            n: 1,
            l_values,
            binom: BinomialTable::new(2 * m as usize),
            i_sum,
            j_sum: NeumaierSum::new(),
            k_sum: NeumaierSum::new(),
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `L_n^(2l)` for `l = 1..=m`.
    pub fn l_values(&self) -> Vec<f64> {
        self.l_values.iter().map(NeumaierSum::value).collect()
    }

    /// `M_n^(2l) = L_n^(2l) / t_n^(2l) - 1`; undefined at `n = 1`.
    pub fn deviation(&self, l: u32) -> f64 {
        self.l_values[l as usize - 1].value() / critical_scale(self.n, l) - 1.0
    }

    /// `(I_n, J_n, K_n)` for the top order `2m`.
    pub fn decomposition(&self) -> (f64, f64, f64) {
        let t = critical_scale(self.n, self.m);
        (self.i_sum.value() / t, self.j_sum.value() / t - 1.0, self.k_sum.value() / t)
    }

    pub fn step(&mut self) {
        let n = self.n;
        let x = n as f64;
        let l_old = self.l_values();
        let coef = |k: u32, l: u32| {
            self.binom.get_f64(2 * k as usize, 2 * l as i64)
                + self.binom.get_f64(2 * k as usize, 2 * l as i64 - 1) / (2.0 * x)
        };
        let mut increments = Vec::with_capacity(self.m as usize);
        for k in 1..=self.m {
            let inv = 1.0 / rising_binomial(n + 1, k);
            let mut inner = NeumaierSum::new();
            inner.add(1.0);
            for l in 1..k {
                inner.add(coef(k, l) * rising_binomial(n, l) * l_old[l as usize - 1]);
            }
            increments.push(inv * inner.value());
        }
        // sums behind I, J, K for the top order, at j = n
        let m = self.m;
        let inv_top = 1.0 / rising_binomial(n + 1, m);
        self.i_sum.add(inv_top);
        for l in 1..m {
            let c = coef(m, l) * inv_top * rising_binomial(n, l);
            let t = critical_scale(n, l);
            self.j_sum.add(c * t);
            self.k_sum.add(c * (l_old[l as usize - 1] - t));
        }
        for (v, inc) in self.l_values.iter_mut().zip(increments) {
            v.add(inc);
        }
        self.n += 1;
    }

    pub fn advance_to(&mut self, n: u64) {
        while self.n < n {
            self.step();
        }
    }
}

/// Critical-case output for order `2m`: the deviation and its `I + J + K` split.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalSeries {
    pub deviation: DeviationSeries,
    /// `L_n^(2m)` on the grid.
    pub l_values: Vec<f64>,
    pub i_part: Vec<f64>,
    pub j_part: Vec<f64>,
    pub k_part: Vec<f64>,
}

/// Even deviations at `α = 1/2`, for every order `2, …, 2m`, on a grid starting at `n >= 2`.
pub fn even_deviations_critical(params: &ErwParams, m: u32, grid: &[u64]) -> Result<Vec<DeviationSeries>> {
    validate_grid(grid, 2)?;
    let mut engine = CriticalEngine::new(params, m)?;
    let mut samples = vec![Vec::with_capacity(grid.len()); m as usize];
    for &n in grid {
        engine.advance_to(n);
        for (l, s) in samples.iter_mut().enumerate() {
            s.push(engine.deviation(l as u32 + 1));
        }
    }
    Ok(samples
        .into_iter()
        .enumerate()
        .map(|(l, v)| series(params, 2 * (l as u32 + 1), grid, v, Normalization::Critical))
        .collect())
}

/// `M^(2m)` at `α = 1/2` together with `L^(2m)` and the `I`, `J`, `K` parts.
pub fn deviation_recursion_critical(params: &ErwParams, m: u32, grid: &[u64]) -> Result<CriticalSeries> {
    validate_grid(grid, 2)?;
    let mut engine = CriticalEngine::new(params, m)?;
    let cap = grid.len();
    let (mut dev, mut ls, mut is, mut js, mut ks) = (
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
    );
    for &n in grid {
        engine.advance_to(n);
        dev.push(engine.deviation(m));
        ls.push(engine.l_values()[m as usize - 1]);
        let (i, j, k) = engine.decomposition();
        is.push(i);
        js.push(j);
        ks.push(k);
    }
    Ok(CriticalSeries {
        deviation: series(params, 2 * m, grid, dev, Normalization::Critical),
        l_values: ls,
        i_part: is,
        j_part: js,
        k_part: ks,
    })
}

/// Even deviations of orders `2..=2m` in whichever normalization `params` calls for.
pub fn even_deviations(params: &ErwParams, m: u32, grid: &[u64]) -> Result<Vec<DeviationSeries>> {
    match Normalization::for_params(params)? {
        Normalization::Subcritical => even_deviations_subcritical(params, m, grid),
        Normalization::Critical => even_deviations_critical(params, m, grid),
    }
}

/// Normalized odd moments `E[(S_n/σ_n)^(2l-1)]`, `l = 1..=m`, from the float moment path.
pub fn odd_deviations(params: &ErwParams, m: u32, grid: &[u64]) -> Result<Vec<DeviationSeries>> {
    let normalization = Normalization::for_params(params)?;
    let min_n = if normalization == Normalization::Critical { 2 } else { 1 };
    validate_grid(grid, min_n)?;
    if m == 0 {
        return Err(ErwError::Contract("m must be at least 1".into()));
    }
    let alpha = params.alpha_f64();
    let mut samples = vec![Vec::with_capacity(grid.len()); m as usize];
    if params.is_symmetric() {
        for s in &mut samples {
            s.resize(grid.len(), 0.0);
        }
    } else {
        let mut moments = FloatMoments::new(params, 2 * m - 1);
        for &n in grid {
            moments.advance_to(n);
            let sigma = normalization.scale(alpha, n).sqrt();
            for (l, s) in samples.iter_mut().enumerate() {
                let k = 2 * l as i32 + 1;
                s.push(moments.value(k as u32) / sigma.powi(k));
            }
        }
    }
    Ok(samples.into_iter().enumerate().map(|(l, v)| series(params, 2 * l as u32 + 1, grid, v, normalization)).collect())
}

/// Normalized odd moment of order `2m - 1`.
pub fn deviation_odd(params: &ErwParams, m: u32, grid: &[u64]) -> Result<DeviationSeries> {
    Ok(odd_deviations(params, m, grid)?.pop().expect("m >= 1"))
}

/// Deviation series of a single order `k` (odd or even) in the natural normalization.
pub fn deviation_series(params: &ErwParams, order: u32, grid: &[u64]) -> Result<DeviationSeries> {
    if order == 0 {
        return Err(ErwError::Contract("order must be at least 1".into()));
    }
    if order.is_multiple_of(2) {
        Ok(even_deviations(params, order / 2, grid)?.pop().expect("m >= 1"))
    } else {
        deviation_odd(params, order.div_ceil(2), grid)
    }
}

/// Evaluates `x_n = x_{j0+1} prod_{k=j0+1}^{n-1} g_k + Σ_{j=j0+1}^{n-1} f_j prod_{k=j+1}^{n-1} g_k`
/// for `n = j0+1 ..= n_max`, keeping the running product `ḡ_n` and the scaled sum
/// `Σ f_j / ḡ_{j+1}` in one forward pass. Element `i` of the result is `x_{j0+1+i}`.
pub fn solve_first_order_recursion<F, G>(x_start: f64, f: F, g: G, j0: u64, n_max: u64) -> Result<Vec<f64>>
where
    F: Fn(u64) -> f64,
    G: Fn(u64) -> f64,
{
    if n_max < j0 + 1 {
        return Err(ErwError::Contract(format!("n_max = {n_max} is before the first index j0 + 1 = {}", j0 + 1)));
    }
    let mut out = Vec::with_capacity((n_max - j0) as usize);
    let mut gbar = 1.0;
    let mut scaled = NeumaierSum::new();
    out.push(x_start);
    for j in j0 + 1..n_max {
        let gj = g(j);
        if gj == 0.0 {
            return Err(ErwError::Contract(format!("g vanishes at k = {j} > j0 = {j0}")));
        }
        // ḡ_{j+1} = ḡ_j g_j
        gbar *= gj;
        scaled.add(f(j) / gbar);
        out.push(gbar * (x_start + scaled.value()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{exact_moments, DEFAULT_BIT_CAP};
    use crate::params::ratio;
    use crate::special::EULER_GAMMA;

    fn params(an: i64, ad: i64, bn: i64, bd: i64) -> ErwParams {
        ErwParams::from_ratios(an, ad, bn, bd).unwrap()
    }

    #[test]
    fn second_exact_examples() {
        assert_eq!(deviation_second_exact(&params(0, 1, 0, 1), 5).unwrap(), 0.0);
        assert_eq!(deviation_second_exact(&params(-1, 2, 0, 1), 2).unwrap(), 0.0);
        assert_eq!(deviation_second_exact(&params(-1, 2, 0, 1), 1).unwrap(), 1.0);
        let v = deviation_second_exact(&params(1, 4, 0, 1), 2).unwrap();
        assert!((v + 0.375).abs() < 1e-14, "{v}");
        assert!(deviation_second_exact(&params(1, 2, 0, 1), 2).is_err());
    }

    #[test]
    fn h_rearrangement_matches_exact_definition() {
        for (an, ad) in [(-3, 4), (-1, 4), (0, 1), (1, 4), (2, 5)] {
            let p = params(an, ad, 0, 1);
            for m in 1..=4u32 {
                let binom = BinomialTable::new(2 * m as usize);
                for n in [1u64, 2, 3, 10, 97] {
                    let exact = h_coefficient_exact(&p, m, n).to_f64().unwrap();
                    let got = recursion_coefficients(p.alpha_f64(), m, n, &binom).h;
                    let tol = 1e-14 * exact.abs().max(1e-300) + 1e-300;
                    assert!((got - exact).abs() <= tol.max(1e-17), "alpha={an}/{ad} m={m} n={n}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn second_order_h_vanishes() {
        let binom = BinomialTable::new(2);
        for n in 1..50 {
            assert_eq!(recursion_coefficients(0.3, 1, n, &binom).h, 0.0);
        }
    }

    #[test]
    fn subcritical_second_matches_closed_form() {
        let p = params(1, 4, 0, 1);
        let grid: Vec<u64> = (1..=10_000).collect();
        let s = deviation_recursion_subcritical(&p, 1, &grid).unwrap();
        for (n, v) in s.points() {
            let e = deviation_second_exact(&p, n).unwrap();
            assert!(((v - e) / e).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn subcritical_matches_exact_rational_moments() {
        for (an, ad) in [(-3, 4), (-1, 2), (-1, 4), (0, 1), (1, 4), (2, 5)] {
            let p = params(an, ad, 1, 3);
            let grid = [1u64, 2, 3, 5, 17, 64, 200];
            let series = even_deviations_subcritical(&p, 4, &grid).unwrap();
            for (i, &n) in grid.iter().enumerate() {
                let mv = exact_moments(&p, n, 8, DEFAULT_BIT_CAP).unwrap();
                for m in 1..=4u32 {
                    let scale =
                        BigRational::from_integer(BigInt::from(n)) / (ratio(1, 1) - p.alpha() * BigInt::from(2));
                    let reference =
                        mv.value(2 * m) / (scale.pow(m as i32) * BigInt::from(double_factorial_odd(m))) - ratio(1, 1);
                    let r = reference.to_f64().unwrap();
                    let v = series[m as usize - 1].values[i];
                    if r == 0.0 {
                        assert!(v.abs() < 1e-15, "alpha={an}/{ad} m={m} n={n}: {v}");
                    } else {
                        assert!(((v - r) / r).abs() < 1e-9, "alpha={an}/{ad} m={m} n={n}: {v} vs {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_second_deviation_is_exactly_zero() {
        let grid: Vec<u64> = (1..=1000).collect();
        let zero = deviation_recursion_subcritical(&params(0, 1, 1, 1), 1, &grid).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let half = deviation_recursion_subcritical(&params(-1, 2, 1, 1), 1, &grid).unwrap();
        assert_eq!(half.values[0], 1.0);
        assert!(half.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decomposition_reassembles_deviation() {
        for (an, ad) in [(-3, 4), (-1, 2), (-1, 4), (1, 4)] {
            let p = params(an, ad, 0, 1);
            let parts = subcritical_decomposition(&p, 2, &[10, 100, 1000, 5000]).unwrap();
            let direct = deviation_recursion_subcritical(&p, 2, &parts.grid).unwrap();
            for i in 0..parts.grid.len() {
                let sum = parts.homogeneous[i] + parts.f_part[i] + parts.h_part[i];
                let d = direct.values[i];
                assert!(((sum - d) / d).abs() < 1e-10, "alpha={an}/{ad}: {sum} vs {d}");
            }
        }
        // 4α = -3 puts the singular index at j0 = 3
        assert_eq!(subcritical_decomposition(&params(-3, 4, 0, 1), 2, &[10]).unwrap().j0, 3);
    }

    #[test]
    fn critical_examples() {
        let p = params(1, 2, 0, 1);
        let mut engine = CriticalEngine::new(&p, 1).unwrap();
        engine.advance_to(3);
        assert!((engine.l_values()[0] - 11.0 / 6.0).abs() < 1e-15);
        let s = deviation_recursion_critical(&p, 1, &[10_000]).unwrap();
        let scaled = s.deviation.values[0] * (10_000f64).ln();
        assert!((scaled - EULER_GAMMA).abs() < 1e-3);
        assert!(CriticalEngine::new(&params(1, 4, 0, 1), 1).is_err());
        assert!(deviation_recursion_critical(&p, 2, &[1, 4]).is_err());
    }

    #[test]
    fn critical_matches_exact_rational_moments() {
        let p = params(1, 2, 1, 1);
        let grid = [2u64, 3, 7, 40, 300, 1000];
        let series = even_deviations_critical(&p, 3, &grid).unwrap();
        for (i, &n) in grid.iter().enumerate() {
            let mv = exact_moments(&p, n, 6, DEFAULT_BIT_CAP).unwrap();
            for m in 1..=3u32 {
                let denom = (n as f64 * (n as f64).ln()).powi(m as i32) * double_factorial_odd(m) as f64;
                let reference = mv.value_f64(2 * m) / denom - 1.0;
                let v = series[m as usize - 1].values[i];
                assert!((v - reference).abs() < 1e-9, "m={m} n={n}: {v} vs {reference}");
            }
        }
    }

    #[test]
    fn critical_parts_sum_to_deviation() {
        let p = params(1, 2, 0, 1);
        for m in 1..=3 {
            let s = deviation_recursion_critical(&p, m, &[2, 3, 10, 1000, 20_000]).unwrap();
            for i in 0..s.i_part.len() {
                let sum = s.i_part[i] + s.j_part[i] + s.k_part[i];
                assert!((sum - s.deviation.values[i]).abs() < 1e-10, "m={m}");
            }
        }
    }

    #[test]
    fn odd_examples() {
        let zero = deviation_odd(&params(1, 4, 0, 1), 2, &[1, 10, 100]).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let first = deviation_odd(&params(1, 4, 1, 1), 1, &[1, 2]).unwrap();
        // E[S_2] = 1 + α = 5/4 over sqrt(2 / (1/2)) = 2
        assert!((first.values[1] - 0.625).abs() < 1e-15);
        assert_eq!(first.normalization, Normalization::Subcritical);
        assert!(deviation_odd(&params(3, 4, 1, 1), 1, &[2]).is_err());
    }

    #[test]
    fn first_order_solver_trivial_cases() {
        let c = solve_first_order_recursion(7.0, |_| 0.0, |_| 1.0, 0, 20).unwrap();
        assert!(c.iter().all(|&x| x == 7.0));
        let j0 = 3;
        let lin = solve_first_order_recursion(0.0, |_| 1.0, |_| 1.0, j0, 50).unwrap();
        for (i, x) in lin.iter().enumerate() {
            let n = j0 + 1 + i as u64;
            assert_eq!(*x, (n - j0 - 1) as f64);
        }
        assert!(solve_first_order_recursion(1.0, |_| 1.0, |k| if k == 5 { 0.0 } else { 1.0 }, 0, 10).is_err());
    }

    #[test]
    fn first_order_solver_matches_odd_moment_iteration() {
        // third moment: M_{n+1} = f_n + (1 + 3α/n) M_n with f_n = (3 + α/n) E[S_n]
        let p = params(1, 4, 1, 1);
        let alpha = p.alpha_f64();
        let mut fm = FloatMoments::new(&p, 3);
        let mut first = vec![0.0, fm.value(1)];
        let mut third = vec![0.0, fm.value(3)];
        for _ in 1..1000 {
            fm.step();
            first.push(fm.value(1));
            third.push(fm.value(3));
        }
        let f = |n: u64| (3.0 + alpha / n as f64) * first[n as usize];
        let g = |n: u64| 1.0 + 3.0 * alpha / n as f64;
        let solved = solve_first_order_recursion(third[1], f, g, 0, 1000).unwrap();
        for (i, x) in solved.iter().enumerate() {
            let d = third[i + 1];
            assert!(((x - d) / d).abs() < 1e-12, "n = {}", i + 1);
        }
    }

    #[test]
    fn csv_rows_format() {
        let s = deviation_odd(&params(1, 4, 1, 1), 1, &[1, 2]).unwrap();
        let rows = s.csv_rows();
        assert_eq!(rows.lines().next().unwrap(), "1,1,7.0710678118654746e-1,subcritical");
    }
}

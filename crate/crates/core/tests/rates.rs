use erw_core::asymptotics::{berry_esseen_shape, predict_rate, variance_sum_ratio_error};
use erw_core::deviations::deviation_series;
use erw_core::grid::{geometric_grid, POINTS_PER_DECADE};
use erw_core::rates::{default_window, fit_log_rate, fit_power_exponent, FitResult};
use erw_core::special::EULER_GAMMA;
use erw_core::ErwParams;

const N_MAX: u64 = 1_000_000;

fn params(an: i64, ad: i64, bn: i64, bd: i64) -> ErwParams {
    ErwParams::from_ratios(an, ad, bn, bd).unwrap()
}

fn power_fit(p: &ErwParams, order: u32) -> FitResult {
    let grid = geometric_grid(1, N_MAX, POINTS_PER_DECADE).unwrap();
    fit_power_exponent(&deviation_series(p, order, &grid).unwrap(), default_window(N_MAX)).unwrap()
}

fn log_fit(p: &ErwParams, order: u32) -> FitResult {
    let grid = geometric_grid(2, N_MAX, POINTS_PER_DECADE).unwrap();
    fit_log_rate(&deviation_series(p, order, &grid).unwrap(), default_window(N_MAX)).unwrap()
}

#[test]
fn variance_sum_matches_its_asymptote() {
    let e = variance_sum_ratio_error(&params(1, 4, 0, 1), 10_000).unwrap();
    assert!(e < 1e-2, "{e}");
}

#[test]
fn odd_order_slope_and_coefficient_at_positive_alpha() {
    let p = params(1, 4, 1, 1);
    let fit = power_fit(&p, 3);
    assert!((fit.exponent - 0.25).abs() < 0.03, "{}", fit.exponent);
    let pred = predict_rate(&p, 3).unwrap();
    let local = deviation_series(&p, 3, &[N_MAX]).unwrap().last().1 / pred.evaluate(N_MAX);
    assert!((local - 1.0).abs() < 0.10, "{local}");
}

#[test]
fn odd_order_coefficient_at_negative_alpha() {
    let p = params(-1, 4, 1, 1);
    let fit = power_fit(&p, 1);
    let pred = predict_rate(&p, 1).unwrap();
    assert!((fit.exponent - pred.gamma_exponent().unwrap()).abs() < 0.03, "{}", fit.exponent);
    assert!((fit.coefficient / pred.coefficient - 1.0).abs() < 0.10, "{} vs {}", fit.coefficient, pred.coefficient);
}

#[test]
fn fourth_order_slope_at_negative_alpha() {
    let fit = power_fit(&params(-1, 4, 0, 1), 4);
    assert!((fit.exponent - 1.0).abs() < 0.05, "{}", fit.exponent);
    assert!(fit.coefficient < 0.0);
}

#[test]
fn critical_second_order_log_rate() {
    let fit = log_fit(&params(1, 2, 0, 1), 2);
    assert!((fit.exponent - 1.0).abs() < 0.1, "{}", fit.exponent);
    assert!((fit.coefficient / EULER_GAMMA - 1.0).abs() < 0.10, "{}", fit.coefficient);
}

#[test]
fn critical_third_order_log_rate() {
    let fit = log_fit(&params(1, 2, 1, 1), 3);
    assert!((fit.exponent - 0.5).abs() < 0.1, "{}", fit.exponent);
}

#[test]
fn bound_shape_decreases_past_its_peak() {
    for (p, from) in [(params(-1, 2, 0, 1), 10), (params(0, 1, 0, 1), 10), (params(1, 4, 0, 1), 1_000)] {
        let grid = geometric_grid(from, 10_000_000, 10).unwrap();
        let shape: Vec<f64> = grid.iter().map(|&n| berry_esseen_shape(&p, n).unwrap()).collect();
        assert!(shape.windows(2).all(|w| w[1] < w[0]), "alpha={}", p.alpha());
    }
}

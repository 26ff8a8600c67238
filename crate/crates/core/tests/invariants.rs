use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use proptest::prelude::*;

use erw_core::asymptotics::predict_rate;
use erw_core::deviations::{deviation_series, Normalization};
use erw_core::moments::{
    brute_force_moment, exact_moments, first_moment, second_moment_closed_form_exact, DEFAULT_BIT_CAP,
};
use erw_core::sim::{simulate, CheckpointStats, Dynamics, SimConfig};
use erw_core::special::{a_n, a_n_f64, c_alpha, double_factorial_odd};
use erw_core::ErwParams;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn params(a: i64, b: i64) -> ErwParams {
    ErwParams::from_ratios(a, 20, b, 4).unwrap()
}

fn stats_from(n: u64, ups: &[u64]) -> CheckpointStats {
    let mut s = CheckpointStats::new(n);
    for &u in ups {
        s.record(2 * (u % (n + 1)) as i64 - n as i64);
    }
    s
}

fn same(a: &CheckpointStats, b: &CheckpointStats) -> bool {
    a.count() == b.count()
        && a.support().collect::<Vec<_>>() == b.support().collect::<Vec<_>>()
        && (1..=6).all(|k| a.power_sum(k) == b.power_sum(k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_merge_is_commutative_and_associative(
        x in prop::collection::vec(0u64..1000, 0..40),
        y in prop::collection::vec(0u64..1000, 0..40),
        z in prop::collection::vec(0u64..1000, 0..40),
    ) {
        let n = 15;
        let (a, b, c) = (stats_from(n, &x), stats_from(n, &y), stats_from(n, &z));

        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        prop_assert!(same(&ab, &ba));

        let mut ab_c = ab.clone();
        ab_c.merge(&c).unwrap();
        let mut bc = b.clone();
        bc.merge(&c).unwrap();
        let mut a_bc = a.clone();
        a_bc.merge(&bc).unwrap();
        prop_assert!(same(&ab_c, &a_bc));

        let all: Vec<u64> = x.iter().chain(&y).chain(&z).copied().collect();
        prop_assert!(same(&ab_c, &stats_from(n, &all)));
    }

    #[test]
    fn simulated_positions_respect_parity_and_range(
        a in -19i64..=19,
        b in -4i64..=4,
        horizon in 1u64..60,
        replicas in 1u64..40,
        seed in any::<u64>(),
        replay in any::<bool>(),
    ) {
        let dynamics = if replay { Dynamics::MemoryReplay } else { Dynamics::ConditionalLaw };
        let mid = (horizon / 2).max(1);
        let cfg = SimConfig::new(params(a, b), horizon, replicas, seed)
            .with_checkpoints(&[1, mid])
            .with_dynamics(dynamics);
        let stats = simulate(&cfg).unwrap();
        prop_assert_eq!(stats.count(), replicas);
        for cp in stats.checkpoints() {
            let n = cp.n() as i64;
            prop_assert_eq!(cp.count(), replicas);
            for (s, _) in cp.support() {
                prop_assert!(s.abs() <= n);
                prop_assert_eq!((s - n).rem_euclid(2), 0);
            }
        }
    }

    #[test]
    fn moment_recursion_matches_path_enumeration(
        a in -19i64..=19,
        b in -4i64..=4,
        n in 1u64..=9,
    ) {
        let p = params(a, b);
        let mv = exact_moments(&p, n, 4, DEFAULT_BIT_CAP).unwrap();
        for k in 1..=4 {
            prop_assert_eq!(mv.value(k), brute_force_moment(&p, n, k).unwrap());
        }
    }

    #[test]
    fn low_moments_have_closed_forms(a in -19i64..=19, b in -4i64..=4, n in 1u64..=60) {
        let p = params(a, b);
        let mv = exact_moments(&p, n, 2, DEFAULT_BIT_CAP).unwrap();
        prop_assert_eq!(mv.value(1), first_moment(&p, n));
        prop_assert_eq!(mv.value(1), p.beta() * a_n(&p, n));
        prop_assert_eq!(mv.value(2), second_moment_closed_form_exact(&p, n));
    }

    #[test]
    fn deviation_recursions_match_exact_moments(
        a in -19i64..=9,
        b in -4i64..=4,
        order in 1u32..=6,
    ) {
        let p = params(a, b);
        let grid = [1u64, 2, 3, 5, 8, 13, 21, 34];
        let series = deviation_series(&p, order, &grid).unwrap();
        let norm = Normalization::for_params(&p).unwrap();
        for (n, got) in series.points() {
            let raw = exact_moments(&p, n, order, DEFAULT_BIT_CAP).unwrap().value_f64(order);
            let scaled = raw / norm.scale(p.alpha_f64(), n).powf(order as f64 / 2.0);
            let want = if order % 2 == 0 {
                scaled / double_factorial_odd(order / 2) as f64 - 1.0
            } else {
                scaled
            };
            prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn a_n_steps_and_float_form(a in -19i64..=19, n in 1u64..=80) {
        let p = params(a, 0);
        let exact = a_n(&p, n);
        prop_assert!(exact.is_positive());
        let step = BigRational::one() + p.alpha() / BigRational::from_integer(n.into());
        prop_assert_eq!(a_n(&p, n + 1), &exact * step);
        let f = exact.to_f64().unwrap();
        prop_assert!((a_n_f64(p.alpha_f64(), n) - f).abs() <= 1e-12 * f);
    }

    #[test]
    fn c_alpha_is_negative_and_drives_even_rates(a in -19i64..=0) {
        let p = params(a, 0);
        let c = c_alpha(p.alpha()).unwrap();
        prop_assert!(c.is_negative());
        let c = c.to_f64().unwrap();
        for m in 2u32..=4 {
            let pred = predict_rate(&p, 2 * m).unwrap();
            let want = (m * (m - 1) / 2) as f64 * c;
            prop_assert!((pred.coefficient - want).abs() <= 1e-14 * want.abs());
            prop_assert_eq!(pred.gamma_exponent(), Some(1.0));
        }
    }
}

#[test]
fn c_alpha_reference_values() {
    assert_eq!(c_alpha(&BigRational::zero()).unwrap(), q(-2, 3));
    assert_eq!(c_alpha(&q(-1, 2)).unwrap(), q(-1, 3));
    assert_eq!(c_alpha(&q(-1, 4)).unwrap(), q(-9, 24));
    assert!(c_alpha(&q(1, 4)).is_err());
}

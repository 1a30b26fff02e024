use std::time::Duration;

use num_rational::Ratio;
use trade_moments::price_moments::{frequency_mean, vwap, window_price_moments};
use trade_moments::synthetic::{moment_gap, oracle_price_moments};
use trade_moments::*;

fn tape(csv: &str) -> Vec<TradeTick64> {
    parse_tape(csv.as_bytes(), &TapeFormat::csv()).unwrap()
}

fn whole(ticks: Vec<TradeTick64>) -> WindowedTrades64 {
    WindowedTrades::spanning(ticks, Alignment::Trailing).unwrap()
}

#[test]
fn csv_to_price_moments() {
    let w = whole(tape("ts,price,volume\n0,1,1\n1,3,3\n"));
    let sums = accumulate(&w, 2).unwrap();
    assert_eq!(sums.value_sums(), [10.0, 82.0]);
    assert_eq!(sums.volume_sums(), [4.0, 10.0]);
    let tm = to_moments(&sums).unwrap();
    assert_eq!(tm.value_moment(1), 5.0);
    let m = price_moments_from_trades(&tm).unwrap();
    assert_eq!(m.mean, 2.5);
    assert_eq!(vwap(&w).unwrap(), 2.5);
    assert_eq!(frequency_mean(w.ticks()).unwrap(), 2.0);
}

#[test]
fn parse_errors_carry_lines() {
    let err = parse_tape::<f64, _>("ts,price,volume\n0,-1,3\n".as_bytes(), &TapeFormat::csv()).unwrap_err();
    assert_eq!(err.line(), Some(2));
    assert!(matches!(err.root(), Error::NonPositiveField { field: "price", .. }));
    let err = parse_tape::<f64, _>("ts,price,volume\n5,1,1\n3,1,1\n".as_bytes(), &TapeFormat::csv()).unwrap_err();
    assert!(matches!(err.root(), Error::OutOfOrderTimestamp { line: 3 }));
}

#[test]
fn value_identity() {
    let t = make_tick(Timestamp(0), 2.0, 3.0, None).unwrap();
    assert_eq!(t.value, 6.0);
    assert!(matches!(
        make_tick(Timestamp(0), 2.0, 3.0, Some(7.0)),
        Err(Error::InconsistentValue { .. })
    ));
    assert!(make_tick(Timestamp(0), 1.0, 1.0, Some(1.0)).is_ok());
}

#[test]
fn windows_then_moments() {
    let ticks = tape("ts,price,volume\n0,1,1\n1,2,1\n2,3,1\n3,4,1\n");
    let windows = partition_windows(&ticks, Duration::from_nanos(2), Alignment::Trailing).unwrap();
    let means: Vec<f64> = windows
        .iter()
        .map(|w| window_price_moments(w, 2).unwrap().mean)
        .collect();
    assert_eq!(means, [1.5, 3.5]);
}

#[test]
fn gap_windows_are_empty() {
    let ticks = tape("ts,price,volume\n0,1,1\n10,2,1\n");
    let windows = partition_windows(&ticks, Duration::from_nanos(2), Alignment::Trailing).unwrap();
    let counts: Vec<usize> = windows.iter().map(WindowedTrades::count).collect();
    assert_eq!(counts, [1, 0, 0, 0, 0, 1]);
    assert!(matches!(window_price_moments(&windows[1], 2), Err(Error::EmptyWindow)));
}

#[test]
fn frequency_distributions() {
    let w = whole(tape("ts,price,volume\n0,2,3\n1,2,3\n2,4,3\n"));
    let stats = frequency_price_stats(&w, &Bins::Exact).unwrap();
    assert_eq!(stats.distribution.bin_edges, [2.0, 4.0]);
    assert_eq!(
        stats.distribution.exact_probabilities(),
        [Ratio::new(2, 3), Ratio::new(1, 3)]
    );
    let (values, volumes) = frequency_value_volume_stats(&w, &Bins::Exact).unwrap();
    assert_eq!(values.bin_edges, [6.0, 12.0]);
    assert_eq!(volumes.probabilities, [1.0]);
}

#[test]
fn density_from_tape() {
    let w = whole(tape("ts,price,volume\n0,1.5,2\n1,3.5,2\n"));
    let m = window_price_moments(&w, 3).unwrap();
    let f2 = fit_charfn(&m, 2).unwrap();
    assert_eq!(f2.coefficients(), [2.5, 1.0]);
    let f3 = fit_charfn(&m, 3).unwrap();
    assert_eq!(f3.coefficient(3), 0.0);
    let grid = price_grid(2.5, 1.0, 6.0, 4097).unwrap();
    let closed = gaussian_density(&f2, &grid).unwrap();
    let inverted = invert_charfn(&f3, &grid).unwrap();
    let sup = closed
        .density
        .iter()
        .zip(&inverted.density)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(sup < 1e-6);
    assert!((closed.mass() - 1.0).abs() < 1e-6);
}

#[test]
fn charfn_values() {
    let std = CharFnApprox::from_coefficients(vec![0.0, 1.0]).unwrap();
    assert_eq!(eval_charfn(&std, 0.0), num_complex::Complex::new(1.0, 0.0));
    assert!((eval_charfn(&std, 1.0).re - (-0.5f64).exp()).abs() < 1e-15);
    assert!((gaussian_pdf(&std, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
    assert_eq!(gaussian_pdf(&std, 1.0).unwrap(), gaussian_pdf(&std, -1.0).unwrap());
    let phase = CharFnApprox::from_coefficients(vec![3.0, 0.0]).unwrap();
    assert!((eval_charfn(&phase, 0.7f64).norm() - 1.0).abs() < 1e-15);
}

#[test]
fn fit_from_raw_moments() {
    let m = PriceMoments::from_raw(vec![2.5, 7.25]);
    assert_eq!(fit_charfn(&m, 2).unwrap().coefficients(), [2.5, 1.0]);
    let m = PriceMoments::from_raw(vec![0.0, 1.0, 0.0]);
    assert_eq!(fit_charfn(&m, 3).unwrap().coefficients(), [0.0, 1.0, 0.0]);
    assert!(matches!(fit_charfn(&m, 4), Err(Error::UnsupportedOrder { k: 4 })));
    assert!(matches!(
        fit_charfn(&PriceMoments::from_raw(vec![1.0]), 2),
        Err(Error::InsufficientMoments { .. })
    ));
    let point = PriceMoments::from_raw(vec![4.0, 16.0, 64.0]);
    assert_eq!(fit_charfn(&point, 3).unwrap().coefficients(), [4.0, 0.0, 0.0]);
}

#[test]
fn synthetic_oracle_round_trip() {
    let spec = TapeSpec::new(
        10_000,
        PriceLaw::Uniform { a: 10.0, b: 20.0 },
        VolumeLaw::Constant { c: 5.0 },
        Dependence::Independent,
        11,
    );
    let ticks = generate(&spec).unwrap();
    assert_eq!(ticks, generate(&spec).unwrap());
    let oracle = oracle_price_moments(&ticks, 4);
    let m = window_price_moments(&whole(ticks.clone()), 4).unwrap();
    for n in 1..=4 {
        assert!(rel_diff(m.moment(n), oracle[n - 1]) < 1e-12);
    }
    assert!(moment_gap(&ticks, 1).unwrap().difference.abs() < 1e-12);
}

#[test]
fn agents_and_expectations() {
    let tick = |t, p, u| TradeTick::new(Timestamp(t), p, u).unwrap();
    let tapes = [
        AgentTape::new("a", vec![tick(0, 2.0, 3.0)]),
        AgentTape::new("b", vec![tick(1, 1.0, 4.0)]),
    ];
    let window = WindowSpec::starting_at(Timestamp(0), 10, Alignment::Trailing).unwrap();
    let m = aggregate_macro(&tapes, &window, 2).unwrap();
    assert_eq!(m.totals.value_sums(), [10.0, 52.0]);

    let labelled = [
        AgentTape::new("lo", vec![tick(0, 1.0, 1.0)])
            .with_expectations(vec![0.0])
            .unwrap(),
        AgentTape::new("hi", vec![tick(1, 3.0, 3.0)])
            .with_expectations(vec![1.0])
            .unwrap(),
    ];
    assert_eq!(weighted_expectation(&labelled, &window, Weight::Value, 1).unwrap(), 0.9);
    assert_eq!(weighted_expectation(&labelled, &window, Weight::Count, 1).unwrap(), 0.5);
    assert_eq!(
        weighted_expectation(&labelled, &window, Weight::Value, 2).unwrap(),
        81.0 / 82.0
    );
}

#[test]
fn single_precision_pipeline() {
    let ticks: Vec<TradeTick<f32>> =
        parse_tape("ts,price,volume\n0,1,1\n1,3,3\n".as_bytes(), &TapeFormat::csv()).unwrap();
    let m = window_price_moments(&WindowedTrades::spanning(ticks, Alignment::Centered).unwrap(), 2).unwrap();
    assert_eq!(m.mean, 2.5f32);
    assert!((m.moment(2) - 8.2f32).abs() < 1e-5);
}

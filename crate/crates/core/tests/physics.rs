use autowave::physics::{calibrate_slope, stable_states, Anchors, ReactionCurve, CALIBRATED_SLOPE};
use autowave::wavesim::measure_tp;
use autowave::{Error, GridParams};
use proptest::prelude::*;

fn curve() -> ReactionCurve {
    ReactionCurve::calibrated()
}

#[test]
fn peak_clears_the_bias_range() {
    let (v_peak, j_p) = curve().peak();
    assert!(j_p > 23.0, "J_p = {j_p}");
    assert!(v_peak > 0.97 && v_peak < 1.15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equilibria_solve_the_balance(bias in 18.0f64..=23.0) {
        let c = curve();
        let s = stable_states(&c, bias).unwrap();
        prop_assert!(s.excitable);
        prop_assert!((c.current(s.low) - bias).abs() < 1e-6);
        prop_assert!((c.current(s.high) - bias).abs() < 1e-6);
        let mid = s.mid.unwrap();
        prop_assert!((c.current(mid) - bias).abs() < 1e-6);
        prop_assert!(s.low < mid && mid < s.high);
        prop_assert!((s.margin - (c.peak().1 - bias)).abs() < 1e-9);
    }

    #[test]
    fn classification_agrees_with_central_differences(bias in 18.0f64..=23.0) {
        let c = curve();
        let h = 1e-6;
        let s = stable_states(&c, bias).unwrap();
        prop_assert_eq!(s.equilibria.len(), 3);
        for eq in &s.equilibria {
            let fd = (c.current(eq.voltage + h) - c.current(eq.voltage - h)) / (2.0 * h);
            prop_assert_eq!(fd > 0.0, eq.is_stable());
            prop_assert_eq!(fd > 0.0, eq.slope > 0.0);
        }
        prop_assert!(s.equilibria[0].is_stable());
        prop_assert!(!s.equilibria[1].is_stable());
        prop_assert!(s.equilibria[2].is_stable());
    }

    #[test]
    fn stronger_bias_raises_low_and_lowers_mid(a in 18.0f64..23.0, gap in 0.01f64..5.0) {
        let b = (a + gap).min(23.0);
        prop_assume!(b > a);
        let c = curve();
        let (sa, sb) = (stable_states(&c, a).unwrap(), stable_states(&c, b).unwrap());
        prop_assert!(sb.low > sa.low);
        prop_assert!(sb.mid.unwrap() < sa.mid.unwrap());
    }
}

#[test]
fn calibration_reproduces_the_frozen_slope() {
    let params = GridParams::nominal(1, 60);
    let cal = calibrate_slope(16.92, &params, Anchors::default(), 1.2).unwrap();
    assert!((16.58..=17.26).contains(&cal.measurement.t_p), "{:?}", cal.measurement);
    let ReactionCurve::Cubic(cubic) = cal.curve else { panic!("calibration returned a non-cubic curve") };
    assert!((cubic.slope - CALIBRATED_SLOPE).abs() < 1e-9 * CALIBRATED_SLOPE);
    // the trace records every evaluated slope
    assert!(cal.trace.iter().any(|&(a, _)| a == 100.0));
    let again = measure_tp(&params, &cal.curve, 1.2).unwrap();
    assert_eq!(again, cal.measurement);
}

#[test]
fn slower_target_needs_weaker_reaction() {
    let params = GridParams::nominal(1, 60);
    let slow = calibrate_slope(2.0 * 16.92, &params, Anchors::default(), 1.2).unwrap();
    let ReactionCurve::Cubic(cubic) = slow.curve else { panic!("non-cubic") };
    assert!(cubic.slope < CALIBRATED_SLOPE);
    assert!((slow.measurement.t_p - 2.0 * 16.92).abs() <= 0.02 * 2.0 * 16.92);
    // the recorded search is monotone where fronts propagate
    let mut measured: Vec<(f64, f64)> = slow.trace.iter().filter_map(|&(a, t)| t.map(|t| (a, t))).collect();
    measured.sort_by(|x, y| x.0.total_cmp(&y.0));
    let below: Vec<_> = measured.iter().filter(|(a, _)| *a <= 400.0).collect();
    assert!(below.windows(2).all(|w| w[1].1 < w[0].1), "{below:?}");
}

#[test]
fn calibration_guards() {
    let params = GridParams::nominal(1, 60);
    assert!(matches!(calibrate_slope(0.0, &params, Anchors::default(), 1.2), Err(Error::InvalidParameter(_))));
    assert!(calibrate_slope(-3.0, &params, Anchors::default(), 1.2).is_err());
    match calibrate_slope(1e6, &params, Anchors::default(), 1.2) {
        Err(Error::Calibration { trace, .. }) => {
            assert!(!trace.is_empty());
            assert_eq!(trace[0].0, 100.0);
        }
        other => panic!("expected a calibration failure, got {other:?}"),
    }
}

#[test]
fn piecewise_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.txt");
    let c = curve();
    // tabulate the cubic densely enough that the piecewise copy keeps its equilibria
    let mut text = String::from("# v J\n");
    let mut v = 0.6;
    while v <= 2.1 + 1e-12 {
        text.push_str(&format!("{v:.4} {}\n", c.current(v)));
        v += 0.005;
    }
    std::fs::write(&path, text).unwrap();
    let pw = ReactionCurve::Piecewise(autowave::physics::PiecewiseCurve::load(&path).unwrap());
    let s = stable_states(&pw, 21.0).unwrap();
    assert!(s.excitable);
    assert!((s.low - 0.97).abs() < 1e-3 && (s.high - 1.75).abs() < 1e-3);
    assert!(pw.evaluate(3.0).extrapolated);
    assert!(!pw.evaluate(1.0).extrapolated);
}

use proptest::prelude::*;
use yatt_core::pipeline::{downsample, SEASON_DAYS};
use yatt_core::{Granularity, WeatherSeries, WeatherVar};

fn series(days: Vec<[f64; 7]>) -> WeatherSeries {
    WeatherSeries {
        location_id: "L1".into(),
        year: 2010,
        days,
    }
}

/// Straight loop over day indices, one variable at a time.
fn brute_force(days: &[[f64; 7]], window: usize) -> Vec<[f64; 7]> {
    let steps = 210 / window;
    let mut out = vec![[0.0; 7]; steps];
    for (s, row) in out.iter_mut().enumerate() {
        for var in WeatherVar::ALL {
            let j = var.index();
            let values: Vec<f64> = (s * window..(s + 1) * window).map(|d| days[d][j]).collect();
            row[j] = match var.name() {
                "MDNI" | "MaxSur" => values.iter().cloned().fold(f64::MIN, f64::max),
                "MinSur" => values.iter().cloned().fold(f64::MAX, f64::min),
                _ => values.iter().sum::<f64>() / window as f64,
            };
        }
    }
    out
}

fn day() -> impl Strategy<Value = [f64; 7]> {
    (0.0..900.0f64, 0.0..3.0f64, 0.0..100.0f64, 0.0..300.0f64, -10.0..20.0f64, 0.0..15.0f64, 0.0..1.0f64).prop_map(
        |(adni, ap, arh, extra, min, spread, frac)| {
            let max = min + spread;
            [adni, ap, arh, adni + extra, max, min, min + frac * spread]
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn windows_match_a_direct_loop(days in prop::collection::vec(day(), SEASON_DAYS)) {
        let s = series(days.clone());
        s.validate().unwrap();
        for (g, window) in [(Granularity::Weekly, 7), (Granularity::Biweekly, 14), (Granularity::Monthly, 30)] {
            let m = downsample(&s, g).unwrap();
            let expected = brute_force(&days, window);
            prop_assert_eq!(m.shape(), (expected.len(), 7));
            for (t, row) in expected.iter().enumerate() {
                prop_assert_eq!(m.row(t), &row[..]);
            }
        }
        let daily = downsample(&s, Granularity::Daily).unwrap();
        prop_assert_eq!(daily.rows(), SEASON_DAYS);
        prop_assert_eq!(daily.row(213), &days[213][..]);
    }
}

#[test]
fn the_last_four_days_never_reach_a_window() {
    let mut days = vec![[100.0, 1.0, 50.0, 200.0, 25.0, 15.0, 20.0]; SEASON_DAYS];
    for d in &mut days[210..] {
        *d = [800.0, 3.0, 99.0, 999.0, 45.0, -5.0, 10.0];
    }
    let m = downsample(&series(days), Granularity::Weekly).unwrap();
    assert_eq!(m.row(29), &[100.0, 1.0, 50.0, 200.0, 25.0, 15.0, 20.0]);
}

#[test]
fn short_series_are_rejected() {
    let s = series(vec![[1.0, 0.0, 50.0, 2.0, 3.0, 1.0, 2.0]; 200]);
    assert!(downsample(&s, Granularity::Monthly).is_err());
    assert!(s.validate().is_err());
}

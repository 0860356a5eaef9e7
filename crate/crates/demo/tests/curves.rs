use edgevid_demo::curves::{self, DemoError, Scenario};

const BALANCED: Scenario = Scenario {
    side_px: 280.0,
    lambda_fps: 100.0,
    deadline_s: 0.3,
    bandwidth_hz: 2.1e6,
};

#[test]
fn rate_series_decays_with_distance() {
    let s = curves::rate(0.0, 0.01, 2.1e6, 2.0, 20).unwrap();
    assert_eq!(s.x.len(), 20);
    assert_eq!(s.x[19], 2.0);
    assert!(s.y.windows(2).all(|w| w[1] <= w[0]));
    assert!(s.gap.is_none());
}

#[test]
fn success_series_is_a_probability() {
    let s = curves::success(BALANCED, 1.5, 15).unwrap();
    assert!(s.y.iter().all(|p| (0.0..=1.0).contains(p)));
    assert!(s.y[0] > s.y[14]);
}

#[test]
fn effective_rate_stays_below_offered() {
    let s = curves::effective_rate(430.0, 0.3, 2.1e6, 30).unwrap();
    assert!(s.x.iter().zip(&s.y).all(|(l, e)| e <= l));
}

#[test]
fn lorenz_series_carries_gap() {
    let s = curves::lorenz(BALANCED, 100).unwrap();
    let gap = s.gap.unwrap();
    assert!(gap > 0.0 && gap < 1.0);
    assert!((s.y.last().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn bad_requests_are_rejected() {
    assert!(matches!(
        curves::rate(0.0, 0.01, 2.1e6, 2.0, 1),
        Err(DemoError::Points(1))
    ));
    assert!(matches!(
        curves::rate(0.0, 0.01, 2.1e6, -1.0, 10),
        Err(DemoError::Range(_))
    ));
    assert!(matches!(
        curves::rate(0.0, 0.01, -5.0, 1.0, 10),
        Err(DemoError::Config(_))
    ));
    let overloaded = Scenario {
        lambda_fps: 500.0,
        ..BALANCED
    };
    assert!(matches!(
        curves::success(overloaded, 1.0, 10),
        Err(DemoError::Pipeline(_))
    ));
}

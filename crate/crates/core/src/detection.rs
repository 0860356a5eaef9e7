//! Parametric object-detector model: compute cost, accuracy and service time
//! as functions of the image side length.

use thiserror::Error;

use crate::params::DetectionParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("accuracy {target} outside the attainable range ({low}, {high})")]
    OutOfRange { target: f64, low: f64, high: f64 },
}

/// Floating-point work per image (TFLOP): `c1·s³ + c2`.
pub fn flops(side_px: f64, det: &DetectionParams) -> f64 {
    det.c1 * side_px.powi(3) + det.c2
}

/// Mean average precision `c3 − c4·e^{−c5·s}`. Not clamped: small images can
/// yield negative values with realistic constants.
pub fn accuracy(side_px: f64, det: &DetectionParams) -> f64 {
    det.c3 - det.c4 * (-det.c5 * side_px).exp()
}

/// Deterministic processing time of one image (s).
pub fn service_time(side_px: f64, det: &DetectionParams) -> f64 {
    flops(side_px, det) / det.cpu_tflops
}

/// Image side that achieves `target_accuracy`.
pub fn accuracy_inverse(target_accuracy: f64, det: &DetectionParams) -> Result<f64, DetectionError> {
    let low = det.c3 - det.c4;
    let high = det.c3;
    if !(target_accuracy > low && target_accuracy < high) {
        return Err(DetectionError::OutOfRange {
            target: target_accuracy,
            low,
            high,
        });
    }
    Ok(-((det.c3 - target_accuracy) / det.c4).ln() / det.c5)
}

/// One row of a [`DetectionCurve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionPoint {
    pub side_px: f64,
    pub flops_tflop: f64,
    pub accuracy: f64,
    pub service_time_s: f64,
}

/// Cost/accuracy table over a resolution grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCurve {
    pub points: Vec<DetectionPoint>,
}

impl DetectionCurve {
    pub fn new(sides_px: impl IntoIterator<Item = f64>, det: &DetectionParams) -> Self {
        let points = sides_px
            .into_iter()
            .map(|s| {
                let flops_tflop = flops(s, det);
                DetectionPoint {
                    side_px: s,
                    flops_tflop,
                    accuracy: accuracy(s, det),
                    service_time_s: flops_tflop / det.cpu_tflops,
                }
            })
            .collect();
        DetectionCurve { points }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemConfig;
    use proptest::prelude::*;

    fn det() -> DetectionParams {
        SystemConfig::reference().detection
    }

    #[test]
    fn flops_reference_values() {
        let d = det();
        assert_eq!(flops(0.0, &d), 0.083);
        assert!((flops(600.0, &d) - 0.2342).abs() < 1e-12);
        assert!((flops(280.0, &d) - 0.0983664).abs() < 1e-12);
    }

    #[test]
    fn accuracy_reference_values() {
        let d = det();
        assert!((accuracy(280.0, &d) - 0.74).abs() < 0.01);
        assert!((accuracy(430.0, &d) - 0.90).abs() < 0.01);
        assert!((accuracy(600.0, &d) - 0.97).abs() < 0.01);
        assert!((accuracy(1e5, &d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn service_times() {
        let d = det();
        assert!((service_time(600.0, &d) - 0.02342).abs() < 1e-12);
        assert!((service_time(280.0, &d) - 0.00983664).abs() < 1e-12);
        assert!((service_time(0.0, &d) - 0.0083).abs() < 1e-15);
    }

    #[test]
    fn inverse_reference_values() {
        let d = det();
        // the quoted accuracies are rounded: 280 px gives 0.7443, so 0.74 maps to 277.4 px
        assert!((accuracy_inverse(0.74, &d).unwrap() - 277.42).abs() < 0.05);
        assert!((accuracy_inverse(accuracy(280.0, &d), &d).unwrap() - 280.0).abs() < 1e-9);
        assert!((accuracy_inverse(0.97, &d).unwrap() - 609.6).abs() < 0.1);
        assert!(accuracy_inverse(1.0, &d).is_err());
        assert!(accuracy_inverse(d.c3 - d.c4, &d).is_err());
    }

    #[test]
    fn paper_pairs_do_not_overload() {
        let d = det();
        let loads: Vec<f64> = [(280.0, 100.0), (430.0, 70.0), (600.0, 40.0)]
            .iter()
            .map(|&(s, l)| l * service_time(s, &d))
            .collect();
        for (rho, expected) in loads.iter().zip([0.984, 0.971, 0.937]) {
            assert!(*rho <= 0.99);
            assert!((rho - expected).abs() < 5e-4, "{rho}");
        }
    }

    #[test]
    fn curve_is_monotone() {
        let d = det();
        let curve = DetectionCurve::new((200..=600).step_by(20).map(f64::from), &d);
        for w in curve.points.windows(2) {
            assert!(w[1].flops_tflop > w[0].flops_tflop);
            assert!(w[1].accuracy > w[0].accuracy && w[1].accuracy < d.c3);
            assert_eq!(w[1].service_time_s, w[1].flops_tflop / d.cpu_tflops);
        }
    }

    proptest! {
        #[test]
        fn inverse_round_trip(a in 0.5f64..0.99) {
            let d = det();
            let s = accuracy_inverse(a, &d).unwrap();
            prop_assert!((accuracy(s, &d) - a).abs() < 1e-9);
        }
    }
}

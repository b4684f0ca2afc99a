//! Modulus prediction and field error metrics.

use alloc::vec::Vec;

use super::PinnError;
use crate::mechanics::Point2;
use crate::nets::NetworkParams;

/// Modulus network output at `x`.
pub fn predict_mu(mu: &NetworkParams, x: Point2) -> Result<f64, PinnError> {
    if mu.config().output_width != 1 || mu.config().input_width != 2 {
        return Err(PinnError::Config("not a modulus network"));
    }
    Ok(mu.forward(&[x.x1, x.x2])?[0])
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMetrics {
    /// `|pred - truth|_2 / |truth|_2` over the samples.
    pub relative_l2: f64,
    pub max_abs: f64,
    /// Mean of the truth samples, used to normalize pointwise errors.
    pub truth_mean: f64,
    /// Root-mean-square error over `truth_mean`.
    pub rms_over_mean: f64,
    /// `|pred - truth| / truth_mean` per sample.
    pub pointwise: Vec<f64>,
    /// `pred - truth` per sample.
    pub signed: Vec<f64>,
}

impl ErrorMetrics {
    pub fn max_pointwise(&self) -> f64 {
        self.pointwise.iter().copied().fold(0.0, f64::max)
    }
}

pub fn error_metrics(predicted: &[f64], truth: &[f64]) -> Result<ErrorMetrics, PinnError> {
    if predicted.len() != truth.len() {
        return Err(PinnError::Shape {
            what: "predicted samples",
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(PinnError::Config("no samples"));
    }
    if predicted.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(PinnError::NonFinite { term: "modulus samples" });
    }
    let signed: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| p - t).collect();
    let num: f64 = signed.iter().map(|d| d * d).sum();
    let den: f64 = truth.iter().map(|t| t * t).sum();
    let truth_mean = truth.iter().sum::<f64>() / truth.len() as f64;
    if den == 0.0 || truth_mean == 0.0 {
        return Err(PinnError::Config("truth field is identically zero"));
    }
    Ok(ErrorMetrics {
        relative_l2: libm::sqrt(num / den),
        max_abs: signed.iter().fold(0.0, |a, d| f64::max(a, libm::fabs(*d))),
        truth_mean,
        rms_over_mean: libm::sqrt(num / truth.len() as f64) / truth_mean,
        pointwise: signed.iter().map(|d| libm::fabs(*d) / truth_mean).collect(),
        signed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::true_modulus;
    use crate::nets::MlpConfig;
    use crate::pinn::square_grid;

    fn truth() -> Vec<f64> {
        square_grid(21).iter().map(|x| true_modulus(x.x1, x.x2)).collect()
    }

    #[test]
    fn identical_fields() {
        let t = truth();
        let m = error_metrics(&t, &t).unwrap();
        assert_eq!(m.relative_l2, 0.0);
        assert_eq!(m.max_abs, 0.0);
        assert!(m.pointwise.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_offset_on_a_field_with_mean_028() {
        let t = vec![0.2, 0.36, 0.28, 0.28];
        let p: Vec<f64> = t.iter().map(|v| v + 0.0028).collect();
        let m = error_metrics(&p, &t).unwrap();
        for e in &m.pointwise {
            assert!((e - 0.01).abs() < 1e-12);
        }
        assert!((m.rms_over_mean - 0.01).abs() < 1e-12);
    }

    #[test]
    fn doubled_field() {
        let t = truth();
        let p: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        let m = error_metrics(&p, &t).unwrap();
        assert!((m.relative_l2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(error_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn untrained_prediction_is_finite() {
        let p = NetworkParams::init_xavier(MlpConfig::modulus(), 1).unwrap();
        assert!(predict_mu(&p, Point2::new(0.3, 0.9)).unwrap().is_finite());
        let u = NetworkParams::init_xavier(MlpConfig::displacement(), 1).unwrap();
        assert!(predict_mu(&u, Point2::new(0.3, 0.9)).is_err());
    }
}

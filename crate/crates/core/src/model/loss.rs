use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// mean of `exp(k·|Δ|)`, i.e. the mean q-error
    MeanQError,
    /// mean of `Δ²` in normalized space
    Mse,
    /// mean of `k·|Δ|`, the log of the geometric-mean q-error
    GeometricQError,
}

impl LossKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "qerr" => Some(LossKind::MeanQError),
            "mse" => Some(LossKind::Mse),
            "gqerr" => Some(LossKind::GeometricQError),
            _ => None,
        }
    }

    pub fn flag(self) -> &'static str {
        match self {
            LossKind::MeanQError => "qerr",
            LossKind::Mse => "mse",
            LossKind::GeometricQError => "gqerr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// `∂value/∂y_i`
    pub grad: Vec<f64>,
}

/// `k` is `ln c_max - ln c_min`, which turns a normalized difference into a
/// log-ratio of cardinalities.
pub fn loss(y: &[f64], labels: &[f64], kind: LossKind, k: f64) -> Result<LossValue> {
    if y.len() != labels.len() || y.is_empty() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", y.len(), labels.len())));
    }
    if let Some(v) = y.iter().chain(labels).chain([&k]).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("loss input {v}")));
    }
    let n = y.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(y.len());
    for (&yi, &li) in y.iter().zip(labels) {
        let delta = yi - li;
        let sign = if delta > 0.0 {
            1.0
        } else if delta < 0.0 {
            -1.0
        } else {
            0.0
        };
        let (v, g) = match kind {
            LossKind::MeanQError => {
                let q = (k * delta.abs()).exp();
                (q, k * sign * q)
            }
            LossKind::Mse => (delta * delta, 2.0 * delta),
            LossKind::GeometricQError => (k * delta.abs(), k * sign),
        };
        value += v;
        grad.push(g / n);
    }
    Ok(LossValue { value: value / n, grad })
}

/// Relative gap between `exp(k|y - label|)` and the q-error of the
/// denormalized pair. Used to check the loss identity numerically.
pub fn qerror_identity_gap(y: f64, label: f64, log_min: f64, log_max: f64) -> f64 {
    let k = log_max - log_min;
    let via_loss = (k * (y - label).abs()).exp();
    let est = (y * k + log_min).exp();
    let truth = (label * k + log_min).exp();
    let direct = (est / truth).max(truth / est);
    (via_loss - direct).abs() / direct
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0.2, 0.7];
        assert_eq!(loss(&y, &y, LossKind::MeanQError, 10.0).unwrap().value, 1.0);
        assert_eq!(loss(&y, &y, LossKind::Mse, 10.0).unwrap().value, 0.0);
        let g = loss(&y, &y, LossKind::GeometricQError, 10.0).unwrap();
        assert_eq!(g.value, 0.0);
        assert_eq!(g.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn factor_two_contribution() {
        let d = 2f64.ln() / 10.0;
        let l = loss(&[0.5 + d], &[0.5], LossKind::MeanQError, 10.0).unwrap();
        assert!((l.value - 2.0).abs() < 1e-12);
        assert!((l.grad[0] - 20.0).abs() < 1e-9);
        let l = loss(&[0.5 - d], &[0.5], LossKind::GeometricQError, 10.0).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-12);
        assert_eq!(l.grad[0], -10.0);
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let y = [0.3, 0.81, 0.05];
        let t = [0.4, 0.6, 0.07];
        for kind in [LossKind::MeanQError, LossKind::Mse, LossKind::GeometricQError] {
            let g = loss(&y, &t, kind, 7.0).unwrap().grad;
            for i in 0..3 {
                let (mut up, mut dn) = (y, y);
                up[i] += 1e-7;
                dn[i] -= 1e-7;
                let num = (loss(&up, &t, kind, 7.0).unwrap().value - loss(&dn, &t, kind, 7.0).unwrap().value) / 2e-7;
                assert!((num - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{kind:?} {i}");
            }
        }
    }

    #[test]
    fn errors() {
        assert!(loss(&[0.1], &[0.1, 0.2], LossKind::Mse, 1.0).is_err());
        assert!(loss(&[], &[], LossKind::Mse, 1.0).is_err());
        assert!(matches!(loss(&[f64::NAN], &[0.1], LossKind::Mse, 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn flags_round_trip() {
        for k in [LossKind::MeanQError, LossKind::Mse, LossKind::GeometricQError] {
            assert_eq!(LossKind::parse(k.flag()), Some(k));
        }
    }
}

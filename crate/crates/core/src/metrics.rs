//! Pointwise quality metrics of the weighted Jacobian `T = A W^{-1}`.
//!
//! * `Shape2`:     `|T|^2 / (2 det T) - 1` (2D only)
//! * `ShapeSize7`: `|T - T^{-t}|^2`
//! * `ShapeSize9`: `det T * |T - T^{-t}|^2`
//!
//! A non-positive `det T` is reported as [`MetricValue::Infeasible`] for every
//! metric; the first two act as barriers and the objective treats any
//! inverted point as infeasible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TmopError};
use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricId {
    Shape2,
    ShapeSize7,
    ShapeSize9,
}

impl MetricId {
    pub const ALL: [MetricId; 3] = [MetricId::Shape2, MetricId::ShapeSize7, MetricId::ShapeSize9];

    pub fn supports_dim(self, dim: usize) -> bool {
        match self {
            MetricId::Shape2 => dim == 2,
            _ => dim == 2 || dim == 3,
        }
    }

    pub fn check_dim(self, dim: usize) -> Result<()> {
        if self.supports_dim(dim) {
            Ok(())
        } else {
            Err(TmopError::invalid(format!("metric {self} is not available in {dim}D")))
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Shape2 => "mu2",
            MetricId::ShapeSize7 => "mu7",
            MetricId::ShapeSize9 => "mu9",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = TmopError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mu2" => Ok(MetricId::Shape2),
            "mu7" => Ok(MetricId::ShapeSize7),
            "mu9" => Ok(MetricId::ShapeSize9),
            other => Err(TmopError::invalid(format!("unknown metric '{other}' (expected mu2, mu7 or mu9)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricValue {
    Feasible(f64),
    Infeasible,
}

impl MetricValue {
    /// The value, with infeasible points mapped to `+inf`.
    pub fn or_infinity(self) -> f64 {
        match self {
            MetricValue::Feasible(v) => v,
            MetricValue::Infeasible => f64::INFINITY,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, MetricValue::Feasible(_))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Feasible(v) => Some(v),
            MetricValue::Infeasible => None,
        }
    }
}

/// Evaluates `metric` at `t`.
pub fn eval_metric(metric: MetricId, t: &Mat) -> MetricValue {
    let tau = t.det();
    if !(tau > 0.0) {
        return MetricValue::Infeasible;
    }
    match metric {
        MetricId::Shape2 => MetricValue::Feasible(t.frob2() / (2.0 * tau) - 1.0),
        MetricId::ShapeSize7 | MetricId::ShapeSize9 => {
            let Some(inv) = t.inverse() else {
                return MetricValue::Infeasible;
            };
            let mu7 = (*t - inv.transpose()).frob2();
            if metric == MetricId::ShapeSize7 {
                MetricValue::Feasible(mu7)
            } else {
                MetricValue::Feasible(tau * mu7)
            }
        }
    }
}

/// Value and derivative `d mu / d T`, or `None` at an infeasible point.
pub fn metric_value_and_grad(metric: MetricId, t: &Mat) -> Option<(f64, Mat)> {
    let tau = t.det();
    if !(tau > 0.0) {
        return None;
    }
    let inv = t.inverse()?;
    let inv_t = inv.transpose();
    match metric {
        MetricId::Shape2 => {
            let f = t.frob2();
            let val = f / (2.0 * tau) - 1.0;
            let grad = t.scale(1.0 / tau) - inv_t.scale(f / (2.0 * tau));
            Some((val, grad))
        }
        MetricId::ShapeSize7 | MetricId::ShapeSize9 => {
            let diff = *t - inv_t;
            let mu7 = diff.frob2();
            // d|T^{-1}|^2/dT = -2 T^{-t} T^{-1} T^{-t}
            let g7 = t.scale(2.0) - (inv_t * inv * inv_t).scale(2.0);
            if metric == MetricId::ShapeSize7 {
                Some((mu7, g7))
            } else {
                // d tau / dT = tau T^{-t}
                Some((tau * mu7, g7.scale(tau) + inv_t.scale(tau * mu7)))
            }
        }
    }
}

/// `d mu / d T`; `None` when `T` is infeasible.
pub fn metric_grad(metric: MetricId, t: &Mat) -> Option<Mat> {
    metric_value_and_grad(metric, t).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation;
    use crate::mesh::Lcg64;
    use proptest::prelude::*;

    fn val(m: MetricId, t: &Mat) -> f64 {
        match eval_metric(m, t) {
            MetricValue::Feasible(v) => v,
            MetricValue::Infeasible => panic!("unexpected infeasible"),
        }
    }

    /// Random matrix with positive determinant, entries around identity.
    fn random_feasible(rng: &mut Lcg64, d: usize) -> Mat {
        loop {
            let mut t = Mat::identity(d);
            for i in 0..d {
                for j in 0..d {
                    t.add_to(i, j, 0.6 * rng.next_symmetric());
                }
            }
            if t.det() > 0.05 {
                return t.scale(0.5 + 1.5 * rng.next_f64());
            }
        }
    }

    #[test]
    fn identity_values() {
        assert_eq!(val(MetricId::Shape2, &Mat::identity(2)), 0.0);
        for d in [2, 3] {
            assert_eq!(val(MetricId::ShapeSize7, &Mat::identity(d)), 0.0);
            assert_eq!(val(MetricId::ShapeSize9, &Mat::identity(d)), 0.0);
        }
    }

    #[test]
    fn hand_values() {
        assert!((val(MetricId::Shape2, &Mat::from_diag(&[2.0, 1.0])) - 0.25).abs() < 1e-15);
        assert!((val(MetricId::ShapeSize9, &Mat::scaled_identity(2, 2.0)) - 18.0).abs() < 1e-14);
    }

    #[test]
    fn shape2_gradient_hand_value() {
        let g = metric_grad(MetricId::Shape2, &Mat::from_diag(&[2.0, 1.0])).unwrap();
        assert!((g - Mat::from_diag(&[0.375, -0.75])).max_abs() < 1e-15);
        let g0 = metric_grad(MetricId::Shape2, &Mat::identity(2)).unwrap();
        assert!(g0.max_abs() < 1e-15);
    }

    #[test]
    fn infeasible_points() {
        let inv = Mat::from_diag(&[1.0, -1.0]);
        for m in MetricId::ALL {
            assert_eq!(eval_metric(m, &inv), MetricValue::Infeasible);
            assert!(metric_grad(m, &inv).is_none());
        }
        let sing = Mat::from_rows(2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(eval_metric(MetricId::ShapeSize7, &sing), MetricValue::Infeasible);
    }

    #[test]
    fn shape2_rejected_in_3d() {
        assert!(MetricId::Shape2.check_dim(3).is_err());
        assert!(MetricId::ShapeSize9.check_dim(3).is_ok());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Lcg64::new(2024);
        let h = 1e-6;
        for d in [2, 3] {
            for metric in MetricId::ALL.into_iter().filter(|m| m.supports_dim(d)) {
                for _ in 0..100 {
                    let t = random_feasible(&mut rng, d);
                    let g = metric_grad(metric, &t).unwrap();
                    let scale = g.max_abs().max(1e-3);
                    for i in 0..d {
                        for j in 0..d {
                            let (mut tp, mut tm) = (t, t);
                            tp.add_to(i, j, h);
                            tm.add_to(i, j, -h);
                            let fd = (val(metric, &tp) - val(metric, &tm)) / (2.0 * h);
                            let err = (fd - g.get(i, j)).abs() / g.get(i, j).abs().max(scale);
                            assert!(err <= 1e-6, "{metric} d={d} ({i},{j}) err {err}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nonnegative_on_random_samples() {
        let mut rng = Lcg64::new(77);
        for d in [2, 3] {
            for metric in MetricId::ALL.into_iter().filter(|m| m.supports_dim(d)) {
                for _ in 0..10_000 {
                    let t = random_feasible(&mut rng, d);
                    assert!(val(metric, &t) >= -1e-14);
                }
            }
        }
    }

    #[test]
    fn shape2_ignores_scaled_rotations() {
        let mut rng = Lcg64::new(5);
        for _ in 0..100 {
            let c = 0.01 + 10.0 * rng.next_f64();
            let q = rotation(2, 6.3 * rng.next_f64(), [0.0; 3]);
            assert!(val(MetricId::Shape2, &q.scale(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn shape2_volume_invariance() {
        let mut rng = Lcg64::new(6);
        for _ in 0..50 {
            let t = random_feasible(&mut rng, 2);
            let base = val(MetricId::Shape2, &t);
            for c in [0.1, 10.0] {
                assert!((val(MetricId::Shape2, &t.scale(c)) - base).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn orientation_invariance(angle in 0.0f64..6.3, ax in -1.0f64..1.0, ay in -1.0f64..1.0,
                                  seed in 0u64..10_000) {
            let mut rng = Lcg64::new(seed);
            for d in [2, 3] {
                let t = random_feasible(&mut rng, d);
                let q = rotation(d, angle, [ax, ay, 0.7]);
                for metric in MetricId::ALL.into_iter().filter(|m| m.supports_dim(d)) {
                    let a = val(metric, &t);
                    let b = val(metric, &(q * t));
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} {} vs {}", metric, a, b);
                }
            }
        }
    }
}

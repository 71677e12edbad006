use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Knots of a linear (truncated-power) spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec<T> {
    knots: Vec<T>,
}

impl<T: Scalar> SplineSpec<T> {
    pub fn new(knots: Vec<T>) -> Result<Self> {
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Schema("spline knots must be finite".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Schema("spline knots must be strictly ascending".into()));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Number of basis functions (`1 + #knots`).
    pub fn dim(&self) -> usize {
        self.knots.len() + 1
    }
}

/// Basis `(a, max(0, a − k₁), max(0, a − k₂), …)`.
pub fn spline_basis<T: Scalar>(a: T, spec: &SplineSpec<T>) -> Vec<T> {
    std::iter::once(a)
        .chain(spec.knots.iter().map(|&k| (a - k).max(T::zero())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basis_examples() {
        let s = SplineSpec::new(vec![15.0, 30.0]).unwrap();
        assert_eq!(spline_basis(20.0, &s), vec![20.0, 5.0, 0.0]);
        assert_eq!(spline_basis(10.0, &s), vec![10.0, 0.0, 0.0]);
        let s = SplineSpec::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(spline_basis(2.5, &s), vec![2.5, 1.5, 0.5]);
    }

    #[test]
    fn knots_must_ascend() {
        assert!(SplineSpec::new(vec![2.0, 1.0]).is_err());
        assert!(SplineSpec::new(vec![1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn continuous_and_nonnegative(a in 0.0f64..60.0, k1 in 0.0f64..20.0, gap in 0.1f64..20.0) {
            let s = SplineSpec::new(vec![k1, k1 + gap]).unwrap();
            let b = spline_basis(a, &s);
            prop_assert!(b.iter().all(|&v| v >= 0.0));
            let eps = 1e-9;
            let lo = spline_basis(a - eps, &s);
            let hi = spline_basis(a + eps, &s);
            for i in 0..3 {
                prop_assert!((hi[i] - lo[i]).abs() <= 2.0 * eps + 1e-12);
            }
        }
    }
}

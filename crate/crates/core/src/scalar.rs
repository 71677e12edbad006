//! Scalar abstraction and standard-normal special functions.
//!
//! All numerical code is generic over [`Scalar`], which is implemented for
//! `f32` and `f64`. Special functions are evaluated in `f64` (via `libm`'s
//! `erfc`) and rounded to the target type, so both instantiations share a
//! single set of approximations.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point type usable throughout the crate.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Widens to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const ASYMPTOTIC_CUTOFF: f64 = -30.0;

/// Standard normal density.
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    T::lit((-0.5 * x * x - LN_SQRT_2PI).exp())
}

/// Derivative of the standard normal density, `-x * pdf(x)`.
pub fn norm_pdf_deriv<T: Scalar>(x: T) -> T {
    -x * norm_pdf(x)
}

/// Standard normal CDF via the complementary error function.
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    T::lit(cdf64(x.as_f64()))
}

/// Upper tail `1 - Φ(x)`, accurate for large positive `x`.
pub fn norm_sf<T: Scalar>(x: T) -> T {
    T::lit(cdf64(-x.as_f64()))
}

fn cdf64(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn log_cdf64(x: f64) -> f64 {
    if x > 0.0 {
        (-cdf64(-x)).ln_1p()
    } else if x > ASYMPTOTIC_CUTOFF {
        cdf64(x).ln()
    } else {
        // Mills-ratio series; relative error below 1e-12 past the cutoff.
        let z2 = 1.0 / (x * x);
        let series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2 + 105.0 * z2.powi(4);
        -0.5 * x * x - LN_SQRT_2PI - (-x).ln() + series.ln()
    }
}

/// `log Φ(x)`, finite for every finite `x`.
pub fn log_norm_cdf<T: Scalar>(x: T) -> T {
    T::lit(log_cdf64(x.as_f64()))
}

/// Inverse Mills ratio `φ(x) / Φ(x)`, the derivative of `log Φ(x)`.
pub fn inv_mills<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    T::lit((-0.5 * x * x - LN_SQRT_2PI - log_cdf64(x)).exp())
}

/// Standard normal quantile function (Acklam's rational approximation
/// followed by one Halley correction step).
pub fn norm_quantile<T: Scalar>(p: T) -> T {
    T::lit(quantile64(p.as_f64()))
}

fn quantile64(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    if p.is_nan() || p <= 0.0 {
        return if p == 0.0 { f64::NEG_INFINITY } else { f64::NAN };
    }
    if p >= 1.0 {
        return if p == 1.0 { f64::INFINITY } else { f64::NAN };
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (-p).ln_1p()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley step on Φ(x) − p, using the tail that keeps precision.
    let e = if x < 0.0 { cdf64(x) - p } else { (1.0 - p) - cdf64(-x) };
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Bernoulli log-probability of `y` under a probit model with linear predictor
/// `eta`, together with its first and second derivatives in `eta`.
#[inline]
pub fn probit_log_lik_derivs<T: Scalar>(y: bool, eta: T) -> (T, T, T) {
    // log P(y | eta) = log Φ(±eta); sign flips for y = 0.
    let sgn = if y { 1.0 } else { -1.0 };
    let z = sgn * eta.as_f64();
    let value = log_cdf64(z);
    let lambda = (-0.5 * z * z - LN_SQRT_2PI - value).exp();
    let d1 = sgn * lambda;
    let d2 = -lambda * (z + lambda);
    (T::lit(value), T::lit(d1), T::lit(d2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0_f64) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.96_f64) - 0.975_002_104_851_780).abs() < 1e-12);
        assert!((norm_sf(3.0_f64) - 1.349_898_031_630_095e-3).abs() < 1e-15);
    }

    #[test]
    fn log_cdf_matches_direct_and_asymptotic_regions() {
        for &x in &[-29.0, -10.0, -3.0, 0.0] {
            let direct = cdf64(x).ln();
            assert!((log_norm_cdf(x) - direct).abs() < 1e-10 * direct.abs().max(1e-300));
        }
        // log Φ(2) and log Φ(8), reference values from 30-digit arithmetic
        assert!((log_norm_cdf(2.0_f64) - (-0.023_012_909_328_963_49)).abs() < 1e-15);
        assert!((log_norm_cdf(8.0_f64) - (-6.220_960_574_271_785e-16)).abs() < 1e-25);
        // continuity across the asymptotic cutoff
        let a = log_norm_cdf(-30.0 + 1e-9);
        let b = log_norm_cdf(-30.0 - 1e-9);
        assert!((a - b).abs() < 1e-6);
        assert!(log_norm_cdf(-60.0_f64).is_finite());
    }

    #[test]
    fn log_survival_at_three() {
        // log(1 - Φ(3))
        let v: f64 = log_norm_cdf(-3.0);
        assert!((v - (-6.607_726_221_510_349)).abs() < 1e-10);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 0.999_999] {
            let x: f64 = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() < 1e-12 * p.max(1e-3));
        }
    }

    #[test]
    fn probit_derivatives_match_finite_differences() {
        for &y in &[true, false] {
            for &eta in &[-6.0, -1.0, 0.0, 0.7, 5.0] {
                let (_, d1, d2) = probit_log_lik_derivs::<f64>(y, eta);
                let h = 1e-5;
                let f = |e: f64| probit_log_lik_derivs::<f64>(y, e).0;
                let g = |e: f64| probit_log_lik_derivs::<f64>(y, e).1;
                let fd1 = (f(eta + h) - f(eta - h)) / (2.0 * h);
                let fd2 = (g(eta + h) - g(eta - h)) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-6 * (1.0 + d1.abs()));
                assert!((d2 - fd2).abs() < 1e-6 * (1.0 + d2.abs()));
                assert!(d2 < 0.0);
            }
        }
    }

    #[test]
    fn f32_instantiation() {
        let p: f32 = norm_cdf(0.0_f32);
        assert_eq!(p, 0.5);
        assert!(inv_mills(-40.0_f32).is_finite());
    }
}

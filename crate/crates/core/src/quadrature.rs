//! Gauss–Hermite rules and Halton low-discrepancy points.

use crate::scalar::Scalar;

/// Gauss–Hermite rule for expectations under a standard normal:
/// `E[f(Z)] ≈ Σ w_i f(x_i)` with `Σ w_i = 1`.
#[derive(Debug, Clone)]
pub struct GaussHermite<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussHermite<T> {
    /// Builds an `order`-point rule by Newton iteration on the Hermite
    /// recurrence; nodes are returned in ascending order.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let (x, w) = hermite_physicists(order);
        let s2 = std::f64::consts::SQRT_2;
        let spi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(&x, &w)| (x * s2, w / spi)).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Self {
            nodes: pairs.iter().map(|p| T::lit(p.0)).collect(),
            weights: pairs.iter().map(|p| T::lit(p.1)).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Nodes and weights for `∫ exp(-x²) f(x) dx`.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // orthonormal Hermite recurrence
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        // the recurrence leaves the centre node within rounding of zero
        x[m - 1] = 0.0;
    }
    (x, w)
}

/// Radical inverse of `index` in the given base.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Multidimensional Halton sequence starting at index 1, so every coordinate
/// lies strictly inside `(0, 1)`.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    next: u64,
}

impl Halton {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= PRIMES.len(), "Halton dimension out of range");
        Self { dim, next: 1 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the next point into `out`.
    pub fn fill(&mut self, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = radical_inverse(self.next, PRIMES[d]);
        }
        self.next += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_moments_match() {
        for &n in &[1usize, 2, 5, 20, 40, 60, 100] {
            let gh = GaussHermite::<f64>::new(n);
            let s: f64 = gh.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n} sum={s}");
            let m2: f64 = gh.nodes.iter().zip(&gh.weights).map(|(x, w)| w * x * x).sum();
            if n >= 2 {
                assert!((m2 - 1.0).abs() < 1e-12, "n={n} m2={m2}");
            }
            if n >= 3 {
                let m4: f64 = gh.nodes.iter().zip(&gh.weights).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m4 - 3.0).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn integrates_normal_cdf_expectation() {
        // E[Φ(a + bZ)] = Φ(a / sqrt(1 + b²))
        let gh = GaussHermite::<f64>::new(40);
        let (a, b) = (0.3, 1.2);
        let v: f64 = gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(&x, &w)| w * crate::scalar::norm_cdf(a + b * x))
            .sum();
        let exact = crate::scalar::norm_cdf(a / (1.0 + b * b).sqrt());
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn halton_first_points() {
        let mut h = Halton::new(2);
        let mut p = [0.0; 2];
        h.fill(&mut p);
        assert_eq!(p, [0.5, 1.0 / 3.0]);
        h.fill(&mut p);
        assert_eq!(p, [0.25, 2.0 / 3.0]);
        h.fill(&mut p);
        assert_eq!(p, [0.75, 1.0 / 9.0]);
    }
}

//! Quasi-Newton (BFGS) maximization with backtracking line search.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct QuasiNewtonOptions<T> {
    pub max_iter: usize,
    /// Convergence when the gradient max-norm falls below this value.
    pub grad_tol: T,
    /// Longest step (max-norm) tried by the line search.
    pub max_step: T,
}

impl<T: Scalar> Default for QuasiNewtonOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: T::lit(1e-6),
            max_step: T::lit(2.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Maximum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub grad: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iteration, starting with the initial point.
    pub trace: Vec<T>,
    pub message: String,
}

impl<T: Scalar> Maximum<T> {
    pub fn grad_max(&self) -> T {
        max_norm(&self.grad)
    }
}

pub fn max_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Maximizes `f`, which returns the objective and its gradient. Points where
/// `f` errors or returns non-finite values are treated as infeasible and the
/// line search backs off from them.
pub fn maximize<T: Scalar>(
    mut f: impl FnMut(&[T]) -> Result<(T, Vec<T>)>,
    x0: &[T],
    opts: &QuasiNewtonOptions<T>,
) -> Result<Maximum<T>> {
    let n = x0.len();
    let (mut fx, mut g) = f(x0)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("objective not finite at the starting point".into()));
    }
    let mut x = x0.to_vec();
    let mut trace = vec![fx];
    // inverse Hessian approximation of -f
    let mut h = Matrix::<T>::identity(n);
    let mut first = true;
    let armijo = T::lit(1e-4);
    let mut message = String::from("iteration limit reached");
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if max_norm(&g) < opts.grad_tol {
            converged = true;
            message = "gradient below tolerance".into();
            break;
        }
        iterations += 1;
        let mut d = h.matvec(&g);
        let mut slope = dot(&d, &g);
        if !(slope > T::zero()) {
            // lost ascent direction: restart from steepest ascent
            h = Matrix::identity(n);
            d = g.clone();
            slope = dot(&d, &g);
        }
        let dmax = max_norm(&d);
        let mut t = if first {
            (T::one() / dmax).min(T::one()).min(opts.max_step / dmax)
        } else {
            T::one().min(opts.max_step / dmax)
        };

        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<T> = x.iter().zip(&d).map(|(&xi, &di)| xi + t * di).collect();
            if let Ok((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && gn.iter().all(|v| v.is_finite()) && fn_ >= fx + armijo * t * slope {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            t = t * T::lit(0.5);
        }
        let Some((xn, fn_, gn)) = accepted else {
            message = "line search failed to increase the objective".into();
            break;
        };

        // BFGS update in terms of minimizing -f
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = g.iter().zip(&gn).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                h = Matrix::identity(n).scale(scale);
            }
            let hy = h.matvec(&y);
            let yhy = dot(&y, &hy);
            let rho = T::one() / sy;
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] = h[(i, j)] - rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            first = false;
        }
        x = xn;
        fx = fn_;
        g = gn;
        trace.push(fx);
    }
    if !converged && max_norm(&g) < opts.grad_tol {
        converged = true;
        message = "gradient below tolerance".into();
    }
    Ok(Maximum {
        x,
        value: fx,
        grad: g,
        iterations,
        converged,
        trace,
        message,
    })
}

/// Central finite-difference gradient with step `h`.
pub fn fd_gradient<T: Scalar>(f: &mut impl FnMut(&[T]) -> Result<T>, x: &[T], h: T) -> Result<Vec<T>> {
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        g.push((fp - fm) / (h + h));
    }
    Ok(g)
}

/// Central second-difference Hessian of a scalar function with per-coordinate steps.
pub fn fd_hessian<T: Scalar>(f: &mut impl FnMut(&[T]) -> Result<T>, x: &[T], steps: &[T]) -> Result<Matrix<T>> {
    let n = x.len();
    let f0 = f(x)?;
    let mut hmat = Matrix::zeros(n, n);
    let mut xp = x.to_vec();
    let two = T::lit(2.0);
    for i in 0..n {
        let hi = steps[i];
        xp[i] = x[i] + hi;
        let fp = f(&xp)?;
        xp[i] = x[i] - hi;
        let fm = f(&xp)?;
        xp[i] = x[i];
        hmat[(i, i)] = (fp - two * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut eval = |si: T, sj: T| -> Result<T> {
                let mut z = x.to_vec();
                z[i] = z[i] + si * hi;
                z[j] = z[j] + sj * hj;
                f(&z)
            };
            let one = T::one();
            let v = (eval(one, one)? - eval(one, -one)? - eval(-one, one)? + eval(-one, -one)?)
                / (T::lit(4.0) * hi * hj);
            hmat[(i, j)] = v;
            hmat[(j, i)] = v;
        }
    }
    Ok(hmat)
}

/// Jacobian of a gradient function by central differences (not symmetrized).
pub fn fd_jacobian<T: Scalar>(
    g: &mut impl FnMut(&[T]) -> Result<Vec<T>>,
    x: &[T],
    steps: &[T],
) -> Result<Matrix<T>> {
    let n = x.len();
    let mut jac = Matrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + steps[j];
        let gp = g(&xp)?;
        xp[j] = x[j] - steps[j];
        let gm = g(&xp)?;
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (gp[i] - gm[i]) / (steps[j] + steps[j]);
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // f = -(x-1)² - 10(y+2)² - (x-1)(y+2)
        let f = |v: &[f64]| {
            let (a, b) = (v[0] - 1.0, v[1] + 2.0);
            Ok((-(a * a) - 10.0 * b * b - a * b, vec![-2.0 * a - b, -20.0 * b - a]))
        };
        let r = maximize(f, &[5.0, 5.0], &QuasiNewtonOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rosenbrock() {
        let f = |v: &[f64]| {
            let (x, y) = (v[0], v[1]);
            let val = -((1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2));
            let gx = 2.0 * (1.0 - x) + 400.0 * x * (y - x * x);
            let gy = -200.0 * (y - x * x);
            Ok((val, vec![gx, gy]))
        };
        let r = maximize(f, &[-1.2, 1.0], &QuasiNewtonOptions::default()).unwrap();
        assert!(r.converged, "{}", r.message);
        assert!((r.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn finite_difference_helpers() {
        let mut f = |v: &[f64]| Ok(v[0].powi(3) + v[0] * v[1] * v[1]);
        let g = fd_gradient(&mut f, &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 7.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        let h = fd_hessian(&mut f, &[1.0, 2.0], &[1e-4, 1e-4]).unwrap();
        assert!((h[(0, 0)] - 6.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 4.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 2.0).abs() < 1e-5);
    }
}

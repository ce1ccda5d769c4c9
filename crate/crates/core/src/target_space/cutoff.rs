//! Radial cutoff `θ(y) = ψ(|y|)·y` with `ψ = 1` on `[0, 1]`, `ψ = 0` on
//! `[2, ∞)` and a smooth monotone transition built from `e^{-1/t}`.

use nalgebra::{DMatrix, DVector};

/// `f(t) = e^{-1/t}` for `t > 0`, else 0, with its first two derivatives.
fn bump(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let f = (-1.0 / t).exp();
    if f == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let t2 = t * t;
    (f, f / t2, f * (1.0 / (t2 * t2) - 2.0 / (t2 * t)))
}

/// Smooth step `S(t) = f(t)/(f(t) + f(1−t))` and its first two derivatives.
fn step(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let (a, a1, a2) = bump(t);
    let (b, b1, b2) = bump(1.0 - t);
    // B(t) = f(1 − t): B' = −f'(1 − t), B'' = f''(1 − t)
    let (b1, b2) = (-b1, b2);
    let den = a + b;
    let num = a1 * b - a * b1;
    let num1 = a2 * b - a * b2;
    let d2 = den * den;
    let s = a / den;
    let s1 = num / d2;
    let s2 = (num1 * d2 - num * 2.0 * den * (a1 + b1)) / (d2 * d2);
    (s, s1, s2)
}

/// `ψ(s) = 1 − S(s − 1)` and derivatives.
fn profile(s: f64) -> (f64, f64, f64) {
    let (v, d1, d2) = step(s - 1.0);
    (1.0 - v, -d1, -d2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffBounds {
    /// `sup |θ|`.
    pub value: f64,
    /// `sup |Dθ|` (operator norm).
    pub differential: f64,
    /// `max_k sup |Hθ_k|` (Frobenius norm).
    pub hessian: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffProfile {
    dim: usize,
    bounds: CutoffBounds,
}

const BOUND_SAMPLES: usize = 2001;
const ANGLE_SAMPLES: usize = 32;
const BOUND_INFLATION: f64 = 1.001;

impl CutoffProfile {
    /// Builds the profile on `ℝ^dim` and samples its bounds radially.
    pub fn new(dim: usize) -> Self {
        let mut this = Self {
            dim,
            bounds: CutoffBounds {
                value: 1.0,
                differential: 1.0,
                hessian: 0.0,
            },
        };
        let mut b = this.bounds.clone();
        for i in 0..BOUND_SAMPLES {
            let s = 1.0 + i as f64 / (BOUND_SAMPLES - 1) as f64;
            let (psi, d1, _) = profile(s);
            b.value = b.value.max(psi * s);
            b.differential = b.differential.max(psi.abs()).max((psi + s * d1).abs());
            // Hθ_k depends on the angle between y and e_k only
            for a in 0..=ANGLE_SAMPLES {
                let c = a as f64 / ANGLE_SAMPLES as f64;
                let mut y = DVector::zeros(dim);
                y[0] = s * c;
                if dim > 1 {
                    y[1] = s * (1.0 - c * c).max(0.0).sqrt();
                }
                let h = this.hessians(&y)[0].norm();
                b.hessian = b.hessian.max(h);
            }
        }
        b.value *= BOUND_INFLATION;
        b.differential *= BOUND_INFLATION;
        b.hessian *= BOUND_INFLATION;
        this.bounds = b;
        this
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &CutoffBounds {
        &self.bounds
    }

    pub fn value(&self, y: &DVector<f64>) -> DVector<f64> {
        let s = y.norm();
        if s <= 1.0 {
            return y.clone();
        }
        y * profile(s).0
    }

    pub fn differential(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = y.len();
        let s = y.norm();
        if s <= 1.0 {
            return DMatrix::identity(n, n);
        }
        let (psi, d1, _) = profile(s);
        let unit = y / s;
        DMatrix::identity(n, n) * psi + &unit * unit.transpose() * (d1 * s)
    }

    /// `Hθ_k` for `k = 0..n`, each `n × n` with entries `∂_i∂_j θ_k`.
    pub fn hessians(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n = y.len();
        let s = y.norm();
        if s <= 1.0 {
            return vec![DMatrix::zeros(n, n); n];
        }
        let (_, d1, d2) = profile(s);
        let u = y / s;
        (0..n)
            .map(|k| {
                DMatrix::from_fn(n, n, |i, j| {
                    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    d2 * u[i] * u[j] * y[k]
                        + d1 * (delta(i, j) - u[i] * u[j]) / s * y[k]
                        + d1 * (u[j] * delta(i, k) + u[i] * delta(j, k))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_inside_unit_ball_and_zero_outside_two() {
        let c = CutoffProfile::new(3);
        let y = DVector::from_vec(vec![0.5, -0.3, 0.6]);
        assert_eq!(c.value(&y), y);
        let far = DVector::from_vec(vec![1.5, 1.5, 0.1]);
        assert_eq!(c.value(&far), DVector::zeros(3));
        assert_eq!(c.differential(&far), DMatrix::zeros(3, 3));
    }

    #[test]
    fn step_derivatives_match_differences() {
        for &t in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let h = 1e-5;
            let (_, d1, d2) = step(t);
            let fd1 = (step(t + h).0 - step(t - h).0) / (2.0 * h);
            let fd2 = (step(t + h).1 - step(t - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6, "{t}: {d1} vs {fd1}");
            assert!((d2 - fd2).abs() < 1e-5, "{t}: {d2} vs {fd2}");
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let c = CutoffProfile::new(3);
        let y = DVector::from_vec(vec![0.9, -0.7, 0.5]);
        let h = 1e-6;
        let d = c.differential(&y);
        let hs = c.hessians(&y);
        for j in 0..3 {
            let mut p = y.clone();
            p[j] += h;
            let mut m = y.clone();
            m[j] -= h;
            let col = (c.value(&p) - c.value(&m)) / (2.0 * h);
            let dcol = (c.differential(&p) - c.differential(&m)) / (2.0 * h);
            for k in 0..3 {
                assert!((d[(k, j)] - col[k]).abs() < 1e-7);
                for i in 0..3 {
                    assert!((hs[k][(i, j)] - dcol[(k, i)]).abs() < 1e-6);
                }
            }
        }
    }
}

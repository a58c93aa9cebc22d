//! Fixed-node Gaussian quadrature rules.
//!
//! Nodes are generated by Newton iteration on the orthogonal polynomial
//! recurrences in `f64` and then converted to the working scalar.

use std::f64::consts::PI;

use crate::real::Real;

/// A quadrature rule: nodes and weights on its reference domain.
#[derive(Debug, Clone)]
pub struct Rule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Rule<T> {
    /// Gauss–Legendre rule on [−1, 1].
    pub fn gauss_legendre(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut nodes = vec![0.0_f64; order];
        let mut weights = vec![0.0_f64; order];
        let m = order.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self::from_f64(&nodes, &weights)
    }

    /// Gauss–Hermite rule for the standard normal weight: Σ wᵢ g(xᵢ) ≈ E[g(Z)],
    /// Z ~ N(0, 1). Weights sum to one.
    pub fn gauss_hermite_normal(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        // Physicists' rule for e^{−x²}, orthonormal recurrence (Numerical Recipes gauher).
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0_f64; order];
        let mut weights = vec![0.0_f64; order];
        let nf = order as f64;
        let m = order.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..order {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[order - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[order - 1 - i] = weights[i];
        }
        let scale = std::f64::consts::SQRT_2;
        let total: f64 = weights.iter().sum();
        let nodes: Vec<f64> = nodes.iter().rev().map(|x| x * scale).collect();
        let weights: Vec<f64> = weights.iter().rev().map(|w| w / total).collect();
        Self::from_f64(&nodes, &weights)
    }

    fn from_f64(nodes: &[f64], weights: &[f64]) -> Self {
        Self {
            nodes: nodes.iter().map(|&x| T::lit(x)).collect(),
            weights: weights.iter().map(|&w| T::lit(w)).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// ∫ₐᵇ f over `panels` equal sub-intervals, this rule on each.
    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, panels: usize, mut f: F) -> T {
        let panels = panels.max(1);
        let width = (b - a) / T::from_count(panels);
        let half = width / T::lit(2.0);
        let mut total = T::zero();
        for p in 0..panels {
            let mid = a + width * (T::from_count(p) + T::lit(0.5));
            let mut acc = T::zero();
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc = acc + *w * f(mid + half * *x);
            }
            total = total + acc * half;
        }
        total
    }
}

/// Pₙ(x) and Pₙ'(x).
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Panel count giving at most `width` per panel over [a, b].
pub(crate) fn panels_for<T: Real>(a: T, b: T, width: f64) -> usize {
    let span = (b - a).as_f64().abs();
    ((span / width).ceil() as usize).max(1)
}

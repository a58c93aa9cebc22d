//! Shape-preserving piecewise cubic Hermite interpolation.
//!
//! Node derivatives follow Fritsch–Butland (weighted harmonic mean of the
//! adjacent secants, zero at local extrema), so monotone data gives a monotone
//! interpolant with no overshoot between nodes.

use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneSpline<T> {
    x: Vec<T>,
    y: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> MonotoneSpline<T> {
    /// Builds the interpolant. `x` must be strictly increasing with at least
    /// two points; returns `None` otherwise.
    pub fn new(x: Vec<T>, y: Vec<T>) -> Option<Self> {
        let m = x.len();
        if m < 2 || y.len() != m || x.windows(2).any(|w| !(w[1] > w[0])) {
            return None;
        }
        let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<T> = (0..m - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![T::zero(); m];
        if m == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Some(Self { x, y, d });
        }
        let two = T::lit(2.0);
        for k in 1..m - 1 {
            let (a, b) = (delta[k - 1], delta[k]);
            if a * b <= T::zero() {
                d[k] = T::zero();
            } else {
                let w1 = two * h[k] + h[k - 1];
                let w2 = h[k] + two * h[k - 1];
                d[k] = (w1 + w2) / (w1 / a + w2 / b);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[m - 1] = end_slope(h[m - 2], h[m - 3], delta[m - 2], delta[m - 3]);
        Some(Self { x, y, d })
    }

    pub fn nodes(&self) -> &[T] {
        &self.x
    }

    pub fn values(&self) -> &[T] {
        &self.y
    }

    pub fn first(&self) -> (T, T) {
        (self.x[0], self.y[0])
    }

    pub fn last(&self) -> (T, T) {
        let k = self.x.len() - 1;
        (self.x[k], self.y[k])
    }

    /// Node derivative at the upper end.
    pub fn terminal_slope(&self) -> T {
        self.d[self.d.len() - 1]
    }

    /// Evaluates inside the node range; the end cubics are used outside it.
    pub fn eval(&self, t: T) -> T {
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        h00 * self.y[k] + h * h10 * self.d[k] + h01 * self.y[k + 1] + h * h11 * self.d[k + 1]
    }

    fn segment(&self, t: T) -> usize {
        let last = self.x.len() - 2;
        match self.x.binary_search_by(|p| p.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(last),
            Err(0) => 0,
            Err(i) => (i - 1).min(last),
        }
    }
}

/// One-sided three-point end derivative, limited to keep the end monotone.
fn end_slope<T: Real>(h0: T, h1: T, del0: T, del1: T) -> T {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let d = ((two * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= T::zero() {
        T::zero()
    } else if del0 * del1 <= T::zero() && d.abs() > (three * del0).abs() {
        three * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_exactly() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|t| t.exp()).collect();
        let s = MonotoneSpline::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(s.eval(*a), *b);
        }
    }

    #[test]
    fn monotone_data_never_overshoots() {
        // A step-like profile makes a natural cubic ring; this must not.
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let y = vec![0.0, 0.0, 0.0, 0.01, 0.02, 5.0, 5.01, 5.02, 5.02, 9.0, 9.0, 9.0];
        let s = MonotoneSpline::new(x, y.clone()).unwrap();
        let mut prev = s.eval(0.0);
        for i in 1..=1100 {
            let t = i as f64 * 0.01;
            let v = s.eval(t);
            assert!(v >= prev - 1e-14, "t = {t}");
            let k = (t.floor() as usize).min(10);
            assert!(v >= y[k] - 1e-14 && v <= y[k + 1] + 1e-14);
            prev = v;
        }
    }

    #[test]
    fn smooth_data_is_accurate() {
        let x: Vec<f64> = (0..=64).map(|i| -4.0 + i as f64 / 8.0).collect();
        let y: Vec<f64> = x.iter().map(|t| t.tanh()).collect();
        let s = MonotoneSpline::new(x, y).unwrap();
        for i in 0..400 {
            let t = -3.9 + i as f64 * 0.0195;
            assert!((s.eval(t) - t.tanh()).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(MonotoneSpline::new(vec![0.0_f64], vec![1.0]).is_none());
        assert!(MonotoneSpline::new(vec![0.0_f64, 0.0], vec![1.0, 2.0]).is_none());
        assert!(MonotoneSpline::new(vec![0.0_f64, 1.0], vec![1.0]).is_none());
    }

    #[test]
    fn two_nodes_is_linear() {
        let s = MonotoneSpline::new(vec![0.0_f64, 2.0], vec![1.0, 5.0]).unwrap();
        assert!((s.eval(0.5) - 2.0).abs() < 1e-15);
    }
}

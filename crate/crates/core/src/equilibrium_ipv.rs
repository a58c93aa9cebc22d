//! Symmetric equilibrium bids under independent private values.
//!
//! First-price (and Dutch):
//!     β(v) = v − ∫₀^v F^{n−1}(y) dy / F^{n−1}(v)
//! All-pay:
//!     β(v) = ∫₀^v y (n−1) F^{n−2}(y) f(y) dy  =  β_FP(v) · F^{n−1}(v)
//! Second-price and English bidders bid their value.
//!
//! Integrals run in the distribution's own coordinate (z for log-normal) and
//! the first-price ratio is formed in log space, so valuations whose
//! F^{n−1}(v) is below the smallest float still get a finite, correct bid.

use thiserror::Error;

use crate::distributions::ValueDistribution;
use crate::quadrature::{panels_for, Rule};
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IpvError {
    #[error("valuation must be positive and finite, got {0}")]
    Domain(f64),
    #[error("bidder count must be at least 2, got {0}")]
    BidderCount(usize),
}

/// A bid together with whether F^{n−1}(v) underflowed at this valuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidEval<T> {
    pub bid: T,
    pub underflow: bool,
}

const RULE_ORDER: usize = 8;

fn check<T: Real>(v: T, n: usize) -> Result<(), IpvError> {
    if !(v > T::zero() && v.is_finite()) {
        return Err(IpvError::Domain(v.as_f64()));
    }
    if n < 2 {
        return Err(IpvError::BidderCount(n));
    }
    Ok(())
}

fn underflows<T: Real>(ln_f_k: T) -> bool {
    !(ln_f_k > T::min_positive_value().ln())
}

/// Integration window `[lower, top]` and panel count for an integrand that
/// behaves like F^{power}(y)/F^{power}(v). With ln F concave in the
/// coordinate, the integrand decays at least as fast as its rate at `top`,
/// so 50 decay lengths bound the neglected mass by e^{-50}.
fn window<T: Real, D: ValueDistribution<T>>(dist: &D, top: T, power: T) -> (T, T, usize) {
    let floor = dist.coordinate_floor(top);
    let width = dist.panel_width();
    let step = T::lit(1e-4 * width);
    let slope = (dist.ln_cdf(dist.value_at(top)) - dist.ln_cdf(dist.value_at(top - step))) / step;
    let rate = power * slope;
    if !(rate.is_finite() && rate > T::zero()) {
        return (floor, top, panels_for(floor, top, width));
    }
    let lower = floor.max(top - T::lit(50.0) / rate);
    let span = (top - lower).as_f64();
    let width = width.min(span / 64.0);
    (lower, top, panels_for(lower, top, width))
}

/// First-price equilibrium bid.
pub fn fpsb_bid_ipv<T: Real, D: ValueDistribution<T>>(
    dist: &D,
    v: T,
    n: usize,
) -> Result<BidEval<T>, IpvError> {
    check(v, n)?;
    let k = T::from_count(n - 1);
    let ln_fv = dist.ln_cdf(v);
    let (lower, top, panels) = window(dist, dist.coordinate_of(v), k);
    let rule = Rule::<T>::gauss_legendre(RULE_ORDER);
    let ratio = rule.integrate(lower, top, panels, |s| {
        let ln_w = k * (dist.ln_cdf(dist.value_at(s)) - ln_fv);
        ln_w.exp() * dist.value_slope(s)
    });
    let bid = (v - ratio).max(T::zero()).min(v);
    Ok(BidEval {
        bid,
        underflow: underflows(k * ln_fv),
    })
}

/// All-pay equilibrium bid, by direct quadrature of the expected payment
/// integral (not via the first-price bid).
pub fn allpay_bid_ipv<T: Real, D: ValueDistribution<T>>(
    dist: &D,
    v: T,
    n: usize,
) -> Result<BidEval<T>, IpvError> {
    check(v, n)?;
    let k = T::from_count(n - 1);
    let km1 = T::from_count(n - 2);
    let (lower, top, panels) = window(dist, dist.coordinate_of(v), km1);
    let rule = Rule::<T>::gauss_legendre(RULE_ORDER);
    let bid = rule.integrate(lower, top, panels, |s| {
        let y = dist.value_at(s);
        let density = dist.pdf(y) * dist.value_slope(s);
        if !(y > T::zero() && density > T::zero()) {
            return T::zero();
        }
        let mut ln_w = y.ln() + density.ln();
        if n > 2 {
            ln_w = ln_w + km1 * dist.ln_cdf(y);
        }
        k * ln_w.exp()
    });
    Ok(BidEval {
        bid: bid.max(T::zero()),
        underflow: underflows(k * dist.ln_cdf(v)),
    })
}

/// Second-price and English bidding: bid the value.
pub fn truthful_bid<T: Real>(v: T) -> T {
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Lognormal, UniformValues};

    fn reference() -> Lognormal<f64> {
        Lognormal::new(1.102, 2.524).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn uniform_closed_forms() {
        let u = UniformValues { upper: 1.0_f64 };
        assert!((fpsb_bid_ipv(&u, 0.9, 3).unwrap().bid - 0.6).abs() < 1e-10);
        assert!((allpay_bid_ipv(&u, 0.5, 2).unwrap().bid - 0.125).abs() < 1e-10);
        for n in [2usize, 3, 5, 10, 20] {
            let nf = n as f64;
            for i in 1..20 {
                let v = i as f64 / 20.0;
                let fp = fpsb_bid_ipv(&u, v, n).unwrap().bid;
                let ap = allpay_bid_ipv(&u, v, n).unwrap().bid;
                assert!((fp - (nf - 1.0) * v / nf).abs() < 1e-10, "n={n} v={v}");
                assert!((ap - (nf - 1.0) * v.powi(n as i32) / nf).abs() < 1e-10, "n={n} v={v}");
            }
        }
    }

    #[test]
    fn matches_high_precision_lognormal_bids() {
        // Independent 50-digit evaluations of the first-price integral.
        let cases: [(usize, [f64; 4]); 4] = [
            (2, [0.00970486540059277, 0.8443219111203067, 5.514185782013438, 49.76559787812986]),
            (5, [0.015364927699006278, 1.7697565462360394, 14.227678293916955, 173.51838721144959]),
            (10, [0.017316341063588103, 2.269132987381032, 20.950188714501375, 338.5691225433434]),
            (20, [0.018314575921934636, 2.5957514326906253, 26.770435879830566, 595.5858308061968]),
        ];
        let p = reference();
        for (n, bids) in cases {
            for (z, want) in [-2.0, 0.0, 1.0, 3.0].into_iter().zip(bids) {
                let got = fpsb_bid_ipv(&p, p.value_at(z), n).unwrap();
                assert!(rel(got.bid, want) < 1e-9, "n={n} z={z}: {} vs {want}", got.bid);
                assert!(!got.underflow);
            }
        }
    }

    #[test]
    fn allpay_factorizes_through_first_price() {
        let p = reference();
        for n in [2usize, 4, 5, 10, 20] {
            for i in 0..50 {
                let z = -4.5 + 9.0 * i as f64 / 49.0;
                let v = p.value_at(z);
                let fp = fpsb_bid_ipv(&p, v, n).unwrap().bid;
                let ap = allpay_bid_ipv(&p, v, n).unwrap().bid;
                let want = fp * p.cdf(v).powi(n as i32 - 1);
                assert!(rel(ap, want) < 1e-6, "n={n} z={z}: {ap} vs {want}");
            }
        }
        let median = p.quantile(0.5);
        let fp = fpsb_bid_ipv(&p, median, 4).unwrap().bid;
        let ap = allpay_bid_ipv(&p, median, 4).unwrap().bid;
        assert!(rel(ap, fp * 0.125) < 1e-6);
    }

    #[test]
    fn bids_are_increasing_and_shaded() {
        let p = reference();
        for n in [2usize, 5, 10, 20] {
            let mut prev = (0.0, 0.0);
            for i in 0..200 {
                let z = -4.75 + 9.5 * i as f64 / 199.0;
                let v = p.value_at(z);
                let fp = fpsb_bid_ipv(&p, v, n).unwrap().bid;
                let ap = allpay_bid_ipv(&p, v, n).unwrap().bid;
                assert!(fp > prev.0 && ap > prev.1, "n={n} z={z}");
                assert!(fp > 0.0 && fp < v);
                prev = (fp, ap);
            }
        }
    }

    #[test]
    fn shading_shrinks_with_more_bidders() {
        let p = reference();
        for z in [-3.0, -1.0, 0.0, 1.5, 4.0] {
            let v = p.value_at(z);
            let shading: Vec<f64> = [2usize, 3, 5, 10, 20]
                .iter()
                .map(|&n| v - fpsb_bid_ipv(&p, v, n).unwrap().bid)
                .collect();
            assert!(shading.windows(2).all(|w| w[1] < w[0]), "z={z}: {shading:?}");
        }
    }

    #[test]
    fn vanishing_valuations_bid_vanishingly() {
        let p = reference();
        let small = fpsb_bid_ipv(&p, 1e-12, 5).unwrap().bid;
        assert!(small > 0.0 && small < 1e-12);
    }

    #[test]
    fn deep_tail_is_flagged_but_finite() {
        let p = reference();
        let v = p.value_at(-30.0);
        let got = fpsb_bid_ipv(&p, v, 20).unwrap();
        assert!(got.underflow);
        assert!(got.bid > 0.0 && got.bid < v);
    }

    #[test]
    fn single_precision() {
        let p = Lognormal::new(1.102_f32, 2.524).unwrap();
        let got = fpsb_bid_ipv(&p, p.value_at(1.0), 5).unwrap().bid;
        assert!(((got as f64) - 14.227678293916955).abs() / 14.23 < 1e-4);
    }

    #[test]
    fn errors_and_truthful() {
        let p = reference();
        assert_eq!(fpsb_bid_ipv(&p, 0.0, 3), Err(IpvError::Domain(0.0)));
        assert_eq!(allpay_bid_ipv(&p, -1.0, 3), Err(IpvError::Domain(-1.0)));
        assert_eq!(fpsb_bid_ipv(&p, 1.0, 1), Err(IpvError::BidderCount(1)));
        for v in [1.0, 3.01, 1e7] {
            assert_eq!(truthful_bid(v), v);
        }
    }
}

//! Log-normal valuation model.
//!
//! Valuations are `v = exp(μ + σ z)` with `z ~ N(0, 1)`; most integrals in the
//! crate are carried out in the signal coordinate `z`, where the integrands are
//! smooth Gaussians instead of heavy-tailed densities on (0, ∞).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{panels_for, Rule};
use crate::real::Real;
use crate::special::{ln_norm_cdf, ln_norm_pdf, norm_cdf, norm_pdf, norm_quantile, norm_sf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("mu must be finite, got {0}")]
    InvalidMu(f64),
    #[error("value at index {index} is not strictly positive ({value})")]
    NonPositive { index: usize, value: f64 },
    #[error("insufficient data: need at least 2 values, got {0}")]
    InsufficientData(usize),
    #[error("insufficient dispersion: all log-values are equal")]
    ZeroDispersion,
    #[error("bidder count must be at least 2, got {0}")]
    BidderCount(usize),
    #[error("fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
}

/// Log-normal law of valuations: `ln v ~ N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Lognormal<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Real> Lognormal<T> {
    pub fn new(mu: T, sigma: T) -> Result<Self, DistributionError> {
        if !mu.is_finite() {
            return Err(DistributionError::InvalidMu(mu.as_f64()));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(DistributionError::InvalidSigma(sigma.as_f64()));
        }
        Ok(Self { mu, sigma })
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validated(self) -> Result<Self, DistributionError> {
        Self::new(self.mu, self.sigma)
    }

    /// `v(z) = exp(μ + σ z)`.
    #[inline]
    pub fn value_at(&self, z: T) -> T {
        (self.mu + self.sigma * z).exp()
    }

    /// `z(v) = (ln v − μ) / σ`.
    #[inline]
    pub fn signal_of(&self, v: T) -> T {
        (v.ln() - self.mu) / self.sigma
    }

    pub fn cdf(&self, v: T) -> T {
        if v <= T::zero() {
            return T::zero();
        }
        norm_cdf(self.signal_of(v))
    }

    pub fn sf(&self, v: T) -> T {
        if v <= T::zero() {
            return T::one();
        }
        norm_sf(self.signal_of(v))
    }

    pub fn pdf(&self, v: T) -> T {
        if v <= T::zero() {
            return T::zero();
        }
        norm_pdf(self.signal_of(v)) / (v * self.sigma)
    }

    pub fn quantile(&self, p: T) -> T {
        self.value_at(norm_quantile(p))
    }

    pub fn mean(&self) -> T {
        (self.mu + self.sigma * self.sigma / T::lit(2.0)).exp()
    }

    pub fn median(&self) -> T {
        self.mu.exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.value_at(T::standard_normal(rng))
    }
}

/// A valuation distribution the equilibrium integrals can be evaluated
/// against. Integrals run in an implementation-chosen coordinate `s`, with
/// `v = value_at(s)` increasing in `s`.
pub trait ValueDistribution<T: Real>: Sync {
    fn cdf(&self, v: T) -> T;

    /// ln F(v); override where the plain logarithm would underflow.
    fn ln_cdf(&self, v: T) -> T {
        self.cdf(v).ln()
    }

    fn pdf(&self, v: T) -> T;

    fn value_at(&self, s: T) -> T;

    /// dv/ds.
    fn value_slope(&self, s: T) -> T;

    fn coordinate_of(&self, v: T) -> T;

    /// Lower integration limit for integrals ending at coordinate `upper`.
    fn coordinate_floor(&self, upper: T) -> T;

    /// Preferred quadrature panel width in `s`.
    fn panel_width(&self) -> f64;
}

impl<T: Real> ValueDistribution<T> for Lognormal<T> {
    fn cdf(&self, v: T) -> T {
        Lognormal::cdf(self, v)
    }

    fn ln_cdf(&self, v: T) -> T {
        if v <= T::zero() {
            return T::neg_infinity();
        }
        ln_norm_cdf(self.signal_of(v))
    }

    fn pdf(&self, v: T) -> T {
        Lognormal::pdf(self, v)
    }

    fn value_at(&self, s: T) -> T {
        Lognormal::value_at(self, s)
    }

    fn value_slope(&self, s: T) -> T {
        self.sigma * Lognormal::value_at(self, s)
    }

    fn coordinate_of(&self, v: T) -> T {
        self.signal_of(v)
    }

    fn coordinate_floor(&self, upper: T) -> T {
        // F^{k}(y)/F^{k}(v) and y f(y) are below e^{-50} this far out.
        upper.min(T::lit(-10.0)) - T::lit(10.0)
    }

    fn panel_width(&self) -> f64 {
        0.25
    }
}

/// Uniform valuations on [0, upper]. Its equilibrium bids have closed forms,
/// which makes it the exact oracle for the quadrature paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformValues<T> {
    pub upper: T,
}

impl<T: Real> ValueDistribution<T> for UniformValues<T> {
    fn cdf(&self, v: T) -> T {
        (v / self.upper).max(T::zero()).min(T::one())
    }

    fn pdf(&self, v: T) -> T {
        if v < T::zero() || v > self.upper {
            T::zero()
        } else {
            self.upper.recip()
        }
    }

    fn value_at(&self, s: T) -> T {
        s
    }

    fn value_slope(&self, _s: T) -> T {
        T::one()
    }

    fn coordinate_of(&self, v: T) -> T {
        v
    }

    fn coordinate_floor(&self, _upper: T) -> T {
        T::zero()
    }

    fn panel_width(&self) -> f64 {
        self.upper.as_f64() / 16.0
    }
}

/// Maximum-likelihood fit: μ̂ is the mean of ln v, σ̂ the population (1/N)
/// standard deviation of ln v.
pub fn fit_mle<T: Real>(values: &[T]) -> Result<Lognormal<T>, DistributionError> {
    let logs = log_values(values)?;
    let n = T::from_count(logs.len());
    let mu = logs.iter().copied().sum::<T>() / n;
    let var = logs.iter().map(|&l| (l - mu) * (l - mu)).sum::<T>() / n;
    if !(var > T::zero()) {
        return Err(DistributionError::ZeroDispersion);
    }
    Lognormal::new(mu, var.sqrt())
}

/// Shape of the log-values relative to a normal: sample skewness and excess
/// kurtosis (moment estimators with the 1/N divisor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogShape {
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn log_shape<T: Real>(values: &[T]) -> Result<LogShape, DistributionError> {
    let logs = log_values(values)?;
    let n = logs.len() as f64;
    let logs: Vec<f64> = logs.into_iter().map(Real::as_f64).collect();
    let mean = logs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for l in &logs {
        let d = l - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return Err(DistributionError::ZeroDispersion);
    }
    Ok(LogShape {
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

fn log_values<T: Real>(values: &[T]) -> Result<Vec<T>, DistributionError> {
    if values.len() < 2 {
        return Err(DistributionError::InsufficientData(values.len()));
    }
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v > T::zero() && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(DistributionError::NonPositive {
                    index,
                    value: v.as_f64(),
                })
            }
        })
        .collect()
}

/// E[v₍ₖ₎], the k-th largest of n i.i.d. valuations, by Gauss–Legendre
/// quadrature in the signal coordinate.
pub fn expected_order_statistic<T: Real>(
    params: &Lognormal<T>,
    n: usize,
    k: usize,
) -> Result<T, DistributionError> {
    if n < 2 {
        return Err(DistributionError::BidderCount(n));
    }
    assert!(k >= 1 && k <= n, "order statistic rank out of range");
    // n · C(n−1, k−1) · Φ^{n−k} (1−Φ)^{k−1} φ is the density of the k-th largest.
    let ln_coef = ln_choose(n - 1, k - 1) + (n as f64).ln();
    let below = T::from_count(n - k);
    let above = T::from_count(k - 1);
    let ln_coef = T::lit(ln_coef);
    let lo = T::lit(-12.0);
    let hi = T::lit(12.0).max(params.sigma + T::lit(12.0));
    let rule = Rule::<T>::gauss_legendre(8);
    let integral = rule.integrate(lo, hi, panels_for(lo, hi, 0.2), |z| {
        let mut ln_w = ln_coef + ln_norm_pdf(z) + params.mu + params.sigma * z;
        if below > T::zero() {
            ln_w = ln_w + below * ln_norm_cdf(z);
        }
        if above > T::zero() {
            ln_w = ln_w + above * ln_norm_cdf(-z);
        }
        ln_w.exp()
    });
    Ok(integral)
}

/// E[v₍₂₎], the expected second-highest of n valuations: the revenue of the
/// truthful formats under independent private values.
pub fn expected_second_order_statistic<T: Real>(
    params: &Lognormal<T>,
    n: usize,
) -> Result<T, DistributionError> {
    expected_order_statistic(params, n, 2)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n + 1 - i) as f64 / i as f64).ln()).sum()
}

/// Exact Gini coefficient of a log-normal: 2Φ(σ/√2) − 1.
pub fn gini_closed_form<T: Real>(params: &Lognormal<T>) -> T {
    (params.sigma / T::lit(2.0)).erf()
}

/// Share of total value held by the top `top_fraction` of the population:
/// 1 − Φ(Φ⁻¹(1 − p) − σ).
pub fn lorenz_share<T: Real>(params: &Lognormal<T>, top_fraction: T) -> Result<T, DistributionError> {
    if !(top_fraction > T::zero() && top_fraction < T::one()) {
        return Err(DistributionError::Fraction(top_fraction.as_f64()));
    }
    Ok(norm_cdf(params.sigma + norm_quantile(top_fraction)))
}

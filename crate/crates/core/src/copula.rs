//! Gaussian common-factor model of affiliated signals.
//!
//! Bidder `i` observes `zᵢ = √ρ·Z + √(1−ρ)·εᵢ` with a common factor `Z` and
//! idiosyncratic shocks `εᵢ`, all independent standard normals. Each signal is
//! marginally N(0, 1) for every ρ, and any two signals have correlation ρ.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat) driven by
//! ChaCha8 substreams; rows are generated in fixed blocks of
//! [`SIGNAL_BLOCK`] so the output does not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::Lognormal;
use crate::real::Real;
use crate::seed::{self, stream};

pub const SIGNAL_BLOCK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CopulaError {
    #[error("affiliation rho must lie in [0, 1), got {0}")]
    Rho(f64),
    #[error("bidder count must be at least 2, got {0}")]
    BidderCount(usize),
}

pub(crate) fn check_rho<T: Real>(rho: T) -> Result<(), CopulaError> {
    if rho >= T::zero() && rho < T::one() {
        Ok(())
    } else {
        Err(CopulaError::Rho(rho.as_f64()))
    }
}

/// Symmetric n-bidder common-factor model with log-normal marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AffiliationModel<T> {
    pub rho: T,
    pub n: usize,
    pub params: Lognormal<T>,
}

impl<T: Real> AffiliationModel<T> {
    pub fn new(rho: T, n: usize, params: Lognormal<T>) -> Result<Self, CopulaError> {
        check_rho(rho)?;
        if n < 2 {
            return Err(CopulaError::BidderCount(n));
        }
        Ok(Self { rho, n, params })
    }

    pub fn factor_loading(&self) -> T {
        self.rho.sqrt()
    }

    pub fn idiosyncratic_loading(&self) -> T {
        (T::one() - self.rho).sqrt()
    }
}

/// Row-major `auctions × n` matrix of signals or valuations.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix<T> {
    pub auctions: usize,
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> SignalMatrix<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.n)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.rows().map(move |r| r[j])
    }
}

/// Draws `auctions` independent rows of affiliated signals. Each row uses one
/// fresh common factor and `n` fresh idiosyncratic shocks.
pub fn sample_signals<T: Real>(
    model: &AffiliationModel<T>,
    auctions: usize,
    seed: u64,
) -> SignalMatrix<T> {
    let n = model.n;
    let a = model.factor_loading();
    let b = model.idiosyncratic_loading();
    let mut data = vec![T::zero(); auctions * n];
    data.par_chunks_mut(SIGNAL_BLOCK * n)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = seed::rng(seed, &[stream::SIGNALS, block as u64]);
            for row in chunk.chunks_exact_mut(n) {
                let common = T::standard_normal(&mut rng);
                for z in row.iter_mut() {
                    *z = a * common + b * T::standard_normal(&mut rng);
                }
            }
        });
    SignalMatrix { auctions, n, data }
}

/// Signals with the common factor pinned to `factor`. Given `Z`, rival signals
/// are independent N(√ρ·Z, 1 − ρ).
pub fn sample_signals_given_factor<T: Real>(
    model: &AffiliationModel<T>,
    factor: T,
    auctions: usize,
    seed: u64,
) -> SignalMatrix<T> {
    let n = model.n;
    let shift = model.factor_loading() * factor;
    let b = model.idiosyncratic_loading();
    let mut data = vec![T::zero(); auctions * n];
    data.par_chunks_mut(SIGNAL_BLOCK * n)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = seed::rng(seed, &[stream::SIGNALS, block as u64, 1]);
            for z in chunk.iter_mut() {
                *z = shift + b * T::standard_normal(&mut rng);
            }
        });
    SignalMatrix { auctions, n, data }
}

/// Elementwise `v = exp(μ + σ z)`.
pub fn signals_to_values<T: Real>(signals: &SignalMatrix<T>, params: &Lognormal<T>) -> SignalMatrix<T> {
    SignalMatrix {
        auctions: signals.auctions,
        n: signals.n,
        data: signals.data.iter().map(|&z| params.value_at(z)).collect(),
    }
}

/// Posterior of the common factor given one's own signal:
/// `Z | zᵢ ~ N(√ρ·zᵢ, 1 − ρ)`. Returns `(mean, variance)`.
pub fn posterior_common_factor<T: Real>(z_own: T, rho: T) -> Result<(T, T), CopulaError> {
    check_rho(rho)?;
    Ok((rho.sqrt() * z_own, T::one() - rho))
}

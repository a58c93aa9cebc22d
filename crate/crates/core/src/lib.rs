//! Auction-format revenue laboratory for MEV orderflow: equilibrium bids
//! under independent and affiliated log-normal values, Monte Carlo revenue
//! grids, comparison metrics, and calibration from transaction data.
//!
//! The numerical core is generic over the float type through [`Real`]; the
//! aliases below fix it to `f64`.

pub mod copula;
pub mod distributions;
pub mod empirics;
pub mod equilibrium_affiliated;
pub mod equilibrium_ipv;
pub mod metrics;
pub mod quadrature;
pub mod real;
pub mod seed;
pub mod simulate;
pub mod special;
pub mod spline;

pub use real::Real;

pub type LognormalParams = distributions::Lognormal<f64>;
pub type Uniform = distributions::UniformValues<f64>;
pub type BidFunction = equilibrium_affiliated::BidFunction<f64>;
pub type AffiliationModel = copula::AffiliationModel<f64>;
pub type SignalMatrix = copula::SignalMatrix<f64>;
pub type AuctionScenario = simulate::AuctionScenario<f64>;
pub type GridSpec = simulate::GridSpec<f64>;
pub type Rule = quadrature::Rule<f64>;

pub use empirics::{MevType, TransactionRecord};
pub use equilibrium_affiliated::SolverConfig;
pub use simulate::{CellResult, Estimator, RevenueGrid};

/// Parameters fitted to the pooled extracted values in the reference data.
pub const REFERENCE_MU: f64 = 1.102;
pub const REFERENCE_SIGMA: f64 = 2.524;

pub fn reference_params() -> LognormalParams {
    LognormalParams::new(REFERENCE_MU, REFERENCE_SIGMA).expect("valid constants")
}

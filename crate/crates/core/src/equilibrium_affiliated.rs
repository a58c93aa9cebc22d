//! First-price equilibrium with affiliated private values.
//!
//! With signals from the Gaussian common-factor model, the symmetric
//! equilibrium bid solves, in signal space,
//!
//! ```text
//! β'(z) = h(z) · (v(z) − β(z)),   h(t) = g(t | t) / G(t | t),
//! ```
//!
//! where G(y | x) is the CDF of the highest rival signal given one's own
//! signal x and g = ∂G/∂y. G is an expectation over the posterior of the
//! common factor, estimated with a fixed set of stratified posterior draws
//! shared by every evaluation (common random numbers), so h is smooth in t.
//!
//! The march works on the shading s = v − β, which obeys the linear equation
//! s' = σv − h·s. Each step integrates it exactly against a quadratic
//! interpolant of h, which stays stable where h·Δz is large (the left tail at
//! high n) and is fourth-order accurate elsewhere.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copula::{check_rho, CopulaError};
use crate::distributions::Lognormal;
use crate::equilibrium_ipv::fpsb_bid_ipv;
use crate::quadrature::{panels_for, Rule};
use crate::real::Real;
use crate::seed::{self, stream};
use crate::special::{ln_norm_cdf, ln_norm_pdf, log_sum_exp, norm_quantile, LogSumExp};
use crate::spline::MonotoneSpline;

pub const FORMAT: &str = "mevauction.bid_function";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] CopulaError),
    #[error("bidder count must be at least 2, got {0}")]
    BidderCount(usize),
    #[error("grid needs at least 50 nodes, got {0}")]
    GridNodes(usize),
    #[error("posterior sample count must be positive")]
    McSamples,
    #[error("solved bids are not increasing at grid node {index}")]
    NonMonotone { index: usize },
    #[error("valuation must be positive and finite, got {0}")]
    Domain(f64),
    #[error("bid function document: {0}")]
    Document(String),
}

/// Stratified standard-normal draws `uⱼ = Φ⁻¹((j + Uⱼ)/M)`, used as
/// `Z = √ρ·x + √(1−ρ)·uⱼ` for the common factor's posterior given signal x.
#[derive(Debug, Clone)]
pub struct PosteriorDraws<T> {
    u: Vec<T>,
}

impl<T: Real> PosteriorDraws<T> {
    pub fn new(samples: usize, seed: u64) -> Result<Self, SolverError> {
        if samples == 0 {
            return Err(SolverError::McSamples);
        }
        let mut rng = seed::rng(seed, &[stream::BID_SOLVE]);
        let m = T::from_count(samples);
        let u = (0..samples)
            .map(|j| {
                let p = (T::from_count(j) + T::unit(&mut rng)) / m;
                norm_quantile(p.max(T::min_positive_value()))
            })
            .collect();
        Ok(Self { u })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    fn ln_count(&self) -> T {
        T::from_count(self.u.len()).ln()
    }

    /// Standardized rival argument (y − √ρ Zⱼ)/√(1−ρ) for each draw.
    fn arguments(&self, y: T, x: T, rho: T) -> impl Iterator<Item = T> + Clone + '_ {
        let b = (T::one() - rho).sqrt();
        let shift = (y - rho * x) / b;
        let scale = rho.sqrt();
        self.u.iter().map(move |&u| shift - scale * u)
    }
}

/// ln G(y | x).
pub fn ln_highest_rival_cdf<T: Real>(y: T, x: T, n: usize, rho: T, draws: &PosteriorDraws<T>) -> T {
    let k = T::from_count(n - 1);
    if rho == T::zero() {
        return k * ln_norm_cdf(y);
    }
    log_sum_exp(draws.arguments(y, x, rho).map(|a| k * ln_norm_cdf(a))) - draws.ln_count()
}

/// G(y | x) = E_{Z|x}[Φ((y − √ρ Z)/√(1−ρ))^{n−1}].
pub fn highest_rival_cdf<T: Real>(
    y: T,
    x: T,
    n: usize,
    rho: T,
    mc_samples: usize,
    seed: u64,
) -> Result<T, SolverError> {
    check_rho(rho)?;
    check_n(n)?;
    let draws = PosteriorDraws::new(mc_samples, seed)?;
    Ok(ln_highest_rival_cdf(y, x, n, rho, &draws).exp().min(T::one()))
}

/// ln g(y | x), the log density of the highest rival signal, using the
/// analytic inner derivative on the same draws.
pub fn ln_highest_rival_density<T: Real>(y: T, x: T, n: usize, rho: T, draws: &PosteriorDraws<T>) -> T {
    let km1 = T::from_count(n - 2);
    let lead = T::from_count(n - 1).ln() - T::lit(0.5) * (T::one() - rho).ln();
    let term = |a: T| {
        let base = ln_norm_pdf(a);
        if n > 2 {
            base + km1 * ln_norm_cdf(a)
        } else {
            base
        }
    };
    if rho == T::zero() {
        return lead + term(y);
    }
    lead + log_sum_exp(draws.arguments(y, x, rho).map(term)) - draws.ln_count()
}

/// Hazard value with a flag for nodes where G(t|t) was not representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardEval<T> {
    pub value: T,
    pub singular: bool,
}

fn hazard_with<T: Real>(t: T, n: usize, rho: T, draws: &PosteriorDraws<T>) -> HazardEval<T> {
    let (ln_g, ln_big_g) = if rho == T::zero() {
        (
            ln_highest_rival_density(t, t, n, rho, draws),
            ln_highest_rival_cdf(t, t, n, rho, draws),
        )
    } else {
        // One lnΦ per draw serves both the CDF and the density sums.
        let k = T::from_count(n - 1);
        let km1 = T::from_count(n - 2);
        let mut big = LogSumExp::default();
        let mut dens = LogSumExp::default();
        for a in draws.arguments(t, t, rho) {
            let l = ln_norm_cdf(a);
            big.push(k * l);
            dens.push(ln_norm_pdf(a) + km1 * l);
        }
        let lead = k.ln() - T::lit(0.5) * (T::one() - rho).ln();
        (lead + dens.value(), big.value())
    };
    let value = (ln_g - ln_big_g).exp();
    HazardEval {
        value,
        singular: !(value.is_finite() && value > T::zero()),
    }
}

/// h(t) = g(t|t)/G(t|t).
pub fn diagonal_hazard<T: Real>(
    t: T,
    n: usize,
    rho: T,
    mc_samples: usize,
    seed: u64,
) -> Result<HazardEval<T>, SolverError> {
    check_rho(rho)?;
    check_n(n)?;
    let draws = PosteriorDraws::new(mc_samples, seed)?;
    Ok(hazard_with(t, n, rho, &draws))
}

fn check_n(n: usize) -> Result<(), SolverError> {
    if n < 2 {
        Err(SolverError::BidderCount(n))
    } else {
        Ok(())
    }
}

/// Numerical settings for [`solve_bid_function_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid_nodes: usize,
    pub mc_samples: usize,
    /// Initial relative shading, β = v·(1 − ε₀), at the start of the lead-in.
    pub epsilon: f64,
    /// Signal distance below the grid where the march starts.
    pub lead_in: f64,
    /// Tail probability fixing the lower grid end at Φ⁻¹(p).
    pub tail_probability: f64,
    /// Minimum distance of the upper grid end above σ.
    pub upper_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_nodes: 256,
            mc_samples: 4096,
            epsilon: 1e-3,
            lead_in: 6.0,
            tail_probability: 1e-6,
            upper_margin: 5.0,
        }
    }
}

impl SolverConfig {
    /// Grid end points for valuation spread σ.
    pub fn bounds<T: Real>(&self, sigma: T) -> (T, T) {
        let lo = norm_quantile(T::lit(self.tail_probability));
        let hi = (-lo).max(sigma + T::lit(self.upper_margin));
        (lo, hi)
    }
}

/// Tabulated equilibrium bids on a uniform signal grid, with a monotone
/// cubic interpolant of ln β in z.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(
    bound = "T: Real",
    into = "BidFunctionDoc<T>",
    try_from = "BidFunctionDoc<T>"
)]
pub struct BidFunction<T: Real> {
    pub n: usize,
    pub rho: T,
    pub params: Lognormal<T>,
    pub mc_samples: usize,
    pub seed: u64,
    pub config: SolverConfig,
    pub signal_grid: Vec<T>,
    pub bids: Vec<T>,
    /// Grid indices whose hazard was clamped.
    pub singular_nodes: Vec<usize>,
    spline: MonotoneSpline<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct BidFunctionDoc<T> {
    format: String,
    version: u32,
    n: usize,
    rho: T,
    params: Lognormal<T>,
    mc_samples: usize,
    seed: u64,
    config: SolverConfig,
    signal_grid: Vec<T>,
    bids: Vec<T>,
    singular_nodes: Vec<usize>,
}

impl<T: Real> From<BidFunction<T>> for BidFunctionDoc<T> {
    fn from(b: BidFunction<T>) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            n: b.n,
            rho: b.rho,
            params: b.params,
            mc_samples: b.mc_samples,
            seed: b.seed,
            config: b.config,
            signal_grid: b.signal_grid,
            bids: b.bids,
            singular_nodes: b.singular_nodes,
        }
    }
}

impl<T: Real> TryFrom<BidFunctionDoc<T>> for BidFunction<T> {
    type Error = SolverError;

    fn try_from(d: BidFunctionDoc<T>) -> Result<Self, SolverError> {
        if d.format != FORMAT || d.version != FORMAT_VERSION {
            return Err(SolverError::Document(format!(
                "unsupported format {} v{}",
                d.format, d.version
            )));
        }
        d.params
            .validated()
            .map_err(|e| SolverError::Document(e.to_string()))?;
        check_rho(d.rho)?;
        check_n(d.n)?;
        BidFunction::from_table(
            d.n,
            d.rho,
            d.params,
            d.mc_samples,
            d.seed,
            d.config,
            d.signal_grid,
            d.bids,
            d.singular_nodes,
        )
    }
}

impl<T: Real> BidFunction<T> {
    #[allow(clippy::too_many_arguments)]
    fn from_table(
        n: usize,
        rho: T,
        params: Lognormal<T>,
        mc_samples: usize,
        seed: u64,
        config: SolverConfig,
        signal_grid: Vec<T>,
        bids: Vec<T>,
        singular_nodes: Vec<usize>,
    ) -> Result<Self, SolverError> {
        if let Some(i) = bids.iter().position(|b| !(*b > T::zero() && b.is_finite())) {
            return Err(SolverError::NonMonotone { index: i });
        }
        if let Some(i) = bids.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(SolverError::NonMonotone { index: i + 1 });
        }
        let ln_bids = bids.iter().map(|b| b.ln()).collect();
        let spline = MonotoneSpline::new(signal_grid.clone(), ln_bids)
            .ok_or_else(|| SolverError::Document("signal grid must be strictly increasing".into()))?;
        Ok(Self {
            n,
            rho,
            params,
            mc_samples,
            seed,
            config,
            signal_grid,
            bids,
            singular_nodes,
            spline,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bid function serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SolverError> {
        serde_json::from_str(text).map_err(|e| SolverError::Document(e.to_string()))
    }

    pub fn z_lo(&self) -> T {
        self.signal_grid[0]
    }

    pub fn z_hi(&self) -> T {
        self.signal_grid[self.signal_grid.len() - 1]
    }

    /// Bid of a bidder with signal z.
    pub fn bid_at_signal(&self, z: T) -> T {
        let (z_lo, ln_lo) = self.spline.first();
        let (z_hi, ln_hi) = self.spline.last();
        if z < z_lo {
            // Keep the bid-to-value ratio of the lowest node.
            return self.params.value_at(z) * (ln_lo - self.params.mu - self.params.sigma * z_lo).exp();
        }
        if z > z_hi {
            let top = ln_hi.exp();
            return top + top * self.spline.terminal_slope() * (z - z_hi);
        }
        self.spline.eval(z).exp()
    }

    /// Bid of a bidder with valuation v.
    pub fn evaluate_bid(&self, v: T) -> Result<T, SolverError> {
        if !(v > T::zero() && v.is_finite()) {
            return Err(SolverError::Domain(v.as_f64()));
        }
        Ok(self.bid_at_signal(self.params.signal_of(v)))
    }

    /// Expected first-price revenue E[β(z₍₁₎)] by quadrature over the common
    /// factor (Gauss–Hermite) and the top idiosyncratic shock (Gauss–Legendre
    /// against the density of the maximum of n normals).
    pub fn expected_revenue(&self) -> T {
        let gh = Rule::<T>::gauss_hermite_normal(48);
        let gl = Rule::<T>::gauss_legendre(8);
        let a = self.rho.sqrt();
        let b = (T::one() - self.rho).sqrt();
        let nf = T::from_count(self.n);
        let k = T::from_count(self.n - 1);
        let (lo, hi) = (T::lit(-8.0), T::lit(9.0));
        let panels = panels_for(lo, hi, 0.125);
        let mut total = T::zero();
        for (x, w) in gh.nodes.iter().zip(&gh.weights) {
            let common = a * *x;
            total = total
                + *w * gl.integrate(lo, hi, panels, |e| {
                    let ln_density = nf.ln() + k * ln_norm_cdf(e) + ln_norm_pdf(e);
                    ln_density.exp() * self.bid_at_signal(common + b * e)
                });
            if self.rho == T::zero() {
                return total / *w;
            }
        }
        total
    }
}

/// Solves with the default numerical settings and the given grid size and
/// posterior sample count.
pub fn solve_bid_function<T: Real>(
    n: usize,
    rho: T,
    params: Lognormal<T>,
    grid_nodes: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<BidFunction<T>, SolverError> {
    let config = SolverConfig {
        grid_nodes,
        mc_samples,
        ..SolverConfig::default()
    };
    solve_bid_function_with(n, rho, params, &config, seed)
}

/// March positions: the lead-in, then the grid, at one common spacing.
fn march_nodes<T: Real>(config: &SolverConfig, sigma: T) -> (Vec<T>, usize) {
    let (lo, hi) = config.bounds(sigma);
    let dz = (hi - lo) / T::from_count(config.grid_nodes - 1);
    let lead = (T::lit(config.lead_in) / dz).ceil().to_usize().unwrap_or(0);
    let nodes = (0..lead + config.grid_nodes)
        .map(|i| {
            if i < lead {
                lo - dz * T::from_count(lead - i)
            } else {
                lo + dz * T::from_count(i - lead)
            }
        })
        .collect();
    (nodes, lead)
}

pub fn solve_bid_function_with<T: Real>(
    n: usize,
    rho: T,
    params: Lognormal<T>,
    config: &SolverConfig,
    seed: u64,
) -> Result<BidFunction<T>, SolverError> {
    check_rho(rho)?;
    check_n(n)?;
    if config.grid_nodes < 50 {
        return Err(SolverError::GridNodes(config.grid_nodes));
    }
    let draws = PosteriorDraws::new(config.mc_samples, seed)?;
    let (nodes, lead) = march_nodes(config, params.sigma);

    // Hazard at every node and every step midpoint, in z order.
    let points: Vec<T> = nodes
        .iter()
        .enumerate()
        .flat_map(|(i, &z)| {
            let mid = nodes.get(i + 1).map(|&b| (z + b) / T::lit(2.0));
            std::iter::once(z).chain(mid)
        })
        .collect();
    let mut hazard: Vec<HazardEval<T>> = points
        .par_iter()
        .map(|&t| hazard_with(t, n, rho, &draws))
        .collect();
    // Clamp non-representable values to the nearest good value above them.
    let mut good = None;
    for h in hazard.iter_mut().rev() {
        if h.singular {
            if let Some(g) = good {
                h.value = g;
            }
        } else {
            good = Some(h.value);
        }
    }
    let singular_nodes: Vec<usize> = (lead..nodes.len())
        .filter(|&i| hazard[2 * i].singular)
        .map(|i| i - lead)
        .collect();

    let gl = Rule::<T>::gauss_legendre(8);
    let half = T::lit(0.5);
    let sigma = params.sigma;
    let mut shading = T::lit(config.epsilon) * params.value_at(nodes[0]);
    let mut bids = Vec::with_capacity(config.grid_nodes);
    if lead == 0 {
        bids.push(params.value_at(nodes[0]) - shading);
    }
    for i in 0..nodes.len() - 1 {
        let (za, zb) = (nodes[i], nodes[i + 1]);
        let d = zb - za;
        let (ha, hm, hb) = (hazard[2 * i].value, hazard[2 * i + 1].value, hazard[2 * i + 2].value);
        // h(za + dτ) ≈ ha + c1 τ + c2 τ², cumulative Q(τ) = d ∫₀^τ h.
        let c1 = T::lit(4.0) * hm - T::lit(3.0) * ha - hb;
        let c2 = T::lit(2.0) * (ha + hb) - T::lit(4.0) * hm;
        let q = |tau: T| d * tau * (ha + tau * (c1 * half + tau * c2 / T::lit(3.0)));
        let q1 = q(T::one());
        let mut forcing = T::zero();
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let tau = half * (*x + T::one());
            forcing = forcing + *w * half * (q(tau) - q1).exp() * sigma * params.value_at(za + d * tau);
        }
        shading = shading * (-q1).exp() + d * forcing;
        if i + 1 >= lead {
            bids.push(params.value_at(zb) - shading);
        }
    }
    let grid = nodes[lead..].to_vec();
    BidFunction::from_table(
        n,
        rho,
        params,
        config.mc_samples,
        seed,
        *config,
        grid,
        bids,
        singular_nodes,
    )
}

/// First-price IPV bids tabulated on the same grid layout as the affiliated
/// solver, for fast evaluation inside the simulator.
pub fn tabulate_ipv<T: Real>(n: usize, params: Lognormal<T>, config: &SolverConfig) -> Result<BidFunction<T>, SolverError> {
    check_n(n)?;
    if config.grid_nodes < 50 {
        return Err(SolverError::GridNodes(config.grid_nodes));
    }
    let (lo, hi) = config.bounds(params.sigma);
    let dz = (hi - lo) / T::from_count(config.grid_nodes - 1);
    let grid: Vec<T> = (0..config.grid_nodes).map(|i| lo + dz * T::from_count(i)).collect();
    let bids = grid
        .par_iter()
        .map(|&z| fpsb_bid_ipv(&params, params.value_at(z), n).map(|b| b.bid))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SolverError::Document(e.to_string()))?;
    BidFunction::from_table(n, T::zero(), params, 0, 0, *config, grid, bids, Vec::new())
}

/// Bid at grid node `index` recomputed from the integral form
///
/// ```text
/// β(z) = v(z) − s₀ e^{−∫_{z₀}^{z} h} − ∫_{z₀}^{z} e^{−∫_y^z h} σ v(y) dy,
/// ```
///
/// with h evaluated directly at Gauss–Legendre points (no interpolation) and
/// the inner integrals done by spectral integration within each panel. This is
/// an independent check on the march.
pub fn integral_form_bid<T: Real>(bf: &BidFunction<T>, index: usize) -> T {
    let draws = PosteriorDraws::new(bf.mc_samples.max(1), bf.seed).expect("positive sample count");
    let (nodes, lead) = march_nodes(&bf.config, bf.params.sigma);
    let z0 = nodes[0];
    let z = nodes[lead + index];
    let sigma = bf.params.sigma;
    let (gl_x, cum) = spectral_matrix::<T>();
    let panels = panels_for(z0, z, 0.05);
    let width = (z - z0) / T::from_count(panels);
    let half = width / T::lit(2.0);
    let hazard = |t: T| {
        let h = hazard_with(t, bf.n, bf.rho, &draws);
        if h.singular {
            T::zero()
        } else {
            h.value
        }
    };
    // Walk panels from z downward, carrying ∫ h from the panel's top to z.
    let mut above = T::zero();
    let mut forcing = T::zero();
    for p in (0..panels).rev() {
        let mid = z0 + width * (T::from_count(p) + T::lit(0.5));
        let ys: Vec<T> = gl_x.nodes.iter().map(|&x| mid + half * x).collect();
        let hs: Vec<T> = ys.iter().map(|&y| hazard(y)).collect();
        for (i, &y) in ys.iter().enumerate() {
            let within: T = (0..hs.len()).map(|j| cum[i][j] * hs[j]).sum::<T>() * half;
            forcing = forcing + gl_x.weights[i] * half * (-(within + above)).exp() * sigma * bf.params.value_at(y);
        }
        above = above + half * gl_x.weights.iter().zip(&hs).map(|(w, h)| *w * *h).sum::<T>();
    }
    let s0 = T::lit(bf.config.epsilon) * bf.params.value_at(z0);
    bf.params.value_at(z) - s0 * (-above).exp() - forcing
}

/// Gauss–Legendre-8 nodes on [−1, 1] and the matrix C with
/// Cᵢⱼ = ∫_{xᵢ}^{1} Lⱼ(x) dx for the Lagrange basis on those nodes.
fn spectral_matrix<T: Real>() -> (Rule<T>, Vec<Vec<T>>) {
    static CUM: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let rule = Rule::<f64>::gauss_legendre(8);
    let cum = CUM.get_or_init(|| {
        let x = &rule.nodes;
        let basis = |j: usize, t: f64| {
            x.iter()
                .enumerate()
                .filter(|(m, _)| *m != j)
                .map(|(_, &xm)| (t - xm) / (x[j] - xm))
                .product::<f64>()
        };
        x.iter()
            .map(|&xi| (0..x.len()).map(|j| rule.integrate(xi, 1.0, 1, |t| basis(j, t))).collect())
            .collect()
    });
    let cum = cum.iter().map(|r| r.iter().map(|&c| T::lit(c)).collect()).collect();
    (Rule::<T>::gauss_legendre(8), cum)
}

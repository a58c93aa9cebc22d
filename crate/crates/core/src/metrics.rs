//! Comparison metrics derived from a revenue grid: the linkage gap, the
//! affiliation premium over the independent-values benchmark, and dollar
//! projections of a gap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::simulate::{CellResult, RevenueGrid, NOISE_FLOOR_PCT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Significant,
    /// Inside the noise floor: reported, but not distinguishable from zero.
    Indistinguishable,
    /// The reference revenue was zero or not finite.
    Invalid,
}

/// A percentage surface over (n, ρ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSurface {
    pub label: String,
    pub n_values: Vec<usize>,
    pub rho_values: Vec<f64>,
    /// Percent; `None` for invalid cells.
    pub gap: Vec<Vec<Option<f64>>>,
    /// Standard error of each gap, in percentage points.
    pub se: Vec<Vec<f64>>,
    pub status: Vec<Vec<CellStatus>>,
    pub noise_floor: f64,
}

/// One row of the long-format export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRecord {
    pub surface: String,
    pub n: usize,
    pub rho: f64,
    pub value: Option<f64>,
    pub se: f64,
    pub status: CellStatus,
}

impl GapSurface {
    fn build(label: &str, grid: &RevenueGrid, cell: impl Fn(&CellResult) -> Option<(f64, f64)>) -> Self {
        let mut gap = Vec::with_capacity(grid.cells.len());
        let mut se = Vec::with_capacity(grid.cells.len());
        let mut status = Vec::with_capacity(grid.cells.len());
        for row in &grid.cells {
            let mut g = Vec::with_capacity(row.len());
            let mut s = Vec::with_capacity(row.len());
            let mut st = Vec::with_capacity(row.len());
            for c in row {
                match cell(c).filter(|(v, e)| v.is_finite() && e.is_finite()) {
                    Some((v, e)) => {
                        g.push(Some(v));
                        s.push(e);
                        st.push(if v.abs() < NOISE_FLOOR_PCT {
                            CellStatus::Indistinguishable
                        } else {
                            CellStatus::Significant
                        });
                    }
                    None => {
                        g.push(None);
                        s.push(0.0);
                        st.push(CellStatus::Invalid);
                    }
                }
            }
            gap.push(g);
            se.push(s);
            status.push(st);
        }
        Self {
            label: label.to_string(),
            n_values: grid.n_values.clone(),
            rho_values: grid.rho_values.clone(),
            gap,
            se,
            status,
            noise_floor: NOISE_FLOOR_PCT,
        }
    }

    pub fn get(&self, n: usize, rho: f64) -> Option<f64> {
        let i = self.n_values.iter().position(|&m| m == n)?;
        let j = self.rho_values.iter().position(|&r| (r - rho).abs() < 1e-9)?;
        self.gap[i][j]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.gap.iter().flatten().flatten().copied()
    }

    /// ρ at which row `n` peaks, ignoring invalid cells.
    pub fn row_argmax(&self, n: usize) -> Option<f64> {
        let i = self.n_values.iter().position(|&m| m == n)?;
        argmax(&self.rho_values, &self.gap[i])
    }

    /// Matrix CSV: one row per n, one column per ρ; invalid cells are empty.
    pub fn write_csv_matrix<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["n".to_string()];
        header.extend(self.rho_values.iter().map(|r| format!("rho={r}")));
        w.write_record(&header)?;
        for (n, row) in self.n_values.iter().zip(&self.gap) {
            let mut rec = vec![n.to_string()];
            rec.extend(row.iter().map(|g| g.map(|v| format!("{v:.6}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn long_records(&self) -> Vec<LongRecord> {
        let mut out = Vec::new();
        for (i, &n) in self.n_values.iter().enumerate() {
            for (j, &rho) in self.rho_values.iter().enumerate() {
                out.push(LongRecord {
                    surface: self.label.clone(),
                    n,
                    rho,
                    value: self.gap[i][j],
                    se: self.se[i][j],
                    status: self.status[i][j],
                });
            }
        }
        out
    }
}

fn argmax(rho: &[f64], row: &[Option<f64>]) -> Option<f64> {
    row.iter()
        .zip(rho)
        .filter_map(|(g, r)| g.map(|v| (v, *r)))
        .fold(None, |best: Option<(f64, f64)>, (v, r)| match best {
            Some((bv, _)) if bv >= v => best,
            _ => Some((v, r)),
        })
        .map(|(_, r)| r)
}

/// (English − FPSB)/FPSB per cell, percent.
pub fn linkage_gap(grid: &RevenueGrid) -> GapSurface {
    GapSurface::build("linkage_gap", grid, |c| {
        let f = c.rev_dutch_fpsb;
        (f > 0.0).then(|| {
            let e = c.rev_english_spsb;
            let gap = 100.0 * (e - f) / f;
            // Delta method around the CRN difference.
            let se = 100.0 * ((c.se_linkage / f).powi(2) + (e * c.se_fpsb / (f * f)).powi(2)).sqrt();
            (gap, se)
        })
    })
}

fn premium(label: &str, grid: &RevenueGrid, pick: impl Fn(&CellResult) -> (f64, f64)) -> GapSurface {
    GapSurface::build(label, grid, |c| {
        let a = c.rev_allpay_ipv;
        (a > 0.0).then(|| {
            let (g, se_g) = pick(c);
            let gap = 100.0 * (g - a) / a;
            let se = 100.0 * ((se_g / a).powi(2) + (g * c.se_allpay / (a * a)).powi(2)).sqrt();
            (gap, se)
        })
    })
}

/// Revenue gain of each affiliated group over the independent-values
/// benchmark, percent: (English surface, FPSB surface).
pub fn affiliation_premium(grid: &RevenueGrid) -> (GapSurface, GapSurface) {
    (
        premium("english_premium", grid, |c| (c.rev_english_spsb, c.se_english)),
        premium("fpsb_premium", grid, |c| (c.rev_dutch_fpsb, c.se_fpsb)),
    )
}

/// Revenue left on the table when a gap of `gap_percent` applies to
/// `bribe_total` dollars of payments.
pub fn dollar_foregone<T: Real>(gap_percent: T, bribe_total: T) -> T {
    gap_percent / T::lit(100.0) * bribe_total
}

/// Where each row of a surface peaks in ρ, and whether the peak moves
/// (weakly) left as n grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxShift {
    pub surface: String,
    pub peaks: Vec<(usize, f64)>,
    pub shifts_left: bool,
}

pub fn argmax_shift(surface: &GapSurface, n_values: &[usize]) -> ArgmaxShift {
    let peaks: Vec<(usize, f64)> = n_values
        .iter()
        .filter_map(|&n| surface.row_argmax(n).map(|r| (n, r)))
        .collect();
    let shifts_left = peaks.len() == n_values.len() && peaks.windows(2).all(|w| w[1].1 <= w[0].1);
    ArgmaxShift {
        surface: surface.label.clone(),
        peaks,
        shifts_left,
    }
}

/// The same check on English revenue levels.
pub fn english_revenue_argmax_shift(grid: &RevenueGrid, n_values: &[usize]) -> ArgmaxShift {
    let surface = GapSurface::build("english_revenue", grid, |c| Some((c.rev_english_spsb, c.se_english)));
    argmax_shift(&surface, n_values)
}

/// Everything `metrics` emits, in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_digest: String,
    pub master_seed: u64,
    pub crate_version: String,
    pub linkage_gap: GapSurface,
    pub english_premium: GapSurface,
    pub fpsb_premium: GapSurface,
    pub argmax_shift: Vec<ArgmaxShift>,
    pub dollars: Vec<DollarProjection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DollarProjection {
    pub n: usize,
    pub rho: f64,
    pub gap_percent: f64,
    pub bribe_total: f64,
    pub foregone: f64,
}

impl MetricsReport {
    pub fn build(grid: &RevenueGrid, bribe_total: Option<f64>) -> Self {
        let gap = linkage_gap(grid);
        let (english_premium, fpsb_premium) = affiliation_premium(grid);
        let shift_ns: Vec<usize> = [2usize, 10, 20]
            .into_iter()
            .filter(|n| grid.n_values.contains(n))
            .collect();
        let argmax_shift = vec![
            argmax_shift(&gap, &shift_ns),
            english_revenue_argmax_shift(grid, &shift_ns),
        ];
        let dollars = match bribe_total {
            Some(total) => gap
                .long_records()
                .into_iter()
                .filter_map(|r| {
                    r.value.map(|g| DollarProjection {
                        n: r.n,
                        rho: r.rho,
                        gap_percent: g,
                        bribe_total: total,
                        foregone: dollar_foregone(g.max(0.0), total),
                    })
                })
                .collect(),
            None => Vec::new(),
        };
        Self {
            config_digest: grid.config_digest.clone(),
            master_seed: grid.master_seed,
            crate_version: grid.crate_version.clone(),
            linkage_gap: gap,
            english_premium,
            fpsb_premium,
            argmax_shift,
            dollars,
        }
    }

    /// Long format for heatmaps: one record per (surface, n, ρ).
    pub fn long_records(&self) -> Vec<LongRecord> {
        let mut out = self.linkage_gap.long_records();
        out.extend(self.english_premium.long_records());
        out.extend(self.fpsb_premium.long_records());
        out
    }
}

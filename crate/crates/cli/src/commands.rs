use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use mevauction::distributions::{fit_mle, gini_closed_form, log_shape, lorenz_share, Lognormal};
use mevauction::empirics::{
    calibrate_n, empirical_gini, estimate_rho_icc, generate_transactions, pareto_curve, read_transactions,
    recommend_format, summarize_by_type, write_transactions, BribeModel, Calibration, IccEstimate, Ingest,
    MarketFlags, MevType, Recommendation, Rejection, SyntheticConfig, TypeSummary, PARETO_FRACTIONS,
};
use mevauction::equilibrium_affiliated::solve_bid_function_with;
use mevauction::equilibrium_ipv::fpsb_bid_ipv;
use mevauction::metrics::{CellStatus, MetricsReport};
use mevauction::seed;
use mevauction::simulate::{
    default_rho_values, run_grid, verify_linkage, verify_revenue_equivalence, EquivalenceReport, Estimator,
    GridSpec, LinkageReport, RevenueGrid, SimulateError, DEFAULT_DRAWS, DEFAULT_MASTER_SEED, DEFAULT_N_VALUES,
};
use mevauction::{SolverConfig, REFERENCE_MU, REFERENCE_SIGMA};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::output::{create, digest, file_digest, write_json, write_stamped, Outputs, VERSION};

pub enum Outcome {
    Success,
    VerificationFailed,
}

/// Valuation parameters: a fit file, or μ and σ directly.
#[derive(Debug, Args)]
pub struct ParamArgs {
    /// JSON with `mu` and `sigma`, such as the output of `fit`.
    #[arg(long, conflicts_with_all = ["mu", "sigma"])]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = REFERENCE_MU)]
    mu: f64,
    #[arg(long, default_value_t = REFERENCE_SIGMA)]
    sigma: f64,
}

impl ParamArgs {
    fn resolve(&self) -> Result<Lognormal<f64>> {
        let params = match &self.params {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                let doc: Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
                let inner = doc.get("params").unwrap_or(&doc);
                serde_json::from_value::<Lognormal<f64>>(inner.clone())
                    .with_context(|| format!("{} has no mu/sigma", path.display()))?
            }
            None => Lognormal { mu: self.mu, sigma: self.sigma },
        };
        Ok(params.validated()?)
    }
}

fn ingest(path: &Path) -> Result<Ingest> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        bail!("insufficient data: {} is empty", path.display());
    }
    let ingest = read_transactions(&bytes[..]).with_context(|| format!("cannot ingest {}", path.display()))?;
    for r in &ingest.rejections {
        eprintln!("rejected row {}: {}", r.row, r.reason);
    }
    Ok(ingest)
}

fn usable_values(ingest: &Ingest, path: &Path) -> Result<Vec<f64>> {
    let values = ingest.values();
    if values.len() < 2 {
        bail!(
            "insufficient data: {} usable rows in {} ({} rejected)",
            values.len(),
            path.display(),
            ingest.rejections.len()
        );
    }
    Ok(values)
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Transaction CSV with columns tx_hash,block_number,mev_type,tip,profit.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "fit.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct FitDoc<'a> {
    input: String,
    rows_read: usize,
    records: usize,
    rejections: &'a [Rejection],
    params: Lognormal<f64>,
    log_skewness: f64,
    log_excess_kurtosis: f64,
}

pub fn fit(a: &FitArgs, out: &Outputs) -> Result<Outcome> {
    let ingest = ingest(&a.input)?;
    let values = usable_values(&ingest, &a.input)?;
    let params = fit_mle(&values)?;
    let shape = log_shape(&values)?;
    let config_digest = digest("fit", &file_digest(&a.input)?);
    let path = out.path(&a.out);
    write_stamped(
        &path,
        "mevauction.lognormal_fit",
        None,
        &config_digest,
        &FitDoc {
            input: a.input.display().to_string(),
            rows_read: ingest.rows_read(),
            records: values.len(),
            rejections: &ingest.rejections,
            params,
            log_skewness: shape.skewness,
            log_excess_kurtosis: shape.excess_kurtosis,
        },
    )?;
    println!(
        "mu = {:.4}, sigma = {:.4} from N = {} values ({} rejected)",
        params.mu,
        params.sigma,
        values.len(),
        ingest.rejections.len()
    );
    println!("log-value skewness {:.3}, excess kurtosis {:.3}", shape.skewness, shape.excess_kurtosis);
    println!("wrote {}", path.display());
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BribeKind {
    /// Winner bid/value ratios of the first-price equilibrium at (n, rho).
    Equilibrium,
    /// Bribe fraction uniform on [low, high].
    Uniform,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 10_000)]
    rows: usize,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value_t = BribeKind::Equilibrium)]
    bribe: BribeKind,
    /// Bidder count of the equilibrium bribe model.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Affiliation of the equilibrium bribe model.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    low: f64,
    #[arg(long, default_value_t = 0.9)]
    high: f64,
    #[arg(long, default_value_t = DEFAULT_MASTER_SEED)]
    seed: u64,
    #[arg(long, default_value = "transactions.csv")]
    out: PathBuf,
}

pub fn generate(a: &GenerateArgs, out: &Outputs) -> Result<Outcome> {
    let bribe = match a.bribe {
        BribeKind::Equilibrium => BribeModel::Equilibrium { n: a.n, rho: a.rho },
        BribeKind::Uniform => BribeModel::Uniform { low: a.low, high: a.high },
    };
    let config = SyntheticConfig::new(a.rows, a.params.resolve()?, bribe, a.seed);
    let records = generate_transactions(&config)?;
    let path = out.path(&a.out);
    let mut w = create(&path)?;
    write_transactions(&records, &mut w)?;
    w.flush()?;
    // The transaction schema is fixed, so provenance goes in a sidecar.
    let meta = path.with_extension("meta.json");
    write_stamped(&meta, "mevauction.synthetic_transactions", Some(a.seed), &digest("generate", &config), &config)?;
    println!("wrote {} rows to {} ({})", records.len(), path.display(), meta.display());
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "analysis.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct ParetoPoint {
    top_fraction: f64,
    share: f64,
    lognormal_share: f64,
}

#[derive(Serialize)]
struct AnalysisDoc<'a> {
    input: String,
    rows_read: usize,
    records: usize,
    rejections: &'a [Rejection],
    summary: Vec<TypeSummary>,
    params: Lognormal<f64>,
    gini: f64,
    gini_lognormal: f64,
    pareto: Vec<ParetoPoint>,
}

pub fn analyze(a: &AnalyzeArgs, out: &Outputs) -> Result<Outcome> {
    let ingest = ingest(&a.input)?;
    let values = usable_values(&ingest, &a.input)?;
    let summary = summarize_by_type(&ingest.records)?;
    let params = fit_mle(&values)?;
    let gini = empirical_gini(&values)?;
    let pareto = pareto_curve(&values, &PARETO_FRACTIONS)?
        .into_iter()
        .map(|(p, share)| {
            Ok(ParetoPoint {
                top_fraction: p,
                share,
                lognormal_share: if p < 1.0 { lorenz_share(&params, p)? } else { 1.0 },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    println!("{:<12} {:>9} {:>12} {:>12} {:>12} {:>14} {:>8}", "type", "count", "total $M", "mean $", "median $", "std dev $", "bribe %");
    for s in &summary {
        let sd = if s.std_dev_defined { format!("{:.2}", s.std_dev_usd) } else { "n/a".into() };
        println!(
            "{:<12} {:>9} {:>12.3} {:>12.2} {:>12.2} {:>14} {:>8.2}",
            s.mev_type, s.count, s.total_musd, s.mean_usd, s.median_usd, sd, s.mean_bribe_pct
        );
    }
    let gini_lognormal = gini_closed_form(&params);
    println!("gini {gini:.4} (log-normal fit {gini_lognormal:.4})");
    if let Some(top) = pareto.iter().find(|p| p.top_fraction == 0.01) {
        println!("top 1% share {:.3} (log-normal fit {:.3})", top.share, top.lognormal_share);
    }

    let path = out.path(&a.out);
    write_stamped(
        &path,
        "mevauction.analysis",
        None,
        &digest("analyze", &file_digest(&a.input)?),
        &AnalysisDoc {
            input: a.input.display().to_string(),
            rows_read: ingest.rows_read(),
            records: values.len(),
            rejections: &ingest.rejections,
            summary,
            params,
            gini,
            gini_lognormal,
            pareto,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Bidder counts; defaults to 2,3,4,5,6,7,8,10,12,15,20.
    #[arg(long = "n-list", value_delimiter = ',')]
    n_list: Vec<usize>,
    /// Affiliation levels; defaults to 0,0.1,...,0.9.
    #[arg(long = "rho-list", value_delimiter = ',')]
    rho_list: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long, default_value_t = DEFAULT_MASTER_SEED)]
    seed: u64,
    #[arg(long, default_value_t = Estimator::Stratified)]
    estimator: Estimator,
    /// Re-solve every bid function instead of reusing `bid_cache/`.
    #[arg(long)]
    no_cache: bool,
    /// Output stem; `.csv` and `.json` are written.
    #[arg(long, default_value = "revenue_grid")]
    out: PathBuf,
}

pub fn grid(a: &GridArgs, out: &Outputs) -> Result<Outcome> {
    let n_values = if a.n_list.is_empty() { DEFAULT_N_VALUES.to_vec() } else { a.n_list.clone() };
    let rho_values = if a.rho_list.is_empty() { default_rho_values() } else { a.rho_list.clone() };
    let csv_path = out.sibling(&a.out, "csv");
    let json_path = out.sibling(&a.out, "json");
    let mut spec = GridSpec::new(n_values, rho_values, a.params.resolve()?, a.draws, a.seed);
    spec.estimator = a.estimator;
    if !a.no_cache {
        let dir = csv_path.parent().map(Path::to_path_buf).unwrap_or_default();
        spec.cache_dir = Some(dir.join("bid_cache"));
    }
    let started = Instant::now();
    let grid = run_grid(&spec).map_err(|e| match e {
        SimulateError::Solver { n, rho, source } => anyhow::anyhow!("bid-function solve failed at n = {n}, rho = {rho}: {source}"),
        other => other.into(),
    })?;
    let mut w = create(&csv_path)?;
    grid.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&json_path)?;
    w.write_all(grid.to_json().as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!(
        "{} cells x {} draws in {:.1} s (seed {}, digest {})",
        grid.n_values.len() * grid.rho_values.len(),
        grid.draws,
        started.elapsed().as_secs_f64(),
        grid.master_seed,
        &grid.config_digest[..16]
    );
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(Outcome::Success)
}

fn load_grid(path: &Path) -> Result<RevenueGrid> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read grid {}", path.display()))?;
    RevenueGrid::from_json(&text).with_context(|| format!("invalid grid {}", path.display()))
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Grid JSON written by `grid`.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value = "verification.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct VerificationDoc {
    grid_digest: String,
    equivalence: Option<EquivalenceReport>,
    linkage: Option<LinkageReport>,
    passed: bool,
}

pub fn verify(a: &VerifyArgs, out: &Outputs) -> Result<Outcome> {
    let grid = load_grid(&a.grid)?;
    let equivalence = match verify_revenue_equivalence(&grid) {
        Ok(r) => Some(r),
        Err(SimulateError::MissingZeroRho) => None,
        Err(e) => return Err(e.into()),
    };
    let linkage = match verify_linkage(&grid) {
        Ok(r) => Some(r),
        Err(SimulateError::MissingAffiliated) => None,
        Err(e) => return Err(e.into()),
    };
    if equivalence.is_none() && linkage.is_none() {
        bail!("grid has neither a rho = 0 column nor a rho > 0 column");
    }

    match &equivalence {
        Some(r) => {
            println!("revenue equivalence at rho = 0: {}", if r.passed { "pass" } else { "FAIL" });
            for row in &r.rows {
                println!(
                    "  n = {:>2}: english {:>10.3} fpsb {:>10.3} allpay {:>10.3} gap {:.3}% (threshold {:.3}%){}",
                    row.n,
                    row.english,
                    row.fpsb,
                    row.allpay,
                    row.gap_fpsb_pct,
                    row.threshold_pct,
                    if row.flagged { "  <-- flagged" } else { "" }
                );
            }
        }
        None => println!("revenue equivalence: no rho = 0 column, not checked"),
    }
    match &linkage {
        Some(r) => {
            println!(
                "linkage (English >= FPSB) on {} cells: {}",
                r.rows.len(),
                if r.passed { "pass" } else { "FAIL" }
            );
            for row in r.rows.iter().filter(|r| !r.english_ge_fpsb) {
                println!(
                    "  violation n = {}, rho = {}: english {:.3} < fpsb {:.3} ({:.2}%)",
                    row.n, row.rho, row.english, row.fpsb, row.linkage_gap_pct
                );
            }
            for (n, rho) in &r.fpsb_below_allpay {
                println!("  note: FPSB below the all-pay benchmark at n = {n}, rho = {rho}");
            }
        }
        None => println!("linkage: no rho > 0 column, not checked"),
    }

    let passed = equivalence.as_ref().map_or(true, |r| r.passed) && linkage.as_ref().map_or(true, |r| r.passed);
    let path = out.path(&a.out);
    write_stamped(
        &path,
        "mevauction.verification",
        Some(grid.master_seed),
        &digest("verify", &grid.config_digest),
        &VerificationDoc {
            grid_digest: grid.config_digest.clone(),
            equivalence,
            linkage,
            passed,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(if passed { Outcome::Success } else { Outcome::VerificationFailed })
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Grid JSON written by `grid`.
    #[arg(long)]
    grid: PathBuf,
    /// Observed bribe total, for dollar projections (e.g. 101.3 for $101.3M).
    #[arg(long)]
    bribe_total: Option<f64>,
    /// Output stem; `.json` and `_long.csv` are written.
    #[arg(long, default_value = "metrics")]
    out: PathBuf,
}

#[derive(Serialize)]
struct LongRow<'a> {
    surface: &'a str,
    n: usize,
    rho: f64,
    value: Option<f64>,
    se: f64,
    status: CellStatus,
    seed: u64,
    config_digest: &'a str,
    version: &'a str,
}

pub fn metrics(a: &MetricsArgs, out: &Outputs) -> Result<Outcome> {
    if let Some(t) = a.bribe_total.filter(|t| !(t.is_finite() && *t >= 0.0)) {
        bail!("bribe total must be a non-negative number, got {t}");
    }
    let grid = load_grid(&a.grid)?;
    let report = MetricsReport::build(&grid, a.bribe_total);

    let json_path = out.sibling(&a.out, "json");
    write_json(&json_path, &report)?;
    let stem = out.path(&a.out);
    let long_path = stem.with_file_name(format!(
        "{}_long.csv",
        stem.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    let mut w = csv::Writer::from_writer(create(&long_path)?);
    for r in report.long_records() {
        w.serialize(LongRow {
            surface: &r.surface,
            n: r.n,
            rho: r.rho,
            value: r.value,
            se: r.se,
            status: r.status,
            seed: report.master_seed,
            config_digest: &report.config_digest,
            version: VERSION,
        })?;
    }
    w.flush()?;

    for shift in &report.argmax_shift {
        let peaks: Vec<String> = shift.peaks.iter().map(|(n, r)| format!("n={n}: rho={r}")).collect();
        println!(
            "{} peaks [{}], shifts left: {}",
            shift.surface,
            peaks.join(", "),
            shift.shifts_left
        );
    }
    if let Some(total) = a.bribe_total {
        for d in report.dollars.iter().filter(|d| d.rho == 0.5 && [2, 5, 10].contains(&d.n)) {
            println!(
                "n = {:>2}, rho = 0.5: gap {:.2}% of {total} -> {:.2} foregone",
                d.n, d.gap_percent, d.foregone
            );
        }
    }
    println!("wrote {} and {}", json_path.display(), long_path.display());
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Affiliation assumed for every type (see `icc`).
    #[arg(long)]
    rho: f64,
    /// Candidate bidder counts; defaults to 2,3,4,5,6,7,8,10,12,15,20.
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long, default_value_t = DEFAULT_MASTER_SEED)]
    seed: u64,
    /// Bidders trust the auctioneer not to shill.
    #[arg(long)]
    trusted_auctioneer: bool,
    #[arg(long)]
    collusion_risk: bool,
    #[arg(long)]
    latency_critical: bool,
    #[arg(long, default_value = "calibration.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct TypeCalibration {
    mev_type: MevType,
    count: usize,
    observed_bribe: Option<f64>,
    calibration: Option<Calibration>,
    error: Option<String>,
    recommendation: Recommendation,
}

#[derive(Serialize)]
struct CalibrationDoc<'a> {
    input: String,
    rho: f64,
    candidates: &'a [usize],
    flags: MarketFlags,
    types: Vec<TypeCalibration>,
}

pub fn calibrate(a: &CalibrateArgs, out: &Outputs) -> Result<Outcome> {
    if !(0.0..1.0).contains(&a.rho) {
        bail!("rho must lie in [0, 1), got {}", a.rho);
    }
    let candidates = if a.candidates.is_empty() { DEFAULT_N_VALUES.to_vec() } else { a.candidates.clone() };
    let flags = MarketFlags {
        trusted_auctioneer: a.trusted_auctioneer,
        collusion_risk: a.collusion_risk,
        latency_critical: a.latency_critical,
    };
    let ingest = ingest(&a.input)?;
    if ingest.records.is_empty() {
        bail!("insufficient data: no usable rows in {}", a.input.display());
    }
    let mut by_type: BTreeMap<MevType, Vec<f64>> = BTreeMap::new();
    let mut bribes: BTreeMap<MevType, Vec<f64>> = BTreeMap::new();
    for r in &ingest.records {
        by_type.entry(r.mev_type).or_default().push(r.extracted_value());
        bribes.entry(r.mev_type).or_default().push(r.bribe_fraction());
    }

    let solver = SolverConfig::default();
    let mut types = Vec::new();
    for (mev_type, values) in &by_type {
        let b = &bribes[mev_type];
        let observed = b.iter().sum::<f64>() / b.len() as f64;
        let result = fit_mle(values)
            .map_err(anyhow::Error::from)
            .and_then(|params| Ok(calibrate_n(observed, params, a.rho, &candidates, a.draws, a.seed, &solver)?));
        let (calibration, error) = match result {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(format!("{e:#}"))),
        };
        let recommendation = recommend_format(a.rho, calibration.as_ref().map(|c| c.n_hat), flags);
        match (&calibration, &error) {
            (Some(c), _) => println!(
                "{:<12} N = {:>7}  bribe {:>6.2}%  n_hat = {:>2}  -> {} (rule {})",
                mev_type.as_str(),
                values.len(),
                100.0 * observed,
                c.n_hat,
                recommendation.format,
                recommendation.rule
            ),
            (None, Some(e)) => println!("{:<12} N = {:>7}  calibration failed: {e}", mev_type.as_str(), values.len()),
            (None, None) => unreachable!(),
        }
        types.push(TypeCalibration {
            mev_type: *mev_type,
            count: values.len(),
            observed_bribe: Some(observed),
            calibration,
            error,
            recommendation,
        });
    }

    let config_digest = digest(
        "calibrate",
        &(file_digest(&a.input)?, a.rho, &candidates, a.draws, a.seed, flags, solver),
    );
    let path = out.path(&a.out);
    let all_failed = types.iter().all(|t| t.calibration.is_none());
    write_stamped(
        &path,
        "mevauction.calibration",
        Some(a.seed),
        &config_digest,
        &CalibrationDoc {
            input: a.input.display().to_string(),
            rho: a.rho,
            candidates: &candidates,
            flags,
            types,
        },
    )?;
    println!("wrote {}", path.display());
    if all_failed {
        bail!("calibration failed for every MEV type");
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct IccArgs {
    /// CSV with columns group,bid: one row per bid, grouped by opportunity.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "icc.json")]
    out: PathBuf,
}

#[derive(Deserialize)]
struct BidRow {
    group: String,
    bid: f64,
}

#[derive(Serialize)]
struct IccDoc<'a> {
    input: String,
    estimate: IccEstimate,
    rejections: &'a [Rejection],
}

pub fn icc(a: &IccArgs, out: &Outputs) -> Result<Outcome> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.input)
        .with_context(|| format!("cannot read {}", a.input.display()))?;
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut rejections = Vec::new();
    for (k, row) in reader.deserialize::<BidRow>().enumerate() {
        match row {
            Ok(r) if r.bid > 0.0 && r.bid.is_finite() => groups.entry(r.group).or_default().push(r.bid.ln()),
            Ok(r) => rejections.push(Rejection { row: k + 1, reason: format!("bid must be positive, got {}", r.bid) }),
            Err(e) => rejections.push(Rejection { row: k + 1, reason: e.to_string() }),
        }
    }
    for r in &rejections {
        eprintln!("rejected row {}: {}", r.row, r.reason);
    }
    let groups: Vec<(String, Vec<f64>)> = groups.into_iter().collect();
    let estimate = estimate_rho_icc(&groups)?;
    println!(
        "rho_hat = {:.4} (raw ICC {:.4}) from {} groups, {} bids; {} single-bid groups dropped",
        estimate.rho, estimate.raw, estimate.groups_used, estimate.bids_used, estimate.dropped_single
    );
    let path = out.path(&a.out);
    write_stamped(
        &path,
        "mevauction.icc",
        None,
        &digest("icc", &file_digest(&a.input)?),
        &IccDoc {
            input: a.input.display().to_string(),
            estimate,
            rejections: &rejections,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rho: f64,
    #[command(flatten)]
    params: ParamArgs,
    /// Master seed; the solve uses the same derived seed as the grid cell.
    #[arg(long, default_value_t = DEFAULT_MASTER_SEED)]
    seed: u64,
    /// Output stem; `.json` and `.csv` are written.
    #[arg(long, default_value = "bid_function")]
    out: PathBuf,
}

#[derive(Serialize)]
struct SolveDoc<'a, T: Serialize> {
    expected_revenue: f64,
    bid_function: &'a T,
}

#[derive(Serialize)]
struct BidRowOut<'a> {
    z: f64,
    value: f64,
    bid: f64,
    ipv_bid: f64,
    shading_pct: f64,
    seed: u64,
    config_digest: &'a str,
    version: &'a str,
}

pub fn solve(a: &SolveArgs, out: &Outputs) -> Result<Outcome> {
    let params = a.params.resolve()?;
    let solver = SolverConfig::default();
    let cell_seed = seed::cell_seed(a.seed, a.n, a.rho);
    let bf = solve_bid_function_with(a.n, a.rho, params, &solver, cell_seed)
        .with_context(|| format!("bid-function solve failed at n = {}, rho = {}", a.n, a.rho))?;
    let config_digest = digest("solve", &(a.n, a.rho, params, a.seed, solver));
    let revenue = bf.expected_revenue();

    let json_path = out.sibling(&a.out, "json");
    write_stamped(
        &json_path,
        "mevauction.bid_function",
        Some(a.seed),
        &config_digest,
        &SolveDoc {
            expected_revenue: revenue,
            bid_function: &bf,
        },
    )?;
    let csv_path = out.sibling(&a.out, "csv");
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    for (&z, &bid) in bf.signal_grid.iter().zip(&bf.bids) {
        let value = params.value_at(z);
        w.serialize(BidRowOut {
            z,
            value,
            bid,
            ipv_bid: fpsb_bid_ipv(&params, value, a.n)?.bid,
            shading_pct: 100.0 * (1.0 - bid / value),
            seed: a.seed,
            config_digest: &config_digest,
            version: VERSION,
        })?;
    }
    w.flush()?;
    println!(
        "n = {}, rho = {}: {} nodes, expected first-price revenue {:.4}; bid at the median value {:.4} of {:.4}",
        a.n,
        a.rho,
        bf.signal_grid.len(),
        revenue,
        bf.bid_at_signal(0.0),
        params.median()
    );
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_file_accepts_fit_output_and_bare_params() {
        let dir = tempfile::tempdir().unwrap();
        let wrapped = dir.path().join("fit.json");
        fs::write(&wrapped, r#"{"format":"x","params":{"mu":0.5,"sigma":1.5}}"#).unwrap();
        let bare = dir.path().join("p.json");
        fs::write(&bare, r#"{"mu":0.5,"sigma":1.5}"#).unwrap();
        for p in [wrapped, bare] {
            let args = ParamArgs { params: Some(p), mu: 0.0, sigma: 1.0 };
            assert_eq!(args.resolve().unwrap(), Lognormal { mu: 0.5, sigma: 1.5 });
        }
        let bad = ParamArgs { params: None, mu: 0.0, sigma: -1.0 };
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn digest_depends_on_command_and_inputs() {
        assert_eq!(digest("fit", &1), digest("fit", &1));
        assert_ne!(digest("fit", &1), digest("fit", &2));
        assert_ne!(digest("fit", &1), digest("analyze", &1));
        assert_eq!(digest("x", &()).len(), 64);
    }
}

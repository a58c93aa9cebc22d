use mevauction::distributions::Lognormal;
use mevauction::equilibrium_affiliated::{solve_bid_function_with, SolverConfig};
use mevauction::metrics::MetricsReport;
use mevauction::seed;
use mevauction::simulate::{run_cell, run_grid, simulate_cell, AuctionScenario, RevenueGrid};
use mevauction::{reference_params, GridSpec};

fn small_spec() -> GridSpec {
    GridSpec::new(vec![2, 6], vec![0.0, 0.3, 0.7], reference_params(), 4_000, 99)
}

#[test]
fn grid_json_round_trips_and_cells_match_single_runs() {
    let spec = small_spec();
    let grid = run_grid(&spec).unwrap();
    assert_eq!(grid.config_digest, spec.digest());
    let back = RevenueGrid::from_json(&grid.to_json()).unwrap();
    assert_eq!(back, grid);

    let single = run_cell(&spec, 6, 0.3).unwrap();
    assert_eq!(grid.cell(6, 0.3).unwrap(), &single);

    let mut csv = Vec::new();
    grid.write_csv(&mut csv).unwrap();
    let mut reader = csv::Reader::from_reader(&csv[..]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| &r[15] == grid.config_digest.as_str()));
}

#[test]
fn digest_tracks_every_numeric_input() {
    let base = small_spec();
    let mut other = small_spec();
    other.draws += 1;
    assert_ne!(base.digest(), other.digest());
    let mut other = small_spec();
    other.master_seed += 1;
    assert_ne!(base.digest(), other.digest());
    let mut other = small_spec();
    other.solver.grid_nodes = 300;
    assert_ne!(base.digest(), other.digest());
    let mut other = small_spec();
    other.cache_dir = Some("somewhere".into());
    assert_eq!(base.digest(), other.digest());
}

#[test]
fn metrics_from_a_grid_are_consistent() {
    let grid = run_grid(&small_spec()).unwrap();
    let report = MetricsReport::build(&grid, Some(50.0));
    assert_eq!(report.config_digest, grid.config_digest);
    for c in grid.iter_cells() {
        let gap = report.linkage_gap.get(c.n, c.rho).unwrap();
        let expect = 100.0 * (c.rev_english_spsb - c.rev_dutch_fpsb) / c.rev_dutch_fpsb;
        assert!((gap - expect).abs() < 1e-12);
    }
    assert_eq!(report.dollars.len(), 6);
    assert_eq!(report.long_records().len(), 18);
}

#[test]
fn single_precision_pipeline_tracks_double() {
    let config = SolverConfig {
        grid_nodes: 128,
        mc_samples: 1024,
        ..SolverConfig::default()
    };
    let s = seed::cell_seed(5, 3, 0.5);
    let p64 = reference_params();
    let p32 = Lognormal::<f32>::new(p64.mu as f32, p64.sigma as f32).unwrap();
    let bf64 = solve_bid_function_with(3, 0.5, p64, &config, s).unwrap();
    let bf32 = solve_bid_function_with(3, 0.5_f32, p32, &config, s).unwrap();
    let r64 = bf64.expected_revenue();
    let r32 = bf32.expected_revenue() as f64;
    assert!((r32 / r64 - 1.0).abs() < 1e-3, "{r32} vs {r64}");

    let sc64 = AuctionScenario::new(3, 0.5, p64, 20_000, 8).unwrap();
    let sc32 = AuctionScenario::new(3, 0.5_f32, p32, 20_000, 8).unwrap();
    let c64 = simulate_cell(&sc64, &bf64).unwrap();
    let c32 = simulate_cell(&sc32, &bf32).unwrap();
    let se = c64.se_fpsb.max(1e-9);
    assert!((c32.rev_dutch_fpsb - c64.rev_dutch_fpsb).abs() < 3.0 * se + 1e-3 * c64.rev_dutch_fpsb);
    assert!((c32.rev_english_spsb / c64.rev_english_spsb - 1.0).abs() < 1e-3);
}

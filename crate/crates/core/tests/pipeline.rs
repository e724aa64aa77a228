//! End-to-end runs of the experiment drivers on small configurations.

use hdboot::harness::run_experiment;
use hdboot::{EmpiricalDistribution, ExperimentConfig, ExperimentKind, RngSeed};

fn small(kind: &str, extra: &str) -> ExperimentConfig {
    let text = format!(
        "kind = {kind}\n n = 30\n d = 20\n mc_reps = 6\n B = 200\n truth_reps = 100\n seed = 5\n{extra}"
    );
    ExperimentConfig::parse(&text).unwrap()
}

fn run_with_threads(cfg: &ExperimentConfig, threads: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_experiment(cfg).unwrap().to_csv())
}

#[test]
fn ks_table_shape_and_thread_independence() {
    let cfg = small("ks", "estimators = proxy,gmb,gpb-naive,gpb-corr-cv\n");
    let a = run_with_threads(&cfg, 1);
    assert_eq!(a, run_with_threads(&cfg, 3));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "rep,p,estimator,ks");
    assert_eq!(lines.len(), 1 + 6 * 4 * 4);
    for row in &lines[1..] {
        let ks: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&ks));
    }
}

#[test]
fn coverage_table_has_summary_rows() {
    let cfg = small("coverage", "marginal = t4\n");
    let csv = run_with_threads(&cfg, 2);
    let summary: Vec<&str> = csv.lines().filter(|l| l.starts_with("all,")).collect();
    assert_eq!(summary.len(), 4 * cfg.estimators.len());
    for row in summary {
        let cov: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&cov));
    }
}

#[test]
fn power_curves_start_near_size_and_grow() {
    let cfg = small("power-dense", "delta_grid = 0, 0.5, 5\n");
    let csv = run_with_threads(&cfg, 1);
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3 * 4);
    for row in rows.iter().filter(|r| r[0] == "5") {
        assert_eq!(row[2], "1", "{row:?}");
    }
    let sparse = small("power-sparse", "");
    assert_eq!(sparse.delta_grid.len(), 13);
    assert_eq!(sparse.delta_grid[0], 0.0);
}

#[test]
fn probe_rows_are_well_formed() {
    let cfg = small("probe", "probe_dims = 12\n n_mc = 1000\n probe_eps = 0.1\n probe_ps = 2\n");
    let csv = run_with_threads(&cfg, 1);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "probe,instance,estimate,bound,C,pass");
    let rows: Vec<&str> = lines.collect();
    // 2 Lévy rows, then 4 comparison designs × {2, logd, inf}
    assert_eq!(rows.len(), 2 + 4 * 3);
    assert!(rows.iter().all(|r| r.ends_with(",true") || r.ends_with(",false")));
}

#[test]
fn configuration_text_round_trips() {
    for kind in ["ks", "coverage", "power-dense", "power-sparse", "probe"] {
        let cfg = small(kind, "");
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again, "{kind}");
    }
    let paper = ExperimentConfig::parse("kind = ks\npreset = paper-scale\n").unwrap();
    assert_eq!((paper.d, paper.mc_reps, paper.b, paper.truth_reps), (1000, 1000, 1000, 5000));
    assert_eq!(paper.kind, ExperimentKind::Ks);
    assert!(ExperimentConfig::parse("kind = ks\nbogus = 1\n").is_err());
    assert!(ExperimentConfig::parse("n = 10\n").is_err());
    assert!(ExperimentConfig::parse("kind = ks\nd = 30\nblock = 7\n").is_err());
}

#[test]
fn distribution_csv_survives_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draws.csv");
    let d = hdboot::proxy_draws(
        &hdboot::CovMatrix::identity(5),
        hdboot::LpExponent::LogDim,
        50,
        &RngSeed::new(3).child(1),
    )
    .unwrap();
    d.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = EmpiricalDistribution::read_csv(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back.samples(), d.samples());
    assert_eq!(back.meta, d.meta);
}

use std::path::Path;
use std::process::Command as Process;

use schatten_ot::metrics::loglog_slope;
use schatten_ot::par::Execution;
use schatten_ot_cli::{
    certify_rows, convergence_rows, gaussian_rows, sweep_rows, Command, ConfigError, ExperimentConfig, RunError,
};

const QUADRANTS: &str = "source_centers = [[-2.0, 2.0], [-2.0, -2.0]]\ntarget_centers = [[2.0, 2.0], [2.0, -2.0]]\n";

fn mixture(variance: f64, seeds: &str) -> String {
    format!("[instance]\nkind = \"gaussian_mixture\"\nseeds = {seeds}\n{QUADRANTS}variance = {variance}\npoints_per_cluster = 10\n")
}

fn clustered(radius: f64) -> String {
    format!("[instance]\nkind = \"clustered\"\nseeds = [0]\n{QUADRANTS}group_size = 10\nradius = {radius}\n")
}

fn parse(text: &str, command: Command) -> ExperimentConfig {
    ExperimentConfig::parse(text, Path::new("."), command).unwrap_or_else(|e| panic!("{e}"))
}

#[test]
fn sweep_rank_decreases_with_lambda() {
    let text = mixture(0.04, "[0, 1, 2]")
        + "[problem]\nmap = \"identity\"\nlambdas = [0.0, 0.1, 1.0, 10.0]\n[solver]\neta0 = 0.3\niterations = 400\n";
    let rows = sweep_rows(&parse(&text, Command::Sweep), Execution::Parallel).unwrap();
    assert_eq!(rows.len(), 4);
    let ranks: Vec<f64> = rows.iter().map(|r| r.effective_rank_coupling).collect();
    for w in ranks.windows(2) {
        assert!(w[1] <= w[0] + 0.1, "{ranks:?}");
    }
    assert!(ranks[3] < ranks[0] - 1.0, "{ranks:?}");
    for r in &rows {
        assert_eq!(r.seeds, 3);
        assert!(r.marginal_error < 1e-9);
        assert!(r.lp_cost.unwrap() <= r.transport_cost + 1e-9);
        assert!(r.lp_cost.unwrap() <= r.sinkhorn_cost);
    }
}

#[test]
fn sweep_at_zero_lambda_matches_the_exact_lp() {
    let text = mixture(1.0, "[0, 1]")
        + "[problem]\nmap = \"identity\"\nlambdas = [0.0]\n[solver]\nschedule = \"constant\"\neta0 = 10.0\niterations = 200\n[output]\naverage_seeds = false\n";
    let rows = sweep_rows(&parse(&text, Command::Sweep), Execution::Parallel).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let lp = r.lp_cost.unwrap();
        assert!((r.transport_cost - lp).abs() <= 1e-3, "{} vs {lp}", r.transport_cost);
    }
}

#[test]
fn sequential_and_parallel_sweeps_agree() {
    let text = mixture(0.04, "[3, 4]") + "[problem]\nmap = \"identity\"\np = [1.0, 2.0]\nlambdas = [0.5, 0.0]\n";
    let cfg = parse(&text, Command::Sweep);
    let par = sweep_rows(&cfg, Execution::Parallel).unwrap();
    let seq = sweep_rows(&cfg, Execution::Sequential).unwrap();
    assert_eq!(par, seq);
    let keys: Vec<(f64, f64)> = par.iter().map(|r| (r.p, r.lambda)).collect();
    assert_eq!(keys, vec![(1.0, 0.5), (1.0, 0.0), (2.0, 0.5), (2.0, 0.0)]);
}

#[test]
fn geometric_steps_converge_linearly_on_a_block_instance() {
    let text = clustered(0.1)
        + "[problem]\nmap = \"identity\"\nlambdas = [10.0]\n[solver]\nschedule = \"geometric\"\neta0 = 0.1\nratio = 0.97\niterations = 200\n";
    let rows = convergence_rows(&parse(&text, Command::Convergence), Execution::Parallel).unwrap();
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0].reference_source, "ground_truth");
    assert_eq!(rows[0].schedule, "geometric");
    assert!(rows.last().unwrap().best_excess() < 1e-8);
}

#[test]
fn sqrt_steps_are_sublinear_on_the_hard_mixture() {
    let text = mixture(1.0, "[0]")
        + "[problem]\nmap = \"identity\"\nlambdas = [0.1]\n[solver]\niterations = 400\n[convergence]\nreference = \"long_run\"\nreference_iterations = 1500\nreference_eta0 = 10.0\n";
    let rows = convergence_rows(&parse(&text, Command::Convergence), Execution::Parallel).unwrap();
    assert_eq!(rows[0].reference_source, "long_run");
    let xs: Vec<f64> = rows[24..].iter().map(|r| r.iter as f64).collect();
    let ys: Vec<f64> = rows[24..].iter().map(|r| r.best_excess()).collect();
    let slope = loglog_slope(&xs, &ys).unwrap();
    assert!((-1.1..=-0.35).contains(&slope), "slope {slope}");
}

#[test]
fn zero_iterations_is_a_config_error() {
    let text = clustered(0.0) + "[problem]\nmap = \"identity\"\nlambdas = [1.0]\n[solver]\niterations = 0\n";
    match ExperimentConfig::parse(&text, Path::new("."), Command::Convergence) {
        Err(ConfigError::Invalid(list)) => assert_eq!(list[0].path, "solver.iterations"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn certificates_pass_inside_the_window_and_at_zero() {
    let text = clustered(0.1)
        + "[problem]\nmap = \"identity\"\nlambdas = [0.0, 0.25, 0.5, 0.75]\nlambda_scale = \"window\"\n[solver]\neta0 = 1.0\niterations = 300\nreport = \"final\"\n";
    let rows = certify_rows(&parse(&text, Command::Certify), Execution::Parallel).unwrap();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let r = row.outcome.as_ref().unwrap();
        assert!(r.passed, "lambda {}: {}", row.lambda, r);
    }
    assert!(rows[0].outcome.as_ref().unwrap().gap <= 1e-6);
}

#[test]
fn certificate_capacity_errors_stay_in_their_row() {
    let text = "[instance]\nkind = \"gaussian_mixture\"\nseeds = [0]\n".to_string()
        + QUADRANTS
        + "variance = 0.04\npoints_per_cluster = 60\n[problem]\nmap = \"identity\"\nlambdas = [0.0, 1.0]\n[solver]\niterations = 2\n";
    let rows = certify_rows(&parse(&text, Command::Certify), Execution::Parallel).unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let err = row.outcome.clone().unwrap_err();
        assert!(err.contains("capacity"), "{err}");
        assert!(row.csv().ends_with(&format!("\"{err}\"")));
    }
}

#[test]
fn planted_equal_split_can_be_certified_directly() {
    let text = "[instance]\nkind = \"symmetric_pairs\"\nseeds = [0]\ncluster_sizes = [5, 5]\nscalars = [0.0, 5.0]\nepsilon = 0.5\nradius = 1.0\n[problem]\nmap = \"barycentric_displacement\"\nlambdas = [0.25]\nlambda_scale = \"lambda_max\"\n[certify]\ncandidate = \"ground_truth\"\n";
    let rows = certify_rows(&parse(text, Command::Certify), Execution::Parallel).unwrap();
    assert_eq!(rows[0].lambda, 0.75);
    assert!(rows[0].outcome.as_ref().unwrap().passed);
}

#[test]
fn isotropic_cross_covariance_thresholds_at_twice_the_product() {
    let text = "[problem]\nmap = \"cross_covariance\"\nlambdas = [0.0, 3.9, 4.0, 4.1]\n[gaussian]\nisotropic = { dim = 3, sigma0 = 1.0, sigma1 = 2.0 }\n";
    let rows = gaussian_rows(&parse(text, Command::Gaussian)).unwrap();
    let ranks: Vec<usize> = rows.iter().map(|r| r.rank).collect();
    assert_eq!(ranks, vec![3, 3, 0, 0]);
    // K = 0 leaves only the two traces: 3 (1 + 4)
    assert!((rows[3].objective - 15.0).abs() < 1e-12);
    for w in rows.windows(2) {
        assert!(w[1].objective >= w[0].objective - 1e-12);
    }
}

#[test]
fn displacement_rank_counts_surviving_directions() {
    let text = "[problem]\nmap = \"barycentric_displacement\"\nlambdas = [0.0, 1.0, 2.0, 3.0]\n[gaussian]\nsigma0 = [[1.0, 0.0], [0.0, 4.0]]\nsigma1 = [[2.25, 0.0], [0.0, 1.0]]\n";
    let rows = gaussian_rows(&parse(text, Command::Gaussian)).unwrap();
    // the first axis expands and is pruned once lambda >= 2; the second contracts
    let ranks: Vec<usize> = rows.iter().map(|r| r.rank).collect();
    assert_eq!(ranks, vec![2, 2, 1, 1]);
}

#[test]
fn non_commuting_displacement_is_rejected() {
    let text = "[problem]\nmap = \"barycentric_displacement\"\nlambdas = [1.0]\n[gaussian]\nsigma0 = [[2.0, 1.0], [1.0, 2.0]]\nsigma1 = [[1.0, 0.0], [0.0, 3.0]]\n";
    let err = gaussian_rows(&parse(text, Command::Gaussian)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn point_cloud_instances_load_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "x0,x1,weight\n0,0,1\n1,0,3\n").unwrap();
    std::fs::write(dir.path().join("b.csv"), "x0,x1,weight\n0,1,1\n1,1,1\n").unwrap();
    let text = "[instance]\nkind = \"point_cloud\"\nsource = \"a.csv\"\ntarget = \"b.csv\"\nweight_column = \"weight\"\n[problem]\nmap = \"identity\"\nlambdas = [0.0]\n[solver]\nschedule = \"constant\"\neta0 = 50.0\niterations = 100\n";
    let cfg = ExperimentConfig::parse(text, dir.path(), Command::Sweep).unwrap();
    let rows = sweep_rows(&cfg, Execution::Sequential).unwrap();
    // straight moves cost 1, diagonal ones 2; a quarter of the mass must cross
    assert!((rows[0].lp_cost.unwrap() - 1.25).abs() < 1e-12);
    assert!((rows[0].transport_cost - 1.25).abs() < 1e-3);
}

#[test]
fn unbounded_window_is_a_config_error() {
    let text = "[instance]\nkind = \"clustered\"\nsource_centers = [[0.0, 0.0]]\ntarget_centers = [[1.0, 0.0]]\ngroup_size = 3\n[problem]\nmap = \"identity\"\nlambdas = [0.5]\nlambda_scale = \"window\"\n";
    let err = sweep_rows(&parse(text, Command::Sweep), Execution::Sequential).unwrap_err();
    assert!(matches!(err, RunError::Config(_)), "{err}");
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_schatten-ot"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn binary_writes_reproducible_csv_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &(mixture(0.04, "[0, 1]") + "[problem]\nmap = \"identity\"\nlambdas = [0.0, 1.0]\n[solver]\niterations = 20\n"),
    );
    let run = |out: &str, threads: &str| {
        let status = binary()
            .args(["sweep", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(dir.path().join(out))
            .args(["--threads", threads])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read_to_string(dir.path().join(out).join("sweep.csv")).unwrap()
    };
    let first = run("a", "1");
    let second = run("b", "3");
    assert_eq!(first, second);
    let lines: Vec<&str> = first.lines().collect();
    assert!(lines[0].starts_with("# config_sha256=") && lines[0].len() == "# config_sha256=".len() + 64);
    assert_eq!(lines[1], "# seed=0;1");
    assert!(lines[2].starts_with("# build=schatten-ot-cli "));
    assert!(lines[3].starts_with("instance_id,lambda,p,q,map_kind"));
    assert_eq!(lines.len(), 6);
}

#[test]
fn binary_seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &(clustered(0.0) + "[problem]\nmap = \"identity\"\nlambdas = [0.5]\nlambda_scale = \"window\"\n[solver]\niterations = 5\n"),
    );
    let out = binary().args(["convergence", "--config"]).arg(&cfg).args(["--seed", "7"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out").join("convergence.csv")).unwrap();
    assert!(csv.contains("# seed=7\n"));
    assert!(csv.contains("\nclustered-s7,"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &(mixture(0.04, "[0]") + "[problem]\nmap = \"identity\"\nlambdas = []\n"));
    let out = binary().args(["sweep", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.lambdas"));

    let missing = binary().args(["sweep", "--config", "/no/such/config.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    // squared distances raised to a huge power overflow every cost
    let overflow = write_config(
        dir.path(),
        &(mixture(0.04, "[0]").replace("variance", "cost_exponent = 1000.0\nvariance")
            + "[problem]\nmap = \"identity\"\nlambdas = [1.0]\n[solver]\niterations = 3\n"),
    );
    let out = binary().args(["sweep", "--config"]).arg(&overflow).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let gauss = write_config(
        dir.path(),
        "[problem]\nmap = \"cross_covariance\"\nlambdas = [0.0, 4.0]\n[gaussian]\nisotropic = { dim = 2, sigma0 = 1.0, sigma1 = 2.0 }\n",
    );
    let out = binary().args(["gaussian", "--config"]).arg(&gauss).output().unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("out").join("gaussian.csv")).unwrap();
    assert!(csv.contains("\ncross_covariance,0,2,"));
    assert!(csv.contains("\ncross_covariance,4,0,"));
}

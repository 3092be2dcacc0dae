use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sdsim::svg;
use semidiscrete::analysis::ConvergenceReport;
use semidiscrete::SchemeKind;

const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");

fn sdsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove(sdsim::OUT_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) {
    let o = sdsim(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

/// Terminal `y` per scheme from a trajectory CSV with one path.
fn terminal_values(csv: &str) -> Vec<(String, f64)> {
    let mut last: Vec<(String, f64)> = Vec::new();
    for r in rows(csv) {
        let y: f64 = r[4].parse().unwrap();
        match last.iter_mut().find(|(k, _)| *k == r[3]) {
            Some(e) => e.1 = y,
            None => last.push((r[3].clone(), y)),
        }
    }
    last
}

#[test]
fn stability_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "stability",
        "--set",
        "schemes=expTSD",
        "--set",
        "x0=10",
        "--set",
        "deltas=0.5",
        "--set",
        "T=50",
        "--set",
        "n_paths=1000",
        "--seed",
        "42",
    ];
    ok(&args, &dir.path().join("a"));
    ok(&args, &dir.path().join("b"));
    let a = fs::read(dir.path().join("a/stability.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/stability.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "scheme,delta,T,n_paths,frac_below,frac_diverged,q50,q99"
    );
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{CONFIGS}/positivity.conf");
    let mut outputs = Vec::new();
    for threads in ["1", "4", "8"] {
        let out = dir.path().join(threads);
        ok(
            &[
                "positivity",
                "--config",
                &config,
                "--threads",
                threads,
                "--set",
                "T=20",
            ],
            &out,
        );
        ok(
            &["simulate", "--threads", threads, "--set", "n_paths=6"],
            &out,
        );
        outputs.push((
            fs::read(out.join("positivity.csv")).unwrap(),
            fs::read(out.join("trajectories.csv")).unwrap(),
        ));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn figure_one_has_four_schemes() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "simulate",
            "--config",
            &format!("{CONFIGS}/fig1_trajectories.conf"),
        ],
        dir.path(),
    );
    let csv = read(dir.path(), "fig1_trajectories.csv");
    assert_eq!(csv.lines().next().unwrap(), "path_id,step,t,scheme,y");
    let last = terminal_values(&csv);
    let names: Vec<&str> = last.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, ["TSD", "expTSD", "LSD", "TEM"]);
    for (k, y) in &last[..3] {
        assert!(y.abs() < 0.1, "{k}: {y}");
    }
    let svg_text = read(dir.path(), "fig1_trajectories.svg");
    assert_eq!(svg::polylines(&svg_text, "series").len(), 4);
}

#[test]
fn figure_three_semi_discrete_family_decays() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "simulate",
            "--config",
            &format!("{CONFIGS}/fig3_trajectories.conf"),
        ],
        dir.path(),
    );
    let last = terminal_values(&read(dir.path(), "fig3_trajectories.csv"));
    assert_eq!(last.len(), 3);
    assert!(last.iter().all(|(k, _)| k != "TEM"));
    for (k, y) in &last {
        assert!(y.abs() < 0.1, "{k}: {y}");
    }
}

#[test]
fn minimal_trajectory_plot() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "simulate",
            "--set",
            "schemes=TSD,LSD",
            "--set",
            "deltas=0.5",
            "--set",
            "T=1",
        ],
        dir.path(),
    );
    let csv = read(dir.path(), "trajectories.csv");
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let svg_text = read(dir.path(), "trajectories.svg");
    assert!(svg_text.contains(r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1""#));
    assert_eq!(svg::polylines(&svg_text, "series").len(), 2);
    assert!(svg_text.contains("TSD Δ=0.5") && svg_text.contains("LSD Δ=0.5"));
}

#[test]
fn empty_trajectory_report_skips_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdsim(&["simulate", "--set", "n_paths=0"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: nothing to plot"));
    assert_eq!(
        read(dir.path(), "trajectories.csv"),
        "path_id,step,t,scheme,y\n"
    );
    assert!(!dir.path().join("trajectories.svg").exists());
}

#[test]
fn make_figures_writes_difference_plot() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["make-figures"], dir.path());
    for f in [
        "fig1_trajectories.csv",
        "fig2_trajectories.svg",
        "fig3_trajectories.svg",
        "fig4_d0.05.csv",
        "fig4_difference.svg",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let diff = read(dir.path(), "fig4_difference.svg");
    assert_eq!(svg::polylines(&diff, "series").len(), 3);

    // The plotted difference at dt = 0.05 is the step-wise TEM minus LSD.
    let csv = read(dir.path(), "fig4_d0.05.csv");
    let mut tem = Vec::new();
    let mut lsd = Vec::new();
    for r in rows(&csv) {
        let y: f64 = r[4].parse().unwrap();
        match r[3].as_str() {
            "TEM" => tem.push(y),
            "LSD" => lsd.push(y),
            other => panic!("unexpected scheme {other}"),
        }
    }
    assert_eq!(tem.len(), 161);
    assert_eq!(lsd.len(), 161);
    assert_eq!(tem[0] - lsd[0], 0.0);
}

#[test]
fn convergence_plot_slope_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "convergence",
            "--set",
            "schemes=LSD",
            "--set",
            "deltas=0.0625,0.03125,0.015625,0.0078125,0.00390625,0.001953125",
            "--set",
            "reference_delta=0.00048828125",
            "--set",
            "n_paths=1000",
        ],
        dir.path(),
    );
    let csv = read(dir.path(), "convergence.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "scheme,delta,l2_error,fitted_order,r2"
    );
    let rows = rows(&csv);
    assert_eq!(rows.len(), 6);
    let order: f64 = rows[0][3].parse().unwrap();
    let report = ConvergenceReport {
        scheme: SchemeKind::Lsd,
        deltas: rows.iter().map(|r| r[1].parse().unwrap()).collect(),
        l2_errors: rows.iter().map(|r| r[2].parse().unwrap()).collect(),
        fitted_order: order,
        fit_intercept: 0.0,
        fit_r2: rows[0][4].parse().unwrap(),
        reference_delta: 0.00048828125,
        n_paths: 1000,
    };
    let frame = svg::convergence_frame(&[report]).unwrap();
    let svg_text = read(dir.path(), "convergence.svg");
    assert_eq!(svg_text.matches(r#"<circle class="point""#).count(), 6);
    let fit = svg::polylines(&svg_text, "fit");
    assert_eq!(fit.len(), 1);
    let (a, b) = (fit[0][0], fit[0][1]);
    let slope = (frame.inv_py(b.1) - frame.inv_py(a.1)) / (frame.inv_px(b.0) - frame.inv_px(a.0));
    assert!((slope - order).abs() < 1e-3, "plot {slope} vs csv {order}");
}

#[test]
fn csv_values_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["decomposition", "--set", "deltas=0.25", "--set", "draws=50"],
        dir.path(),
    );
    ok(
        &["moments", "--config", &format!("{CONFIGS}/moments.conf")],
        dir.path(),
    );
    ok(&["integral-bound", "--set", "n_samples=500"], dir.path());
    for (file, header) in [
        (
            "decomposition.csv",
            "scheme,delta,y,phi1,neg_kappa1,holds,phi2_mean,phi2_stderr",
        ),
        (
            "moments.csv",
            "scheme,p,delta,T,n_paths,n_diverged,estimate,stderr",
        ),
        ("integral-bound.csv", "c,delta,r,empirical,bound"),
    ] {
        let csv = read(dir.path(), file);
        assert_eq!(csv.lines().next().unwrap(), header);
        // Floats are the fields in exponent notation.
        let floats = rows(&csv)
            .into_iter()
            .flatten()
            .filter_map(|f| Some((f.parse::<f64>().ok()?, f)));
        for (x, field) in floats.filter(|(_, f)| f.contains('e')) {
            assert_eq!(format!("{x:.16e}"), field);
        }
    }
    let decomposition = read(dir.path(), "decomposition.csv");
    assert!(rows(&decomposition).iter().all(|r| r[5] == "true"));
}

#[test]
fn exit_codes_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");

    fs::write(&bad, "x0 10\n").unwrap();
    let o = sdsim(
        &["stability", "--config", bad.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=parse "));

    let o = sdsim(&["stability", "--nonsense"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(String::from_utf8(o.stderr).unwrap().lines().count(), 1);

    fs::write(&bad, "experiment = stability\nwhatever = 3\n").unwrap();
    let o = sdsim(
        &["stability", "--config", bad.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stderr)
        .unwrap()
        .starts_with("error kind=validation key=whatever "));

    let o = sdsim(&["stability", "--set", "deltas=2"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stderr).unwrap().contains("key=deltas"));

    let o = sdsim(
        &[
            "stability",
            "--set",
            "schemes=EM",
            "--set",
            "deltas=0.5",
            "--set",
            "T=5",
            "--set",
            "fail_on_divergence=true",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8(o.stderr)
        .unwrap()
        .starts_with("error kind=divergence "));
    assert!(!dir.path().join("stability.csv").exists());

    let o = sdsim(&["stability", "--threads", "0"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_sdsim"))
        .args(["simulate", "--set", "T=1", "--set", "plot=false"])
        .env(sdsim::OUT_DIR_ENV, &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_dir.join("trajectories.csv").exists());
    assert!(!env_dir.join("trajectories.svg").exists());

    // An explicit flag wins over the environment.
    let flag_dir = dir.path().join("from_flag");
    let o = Command::new(env!("CARGO_BIN_EXE_sdsim"))
        .args(["simulate", "--set", "T=1", "--out"])
        .arg(&flag_dir)
        .env(sdsim::OUT_DIR_ENV, &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_dir.join("trajectories.csv").exists());
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pchazard::estimators::BreslowCurve;
use pchazard::event_data::write_multistate_csv;
use pchazard::multistate::{read_survival_csv, SurvivalCurve};
use pchazard::simharness::{
    gen_scenario, read_summary_csv, read_table_csv, simulate_illness_death, Scenario, StudyReport,
};
use pchazard::tuning::TuningResult;
use pchazard::{HazardFit, IllnessDeathModel, StepFunction, Window};
use tempfile::TempDir;

fn pchazard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pchazard"))
        .args(args)
        .env_remove("PCHAZARD_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn survival_csv(dir: &TempDir, scenario: &Scenario, seed: u64) -> PathBuf {
    let path = dir.path().join(format!("{}.csv", scenario.name));
    let frame = gen_scenario(scenario, seed).unwrap();
    frame.write_csv(fs::File::create(&path).unwrap()).unwrap();
    path
}

fn illness_death_csv(dir: &TempDir, model: &IllnessDeathModel, n: usize) -> PathBuf {
    let path = dir.path().join("transitions.csv");
    let records = simulate_illness_death(model, n, 0.5, 3).unwrap();
    write_multistate_csv(&records, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn model() -> IllnessDeathModel {
    IllnessDeathModel::new(
        StepFunction::new(Window::unit(), vec![0.3], vec![2.0, 0.7]).unwrap(),
        StepFunction::constant(Window::unit(), 0.5),
        StepFunction::constant(Window::unit(), 1.5),
    )
    .unwrap()
}

fn read(p: PathBuf) -> String {
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn assert_nonincreasing(c: &SurvivalCurve) {
    assert!(c.values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
}

#[test]
fn fit_writes_reparseable_artifacts() {
    let dir = TempDir::new().unwrap();
    let input = survival_csv(&dir, &Scenario::a1(400), 1);
    let out = dir.path().join("fit");
    let o = pchazard(&[
        "fit",
        s(&input),
        "--out",
        s(&out),
        "--L",
        "100",
        "--seed",
        "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let fit = HazardFit::from_json(&read(out.join("hazard.json"))).unwrap();
    assert_eq!(fit.tuning.seed, 9);
    assert_eq!(fit.tuning.u_boot.len(), 100);
    let steps =
        StepFunction::from_csv_reader(fs::File::open(out.join("hazard_steps.csv")).unwrap())
            .unwrap();
    assert_eq!(steps, fit.hazard);
    let cumhaz =
        BreslowCurve::from_csv_reader(fs::File::open(out.join("cumhaz.csv")).unwrap()).unwrap();
    for t in [0.05, 0.25, 0.5, 0.9] {
        assert_eq!(cumhaz.eval(t), fit.cumulative.eval(t));
    }
    let tuning: TuningResult = serde_json::from_str(&read(out.join("tuning.json"))).unwrap();
    assert_eq!(tuning, fit.tuning);
}

#[test]
fn fit_is_deterministic_and_reads_seed_from_env() {
    let dir = TempDir::new().unwrap();
    let input = survival_csv(&dir, &Scenario::a2(300), 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = pchazard(&["fit", s(&input), "--out", s(&a), "--L", "50", "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_pchazard"))
        .args(["fit", s(&input), "--out", s(&b), "--L", "50"])
        .env("PCHAZARD_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(a.join("hazard.json")), read(b.join("hazard.json")));
}

#[test]
fn missing_seed_is_drawn_and_reported() {
    let dir = TempDir::new().unwrap();
    let input = survival_csv(&dir, &Scenario::a1(200), 3);
    let out = dir.path().join("fit");
    let o = pchazard(&["fit", s(&input), "--out", s(&out), "--L", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    let seed: u64 = err
        .split_whitespace()
        .nth(1)
        .and_then(|t| t.parse().ok())
        .unwrap_or_else(|| panic!("no seed in {err:?}"));
    let fit = HazardFit::from_json(&read(out.join("hazard.json"))).unwrap();
    assert_eq!(fit.tuning.seed, seed);
}

#[test]
fn supplied_beta_skips_the_cox_fit() {
    let dir = TempDir::new().unwrap();
    let input = survival_csv(&dir, &Scenario::b1(300), 4);
    let out = dir.path().join("fit");
    let o = pchazard(&[
        "fit",
        s(&input),
        "--out",
        s(&out),
        "--L",
        "30",
        "--seed",
        "1",
        "--beta",
        "0.25,1.0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = HazardFit::from_json(&read(out.join("hazard.json"))).unwrap();
    assert_eq!(fit.beta, vec![0.25, 1.0]);
    assert!(fit.cox.is_none());

    let out = dir.path().join("cox");
    let o = pchazard(&[
        "fit",
        s(&input),
        "--out",
        s(&out),
        "--L",
        "30",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = HazardFit::from_json(&read(out.join("hazard.json"))).unwrap();
    assert!(fit.cox.is_some());
}

#[test]
fn validation_failures_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "time,event\n1.0,1\n2.0,0\n").unwrap();
    let out = dir.path().join("o");

    let o = pchazard(&["fit", s(&input), "--out", s(&out), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("status"), "{}", stderr(&o));

    let o = pchazard(&["fit", "/nonexistent/x.csv", "--out", s(&out), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "lambda = 1.0\n").unwrap();
    let o = pchazard(&["--config", s(&cfg), "simulate", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let good = survival_csv(&dir, &Scenario::a1(100), 1);
    let o = pchazard(&[
        "fit",
        s(&good),
        "--out",
        s(&out),
        "--seed",
        "1",
        "--q",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = pchazard(&[
        "fit",
        s(&good),
        "--out",
        s(&out),
        "--seed",
        "1",
        "--window",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = pchazard(&["--threads", "0", "simulate", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_reparseable() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = pchazard(&[
            "simulate",
            "--scenario",
            "A1,B2",
            "--n",
            "200",
            "--reps",
            "3",
            "--seed",
            "7",
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let report = read(a.join("study_report.csv"));
    assert_eq!(report, read(b.join("study_report.csv")));

    let rows = read_summary_csv(report.as_bytes()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].scenario.as_str(), rows[0].n), ("A1", 200));
    let cells = read_table_csv(read(a.join("table_l2.csv")).as_bytes()).unwrap();
    assert_eq!(cells.len(), 2);
    read_table_csv(read(a.join("table_dasym.csv")).as_bytes()).unwrap();
    let runs: StudyReport = serde_json::from_str(&read(a.join("runs_B2_200.json"))).unwrap();
    assert_eq!(runs.runs.len(), 3);
    assert_eq!((rows[1].l2_mean - runs.l2_sq.mean).abs(), 0.0);
}

#[test]
fn simulate_rejects_bad_requests() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let o = pchazard(&[
        "simulate",
        "--scenario",
        "A1",
        "--reps",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = pchazard(&[
        "simulate",
        "--scenario",
        "C3",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("C3"));
}

#[test]
fn multistate_artifacts_round_trip() {
    let dir = TempDir::new().unwrap();
    let input = illness_death_csv(&dir, &model(), 800);
    let out = dir.path().join("ms");
    let o = pchazard(&[
        "multistate",
        s(&input),
        "--out",
        s(&out),
        "--L",
        "50",
        "--seed",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let fitted = IllnessDeathModel::from_json(&read(out.join("model.json"))).unwrap();
    assert_eq!(
        StepFunction::from_json(&read(out.join("a01.json"))).unwrap(),
        fitted.a01
    );
    assert_eq!(
        StepFunction::from_json(&read(out.join("a02.json"))).unwrap(),
        fitted.a02
    );
    assert_eq!(
        StepFunction::from_json(&read(out.join("a12.json"))).unwrap(),
        fitted.a12
    );

    let (pfs, os) = read_survival_csv(read(out.join("survival_curves.csv")).as_bytes()).unwrap();
    assert_eq!(pfs.grid.len(), 201);
    assert_nonincreasing(&pfs);
    assert_nonincreasing(&os);
    assert!(pfs.values.iter().zip(&os.values).all(|(p, o)| p <= o));
    for name in ["km_pfs.csv", "km_os.csv"] {
        let km = SurvivalCurve::from_csv_reader(read(out.join(name)).as_bytes()).unwrap();
        assert_nonincreasing(&km);
    }

    // `curves` on the saved model reproduces the same file
    let again = dir.path().join("curves");
    let o = pchazard(&["curves", s(&out.join("model.json")), "--out", s(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (pfs2, os2) =
        read_survival_csv(read(again.join("survival_curves.csv")).as_bytes()).unwrap();
    let t_end = pfs.grid.last().copied().unwrap();
    for (k, &t) in pfs2.grid.iter().enumerate() {
        if t <= t_end {
            assert!((pfs2.values[k] - pfs.eval(t)).abs() < 0.05);
            assert!((os2.values[k] - os.eval(t)).abs() < 0.05);
        }
    }
}

#[test]
fn multistate_sensitivity_flags() {
    let dir = TempDir::new().unwrap();
    let input = illness_death_csv(&dir, &model(), 600);
    let out = dir.path().join("ms");
    let o = pchazard(&[
        "multistate",
        s(&input),
        "--out",
        s(&out),
        "--L",
        "50",
        "--seed",
        "2",
        "--p",
        "0.8",
        "--q",
        "0.5",
        "--times",
        "0,0.25,0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (pfs, _) = read_survival_csv(read(out.join("survival_curves.csv")).as_bytes()).unwrap();
    assert_eq!(pfs.grid, vec![0.0, 0.25, 0.5]);
    let tuning: serde_json::Value = serde_json::from_str(&read(out.join("tuning.json"))).unwrap();
    assert_eq!(tuning["a12"]["q"], 0.5);
}

#[test]
fn multistate_without_illness_deaths_names_the_transition() {
    let dir = TempDir::new().unwrap();
    let no_12 = IllnessDeathModel::new(
        StepFunction::constant(Window::unit(), 1.0),
        StepFunction::constant(Window::unit(), 1.0),
        StepFunction::constant(Window::unit(), 0.0),
    )
    .unwrap();
    let input = illness_death_csv(&dir, &no_12, 300);
    let out = dir.path().join("ms");
    let o = pchazard(&["multistate", s(&input), "--out", s(&out), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("(1,2)"), "{}", stderr(&o));
}

#[test]
fn bench_writes_timings() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench");
    let o = pchazard(&[
        "bench",
        "--m",
        "200",
        "--reps",
        "1",
        "--L",
        "10",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = read(out.join("bench.csv"));
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("m,operation,median_seconds,reps\n"));
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use pchazard::estimators::{breslow_fit, build_increments};
use pchazard::event_data::{read_multistate_csv, SurvivalSchema};
use pchazard::flsa::FusedPath;
use pchazard::multistate::{
    kaplan_meier, os_frame, pfs_frame, write_survival_csv, IllnessDeathConfig,
};
use pchazard::rng::derive_seed;
use pchazard::simharness::{
    gen_scenario, run_study, write_summary_csv, write_table_csv, Scenario, StudyReport, TableMetric,
};
use pchazard::{
    bootstrap_lambda, fit_hazard, fit_illness_death, flsa_solve, survival_curves,
    IllnessDeathModel, SurvivalFrame, TuningConfig, Window,
};

use crate::config::{merge_fit, resolve_seed, FileConfig, FitFlags, FitSettings};
use crate::{
    BenchArgs, Cli, Command, CurvesArgs, FitArgs, MultistateArgs, SimulateArgs, TuneArgs,
    UsageError,
};

const DEFAULT_SCENARIOS: [&str; 4] = ["A1", "B1", "A2", "B2"];
const DEFAULT_SIZES: [usize; 3] = [500, 1000, 2000];
const DEFAULT_REPS: usize = 200;
const CURVE_POINTS: usize = 201;

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(threads) = cli.threads.or(file.threads) {
        if threads == 0 {
            return Err(UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Fit(args) => cmd_fit(args, &file),
        Command::Multistate(args) => cmd_multistate(args, &file),
        Command::Simulate(args) => cmd_simulate(args, &file),
        Command::Bench(args) => cmd_bench(args, &file),
        Command::Curves(args) => cmd_curves(args),
    }
}

fn require_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("input file {} not found", path.display())).into());
    }
    Ok(())
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
}

/// Writes `dir/name` through `body`, flushing before returning.
fn write_artifact(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    write_artifact(dir, name, |w| Ok(w.write_all(text.as_bytes())?))
}

fn fit_settings(tune: &TuneArgs, beta: Option<&[f64]>, file: &FileConfig) -> Result<FitSettings> {
    merge_fit(
        FitFlags {
            q: tune.q,
            kmax: tune.kmax,
            l_boot: tune.l_boot,
            window: tune.window.as_deref(),
            p_low: tune.p_low,
            p_high: tune.p_high,
            grid: tune.grid,
            beta,
        },
        file,
    )
}

fn equispaced(t_max: f64, points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points).map(|i| t_max * i as f64 / last).collect()
}

fn check_times(times: Vec<f64>) -> Result<Vec<f64>> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0])
    {
        return Err(UsageError("--times must be nonnegative and nondecreasing".into()).into());
    }
    Ok(times)
}

fn cmd_fit(args: FitArgs, file: &FileConfig) -> Result<()> {
    require_input(&args.input)?;
    let schema = SurvivalSchema {
        time: args.time_col.clone(),
        status: args.status_col.clone(),
        entry: args.entry_col.clone(),
        covariates: args.covariates.clone(),
    };
    let mut frame = SurvivalFrame::read_csv(&args.input, &schema)
        .with_context(|| format!("reading {}", args.input.display()))?;
    if args.ignore_covariates {
        frame = frame.without_covariates();
    }
    let settings = fit_settings(&args.tune, args.beta.as_deref(), file)?;
    let seed = resolve_seed(args.tune.seed, file);
    let config = settings.fit_config(seed, frame.dim() > 0)?;
    let fit = fit_hazard(&frame, &config)?;

    create_out_dir(&args.out)?;
    write_text(&args.out, "hazard.json", &fit.to_json()?)?;
    write_artifact(&args.out, "hazard_steps.csv", |w| {
        Ok(fit.hazard.write_csv(w)?)
    })?;
    write_artifact(&args.out, "cumhaz.csv", |w| {
        Ok(fit.cumulative.write_csv(w)?)
    })?;
    write_text(
        &args.out,
        "tuning.json",
        &serde_json::to_string_pretty(&fit.tuning)?,
    )?;

    println!(
        "n = {}, window = [{}, {}], m = {}, lambda = {:.6}, change points = {}",
        frame.len(),
        fit.window.tau_min,
        fit.window.tau_max,
        fit.increments.m,
        fit.tuning.lambda,
        fit.hazard.breaks.len()
    );
    if !fit.beta.is_empty() {
        println!("beta = {:?}", fit.beta);
    }
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn cmd_multistate(args: MultistateArgs, file: &FileConfig) -> Result<()> {
    require_input(&args.input)?;
    let records = read_multistate_csv(&args.input, &args.censor_token)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let settings = fit_settings(&args.tune, None, file)?;
    let seed = resolve_seed(args.tune.seed, file);
    // one bootstrap stream family per transition
    let config = IllnessDeathConfig {
        a01: settings.fit_config(derive_seed(seed, 1), false)?,
        a02: settings.fit_config(derive_seed(seed, 2), false)?,
        a12: settings.fit_config(derive_seed(seed, 3), false)?,
    };
    let fit = fit_illness_death(&records, &config)?;

    let times = match args.times {
        Some(t) => check_times(t)?,
        None => {
            let t_max = records.iter().map(|r| r.t_stop).fold(0.0, f64::max);
            equispaced(t_max, CURVE_POINTS)
        }
    };
    let (pfs, os) = survival_curves(&fit.model, &times)?;
    let km_pfs = kaplan_meier(&pfs_frame(&records)?)?;
    let km_os = kaplan_meier(&os_frame(&records)?)?;

    create_out_dir(&args.out)?;
    for (name, h) in [
        ("a01.json", &fit.model.a01),
        ("a02.json", &fit.model.a02),
        ("a12.json", &fit.model.a12),
    ] {
        write_text(&args.out, name, &h.to_json()?)?;
    }
    write_text(&args.out, "model.json", &fit.model.to_json()?)?;
    let tuning = serde_json::json!({
        "a01": fit.a01.tuning,
        "a02": fit.a02.tuning,
        "a12": fit.a12.tuning,
    });
    write_text(
        &args.out,
        "tuning.json",
        &serde_json::to_string_pretty(&tuning)?,
    )?;
    write_artifact(&args.out, "survival_curves.csv", |w| {
        Ok(write_survival_csv(&pfs, &os, w)?)
    })?;
    write_artifact(&args.out, "km_pfs.csv", |w| Ok(km_pfs.write_csv(w)?))?;
    write_artifact(&args.out, "km_os.csv", |w| Ok(km_os.write_csv(w)?))?;

    for (name, f) in [("0->1", &fit.a01), ("0->2", &fit.a02), ("1->2", &fit.a12)] {
        println!(
            "{name}: window = [{:.4}, {:.4}], lambda = {:.6}, change points = {}",
            f.window.tau_min,
            f.window.tau_max,
            f.tuning.lambda,
            f.hazard.breaks.len()
        );
    }
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, file: &FileConfig) -> Result<()> {
    let names: Vec<String> = args
        .scenario
        .or_else(|| file.scenario.clone())
        .unwrap_or_else(|| DEFAULT_SCENARIOS.iter().map(|s| s.to_string()).collect());
    let sizes = args
        .n
        .or_else(|| file.n.clone())
        .unwrap_or_else(|| DEFAULT_SIZES.to_vec());
    let reps = args.reps.or(file.reps).unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(UsageError("--reps must be positive".into()).into());
    }
    // validate every cell before spending time on any of them
    let mut cells = Vec::new();
    for name in &names {
        for &n in &sizes {
            let s = Scenario::by_name(name, n)?;
            s.validate()?;
            cells.push(s);
        }
    }
    let seed = resolve_seed(args.seed, file);
    create_out_dir(&args.out)?;

    let mut reports: Vec<StudyReport> = Vec::with_capacity(cells.len());
    for (k, s) in cells.iter().enumerate() {
        let started = Instant::now();
        let report = run_study(s, reps, derive_seed(seed, k as u64))?;
        eprintln!(
            "{} n={}: l2 {:.4}, d_asym {:.4}, {} failed, {:.1}s",
            s.name,
            s.n,
            report.l2_sq.mean,
            report.d_asym.mean,
            report.failures,
            started.elapsed().as_secs_f64()
        );
        write_text(
            &args.out,
            &format!("runs_{}_{}.json", s.name, s.n),
            &serde_json::to_string_pretty(&report)?,
        )?;
        reports.push(report);
    }
    write_artifact(&args.out, "study_report.csv", |w| {
        Ok(write_summary_csv(&reports, w)?)
    })?;
    write_artifact(&args.out, "table_l2.csv", |w| {
        Ok(write_table_csv(&reports, TableMetric::L2, w)?)
    })?;
    write_artifact(&args.out, "table_dasym.csv", |w| {
        Ok(write_table_csv(&reports, TableMetric::DAsym, w)?)
    })?;
    println!("seed = {seed}, artifacts in {}", args.out.display());
    Ok(())
}

fn median_seconds(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

fn cmd_bench(args: BenchArgs, file: &FileConfig) -> Result<()> {
    if args.reps == 0 || args.m.iter().any(|&m| m < 2) {
        return Err(UsageError("--reps must be positive and every --m at least 2".into()).into());
    }
    let seed = resolve_seed(args.seed, file);
    create_out_dir(&args.out)?;
    let mut rows: Vec<(usize, &str, f64)> = Vec::new();
    for &m in &args.m {
        let frame = gen_scenario(&Scenario::a2(m), derive_seed(seed, m as u64))?;
        let curve = breslow_fit(&frame, &[])?;
        let y = build_increments(&curve, Window::unit(), m)?.y;
        let tuning = TuningConfig {
            l_boot: args.l_boot,
            seed,
            ..Default::default()
        };
        let lambda = bootstrap_lambda(&y, &tuning)?.lambda;

        rows.push((
            m,
            "breslow",
            median_seconds(args.reps, || {
                breslow_fit(&frame, &[])?;
                Ok(())
            })?,
        ));
        rows.push((
            m,
            "flsa_solve",
            median_seconds(args.reps, || {
                flsa_solve(&y, lambda)?;
                Ok(())
            })?,
        ));
        rows.push((
            m,
            "fused_path",
            median_seconds(args.reps, || {
                FusedPath::new(&y)?;
                Ok(())
            })?,
        ));
        rows.push((
            m,
            "bootstrap_lambda",
            median_seconds(args.reps, || {
                bootstrap_lambda(&y, &tuning)?;
                Ok(())
            })?,
        ));
    }
    write_artifact(&args.out, "bench.csv", |w| {
        writeln!(w, "m,operation,median_seconds,reps")?;
        for (m, op, s) in &rows {
            writeln!(w, "{m},{op},{s},{}", args.reps)?;
        }
        Ok(())
    })?;
    for (m, op, s) in &rows {
        println!("{m:>8}  {op:<17} {:>10.3} ms", s * 1e3);
    }
    Ok(())
}

fn cmd_curves(args: CurvesArgs) -> Result<()> {
    require_input(&args.model)?;
    let text = std::fs::read_to_string(&args.model)
        .with_context(|| format!("reading {}", args.model.display()))?;
    let model = IllnessDeathModel::from_json(&text)
        .with_context(|| format!("parsing {}", args.model.display()))?;
    let times = match args.times {
        Some(t) => check_times(t)?,
        None => {
            let t_max = [&model.a01, &model.a02, &model.a12]
                .iter()
                .map(|h| h.domain.tau_max)
                .fold(0.0, f64::max);
            equispaced(t_max, CURVE_POINTS)
        }
    };
    let (pfs, os) = survival_curves(&model, &times)?;
    create_out_dir(&args.out)?;
    let path = write_artifact(&args.out, "survival_curves.csv", |w| {
        Ok(write_survival_csv(&pfs, &os, w)?)
    })?;
    println!("{}", path.display());
    Ok(())
}

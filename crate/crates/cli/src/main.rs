//! `acdr`: batch front-end for scenario generation, baseline simulation,
//! robust scheduling, beta sweeps and schedule verification.

mod manifest;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acdr_core::baseline::{run_baseline, write_baseline_csv, write_baseline_units_csv, BaselineResult};
use acdr_core::milp::{build_model, export_lp, read_schedule_on_off, write_schedule_csv, Schedule};
use acdr_core::report::{
    sweep_beta, write_power_series, write_report_csv, write_sensitivity_csv, write_temperature_series,
};
use acdr_core::rng::{stream, Purpose};
use acdr_core::robust::{cluster_margins, sampled_violation, worst_case_check};
use acdr_core::scenario::{bundled, generate_population, load_scenario, save_scenario, PopulationSpec};
use acdr_core::solver::{solve_cluster, solve_external, SolverKind, EXHAUSTIVE_CAP};
use acdr_core::{NormKind, Scenario};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use manifest::Manifest;

/// Tolerance below which a comfort excursion is reported as none.
const VERIFY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] acdr_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Violations(String),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Parser, Debug)]
#[command(name = "acdr", version, about = "Robust demand-response scheduling for air-conditioner clusters")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a population and write a scenario on the bundled 10:00–14:00 window.
    GenScenario(GenArgs),
    /// Monte Carlo baseline of the uncontrolled cluster.
    SimulateBaseline(BaselineArgs),
    /// Solve the robust schedule and settle it against the baseline.
    Optimize(OptimizeArgs),
    /// Re-solve over a list of comfort penalty coefficients.
    SweepBeta(SweepArgs),
    /// Check a schedule against the worst case and random in-set forecasts.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Master seed; falls back to ACDR_SEED, then to the scenario file.
    #[arg(long, env = "ACDR_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[command(flatten)]
    seed: SeedArg,
    /// Output scenario file.
    #[arg(long, default_value = "scenario.json")]
    out: PathBuf,
    /// JSON population spec replacing the default ranges.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Keep every drawn unit instead of only those able to stay off
    /// through the peak.
    #[arg(long)]
    all_units: bool,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    /// Monte Carlo sample count (default: from the scenario file).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Norm {
    Box,
    Ellipsoid,
}

impl From<Norm> for NormKind {
    fn from(n: Norm) -> Self {
        match n {
            Norm::Box => NormKind::Box,
            Norm::Ellipsoid => NormKind::Ellipsoid,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SolverChoice {
    Bnb,
    Exhaustive,
    External,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<Norm>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "bnb")]
    solver: SolverChoice,
    /// Command for `--solver external`; the LP path is appended.
    #[arg(long)]
    external_cmd: Option<String>,
    /// Also write the MILP in LP format here.
    #[arg(long)]
    export_lp: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Comma-separated beta values.
    #[arg(long, value_delimiter = ',', default_value = "0,15,30,45")]
    betas: Vec<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<Norm>,
    #[arg(long, value_enum, default_value = "bnb")]
    solver: SolverChoice,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Schedule CSV as written by `optimize`.
    #[arg(long)]
    schedule: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    /// Random in-set perturbations per unit.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<Norm>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not set up {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::GenScenario(a) => gen_scenario(a, cli.threads),
        Command::SimulateBaseline(a) => simulate_baseline(a, cli.threads),
        Command::Optimize(a) => optimize(a, cli.threads),
        Command::SweepBeta(a) => sweep(a, cli.threads),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(io_err(format!("cannot create {}", path.display())))
}

fn out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(format!("cannot create directory {}", dir.display())))
}

/// Loads the scenario and applies the seed and sample overrides.
fn load(args: &ScenarioArgs) -> CliResult<Scenario> {
    let mut s = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed.seed {
        s.master_seed = seed;
    }
    if let Some(n) = args.samples {
        if n == 0 {
            return Err(CliError::Usage("--samples must be at least 1".into()));
        }
        s.mc_samples = n;
    }
    Ok(s)
}

fn apply_model(s: &mut Scenario, epsilon: Option<f64>, beta: Option<f64>, norm: Option<Norm>) -> CliResult<()> {
    if let Some(e) = epsilon {
        s.forecast.epsilon = e;
    }
    if let Some(b) = beta {
        s.beta = b;
    }
    if let Some(n) = norm {
        s.forecast.norm_kind = n.into();
    }
    s.validate()?;
    Ok(())
}

fn solver_kind(choice: SolverChoice, s: &Scenario) -> CliResult<SolverKind> {
    match choice {
        SolverChoice::Bnb => Ok(SolverKind::Bnb),
        SolverChoice::Exhaustive if s.periods() > EXHAUSTIVE_CAP => Err(CliError::Usage(format!(
            "--solver exhaustive is capped at {EXHAUSTIVE_CAP} periods and this horizon has {}; use --solver bnb",
            s.periods()
        ))),
        SolverChoice::Exhaustive => Ok(SolverKind::Exhaustive),
        SolverChoice::External => Err(CliError::Usage("the external solver cannot be used for this command".into())),
    }
}

fn gen_scenario(a: &GenArgs, threads: Option<usize>) -> CliResult<()> {
    let seed = a
        .seed
        .seed
        .ok_or_else(|| CliError::Usage("no seed given: pass --seed or set ACDR_SEED".into()))?;
    let count = a.count as usize;
    let scenario = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(format!("cannot read {}", path.display())))?;
            let spec: PopulationSpec = serde_json::from_str(&text).map_err(|e| {
                CliError::Usage(format!("bad population spec {}: {e}", path.display()))
            })?;
            bundled::scenario_with_units(generate_population(count, &spec, seed)?, seed)
        }
        None if a.all_units => {
            bundled::scenario_with_units(generate_population(count, &PopulationSpec::default(), seed)?, seed)
        }
        None => bundled::scenario(count, seed)?,
    };
    save_scenario(&scenario, &a.out)?;
    let mut m = Manifest::new("gen-scenario", None, seed, threads);
    m.flag("count", json!(count))
        .flag("spec", json!(a.spec))
        .flag("all_units", json!(a.all_units))
        .output(&a.out);
    m.write(&manifest_path_beside(&a.out))?;
    println!("wrote {} units to {}", scenario.units.len(), a.out.display());
    Ok(())
}

fn manifest_path_beside(file: &Path) -> PathBuf {
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    file.with_file_name(format!("{stem}.manifest.json"))
}

fn write_baseline_outputs(s: &Scenario, b: &BaselineResult, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let total = dir.join("baseline.csv");
    write_baseline_csv(b, s, create(&total)?)?;
    let units = dir.join("baseline_units.csv");
    write_baseline_units_csv(b, s, create(&units)?)?;
    Ok(vec![total, units])
}

fn simulate_baseline(a: &BaselineArgs, threads: Option<usize>) -> CliResult<()> {
    let s = load(&a.common)?;
    out_dir(&a.out)?;
    let b = run_baseline(&s)?;
    let outputs = write_baseline_outputs(&s, &b, &a.out)?;
    let mut m = Manifest::new("simulate-baseline", Some(&a.common.scenario), s.master_seed, threads);
    m.flag("samples", json!(s.mc_samples));
    for p in &outputs {
        m.output(p);
    }
    m.write(&a.out.join("manifest.json"))?;
    let peak = b.total_power.iter().cloned().fold(0.0, f64::max);
    println!(
        "baseline: {} units, {} samples, peak total power {:.1} kW",
        s.units.len(),
        b.samples,
        peak / 1000.0
    );
    Ok(())
}

fn optimize(a: &OptimizeArgs, threads: Option<usize>) -> CliResult<()> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, a.model.epsilon, a.model.beta, a.model.norm)?;
    if a.solver != SolverChoice::External && a.external_cmd.is_some() {
        return Err(CliError::Usage("--external-cmd needs --solver external".into()));
    }
    out_dir(&a.out)?;
    let b = run_baseline(&s)?;
    let margins = cluster_margins(&s);
    let model = if a.export_lp.is_some() || a.solver == SolverChoice::External {
        Some(build_model(&s, &b, &margins)?)
    } else {
        None
    };
    let mut outputs = Vec::new();
    if let (Some(path), Some(model)) = (&a.export_lp, &model) {
        export_lp(model, path)?;
        outputs.push(path.clone());
    }
    let schedule: Schedule = match a.solver {
        SolverChoice::External => {
            let cmd = a
                .external_cmd
                .as_deref()
                .ok_or_else(|| CliError::Usage("--solver external needs --external-cmd".into()))?;
            let lp = a.out.join("model.lp");
            let model = model.as_ref().expect("model built for the external solver");
            let (schedule, _) = solve_external(model, &s, &b, cmd, &lp)?;
            outputs.push(lp);
            schedule
        }
        choice => solve_cluster(&s, &b, &margins, solver_kind(choice, &s)?)?.schedule,
    };
    let report = acdr_core::milp::evaluate_schedule(&schedule, &s, &b)?;

    let schedule_path = a.out.join("schedule.csv");
    write_schedule_csv(&schedule, &s, create(&schedule_path)?)?;
    let report_path = a.out.join("report.csv");
    write_report_csv(&report, create(&report_path)?)?;
    let power_path = a.out.join("power.csv");
    write_power_series(&s, &b, &schedule, create(&power_path)?)?;
    let temp_path = a.out.join("temperature_unit1.csv");
    write_temperature_series(&s, &b, &schedule, 0, create(&temp_path)?)?;
    outputs.extend(write_baseline_outputs(&s, &b, &a.out)?);
    outputs.extend([schedule_path, report_path, power_path, temp_path]);

    let mut m = Manifest::new("optimize", Some(&a.common.scenario), s.master_seed, threads);
    m.flag("samples", json!(s.mc_samples))
        .flag("epsilon", json!(s.forecast.epsilon))
        .flag("beta", json!(s.beta))
        .flag("norm", json!(s.forecast.norm_kind.to_string()))
        .flag("solver", json!(format!("{:?}", a.solver).to_lowercase()))
        .flag("external_cmd", json!(a.external_cmd));
    for p in &outputs {
        m.output(p);
    }
    m.write(&a.out.join("manifest.json"))?;

    let c = report.cents();
    println!(
        "revenue {} CNY (baseline {}, electricity {}, penalty {})",
        acdr_core::units::format_cents(c.revenue),
        acdr_core::units::format_cents(c.baseline),
        acdr_core::units::format_cents(c.electricity),
        acdr_core::units::format_cents(c.penalty)
    );
    Ok(())
}

fn sweep(a: &SweepArgs, threads: Option<usize>) -> CliResult<()> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, a.epsilon, None, a.norm)?;
    let kind = solver_kind(a.solver, &s)?;
    out_dir(&a.out)?;
    let b = run_baseline(&s)?;
    let rows = sweep_beta(&s, &b, &cluster_margins(&s), &a.betas, kind)?;
    let path = a.out.join("sensitivity.csv");
    write_sensitivity_csv(&rows, create(&path)?)?;
    let mut m = Manifest::new("sweep-beta", Some(&a.common.scenario), s.master_seed, threads);
    m.flag("samples", json!(s.mc_samples))
        .flag("betas", json!(a.betas))
        .flag("epsilon", json!(s.forecast.epsilon))
        .flag("norm", json!(s.forecast.norm_kind.to_string()))
        .flag("solver", json!(format!("{:?}", a.solver).to_lowercase()))
        .output(&path);
    m.write(&a.out.join("manifest.json"))?;
    for r in &rows {
        println!("beta {:>8}  revenue {:>12.2}  penalty {:>10.2}", r.beta, r.revenue, r.penalty);
    }
    Ok(())
}

fn verify(a: &VerifyArgs) -> CliResult<()> {
    let mut s = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed.seed {
        s.master_seed = seed;
    }
    apply_model(&mut s, a.epsilon, None, a.norm)?;
    let file = File::open(&a.schedule).map_err(io_err(format!("cannot open {}", a.schedule.display())))?;
    let plans = read_schedule_on_off(&s, file)?;
    let dt = s.horizon.dt;
    let mut failing = Vec::new();
    let mut worst_all: f64 = 0.0;
    println!("unit_id,worst_case_C,sampled_C");
    for (unit, plan) in s.units.iter().zip(&plans) {
        let worst = worst_case_check(unit, plan, &s.forecast, dt);
        let mut rng = stream(s.master_seed, 0, unit.id, Purpose::ForecastPerturbation);
        let sampled = sampled_violation(unit, plan, &s.forecast, dt, a.samples, &mut rng);
        println!("{},{worst},{sampled}", unit.id);
        let v = worst.max(sampled);
        worst_all = worst_all.max(v);
        if v > VERIFY_TOLERANCE {
            failing.push(unit.id.to_string());
        }
    }
    if failing.is_empty() {
        println!("ok: no comfort violations (max {worst_all:e} °C)");
        Ok(())
    } else {
        Err(CliError::Violations(format!(
            "comfort violated by up to {worst_all:.4} °C on units {}",
            failing.join(", ")
        )))
    }
}

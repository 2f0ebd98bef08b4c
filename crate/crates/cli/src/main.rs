//! `fcm`: generate shock scenarios, plan FCM staging, dispatch and evaluate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use fcm_core::dispatch::{solve_stage2_with, DispatchReport};
use fcm_core::milp::MipOptions;
use fcm_core::planner::evaluate_plan_with;
use fcm_core::{
    aggregate_report, builtin_ieee33, generate_scenarios, load_set, save_set, simulate_tracking,
    solve_plan_with, validate_instance, Error, GenConfig, Instance, ScenarioSet, StageOnePlan,
};
use serde::Serialize;

/// Version of the JSON file formats this build reads and writes.
const FORMAT_VERSION: u32 = 1;

const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (file format 1)");

#[derive(Parser)]
#[command(name = "fcm", version, long_version = LONG_VERSION)]
#[command(about = "Risk-averse pre-positioning and dispatch of flexible capacity modules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a scenario set from a generator config.
    Generate {
        #[command(flatten)]
        input: InstanceArgs,
        /// Generator config; defaults to the bundled 33-bus config.
        #[arg(long)]
        gen_config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the extensive form and write the staging plan.
    Plan {
        #[command(flatten)]
        input: InstanceArgs,
        #[command(flatten)]
        scenarios: ScenarioArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dispatch one scenario against a plan and track its ramp profile.
    Dispatch {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        scenario_id: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline into an output directory.
    Evaluate {
        #[command(flatten)]
        input: InstanceArgs,
        #[command(flatten)]
        scenarios: ScenarioArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Parallel scenario solves; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance file; defaults to the bundled IEEE 33-bus instance.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Overrides the risk blend weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides the CVaR level.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario set file. Without it, scenarios are generated.
    #[arg(long, conflicts_with = "gen_config")]
    scenarios: Option<PathBuf>,
    /// Generator config; defaults to the bundled 33-bus config.
    #[arg(long)]
    gen_config: Option<PathBuf>,
    /// Overrides the generator seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SolverArgs {
    /// Wall-clock budget per MILP solve.
    #[arg(long, default_value_t = 300.0)]
    time_limit_s: f64,
}

impl SolverArgs {
    fn options(&self) -> Result<MipOptions, Failure> {
        let limit = Duration::try_from_secs_f64(self.time_limit_s)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| {
                Failure::usage(format!(
                    "--time-limit-s must be positive, got {}",
                    self.time_limit_s
                ))
            })?;
        Ok(MipOptions {
            time_limit: limit,
            ..MipOptions::default()
        })
    }
}

/// A failed run: exit code plus message.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: String) -> Self {
        Failure { code: 2, message }
    }

    fn phase(phase: &str, err: Error) -> Self {
        let code = match &err {
            Error::Validation(_)
            | Error::Disconnected { .. }
            | Error::Config(_)
            | Error::Parse { .. }
            | Error::Shape(_)
            | Error::Domain(_) => 2,
            Error::Io { .. } => 3,
            e if e.is_timeout() => 4,
            _ => 1,
        };
        Failure {
            code,
            message: format!("{phase}: {err}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            input,
            gen_config,
            seed,
            out,
        } => cmd_generate(&input, gen_config.as_deref(), seed, &out),
        Command::Plan {
            input,
            scenarios,
            solver,
            out,
        } => cmd_plan(&input, &scenarios, &solver, &out),
        Command::Dispatch {
            input,
            plan,
            scenarios,
            scenario_id,
            solver,
            out,
        } => cmd_dispatch(&input, &plan, &scenarios, scenario_id, &solver, &out),
        Command::Evaluate {
            input,
            scenarios,
            solver,
            jobs,
            out,
        } => cmd_evaluate(&input, &scenarios, &solver, jobs, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_instance(args: &InstanceArgs) -> Result<Instance, Failure> {
    let mut inst = match &args.instance {
        Some(path) => Instance::load(path).map_err(|e| Failure::phase("instance", e))?,
        None => builtin_ieee33(),
    };
    if let Some(lambda) = args.lambda {
        inst.risk.lambda = lambda;
    }
    if let Some(alpha) = args.alpha {
        inst.risk.alpha = alpha;
    }
    validate_instance(inst).map_err(|e| Failure::phase("instance", e))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<GenConfig, Failure> {
    let mut cfg = match path {
        Some(p) => GenConfig::load(p).map_err(|e| Failure::phase("generator config", e))?,
        None => GenConfig::builtin_ieee33(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Loads the scenario file, or generates a set. The flag says whether the
/// set was generated.
fn obtain_scenarios(inst: &Instance, args: &ScenarioArgs) -> Result<(ScenarioSet, bool), Failure> {
    if let Some(path) = &args.scenarios {
        let set = load_set(path).map_err(|e| Failure::phase("scenarios", e))?;
        set.validate(inst)
            .map_err(|e| Failure::phase("scenarios", e))?;
        return Ok((set, false));
    }
    let cfg = load_config(args.gen_config.as_deref(), args.seed)?;
    let set = generate_scenarios(inst, &cfg).map_err(|e| Failure::phase("generate", e))?;
    Ok((set, true))
}

fn cmd_generate(
    input: &InstanceArgs,
    gen_config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let inst = load_instance(input)?;
    let cfg = load_config(gen_config, seed)?;
    let set = generate_scenarios(&inst, &cfg).map_err(|e| Failure::phase("generate", e))?;
    save_set(out, &set).map_err(|e| Failure::phase("generate", e))?;
    println!("scenarios: {}", set.len());
    println!("seed:      {}", set.seed);
    print_histogram(&set);
    Ok(())
}

fn print_histogram(set: &ScenarioSet) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &set.scenarios {
        for node in s.affected() {
            *counts.entry(node).or_default() += 1;
        }
    }
    let width = counts.keys().map(|k| k.len()).max().unwrap_or(4).max(4);
    println!("{:<width$}  {:>5}", "node", "hits");
    for (node, n) in counts {
        println!("{node:<width$}  {n:>5}  {}", "#".repeat(n));
    }
}

fn print_breakdown(plan: &StageOnePlan) {
    let b = &plan.breakdown;
    let row = [b.setup, b.transport, b.expected_recourse, b.cvar, b.total];
    println!(
        "{:>14} | {:>14} | {:>14} | {:>14} | {:>14}",
        "setup", "transport", "E[Q]", "CVaR", "total"
    );
    println!(
        "{:>14.4} | {:>14.4} | {:>14.4} | {:>14.4} | {:>14.4}",
        row[0], row[1], row[2], row[3], row[4]
    );
    println!("lambda {}  alpha {}  zeta {:.4}", b.lambda, b.alpha, b.zeta);
    let open: Vec<&str> = plan
        .hubs
        .iter()
        .filter(|(_, o)| *o)
        .map(|(h, _)| h.as_str())
        .collect();
    println!(
        "open hubs: {}",
        if open.is_empty() {
            "none".into()
        } else {
            open.join(", ")
        }
    );
    for s in &plan.shipments {
        println!("  {} x {} : {} -> {}", s.units, s.fcm, s.supplier, s.hub);
    }
}

fn solve_and_report_plan(
    inst: &Instance,
    set: &ScenarioSet,
    opts: &MipOptions,
) -> Result<StageOnePlan, Failure> {
    let plan = solve_plan_with(inst, set, opts).map_err(|e| Failure::phase("plan", e))?;
    print_breakdown(&plan);
    println!(
        "solver: {} nodes, {} LP iterations, {:.2} s",
        plan.solver.nodes, plan.solver.lp_iterations, plan.solver.solve_time_s
    );
    Ok(plan)
}

fn timeout_failure(what: &str) -> Failure {
    Failure {
        code: 4,
        message: format!("{what}: time limit reached; the best incumbent was written and flagged"),
    }
}

fn cmd_plan(
    input: &InstanceArgs,
    scen: &ScenarioArgs,
    solver: &SolverArgs,
    out: &Path,
) -> Result<(), Failure> {
    let opts = solver.options()?;
    let inst = load_instance(input)?;
    let (set, _) = obtain_scenarios(&inst, scen)?;
    let plan = solve_and_report_plan(&inst, &set, &opts)?;
    plan.save(out).map_err(|e| Failure::phase("plan", e))?;
    if plan.solver.time_limited {
        return Err(timeout_failure("plan"));
    }
    Ok(())
}

fn cmd_dispatch(
    input: &InstanceArgs,
    plan_path: &Path,
    scenarios: &Path,
    id: usize,
    solver: &SolverArgs,
    out: &Path,
) -> Result<(), Failure> {
    let opts = solver.options()?;
    let inst = load_instance(input)?;
    let plan = StageOnePlan::load(plan_path).map_err(|e| Failure::phase("plan", e))?;
    let set = load_set(scenarios).map_err(|e| Failure::phase("scenarios", e))?;
    set.validate(&inst)
        .map_err(|e| Failure::phase("scenarios", e))?;
    let Some(scenario) = set.scenarios.get(id) else {
        return Err(Failure::usage(format!(
            "scenario id {id} out of range; the set has {} scenarios",
            set.len()
        )));
    };
    let decision = solve_stage2_with(&inst, &plan.staging, scenario, &opts)
        .map_err(|e| Failure::phase("dispatch", e))?;
    let tracking = simulate_tracking(&decision, scenario, &inst);
    let report = DispatchReport { decision, tracking };
    report
        .save(out)
        .map_err(|e| Failure::phase("dispatch", e))?;
    print_dispatch(&report);
    check_tracking(&report)?;
    if report.decision.solver.time_limited {
        return Err(timeout_failure("dispatch"));
    }
    Ok(())
}

fn print_dispatch(report: &DispatchReport) {
    let d = &report.decision;
    println!(
        "scenario {}: Q {:.4} (shortfall {:.4}, restoration {:.4})",
        d.scenario_id, d.recourse_cost, d.shortfall_cost, d.restoration_cost
    );
    let width = d
        .nodes
        .iter()
        .map(|n| n.node.len())
        .max()
        .unwrap_or(4)
        .max(4);
    println!(
        "{:<width$}  {:>10}  {:>9}  {:>12}",
        "node", "stabilized", "response", "residual kWh"
    );
    for (n, tr) in d.nodes.iter().zip(&report.tracking.nodes) {
        println!(
            "{:<width$}  {:>10}  {:>9.2}  {:>12.4}",
            n.node,
            if n.stabilized { "yes" } else { "no" },
            n.response_minutes,
            tr.residual_kwh
        );
    }
}

fn check_tracking(report: &DispatchReport) -> Result<(), Failure> {
    match report.tracking.violations().next() {
        None => Ok(()),
        Some(v) => Err(Failure {
            code: 1,
            message: format!("tracking self-check: {v}"),
        }),
    }
}

#[derive(Serialize)]
struct RunManifest {
    tool_version: &'static str,
    format_version: u32,
    seed: u64,
    instance: PathBuf,
    scenarios: PathBuf,
    plan: PathBuf,
    dispatch: Vec<PathBuf>,
    risk_report: PathBuf,
    risk_csv: PathBuf,
    /// Wall-clock seconds per phase.
    timings_s: BTreeMap<&'static str, f64>,
}

fn cmd_evaluate(
    input: &InstanceArgs,
    scen: &ScenarioArgs,
    solver: &SolverArgs,
    jobs: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let opts = solver.options()?;
    if jobs == Some(0) {
        return Err(Failure::usage("--jobs must be at least 1".into()));
    }
    let io = |e: std::io::Error, p: &Path| {
        Failure::phase(
            "output",
            Error::Io {
                path: p.to_path_buf(),
                source: e,
            },
        )
    };
    let manifest_path = out.join("manifest.json");
    let dispatch_dir = out.join("dispatch");
    std::fs::create_dir_all(&dispatch_dir).map_err(|e| io(e, &dispatch_dir))?;
    match std::fs::remove_file(&manifest_path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(io(e, &manifest_path)),
        _ => {}
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;

    let mut timings = BTreeMap::new();
    let clock = Instant::now();
    let inst = load_instance(input)?;
    let instance_path = out.join("instance.json");
    inst.save(&instance_path)
        .map_err(|e| Failure::phase("output", e))?;

    let (set, generated) = obtain_scenarios(&inst, scen)?;
    let scenarios_path = out.join("scenarios.json");
    save_set(&scenarios_path, &set).map_err(|e| Failure::phase("output", e))?;
    timings.insert(
        if generated { "generate" } else { "load" },
        clock.elapsed().as_secs_f64(),
    );
    println!("scenarios: {} (seed {})", set.len(), set.seed);

    let clock = Instant::now();
    let plan = pool.install(|| solve_and_report_plan(&inst, &set, &opts))?;
    let plan_path = out.join("plan.json");
    plan.save(&plan_path)
        .map_err(|e| Failure::phase("output", e))?;
    timings.insert("plan", clock.elapsed().as_secs_f64());
    if plan.solver.time_limited {
        return Err(timeout_failure("plan"));
    }

    let clock = Instant::now();
    let decisions = pool
        .install(|| evaluate_plan_with(&inst, &plan.staging, &set, &opts))
        .map_err(|e| Failure::phase("dispatch", e))?;
    let tracking: Vec<_> = decisions
        .iter()
        .zip(&set.scenarios)
        .map(|(d, s)| simulate_tracking(d, s, &inst))
        .collect();
    let mut dispatch_paths = Vec::with_capacity(set.len());
    for (d, tr) in decisions.iter().zip(&tracking) {
        let report = DispatchReport {
            decision: d.clone(),
            tracking: tr.clone(),
        };
        check_tracking(&report)?;
        if d.solver.time_limited {
            return Err(timeout_failure("dispatch"));
        }
        let path = dispatch_dir.join(format!("scenario_{:04}.json", d.scenario_id));
        report
            .save(&path)
            .map_err(|e| Failure::phase("output", e))?;
        dispatch_paths.push(path);
    }
    timings.insert("dispatch", clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let report = aggregate_report(&inst, &plan, &set, &decisions, &tracking)
        .map_err(|e| Failure::phase("report", e))?;
    let report_path = out.join("risk_report.json");
    let csv_path = out.join("risk_report.csv");
    report
        .save(&report_path)
        .map_err(|e| Failure::phase("output", e))?;
    report
        .write_csv(&csv_path)
        .map_err(|e| Failure::phase("output", e))?;
    timings.insert("report", clock.elapsed().as_secs_f64());

    println!("expected cost     {:>14.4}", report.expected_cost);
    println!("VaR threshold     {:>14.4}", report.var_threshold);
    println!("CVaR              {:>14.4}", report.cvar);
    println!("expected ENS kWh  {:>14.4}", report.expected_ens_kwh);
    println!("residual kWh      {:>14.4}", report.total_residual_kwh);
    for (phase, s) in &timings {
        println!("{phase:<10} {s:>8.2} s");
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        format_version: FORMAT_VERSION,
        seed: set.seed,
        instance: instance_path,
        scenarios: scenarios_path,
        plan: plan_path,
        dispatch: dispatch_paths,
        risk_report: report_path,
        risk_csv: csv_path,
        timings_s: timings,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| io(e, &manifest_path))?;
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

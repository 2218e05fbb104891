//! `wholebody`: benchmark runs and scenario replays of the reactive
//! whole-body controller, driven by JSON configs.
//!
//! Every subcommand starts from a bench config (`--config`, or the built-in
//! defaults), applies `--robot` / `--controller` files on top, then the
//! individual flags. Each output file carries the hash of the resolved
//! config.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use wholebody::controller::ControllerConfig;
use wholebody::kinematics::RobotModel;
use wholebody::sdf::Scene;
use wholebody::shape::load_points;
use wholebody::sim::{
    config_hash, run_benchmark, sweep_lambda, write_trials_csv, BenchConfig, BenchmarkSummary, Representation,
    Scenario, ScenarioGenerator, ScenarioKind,
};

#[derive(Parser)]
#[command(name = "wholebody", version, about = "Reactive whole-body control benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark per scenario kind, or replay a stored scenario.
    Run(RunArgs),
    /// Representation-precision matrix and active-cost gain sweep on shared seeds.
    Ablate(AblateArgs),
    /// Run one stored scenario and write its full trajectory.
    Replay(ReplayArgs),
    /// Load and check config files without running anything.
    ValidateConfig(ValidateArgs),
}

#[derive(Args)]
struct Setup {
    /// Bench config (JSON). Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Robot model (JSON).
    #[arg(long)]
    robot: Option<PathBuf>,
    /// Controller config (JSON).
    #[arg(long)]
    controller: Option<PathBuf>,
    /// points-coarse, points-fine, spheres or points-file:PATH.
    #[arg(long)]
    rep: Option<Representation>,
    #[arg(long, overrides_with = "no_active_cost")]
    active_cost: bool,
    #[arg(long)]
    no_active_cost: bool,
    #[arg(long, overrides_with = "no_constraints")]
    constraints: bool,
    /// Drop the collision dampers.
    #[arg(long)]
    no_constraints: bool,
    /// Peak gain of the active collision cost.
    #[arg(long)]
    lambda: Option<f64>,
    /// Seed of the controller point sample.
    #[arg(long)]
    point_seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SeedArgs {
    /// Scenario kinds, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["bookshelf", "table"])]
    kind: Vec<ScenarioKind>,
    /// Number of consecutive seeds starting at --first-seed.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Explicit seed list; overrides --trials.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

impl SeedArgs {
    fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (self.first_seed..self.first_seed + self.trials as u64).collect()
        } else {
            self.seeds.clone()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    setup: Setup,
    #[command(flatten)]
    seeds: SeedArgs,
    /// Replay this scenario file instead of generating scenes.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Seed recorded for a replayed scenario.
    #[arg(long, requires = "replay")]
    seed: Option<u64>,
    /// Also write every generated scenario as a replayable JSON file.
    #[arg(long)]
    save_scenes: bool,
    /// Include wall-clock columns; outputs then differ between runs.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    setup: Setup,
    #[command(flatten)]
    seeds: SeedArgs,
    /// Run only the representation matrix.
    #[arg(long, conflicts_with = "sweep_only")]
    precision_only: bool,
    /// Run only the gain sweep.
    #[arg(long)]
    sweep_only: bool,
    #[arg(long, value_delimiter = ',', default_values = ["points-fine", "points-coarse", "spheres"])]
    reps: Vec<Representation>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 1.5, 2.0])]
    lambdas: Vec<f64>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Scenario JSON, as written by `run --save-scenes`.
    scenario: PathBuf,
    #[command(flatten)]
    setup: Setup,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    setup: Setup,
    /// Scene or scenario JSON to check as well.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Point-set CSV to check against the robot model.
    #[arg(long)]
    points: Option<PathBuf>,
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn resolve(setup: &Setup) -> Res<BenchConfig> {
    let mut cfg = match &setup.config {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    if let Some(path) = &setup.robot {
        cfg.robot = RobotModel::load(path)?;
    }
    if let Some(path) = &setup.controller {
        cfg.controller = ControllerConfig::load(path)?;
    }
    if let Some(rep) = &setup.rep {
        cfg.representation = rep.clone();
    }
    if setup.active_cost {
        cfg.controller.active_cost_enabled = true;
    }
    if setup.no_active_cost {
        cfg.controller.active_cost_enabled = false;
    }
    if setup.constraints {
        cfg.controller.constraints_enabled = true;
    }
    if setup.no_constraints {
        cfg.controller.constraints_enabled = false;
    }
    if let Some(l) = setup.lambda {
        cfg.controller.lambda_c_max = l;
    }
    if let Some(s) = setup.point_seed {
        cfg.point_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parallelism(setup: &Setup) -> usize {
    setup
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Res<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

/// Summary JSON with the wall-clock field dropped unless `timing` is set.
fn summary_value(summary: &BenchmarkSummary, timing: bool) -> Res<Value> {
    let mut v = serde_json::to_value(summary)?;
    if !timing {
        v.as_object_mut().unwrap().remove("step_time_mean");
    }
    Ok(v)
}

fn write_csv(path: &Path, summary: &BenchmarkSummary, timing: bool) -> Res<()> {
    let file = fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    write_trials_csv(&summary.records, &summary.config_hash, timing, file)?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Res<()> {
    if let Some(path) = &args.replay {
        return replay(path, &args.setup, args.seed, args.timing);
    }
    let cfg = resolve(&args.setup)?;
    let out = &args.setup.out;
    fs::create_dir_all(out)?;
    let seeds = args.seeds.seeds();
    write_json(&out.join("config.json"), &cfg)?;
    for &kind in &args.seeds.kind {
        if args.save_scenes {
            let dir = out.join("scenes");
            fs::create_dir_all(&dir)?;
            let gen = ScenarioGenerator::new(cfg.robot.clone(), cfg.scenarios.clone())?;
            for &seed in &seeds {
                gen.generate(kind, seed)?.save(dir.join(format!("{}_{seed}.json", kind.name())))?;
            }
        }
        let summary = run_benchmark(kind, &seeds, &cfg, parallelism(&args.setup))?;
        write_csv(&out.join(format!("trials_{}.csv", kind.name())), &summary, args.timing)?;
        write_json(&out.join(format!("summary_{}.json", kind.name())), &summary_value(&summary, args.timing)?)?;
        println!(
            "{:<9} {:<14} n={:<4} success {:5.1}%  collision {:5.1}%  local-min {:5.1}%  hash {}",
            kind.name(),
            summary.representation,
            summary.trials,
            summary.success_rate,
            summary.collision_rate,
            summary.local_minimum_rate,
            summary.config_hash
        );
    }
    Ok(())
}

fn replay(path: &Path, setup: &Setup, seed: Option<u64>, timing: bool) -> Res<()> {
    let cfg = resolve(setup)?;
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let record = cfg.replay(&scenario)?;
    let hash = config_hash(&(&scenario, &cfg));
    let out = &setup.out;
    fs::create_dir_all(out)?;
    let summary = BenchmarkSummary::from_records(scenario.kind, cfg.representation.label(), hash, vec![record]);
    write_csv(&out.join("replay.csv"), &summary, timing)?;
    let mut trial = serde_json::to_value(&summary.records[0])?;
    if !timing {
        let obj = trial.as_object_mut().unwrap();
        obj.remove("step_time_mean");
        obj.remove("wall_time");
    }
    let doc = serde_json::json!({ "config_hash": summary.config_hash, "trial": trial });
    write_json(&out.join("replay.json"), &doc)?;
    let r = &summary.records[0];
    println!(
        "{} seed {}: {} after {} steps, position error {:.4} m, min distance {:.4} m",
        scenario.kind.name(),
        scenario.seed,
        r.outcome.name(),
        r.steps,
        r.final_position_error,
        r.min_distance
    );
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    study: &'static str,
    kind: &'static str,
    representation: String,
    lambda_c_max: f64,
    constraints: bool,
    active_cost: bool,
    trials: usize,
    success_rate: f64,
    collision_rate: f64,
    local_minimum_rate: f64,
    ee_accel_mean: Option<f64>,
    step_time_mean: f64,
    config_hash: String,
}

fn row(study: &'static str, cfg: &BenchConfig, s: &BenchmarkSummary) -> AblationRow {
    AblationRow {
        study,
        kind: s.kind.name(),
        representation: s.representation.clone(),
        lambda_c_max: cfg.controller.lambda_c_max,
        constraints: cfg.controller.constraints_enabled,
        active_cost: cfg.controller.active_cost_enabled,
        trials: s.trials,
        success_rate: s.success_rate,
        collision_rate: s.collision_rate,
        local_minimum_rate: s.local_minimum_rate,
        ee_accel_mean: s.ee_accel_mean,
        step_time_mean: s.step_time_mean,
        config_hash: s.config_hash.clone(),
    }
}

fn cmd_ablate(args: AblateArgs) -> Res<()> {
    let base = resolve(&args.setup)?;
    let seeds = args.seeds.seeds();
    let threads = parallelism(&args.setup);
    let mut rows = Vec::new();
    for &kind in &args.seeds.kind {
        if !args.sweep_only {
            for rep in &args.reps {
                let cfg = BenchConfig {
                    representation: rep.clone(),
                    ..base.clone()
                };
                let s = run_benchmark(kind, &seeds, &cfg, threads)?;
                rows.push(row("precision", &cfg, &s));
            }
        }
        if !args.precision_only {
            for (lambda, s) in sweep_lambda(kind, &args.lambdas, &seeds, &base, threads)? {
                let mut cfg = base.clone();
                cfg.controller.lambda_c_max = lambda;
                rows.push(row("lambda", &cfg, &s));
            }
        }
    }
    let out = &args.setup.out;
    fs::create_dir_all(out)?;
    let path = out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    println!(
        "{:<9} {:<9} {:<14} {:>6} {:>8} {:>10} {:>10} {:>12}",
        "study", "kind", "rep", "lambda", "success", "collision", "local-min", "step [ms]"
    );
    for r in &rows {
        w.serialize(r)?;
        println!(
            "{:<9} {:<9} {:<14} {:>6.2} {:>7.1}% {:>9.1}% {:>9.1}% {:>12.3}",
            r.study,
            r.kind,
            r.representation,
            r.lambda_c_max,
            r.success_rate,
            r.collision_rate,
            r.local_minimum_rate,
            r.step_time_mean * 1e3
        );
    }
    w.flush()?;
    write_json(&out.join("ablation.json"), &serde_json::json!({ "seeds": seeds, "rows": rows }))?;
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Res<()> {
    let cfg = resolve(&args.setup)?;
    cfg.controller()?;
    println!("config ok, hash {}", config_hash(&cfg));
    if let Some(path) = &args.scene {
        match Scenario::load(path) {
            Ok(s) => println!("scenario ok: {} seed {}, {} obstacles", s.kind.name(), s.seed, s.scene.obstacles.len()),
            Err(_) => {
                let scene = Scene::load(path)?;
                println!("scene ok: {} obstacles", scene.obstacles.len());
            }
        }
    }
    if let Some(path) = &args.points {
        let rep = load_points(path, &cfg.robot)?;
        println!("point set ok: {} points", rep.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Replay(a) => replay(&a.scenario, &a.setup, a.seed, a.timing),
        Command::ValidateConfig(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

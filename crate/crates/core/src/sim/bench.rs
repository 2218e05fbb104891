//! Batches of trials over seed lists, with CSV and JSON reporting.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    run_trial, Outcome, Scenario, ScenarioGenerator, ScenarioKind, ScenarioRanges, TrialRecord, TrialSettings,
};
use crate::controller::{Controller, ControllerConfig};
use crate::kinematics::RobotModel;
use crate::shape::{load_points, sample_points, CollisionBody, PointPreset, SurfaceRep};
use crate::{Error, Result};

/// How the controller sees the robot body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "path")]
pub enum Representation {
    PointsCoarse,
    PointsFine,
    PointsFile(PathBuf),
    Spheres,
}

impl Representation {
    pub fn label(&self) -> String {
        match self {
            Representation::PointsCoarse => "points-coarse".into(),
            Representation::PointsFine => "points-fine".into(),
            Representation::PointsFile(p) => format!("points-file:{}", p.display()),
            Representation::Spheres => "spheres".into(),
        }
    }

    pub fn build(&self, model: &RobotModel, seed: u64) -> Result<SurfaceRep> {
        match self {
            Representation::PointsCoarse => sample_points(model, PointPreset::Coarse.count(), seed),
            Representation::PointsFine => sample_points(model, PointPreset::Fine.count(), seed),
            Representation::PointsFile(path) => load_points(path, model),
            Representation::Spheres => Ok(SurfaceRep::model_spheres(model)),
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "points-coarse" => Ok(Representation::PointsCoarse),
            "points-fine" => Ok(Representation::PointsFine),
            "spheres" => Ok(Representation::Spheres),
            other => match other.strip_prefix("points-file:") {
                Some(path) if !path.is_empty() => Ok(Representation::PointsFile(path.into())),
                _ => Err(format!(
                    "unknown representation {other:?} (expected points-coarse, points-fine, spheres or points-file:PATH)"
                )),
            },
        }
    }
}

/// The dense point set used to double-check collisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub points: usize,
    pub seed: u64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            points: 4 * PointPreset::Fine.count(),
            seed: 0x000a_0d17,
        }
    }
}

/// Everything a benchmark run depends on besides the scenario kind and the
/// seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub robot: RobotModel,
    pub controller: ControllerConfig,
    pub representation: Representation,
    /// Seed of the controller point sample.
    pub point_seed: u64,
    pub trial: TrialSettings,
    pub scenarios: ScenarioRanges,
    pub audit: AuditSettings,
    /// Raise the stopping distance of point sets to `sqrt(d_s^2 + g^2)`,
    /// with `g` the gap radius of the set, so that an obstacle edge poking
    /// between samples still keeps `d_s` from the true surface.
    pub gap_margin: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            robot: RobotModel::frankie(),
            controller: ControllerConfig::default(),
            representation: Representation::PointsFine,
            point_seed: 0,
            trial: TrialSettings::default(),
            scenarios: ScenarioRanges::standard(),
            audit: AuditSettings::default(),
            gap_margin: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.controller.validate()?;
        self.trial.validate()
    }

    pub fn controller(&self) -> Result<Controller> {
        let rep = self.representation.build(&self.robot, self.point_seed)?;
        let mut config = self.controller.clone();
        if self.gap_margin {
            config.d_s = config.d_s.hypot(rep.gap_radius(&self.robot));
        }
        Controller::new(self.robot.clone(), config, CollisionBody::new(&rep))
    }

    pub fn audit_body(&self) -> Result<CollisionBody> {
        let rep = sample_points(&self.robot, self.audit.points, self.audit.seed)?;
        Ok(CollisionBody::new(&rep))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::json("<bench config>", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Runs one stored scenario with its trajectory recorded.
    pub fn replay(&self, scenario: &Scenario) -> Result<TrialRecord> {
        self.validate()?;
        scenario.scene.validate()?;
        let settings = TrialSettings {
            record_trajectory: true,
            ..self.trial.clone()
        };
        run_trial(&self.controller()?, &self.audit_body()?, scenario, &settings)
    }
}

/// First 16 hex digits of the SHA-256 of the canonical JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configs serialize to JSON");
    hex::encode(&Sha256::digest(&json)[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub kind: ScenarioKind,
    pub representation: String,
    pub config_hash: String,
    pub trials: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    /// Includes timeouts.
    pub local_minimum_rate: f64,
    /// Mean of the per-trial mean tool acceleration over successful trials.
    pub ee_accel_mean: Option<f64>,
    /// Controller time per step over all trials (s).
    pub step_time_mean: f64,
    /// Smallest audit distance over every trial (m).
    pub audit_min_distance: f64,
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl BenchmarkSummary {
    pub fn from_records(kind: ScenarioKind, representation: String, config_hash: String, records: Vec<TrialRecord>) -> Self {
        let n = records.len();
        let pct = |pred: &dyn Fn(&TrialRecord) -> bool| {
            if n == 0 {
                0.0
            } else {
                100.0 * records.iter().filter(|r| pred(r)).count() as f64 / n as f64
            }
        };
        let success_rate = pct(&|r| r.outcome == Outcome::Success);
        let collision_rate = pct(&|r| r.outcome == Outcome::Collision);
        let local_minimum_rate = pct(&|r| r.counts_as_local_minimum());
        let successes: Vec<f64> = records
            .iter()
            .filter(|r| r.outcome == Outcome::Success)
            .map(|r| r.ee_accel_mean)
            .collect();
        let ee_accel_mean = (!successes.is_empty()).then(|| successes.iter().sum::<f64>() / successes.len() as f64);
        let total_steps: usize = records.iter().map(|r| r.steps).sum();
        let total_time: f64 = records.iter().map(|r| r.step_time_mean * r.steps as f64).sum();
        Self {
            kind,
            representation,
            config_hash,
            trials: n,
            success_rate,
            collision_rate,
            local_minimum_rate,
            ee_accel_mean,
            step_time_mean: if total_steps > 0 { total_time / total_steps as f64 } else { 0.0 },
            audit_min_distance: records.iter().map(|r| r.audit_min_distance).fold(f64::INFINITY, f64::min),
            seeds: records.iter().map(|r| r.seed).collect(),
            records,
        }
    }

    pub fn successes(&self) -> usize {
        self.records.iter().filter(|r| r.outcome == Outcome::Success).count()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    seed: u64,
    kind: &'a str,
    outcome: &'a str,
    steps: usize,
    ee_accel_mean: f64,
    min_distance: f64,
    audit_min_distance: f64,
    final_position_error: f64,
    final_angle_error: f64,
    infeasible_steps: usize,
    step_time_mean: Option<f64>,
    wall_time: Option<f64>,
    config_hash: &'a str,
}

/// One row per trial. Timing columns are left empty when `timing` is off,
/// which makes the file a pure function of seeds and configuration.
pub fn write_trials_csv(
    records: &[TrialRecord],
    config_hash: &str,
    timing: bool,
    out: impl std::io::Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            seed: r.seed,
            kind: r.kind.name(),
            outcome: r.outcome.name(),
            steps: r.steps,
            ee_accel_mean: r.ee_accel_mean,
            min_distance: r.min_distance,
            audit_min_distance: r.audit_min_distance,
            final_position_error: r.final_position_error,
            final_angle_error: r.final_angle_error,
            infeasible_steps: r.infeasible_steps,
            step_time_mean: timing.then_some(r.step_time_mean),
            wall_time: timing.then_some(r.wall_time),
            config_hash,
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Runs one trial per seed on `parallelism` worker threads. Records come
/// back in seed-list order whatever the thread count.
pub fn run_benchmark(
    kind: ScenarioKind,
    seeds: &[u64],
    config: &BenchConfig,
    parallelism: usize,
) -> Result<BenchmarkSummary> {
    config.validate()?;
    let controller = config.controller()?;
    let audit = config.audit_body()?;
    let generator = ScenarioGenerator::new(config.robot.clone(), config.scenarios.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let records: Result<Vec<TrialRecord>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let scenario = generator.generate(kind, seed)?;
                run_trial(&controller, &audit, &scenario, &config.trial)
            })
            .collect()
    });
    Ok(BenchmarkSummary::from_records(
        kind,
        config.representation.label(),
        config_hash(&(kind, config)),
        records?,
    ))
}

/// One benchmark per `lambda_c_max` value on the same seeds.
pub fn sweep_lambda(
    kind: ScenarioKind,
    lambdas: &[f64],
    seeds: &[u64],
    config: &BenchConfig,
    parallelism: usize,
) -> Result<Vec<(f64, BenchmarkSummary)>> {
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidConfig(format!("lambda values must be non-negative, got {bad}")));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let mut cfg = config.clone();
            cfg.controller.lambda_c_max = lambda;
            run_benchmark(kind, seeds, &cfg, parallelism).map(|s| (lambda, s))
        })
        .collect()
}

//! Scenario configuration and the seeded Monte-Carlo experiment loop.
//!
//! A trial runs the closed loop per tick: predict, pick a control command,
//! move the sensor, draw a scan from the scripted truth, update, score OSPA.
//! Every random stream is derived from `(seed, trial, tick, purpose)`, so
//! trials are reproducible in isolation, independent policies share the same
//! measurement randomness for paired comparison, and parallel execution
//! changes nothing observable.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    admissible_commands, select_control_cardvar_pims, select_control_cardvar_sampling,
    select_control_renyi, CardVarConfig, ControlCommand, ControlError, ControlGrid, RenyiConfig,
};
use crate::filter::{BirthModel, CbMemberFilter, FilterConfig, FilterError};
use crate::metrics::{ospa, MetricError, OspaParams};
use crate::models::{
    scripted_truth, GroundTruth, ModelError, MotionModel, Rect, SensorKind, SensorModel,
    SensorPose, TargetScript,
};
use crate::rfs::{
    cardinality_stats, extract_map_estimate, MultiBernoulliDensity, RfsError, StateVector,
};
use crate::rng::derive_rng;

const STREAM_FILTER: u64 = 1;
const STREAM_MEASUREMENT: u64 = 2;
const STREAM_CONTROL: u64 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("trial {trial} failed: {source}")]
    TrialFailed {
        trial: u64,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Rfs(#[from] RfsError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Sensor-control strategy identifiers accepted by the CLI and config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyId {
    /// Never move.
    Static,
    /// Uniformly random in-area command.
    Random,
    /// Maximize expected Rényi divergence on the predicted ideal measurement
    /// set.
    Renyi,
    /// Minimize expected MAP-cardinality variance via measurement sampling.
    CardvarSampling,
    /// Minimize MAP-cardinality variance via the non-sampling truncation.
    CardvarPims,
}

impl PolicyId {
    pub const ALL: [PolicyId; 5] = [
        PolicyId::Static,
        PolicyId::Random,
        PolicyId::Renyi,
        PolicyId::CardvarSampling,
        PolicyId::CardvarPims,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyId::Static => "static",
            PolicyId::Random => "random",
            PolicyId::Renyi => "renyi",
            PolicyId::CardvarSampling => "cardvar-sampling",
            PolicyId::CardvarPims => "cardvar-pims",
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyId::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown policy '{s}' (expected one of: {})",
                    PolicyId::ALL.map(|p| p.as_str()).join(", ")
                )
            })
    }
}

/// Sensor parameters as they appear in scenario files; the surveillance area
/// is shared with the rest of the scenario and attached when the model is
/// built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub kind: SensorKind,
    pub detection_radius: f64,
    pub detection_falloff: f64,
    pub max_detection: f64,
    pub range_noise_floor: f64,
    pub range_noise_growth: f64,
    pub bearing_noise_floor: f64,
    pub bearing_noise_growth: f64,
    pub clutter_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub period: f64,
    pub noise_scale: f64,
    pub survival_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub radial_step: f64,
    pub radial_count: u32,
    pub angular_count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub grid: GridParams,
    /// Rényi divergence order; must be nonnegative and not one.
    pub renyi_alpha: f64,
    /// Multi-object state samples drawn per decision.
    pub state_samples: usize,
    /// Hypothesized measurement sets per command (sampling policy only).
    pub measurement_samples: usize,
}

/// A complete, serializable experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub area: Rect,
    pub horizon: usize,
    pub targets: Vec<TargetScript>,
    pub sensor: SensorParams,
    pub motion: MotionParams,
    pub birth: BirthModel,
    pub filter: FilterConfig,
    pub control: ControlParams,
    pub ospa: OspaParams,
    pub sensor_start: SensorPose,
    pub policy: PolicyId,
    pub seed: u64,
    pub runs: usize,
}

impl ScenarioConfig {
    /// Five targets loosely clustered mid-area observed by a mobile
    /// range-bearing sensor; one target disappears at tick 19 and a new one
    /// appears away from the cluster at tick 27.
    pub fn default_range_bearing() -> Self {
        let area = Rect {
            x_min: 0.0,
            x_max: 1000.0,
            y_min: 0.0,
            y_max: 1000.0,
        };
        let targets = vec![
            TargetScript {
                initial: StateVector::new(430.0, 520.0, 4.0, -3.0),
                birth_tick: 0,
                death_tick: None,
            },
            TargetScript {
                initial: StateVector::new(560.0, 470.0, -5.0, 4.0),
                birth_tick: 0,
                death_tick: None,
            },
            TargetScript {
                initial: StateVector::new(480.0, 430.0, 6.0, 5.0),
                birth_tick: 0,
                death_tick: Some(19),
            },
            TargetScript {
                initial: StateVector::new(520.0, 570.0, -4.0, -5.0),
                birth_tick: 0,
                death_tick: None,
            },
            TargetScript {
                initial: StateVector::new(570.0, 540.0, 3.0, 6.0),
                birth_tick: 0,
                death_tick: None,
            },
            TargetScript {
                initial: StateVector::new(150.0, 800.0, 8.0, -5.0),
                birth_tick: 27,
                death_tick: None,
            },
        ];
        let birth = BirthModel {
            components: [
                (250.0, 250.0),
                (750.0, 250.0),
                (250.0, 750.0),
                (750.0, 750.0),
            ]
            .iter()
            .map(|&(x, y)| crate::filter::BirthComponent {
                existence: 0.03,
                particles: 300,
                mean: StateVector::new(x, y, 0.0, 0.0),
                std_dev: StateVector::new(200.0, 200.0, 7.0, 7.0),
            })
            .collect(),
        };
        Self {
            area,
            horizon: 40,
            targets,
            sensor: SensorParams {
                kind: SensorKind::RangeBearing,
                detection_radius: 300.0,
                detection_falloff: 5e-4,
                max_detection: 0.99,
                range_noise_floor: 1.0,
                range_noise_growth: 5e-5,
                bearing_noise_floor: std::f64::consts::PI / 180.0,
                bearing_noise_growth: 1e-5,
                clutter_rate: 5.0,
            },
            motion: MotionParams {
                period: 1.0,
                noise_scale: 27.0,
                survival_probability: 0.99,
            },
            birth,
            filter: FilterConfig::default(),
            control: ControlParams {
                grid: GridParams {
                    radial_step: 50.0,
                    radial_count: 2,
                    angular_count: 8,
                },
                renyi_alpha: 0.5,
                state_samples: 1000,
                measurement_samples: 25,
            },
            ospa: OspaParams::default(),
            sensor_start: SensorPose::new(100.0, 100.0),
            policy: PolicyId::Renyi,
            seed: 2024,
            runs: 20,
        }
    }

    /// Range-only variant: the same five-target cluster with no births or
    /// deaths, observed through scalar range returns.
    pub fn default_range_only() -> Self {
        let mut config = Self::default_range_bearing();
        config.sensor.kind = SensorKind::RangeOnly;
        config.targets.retain(|t| t.birth_tick == 0);
        for t in &mut config.targets {
            t.death_tick = None;
        }
        config
    }

    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let config: ScenarioConfig = serde_json::from_str(&text)?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::InvalidScenario(msg));
        if self.horizon == 0 {
            return fail("horizon must be at least one tick".into());
        }
        if self.runs == 0 {
            return fail("run count must be at least one".into());
        }
        if self.area.x_min >= self.area.x_max || self.area.y_min >= self.area.y_max {
            return fail("surveillance area is empty".into());
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !t.initial.is_finite() {
                return fail(format!("target {i} has a non-finite initial state"));
            }
            if t.birth_tick >= self.horizon {
                return fail(format!(
                    "target {i} is born at tick {} but the horizon is {}",
                    t.birth_tick, self.horizon
                ));
            }
            if let Some(d) = t.death_tick {
                if d <= t.birth_tick {
                    return fail(format!("target {i} dies at tick {d} before its birth"));
                }
            }
            if !self.area.contains(t.initial.x, t.initial.y) {
                return fail(format!("target {i} starts outside the surveillance area"));
            }
        }
        let s = &self.sensor;
        if s.detection_radius <= 0.0
            || s.detection_falloff < 0.0
            || s.range_noise_floor <= 0.0
            || s.range_noise_growth < 0.0
            || s.bearing_noise_floor <= 0.0
            || s.bearing_noise_growth < 0.0
            || s.clutter_rate < 0.0
        {
            return fail("sensor rates and noise floors must be positive".into());
        }
        if !(s.max_detection > 0.0 && s.max_detection <= 1.0) {
            return fail(format!(
                "max detection probability {} is not in (0, 1]",
                s.max_detection
            ));
        }
        if self.motion.period <= 0.0 || self.motion.noise_scale < 0.0 {
            return fail("motion period must be positive and noise scale nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.motion.survival_probability) {
            return fail("survival probability must be in [0, 1]".into());
        }
        for (i, b) in self.birth.components.iter().enumerate() {
            if !(0.0..=1.0).contains(&b.existence) {
                return fail(format!("birth component {i} existence is not in [0, 1]"));
            }
            if b.particles == 0 {
                return fail(format!("birth component {i} has no particles"));
            }
        }
        if self.filter.particles_per_component == 0 {
            return fail("filter needs at least one particle per component".into());
        }
        if self.filter.max_components == 0 {
            return fail("filter needs a positive component cap".into());
        }
        if !(0.0 < self.filter.prune_threshold && self.filter.prune_threshold < 1.0) {
            return fail("prune threshold must be in (0, 1)".into());
        }
        let c = &self.control;
        if c.grid.radial_step <= 0.0 || c.grid.radial_count == 0 || c.grid.angular_count == 0 {
            return fail("control grid needs positive step and counts".into());
        }
        if c.renyi_alpha < 0.0 || c.renyi_alpha == 1.0 {
            return fail("the divergence order must be nonnegative and not one".into());
        }
        if c.state_samples == 0 || c.measurement_samples == 0 {
            return fail("control sample counts must be positive".into());
        }
        if self.ospa.order < 1.0 || self.ospa.cutoff <= 0.0 {
            return fail("OSPA order must be >= 1 and the cutoff positive".into());
        }
        if !self
            .area
            .contains(self.sensor_start.sx, self.sensor_start.sy)
        {
            return fail("sensor start pose is outside the surveillance area".into());
        }
        Ok(())
    }

    pub fn build_sensor(&self) -> SensorModel {
        SensorModel {
            kind: self.sensor.kind,
            detection_radius: self.sensor.detection_radius,
            detection_falloff: self.sensor.detection_falloff,
            max_detection: self.sensor.max_detection,
            range_noise_floor: self.sensor.range_noise_floor,
            range_noise_growth: self.sensor.range_noise_growth,
            bearing_noise_floor: self.sensor.bearing_noise_floor,
            bearing_noise_growth: self.sensor.bearing_noise_growth,
            clutter_rate: self.sensor.clutter_rate,
            area: self.area,
        }
    }

    pub fn build_motion(&self) -> Result<MotionModel, HarnessError> {
        Ok(MotionModel::constant_velocity(
            self.motion.period,
            self.motion.noise_scale,
            self.motion.survival_probability,
        )?)
    }

    pub fn build_grid(&self) -> ControlGrid {
        ControlGrid {
            radial_step: self.control.grid.radial_step,
            radial_count: self.control.grid.radial_count,
            angular_count: self.control.grid.angular_count,
            area: self.area,
        }
    }

    pub fn build_filter(&self) -> Result<CbMemberFilter, HarnessError> {
        Ok(CbMemberFilter::new(
            self.build_motion()?,
            self.birth.clone(),
            self.filter.clone(),
        ))
    }
}

/// Everything a trial needs, built once per experiment.
struct BuiltScenario {
    sensor: SensorModel,
    filter: CbMemberFilter,
    grid: ControlGrid,
    truth: GroundTruth,
    ospa: OspaParams,
}

impl BuiltScenario {
    fn build(config: &ScenarioConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let motion = config.build_motion()?;
        let truth = scripted_truth(&config.targets, config.horizon, &motion)?;
        Ok(Self {
            sensor: config.build_sensor(),
            filter: config.build_filter()?,
            grid: config.build_grid(),
            truth,
            ospa: config.ospa,
        })
    }
}

/// Per-tick record of one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TickRecord {
    pub tick: usize,
    pub sensor: SensorPose,
    pub command_radial: u32,
    pub command_angular: u32,
    pub n_map: usize,
    pub n_eap: f64,
    pub var_map: f64,
    pub ospa: f64,
    pub ospa_localization: f64,
    pub ospa_cardinality: f64,
    pub true_count: usize,
    /// Wall-clock spent in the control-selection call. Reported in the
    /// aggregate summary; deliberately excluded from the CSV so that equal
    /// seeds produce byte-identical files.
    pub decision_seconds: f64,
}

/// Complete log of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub policy: PolicyId,
    pub trial: u64,
    pub records: Vec<TickRecord>,
}

impl RunLog {
    pub const CSV_HEADER: &'static str = "tick,sensor_x,sensor_y,command_radial,command_angular,\
         n_map,n_eap,var_map,ospa,ospa_localization,ospa_cardinality,true_count";

    /// Deterministic CSV rendering: one row per tick, shortest-roundtrip
    /// float formatting, no timing columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.tick,
                r.sensor.sx,
                r.sensor.sy,
                r.command_radial,
                r.command_angular,
                r.n_map,
                r.n_eap,
                r.var_map,
                r.ospa,
                r.ospa_localization,
                r.ospa_cardinality,
                r.true_count,
            ));
        }
        out
    }

    pub fn mean_decision_seconds(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.decision_seconds).sum::<f64>() / self.records.len() as f64
    }
}

fn select_command(
    policy: PolicyId,
    built: &BuiltScenario,
    predicted: &crate::filter::PredictedDensity,
    pose: SensorPose,
    control: &ControlParams,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<ControlCommand, HarnessError> {
    use rand::Rng;
    let command = match policy {
        PolicyId::Static => admissible_commands(&built.grid, pose)[0],
        PolicyId::Random => {
            let commands = admissible_commands(&built.grid, pose);
            let in_area: Vec<ControlCommand> = commands.into_iter().filter(|c| c.in_area).collect();
            in_area[rng.gen_range(0..in_area.len())]
        }
        PolicyId::Renyi => select_control_renyi(
            predicted,
            &built.grid,
            &built.sensor,
            &RenyiConfig {
                alpha: control.renyi_alpha,
                state_samples: control.state_samples,
            },
            pose,
            rng,
        )?,
        PolicyId::CardvarSampling => select_control_cardvar_sampling(
            predicted,
            &built.grid,
            &built.sensor,
            &built.filter,
            &CardVarConfig {
                state_samples: control.state_samples,
                measurement_samples: control.measurement_samples,
            },
            pose,
            rng,
        )?,
        PolicyId::CardvarPims => {
            select_control_cardvar_pims(predicted, &built.grid, &built.sensor, &built.filter, pose)?
        }
    };
    Ok(command)
}

fn run_trial_inner(
    config: &ScenarioConfig,
    built: &BuiltScenario,
    policy: PolicyId,
    seed: u64,
    trial: u64,
) -> Result<RunLog, HarnessError> {
    let mut posterior = MultiBernoulliDensity::empty();
    let mut pose = config.sensor_start;
    let mut records = Vec::with_capacity(config.horizon);

    for tick in 0..config.horizon {
        let mut filter_rng = derive_rng(seed, &[trial, tick as u64, STREAM_FILTER]);
        let mut control_rng = derive_rng(seed, &[trial, tick as u64, STREAM_CONTROL]);
        let mut measurement_rng = derive_rng(seed, &[trial, tick as u64, STREAM_MEASUREMENT]);

        let predicted = built.filter.predict(&posterior, &mut filter_rng);

        let started = Instant::now();
        let command = select_command(
            policy,
            built,
            &predicted,
            pose,
            &config.control,
            &mut control_rng,
        )?;
        let decision_seconds = started.elapsed().as_secs_f64();
        pose = command.pose;

        let truth_states = &built.truth.states_per_tick[tick];
        let scan = built
            .sensor
            .generate_measurements(truth_states, pose, &mut measurement_rng);

        posterior = built
            .filter
            .update(&predicted, &scan, &built.sensor, pose, &mut filter_rng)?;

        let stats = cardinality_stats(&posterior.existences())
            .expect("posterior existences valid by construction");
        let (_, estimates) = extract_map_estimate(&posterior);
        let estimated_points: Vec<[f64; 2]> = estimates.iter().map(|s| s.position()).collect();
        let truth_points: Vec<[f64; 2]> = truth_states.iter().map(|s| s.position()).collect();
        let score = ospa(&estimated_points, &truth_points, &built.ospa)?;

        records.push(TickRecord {
            tick,
            sensor: pose,
            command_radial: command.radial_index,
            command_angular: command.angular_index,
            n_map: stats.n_map,
            n_eap: stats.n_eap,
            var_map: stats.var_map,
            ospa: score.total,
            ospa_localization: score.localization,
            ospa_cardinality: score.cardinality,
            true_count: truth_states.len(),
            decision_seconds,
        });
    }
    Ok(RunLog {
        policy,
        trial,
        records,
    })
}

/// Runs one closed-loop trial; fully deterministic given `(config, policy,
/// seed, trial)`.
pub fn run_trial(
    config: &ScenarioConfig,
    policy: PolicyId,
    seed: u64,
    trial: u64,
) -> Result<RunLog, HarnessError> {
    let built = BuiltScenario::build(config)?;
    run_trial_inner(config, &built, policy, seed, trial)
}

/// Aggregated result of one policy over an experiment.
#[derive(Clone, Debug, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyId,
    pub runs: usize,
    pub mean_ospa_per_tick: Vec<f64>,
    pub stddev_ospa_per_tick: Vec<f64>,
    pub mean_decision_seconds: f64,
}

impl PolicySummary {
    /// Mean OSPA over the final `ticks` ticks, averaged across runs.
    pub fn mean_ospa_over_final(&self, ticks: usize) -> f64 {
        let n = self.mean_ospa_per_tick.len();
        let take = ticks.min(n);
        if take == 0 {
            return 0.0;
        }
        self.mean_ospa_per_tick[n - take..].iter().sum::<f64>() / take as f64
    }
}

fn summarize(policy: PolicyId, horizon: usize, logs: &[RunLog]) -> PolicySummary {
    let runs = logs.len();
    let mut mean = vec![0.0; horizon];
    let mut stddev = vec![0.0; horizon];
    for tick in 0..horizon {
        let values: Vec<f64> = logs.iter().map(|l| l.records[tick].ospa).collect();
        let m = values.iter().sum::<f64>() / runs as f64;
        mean[tick] = m;
        if runs > 1 {
            let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (runs - 1) as f64;
            stddev[tick] = var.sqrt();
        }
    }
    let mean_decision_seconds =
        logs.iter().map(|l| l.mean_decision_seconds()).sum::<f64>() / runs as f64;
    PolicySummary {
        policy,
        runs,
        mean_ospa_per_tick: mean,
        stddev_ospa_per_tick: stddev,
        mean_decision_seconds,
    }
}

/// Runs `runs` independent trials of one policy in parallel (derived seeds
/// keep the outcome identical to a serial run) and aggregates per-tick OSPA.
pub fn run_experiment(
    config: &ScenarioConfig,
    policy: PolicyId,
    runs: usize,
    seed: u64,
) -> Result<(PolicySummary, Vec<RunLog>), HarnessError> {
    let built = BuiltScenario::build(config)?;
    let results: Vec<Result<RunLog, HarnessError>> = (0..runs as u64)
        .into_par_iter()
        .map(|trial| run_trial_inner(config, &built, policy, seed, trial))
        .collect();
    let mut logs = Vec::with_capacity(runs);
    for (trial, result) in results.into_iter().enumerate() {
        match result {
            Ok(log) => logs.push(log),
            Err(source) => {
                return Err(HarnessError::TrialFailed {
                    trial: trial as u64,
                    source: Box::new(source),
                })
            }
        }
    }
    Ok((summarize(policy, config.horizon, &logs), logs))
}

/// Aggregate summary written next to the per-trial CSV files.
#[derive(Serialize)]
pub struct ExperimentSummary<'a> {
    pub scenario: &'a ScenarioConfig,
    pub seed: u64,
    pub runs: usize,
    pub policies: Vec<PolicySummary>,
}

/// Writes `out_dir/<policy>/trial_NNN.csv` for every log plus a single
/// `out_dir/summary.json`.
pub fn write_outputs(
    out_dir: &Path,
    config: &ScenarioConfig,
    seed: u64,
    runs: usize,
    results: &[(PolicySummary, Vec<RunLog>)],
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    for (_, logs) in results {
        for log in logs {
            let dir = out_dir.join(log.policy.as_str());
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("trial_{:03}.csv", log.trial));
            std::fs::write(path, log.to_csv())?;
        }
    }
    let summary = ExperimentSummary {
        scenario: config,
        seed,
        runs,
        policies: results.iter().map(|(s, _)| s.clone()).collect(),
    };
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out_dir.join("summary.json"), json + "\n")?;
    Ok(())
}

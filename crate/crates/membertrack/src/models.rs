//! Single-object motion and sensor models plus scenario truth generation.
//!
//! The motion model is a near-constant-velocity linear-Gaussian transition.
//! The sensor is a mobile range-bearing (or range-only) device whose
//! detection probability and measurement noise both degrade with distance,
//! observing through Poisson clutter that is uniform over the measurement
//! space.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rfs::StateVector;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("process noise covariance is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("measurement kind does not match the sensor kind")]
    KindMismatch,
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

/// Axis-aligned surveillance rectangle (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn vertices(&self) -> [[f64; 2]; 4] {
        [
            [self.x_min, self.y_min],
            [self.x_min, self.y_max],
            [self.x_max, self.y_min],
            [self.x_max, self.y_max],
        ]
    }
}

/// Sensor position (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub sx: f64,
    pub sy: f64,
}

impl SensorPose {
    pub fn new(sx: f64, sy: f64) -> Self {
        Self { sx, sy }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        ((x - self.sx).powi(2) + (y - self.sy).powi(2)).sqrt()
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

// ---------------------------------------------------------------------------
// Motion
// ---------------------------------------------------------------------------

/// Linear-Gaussian transition `x' = F x + w`, `w ~ N(0, Q)`, with a constant
/// survival probability.
#[derive(Clone, Debug)]
pub struct MotionModel {
    period: f64,
    transition: Matrix4<f64>,
    process_noise: Matrix4<f64>,
    survival: f64,
    /// Square root factor `L` with `L Lᵀ = Q`, from the symmetric
    /// eigendecomposition so that semidefinite noise (including `Q = 0`) is
    /// accepted.
    noise_factor: Matrix4<f64>,
}

impl MotionModel {
    pub fn new(
        transition: Matrix4<f64>,
        process_noise: Matrix4<f64>,
        survival: f64,
        period: f64,
    ) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&survival) {
            return Err(ModelError::InvalidParameter(format!(
                "survival probability {survival} is not in [0, 1]"
            )));
        }
        let noise_factor = psd_sqrt(&process_noise)?;
        Ok(Self {
            period,
            transition,
            process_noise,
            survival,
            noise_factor,
        })
    }

    /// Near-constant-velocity model over one period, with the process noise
    /// scaled by `noise_scale`.
    pub fn constant_velocity(
        period: f64,
        noise_scale: f64,
        survival: f64,
    ) -> Result<Self, ModelError> {
        if period <= 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "period {period} must be positive"
            )));
        }
        if noise_scale < 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "noise scale {noise_scale} must be nonnegative"
            )));
        }
        let t = period;
        #[rustfmt::skip]
        let transition = Matrix4::new(
            1.0, 0.0, t,   0.0,
            0.0, 1.0, 0.0, t,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let a = t.powi(3);
        let b = t.powi(2) / 54.0;
        let c = t / 81.0;
        #[rustfmt::skip]
        let process_noise = noise_scale * Matrix4::new(
            a,   0.0, b,   0.0,
            0.0, a,   0.0, b,
            b,   0.0, c,   0.0,
            0.0, b,   0.0, c,
        );
        Self::new(transition, process_noise, survival, period)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn transition_matrix(&self) -> &Matrix4<f64> {
        &self.transition
    }

    pub fn process_noise(&self) -> &Matrix4<f64> {
        &self.process_noise
    }

    pub fn survival_probability(&self, _state: &StateVector) -> f64 {
        self.survival
    }

    /// Noise-free transition, used for scripted ground truth.
    pub fn deterministic_step(&self, x: &StateVector) -> StateVector {
        from_vector(&(self.transition * to_vector(x)))
    }

    /// Draws `x' = F x + L z` with `z` standard normal. Four normal variates
    /// are consumed per call regardless of the noise rank, so derived RNG
    /// streams stay aligned.
    pub fn transition_sample<R: Rng>(&self, x: &StateVector, rng: &mut R) -> StateVector {
        let z = Vector4::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        from_vector(&(self.transition * to_vector(x) + self.noise_factor * z))
    }
}

fn to_vector(x: &StateVector) -> Vector4<f64> {
    Vector4::new(x.x, x.y, x.vx, x.vy)
}

fn from_vector(v: &Vector4<f64>) -> StateVector {
    StateVector::new(v[0], v[1], v[2], v[3])
}

fn psd_sqrt(m: &Matrix4<f64>) -> Result<Matrix4<f64>, ModelError> {
    let sym = nalgebra::SymmetricEigen::new(*m);
    let max_abs = sym.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-9 * max_abs.max(1.0);
    let mut factor = sym.eigenvectors;
    for (i, &ev) in sym.eigenvalues.iter().enumerate() {
        if ev < -tol {
            return Err(ModelError::NotPositiveSemidefinite);
        }
        let s = ev.max(0.0).sqrt();
        factor.column_mut(i).scale_mut(s);
    }
    Ok(factor)
}

// ---------------------------------------------------------------------------
// Sensor
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorKind {
    RangeBearing,
    RangeOnly,
}

/// A single sensor return.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Measurement {
    RangeBearing { range: f64, bearing: f64 },
    RangeOnly { range: f64 },
}

pub type MeasurementSet = Vec<Measurement>;

/// Mobile sensor with distance-degraded detection and noise, plus uniform
/// Poisson clutter over the measurement space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub kind: SensorKind,
    /// Radius of full-rate detection (m).
    pub detection_radius: f64,
    /// Linear decay of detection probability per metre beyond the radius.
    pub detection_falloff: f64,
    /// Detection probability inside the full-rate radius.
    pub max_detection: f64,
    /// Range noise floor (m).
    pub range_noise_floor: f64,
    /// Range noise growth per squared metre of distance.
    pub range_noise_growth: f64,
    /// Bearing noise floor (rad).
    pub bearing_noise_floor: f64,
    /// Bearing noise growth per metre of distance (rad/m).
    pub bearing_noise_growth: f64,
    /// Expected clutter returns per scan.
    pub clutter_rate: f64,
    /// Surveillance bounds; clutter extends to the farthest vertex.
    pub area: Rect,
}

impl SensorModel {
    /// Probability of detecting an object at the position components of `x`
    /// from pose `s`: full rate inside the detection radius, then a linear
    /// falloff floored at zero.
    pub fn detection_probability(&self, x: &StateVector, s: SensorPose) -> f64 {
        let d = s.distance_to(x.x, x.y);
        if d <= self.detection_radius {
            self.max_detection
        } else {
            (self.max_detection - (d - self.detection_radius) * self.detection_falloff).max(0.0)
        }
    }

    pub fn range_sigma(&self, distance: f64) -> f64 {
        self.range_noise_floor + self.range_noise_growth * distance * distance
    }

    pub fn bearing_sigma(&self, distance: f64) -> f64 {
        self.bearing_noise_floor + self.bearing_noise_growth * distance
    }

    /// Single-object likelihood `g(z | x; s)`. Range and bearing errors are
    /// independent Gaussians; the bearing residual is wrapped into (-pi, pi].
    pub fn likelihood(
        &self,
        z: &Measurement,
        x: &StateVector,
        s: SensorPose,
    ) -> Result<f64, ModelError> {
        let d = s.distance_to(x.x, x.y);
        match (self.kind, z) {
            (SensorKind::RangeBearing, Measurement::RangeBearing { range, bearing }) => {
                let predicted_bearing = (x.y - s.sy).atan2(x.x - s.sx);
                let residual = wrap_angle(bearing - predicted_bearing);
                Ok(normal_pdf(*range, d, self.range_sigma(d))
                    * normal_pdf(residual, 0.0, self.bearing_sigma(d)))
            }
            (SensorKind::RangeOnly, Measurement::RangeOnly { range }) => {
                Ok(normal_pdf(*range, d, self.range_sigma(d)))
            }
            _ => Err(ModelError::KindMismatch),
        }
    }

    /// Noise-free return for an object at `x`: the likelihood mean.
    pub fn ideal_measurement(&self, x: &StateVector, s: SensorPose) -> Measurement {
        let d = s.distance_to(x.x, x.y);
        match self.kind {
            SensorKind::RangeBearing => Measurement::RangeBearing {
                range: d,
                bearing: (x.y - s.sy).atan2(x.x - s.sx),
            },
            SensorKind::RangeOnly => Measurement::RangeOnly { range: d },
        }
    }

    /// Farthest distance from the pose to a surveillance-area vertex; the
    /// upper end of the clutter range support.
    pub fn max_range(&self, s: SensorPose) -> f64 {
        self.area
            .vertices()
            .iter()
            .map(|v| s.distance_to(v[0], v[1]))
            .fold(0.0, f64::max)
    }

    /// Clutter spatial density `c(z)`: uniform over `[0, R_max] x [0, pi/2]`
    /// for range-bearing sensors and `[0, R_max]` for range-only.
    pub fn clutter_density(&self, z: &Measurement, s: SensorPose) -> f64 {
        let r_max = self.max_range(s);
        match (self.kind, z) {
            (SensorKind::RangeBearing, Measurement::RangeBearing { range, bearing })
                if (0.0..=r_max).contains(range) && (0.0..=PI / 2.0).contains(bearing) =>
            {
                1.0 / (r_max * (PI / 2.0))
            }
            (SensorKind::RangeOnly, Measurement::RangeOnly { range })
                if (0.0..=r_max).contains(range) =>
            {
                1.0 / r_max
            }
            _ => 0.0,
        }
    }

    /// Clutter intensity `kappa(z) = lambda * c(z)`.
    pub fn clutter_intensity(&self, z: &Measurement, s: SensorPose) -> f64 {
        self.clutter_rate * self.clutter_density(z, s)
    }

    /// Simulates one scan: each object is detected independently with its
    /// detection probability and contributes one noisy return; a Poisson
    /// number of clutter points is appended, uniform over the clutter
    /// support.
    pub fn generate_measurements<R: Rng>(
        &self,
        targets: &[StateVector],
        s: SensorPose,
        rng: &mut R,
    ) -> MeasurementSet {
        let mut out = Vec::new();
        for x in targets {
            let pd = self.detection_probability(x, s);
            if rng.gen::<f64>() < pd {
                let d = s.distance_to(x.x, x.y);
                match self.kind {
                    SensorKind::RangeBearing => {
                        let bearing = (x.y - s.sy).atan2(x.x - s.sx);
                        let nr: f64 = rng.sample(StandardNormal);
                        let nb: f64 = rng.sample(StandardNormal);
                        out.push(Measurement::RangeBearing {
                            range: (d + self.range_sigma(d) * nr).max(0.0),
                            bearing: wrap_angle(bearing + self.bearing_sigma(d) * nb),
                        });
                    }
                    SensorKind::RangeOnly => {
                        let nr: f64 = rng.sample(StandardNormal);
                        out.push(Measurement::RangeOnly {
                            range: (d + self.range_sigma(d) * nr).max(0.0),
                        });
                    }
                }
            }
        }
        let clutter_count = if self.clutter_rate > 0.0 {
            Poisson::new(self.clutter_rate)
                .expect("positive clutter rate")
                .sample(rng) as usize
        } else {
            0
        };
        let r_max = self.max_range(s);
        for _ in 0..clutter_count {
            match self.kind {
                SensorKind::RangeBearing => out.push(Measurement::RangeBearing {
                    range: rng.gen::<f64>() * r_max,
                    bearing: rng.gen::<f64>() * (PI / 2.0),
                }),
                SensorKind::RangeOnly => out.push(Measurement::RangeOnly {
                    range: rng.gen::<f64>() * r_max,
                }),
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// One scripted target: an initial state that starts moving at `birth_tick`
/// and disappears at `death_tick` (exclusive of the death tick itself).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScript {
    pub initial: StateVector,
    pub birth_tick: usize,
    pub death_tick: Option<usize>,
}

impl TargetScript {
    pub fn alive_at(&self, tick: usize) -> bool {
        tick >= self.birth_tick && self.death_tick.is_none_or(|d| tick < d)
    }
}

/// Per-tick sets of true target states.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub states_per_tick: Vec<Vec<StateVector>>,
}

impl GroundTruth {
    pub fn cardinality(&self, tick: usize) -> usize {
        self.states_per_tick[tick].len()
    }
}

/// Deterministic constant-velocity trajectories with scripted birth and death
/// ticks.
pub fn scripted_truth(
    scripts: &[TargetScript],
    horizon: usize,
    motion: &MotionModel,
) -> Result<GroundTruth, ModelError> {
    for (i, script) in scripts.iter().enumerate() {
        if script.birth_tick >= horizon {
            return Err(ModelError::InvalidParameter(format!(
                "target {i} is born at tick {} but the horizon is {horizon}",
                script.birth_tick
            )));
        }
        if let Some(death) = script.death_tick {
            if death <= script.birth_tick {
                return Err(ModelError::InvalidParameter(format!(
                    "target {i} dies at tick {death} before its birth at {}",
                    script.birth_tick
                )));
            }
        }
    }
    let mut states_per_tick = Vec::with_capacity(horizon);
    let mut current: Vec<StateVector> = scripts.iter().map(|s| s.initial).collect();
    for tick in 0..horizon {
        let mut alive = Vec::new();
        for (script, state) in scripts.iter().zip(current.iter_mut()) {
            if tick > script.birth_tick {
                *state = motion.deterministic_step(state);
            }
            if script.alive_at(tick) {
                alive.push(*state);
            }
        }
        states_per_tick.push(alive);
    }
    Ok(GroundTruth { states_per_tick })
}

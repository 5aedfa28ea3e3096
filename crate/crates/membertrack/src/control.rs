//! Admissible-action generation and myopic sensor-control policies.
//!
//! All policies score a one-step-ahead polar grid of candidate sensor poses
//! against the predicted density. The information-gain policy maximizes a
//! Rényi divergence evaluated on the predicted ideal measurement set; the
//! cardinality-variance policies minimize the expected MAP-cardinality
//! variance of the would-be posterior, either by sampling future measurement
//! sets or by a fast non-sampling truncation of the predicted density.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::filter::{CbMemberFilter, FilterError, PredictedDensity};
use crate::models::{MeasurementSet, ModelError, SensorModel, SensorPose};
use crate::rfs::{
    cardinality_stats, map_component_indices, sample_multi_object, BernoulliComponent,
    MultiBernoulliDensity, Particle, RfsError, StateVector,
};

/// Largest hypothesized state set accepted by the exact multi-object
/// likelihood.
pub const MAX_EXACT_TARGETS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("{count} hypothesized targets exceed the exact-enumeration cap of {cap}")]
    TooManyTargets { count: usize, cap: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rfs(#[from] RfsError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// One-step-ahead polar action grid around the current pose.
#[derive(Clone, Debug)]
pub struct ControlGrid {
    /// Radial step size (m).
    pub radial_step: f64,
    /// Number of radial steps.
    pub radial_count: u32,
    /// Number of angular sectors (the angular step is `2 pi / angular_count`).
    pub angular_count: u32,
    /// Surveillance bounds; poses outside are flagged.
    pub area: crate::models::Rect,
}

/// A candidate sensor displacement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlCommand {
    pub pose: SensorPose,
    pub radial_index: u32,
    pub angular_index: u32,
    pub in_area: bool,
}

/// Enumerates the distinct candidate poses: the stay-put command followed by
/// `radial_count * angular_count` displaced poses. Out-of-area poses are kept
/// but flagged so that evaluators can assign them an infinitely bad reward.
pub fn admissible_commands(grid: &ControlGrid, pose: SensorPose) -> Vec<ControlCommand> {
    let mut commands = Vec::with_capacity(1 + (grid.radial_count * grid.angular_count) as usize);
    commands.push(ControlCommand {
        pose,
        radial_index: 0,
        angular_index: 0,
        in_area: grid.area.contains(pose.sx, pose.sy),
    });
    let angular_step = 2.0 * PI / grid.angular_count as f64;
    for j in 1..=grid.radial_count {
        for l in 0..grid.angular_count {
            let angle = l as f64 * angular_step;
            let candidate = SensorPose::new(
                pose.sx + j as f64 * grid.radial_step * angle.cos(),
                pose.sy + j as f64 * grid.radial_step * angle.sin(),
            );
            commands.push(ControlCommand {
                pose: candidate,
                radial_index: j,
                angular_index: l,
                in_area: grid.area.contains(candidate.sx, candidate.sy),
            });
        }
    }
    commands
}

/// Noise-free returns for every hypothesized state, as seen from `pose` with
/// unit detection and zero clutter.
pub fn ideal_measurement_set(
    states: &[StateVector],
    sensor: &SensorModel,
    pose: SensorPose,
) -> MeasurementSet {
    states
        .iter()
        .map(|x| sensor.ideal_measurement(x, pose))
        .collect()
}

/// An equally weighted multi-object state hypothesis drawn from the predicted
/// density.
#[derive(Clone, Debug)]
pub struct MultiObjectSample {
    pub weight: f64,
    pub states: Vec<StateVector>,
}

/// Detection-and-clutter likelihood of observing the measurement set `z_set`
/// given the hypothesized state set `states`, marginalized exactly over all
/// target-to-measurement associations.
///
/// The state set is capped at [`MAX_EXACT_TARGETS`]; the association sum is
/// evaluated by dynamic programming over measurement subsets.
pub fn multi_object_likelihood(
    z_set: &MeasurementSet,
    states: &[StateVector],
    sensor: &SensorModel,
    pose: SensorPose,
) -> Result<f64, ControlError> {
    if states.len() > MAX_EXACT_TARGETS {
        return Err(ControlError::TooManyTargets {
            count: states.len(),
            cap: MAX_EXACT_TARGETS,
        });
    }
    Ok(log_multi_object_likelihood(z_set, states, sensor, pose)?.exp())
}

/// Log-space evaluation shared by the reward functions. No cap on the number
/// of states: the subset dynamic program is linear in the state count and
/// exponential only in the measurement count.
pub(crate) fn log_multi_object_likelihood(
    z_set: &MeasurementSet,
    states: &[StateVector],
    sensor: &SensorModel,
    pose: SensorPose,
) -> Result<f64, ModelError> {
    let m = z_set.len();
    let n = states.len();

    let mut log_scale = 0.0;
    let mut miss = Vec::with_capacity(n);
    let mut matched = Vec::with_capacity(n);
    for x in states {
        let pd = sensor.detection_probability(x, pose);
        let mut row = Vec::with_capacity(m);
        for z in z_set {
            row.push(pd * sensor.likelihood(z, x, pose)?);
        }
        let scale = row.iter().fold(1.0 - pd, |a, &b| a.max(b));
        if scale <= 0.0 {
            // this target can neither be missed nor matched: impossible scan
            return Ok(f64::NEG_INFINITY);
        }
        log_scale += scale.ln();
        miss.push((1.0 - pd) / scale);
        matched.push(row.into_iter().map(|v| v / scale).collect::<Vec<f64>>());
    }

    // assignments[s] sums, over all ways of matching the processed targets to
    // exactly the measurement subset `s`, the product of match and miss terms
    let size = 1usize << m;
    let mut assignments = vec![0.0f64; size];
    assignments[0] = 1.0;
    for i in 0..n {
        let mut next = vec![0.0f64; size];
        for s in 0..size {
            let base = assignments[s];
            if base == 0.0 {
                continue;
            }
            next[s] += base * miss[i];
            for (j, &value) in matched[i].iter().enumerate() {
                if s & (1 << j) == 0 {
                    next[s | (1 << j)] += base * value;
                }
            }
        }
        assignments = next;
    }

    let kappa: Vec<f64> = z_set
        .iter()
        .map(|z| sensor.clutter_intensity(z, pose))
        .collect();
    let mut total = 0.0;
    for (s, &weight) in assignments.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let mut term = weight;
        for (j, &k) in kappa.iter().enumerate() {
            if s & (1 << j) == 0 {
                term *= k;
            }
        }
        total += term;
    }
    if total <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-sensor.clutter_rate + log_scale + total.ln())
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let collected: Vec<f64> = terms.collect();
    let max = collected
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + collected.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Rényi divergence of order `alpha` between the would-be posterior under the
/// hypothesized measurement set and the predicted density, evaluated on the
/// weighted multi-object samples. Returns negative infinity when every sample
/// has zero likelihood.
pub fn renyi_reward(
    samples: &[MultiObjectSample],
    z_hat: &MeasurementSet,
    alpha: f64,
    sensor: &SensorModel,
    pose: SensorPose,
) -> Result<f64, ControlError> {
    let terms: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            log_multi_object_likelihood(z_hat, &s.states, sensor, pose)
                .map(|log_g| (s.weight.ln(), log_g))
        })
        .collect::<Result<_, _>>()?;

    let log_mean = log_sum_exp(terms.iter().map(|&(lw, lg)| lw + lg));
    if log_mean == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let log_alpha_mean =
        log_sum_exp(
            terms
                .iter()
                .map(|&(lw, lg)| if alpha == 0.0 { lw } else { lw + alpha * lg }),
        );
    Ok((log_alpha_mean - alpha * log_mean) / (alpha - 1.0))
}

/// Configuration for the divergence-maximizing policy.
#[derive(Clone, Copy, Debug)]
pub struct RenyiConfig {
    /// Divergence order; nonnegative and not one.
    pub alpha: f64,
    /// Multi-object state samples drawn from the predicted density.
    pub state_samples: usize,
}

/// Selects the in-area command maximizing the Rényi divergence against the
/// predicted ideal measurement set. Ties (including an empty MAP estimate)
/// resolve to the first command in grid order, the stay-put command.
pub fn select_control_renyi<R: Rng>(
    predicted: &PredictedDensity,
    grid: &ControlGrid,
    sensor: &SensorModel,
    cfg: &RenyiConfig,
    pose: SensorPose,
    rng: &mut R,
) -> Result<ControlCommand, ControlError> {
    let commands = admissible_commands(grid, pose);
    let sets = sample_multi_object(&predicted.density, cfg.state_samples, rng)?;
    let weight = 1.0 / sets.len() as f64;
    let samples: Vec<MultiObjectSample> = sets
        .into_iter()
        .map(|states| MultiObjectSample { weight, states })
        .collect();
    let (_, estimates) = crate::rfs::extract_map_estimate(&predicted.density);
    if estimates.is_empty() {
        return Ok(commands[0]);
    }

    let mut best: Option<(usize, f64)> = None;
    for (index, command) in commands.iter().enumerate() {
        if !command.in_area {
            continue;
        }
        let z_hat = ideal_measurement_set(&estimates, sensor, command.pose);
        let reward = renyi_reward(&samples, &z_hat, cfg.alpha, sensor, command.pose)?;
        if best.is_none_or(|(_, b)| reward > b) {
            best = Some((index, reward));
        }
    }
    Ok(commands[best.expect("stay-put is always in area").0])
}

/// Configuration for the measurement-sampling cardinality-variance policy.
#[derive(Clone, Copy, Debug)]
pub struct CardVarConfig {
    /// Multi-object state samples drawn from the predicted density.
    pub state_samples: usize,
    /// Hypothesized future measurement sets per command.
    pub measurement_samples: usize,
}

/// Selects the in-area command minimizing the expected MAP-cardinality
/// variance, the expectation over future measurement sets approximated by
/// sampling: for each command, hypothetical scans are generated from sampled
/// multi-object states through the full detection-and-clutter model and
/// pushed through the measurement update.
pub fn select_control_cardvar_sampling<R: Rng>(
    predicted: &PredictedDensity,
    grid: &ControlGrid,
    sensor: &SensorModel,
    filter: &CbMemberFilter,
    cfg: &CardVarConfig,
    pose: SensorPose,
    rng: &mut R,
) -> Result<ControlCommand, ControlError> {
    let commands = admissible_commands(grid, pose);
    let state_sets = sample_multi_object(&predicted.density, cfg.state_samples, rng)?;
    // one derived stream per command keeps the outcome independent of
    // command evaluation order
    let command_seeds: Vec<u64> = commands.iter().map(|_| rng.gen()).collect();

    let mut best: Option<(usize, f64)> = None;
    for (index, command) in commands.iter().enumerate() {
        if !command.in_area {
            continue;
        }
        let mut command_rng = ChaCha8Rng::seed_from_u64(command_seeds[index]);
        let mut sum = 0.0;
        for _ in 0..cfg.measurement_samples {
            let pick = command_rng.gen_range(0..state_sets.len());
            let z = sensor.generate_measurements(&state_sets[pick], command.pose, &mut command_rng);
            let existences = filter.update_existences(predicted, &z, sensor, command.pose)?;
            sum += cardinality_stats(&existences)
                .expect("existences valid by construction")
                .var_map;
        }
        let mean = sum / cfg.measurement_samples as f64;
        if best.is_none_or(|(_, b)| mean < b) {
            best = Some((index, mean));
        }
    }
    Ok(commands[best.expect("stay-put is always in area").0])
}

/// Non-sampling cardinality-variance policy: the predicted density is
/// truncated to its MAP-cardinality strongest components, each reduced to a
/// single particle at the component mean, and each command is scored by the
/// MAP-cardinality variance after updating with that command's ideal
/// measurement set. No random draws are involved.
pub fn select_control_cardvar_pims(
    predicted: &PredictedDensity,
    grid: &ControlGrid,
    sensor: &SensorModel,
    filter: &CbMemberFilter,
    pose: SensorPose,
) -> Result<ControlCommand, ControlError> {
    let commands = admissible_commands(grid, pose);
    let (n_map, indices) = map_component_indices(&predicted.density);
    if n_map == 0 {
        return Ok(commands[0]);
    }
    let truncated_components: Vec<BernoulliComponent> = indices
        .iter()
        .map(|&i| {
            let comp = &predicted.density.components[i];
            BernoulliComponent::new(
                comp.existence(),
                vec![Particle {
                    weight: 1.0,
                    state: comp.weighted_mean(),
                }],
            )
        })
        .collect();
    let estimates: Vec<StateVector> = truncated_components
        .iter()
        .map(|c| c.particles()[0].state)
        .collect();
    let truncated = PredictedDensity {
        density: MultiBernoulliDensity {
            components: truncated_components,
        },
    };

    let mut best: Option<(usize, f64)> = None;
    for (index, command) in commands.iter().enumerate() {
        if !command.in_area {
            continue;
        }
        let z_hat = ideal_measurement_set(&estimates, sensor, command.pose);
        let existences = filter.update_existences(&truncated, &z_hat, sensor, command.pose)?;
        let var = cardinality_stats(&existences)
            .expect("existences valid by construction")
            .var_map;
        if best.is_none_or(|(_, b)| var < b) {
            best = Some((index, var));
        }
    }
    Ok(commands[best.expect("stay-put is always in area").0])
}

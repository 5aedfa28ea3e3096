//! Particle multi-Bernoulli filter with cardinality-balanced measurement
//! updates.
//!
//! Each recursion step carries a multi-Bernoulli density through a survival
//! prediction (bootstrap proposal through the transition model, fixed birth
//! components appended) and a measurement update that produces one legacy
//! component per predicted component plus one measurement-driven component
//! per return. Components are resampled back to a fixed particle budget and
//! pruned by existence probability.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{MeasurementSet, ModelError, MotionModel, SensorModel, SensorPose};
use crate::rfs::{
    cardinality_stats, extract_map_estimate, BernoulliComponent, CardinalityStats,
    MultiBernoulliDensity, Particle, StateVector,
};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplingScheme {
    #[default]
    Systematic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Particle budget restored per component after every update.
    pub particles_per_component: usize,
    /// Hard cap on the number of components kept after an update.
    pub max_components: usize,
    /// Components with existence below this are dropped after an update.
    pub prune_threshold: f64,
    #[serde(default)]
    pub resampling: ResamplingScheme,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles_per_component: 300,
            max_components: 100,
            prune_threshold: 1e-3,
            resampling: ResamplingScheme::Systematic,
        }
    }
}

/// One fixed birth component: existence probability and a diagonal Gaussian
/// sampler for fresh particle clouds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirthComponent {
    pub existence: f64,
    pub particles: usize,
    pub mean: StateVector,
    pub std_dev: StateVector,
}

impl BirthComponent {
    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<Particle> {
        use rand_distr::StandardNormal;
        let weight = 1.0 / self.particles as f64;
        (0..self.particles)
            .map(|_| {
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                let nvx: f64 = rng.sample(StandardNormal);
                let nvy: f64 = rng.sample(StandardNormal);
                Particle {
                    weight,
                    state: StateVector::new(
                        self.mean.x + self.std_dev.x * nx,
                        self.mean.y + self.std_dev.y * ny,
                        self.mean.vx + self.std_dev.vx * nvx,
                        self.mean.vy + self.std_dev.vy * nvy,
                    ),
                }
            })
            .collect()
    }
}

/// Multi-Bernoulli birth density appended at every prediction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BirthModel {
    pub components: Vec<BirthComponent>,
}

/// A density tagged as predicted to the next tick (prior to the update).
#[derive(Clone, Debug)]
pub struct PredictedDensity {
    pub density: MultiBernoulliDensity,
}

/// Result of one full predict-update step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub posterior: MultiBernoulliDensity,
    pub stats: CardinalityStats,
    pub map_estimates: Vec<StateVector>,
}

/// The filter: motion model, birth density and bookkeeping configuration.
#[derive(Clone, Debug)]
pub struct CbMemberFilter {
    pub motion: MotionModel,
    pub birth: BirthModel,
    pub config: FilterConfig,
}

impl CbMemberFilter {
    pub fn new(motion: MotionModel, birth: BirthModel, config: FilterConfig) -> Self {
        Self {
            motion,
            birth,
            config,
        }
    }

    /// Survival prediction plus births. Each persisting component keeps its
    /// particle weights (bootstrap proposal) while its existence shrinks by
    /// the cloud's expected survival probability.
    pub fn predict<R: Rng>(
        &self,
        posterior: &MultiBernoulliDensity,
        rng: &mut R,
    ) -> PredictedDensity {
        let mut components = Vec::with_capacity(posterior.len() + self.birth.components.len());
        for comp in &posterior.components {
            let survival: f64 = comp
                .particles()
                .iter()
                .map(|p| p.weight * self.motion.survival_probability(&p.state))
                .sum();
            let particles = comp
                .particles()
                .iter()
                .map(|p| Particle {
                    weight: p.weight,
                    state: self.motion.transition_sample(&p.state, rng),
                })
                .collect();
            components.push(BernoulliComponent::new(
                comp.existence() * survival,
                particles,
            ));
        }
        for birth in &self.birth.components {
            components.push(BernoulliComponent::new(birth.existence, birth.sample(rng)));
        }
        PredictedDensity {
            density: MultiBernoulliDensity { components },
        }
    }

    /// Measurement update before resampling and pruning: the legacy
    /// components followed by one measurement-driven component per return.
    pub(crate) fn update_components(
        &self,
        predicted: &PredictedDensity,
        z_set: &MeasurementSet,
        sensor: &SensorModel,
        pose: SensorPose,
    ) -> Result<Vec<BernoulliComponent>, FilterError> {
        let comps = &predicted.density.components;
        let detection: Vec<Vec<f64>> = comps
            .iter()
            .map(|c| {
                c.particles()
                    .iter()
                    .map(|p| sensor.detection_probability(&p.state, pose))
                    .collect()
            })
            .collect();
        let detection_ip: Vec<f64> = comps
            .iter()
            .zip(&detection)
            .map(|(c, pd)| {
                c.particles()
                    .iter()
                    .zip(pd)
                    .map(|(p, &d)| p.weight * d)
                    .sum()
            })
            .collect();

        let mut out = Vec::with_capacity(comps.len() + z_set.len());

        for (i, comp) in comps.iter().enumerate() {
            let r_legacy = legacy_existence(comp.existence(), detection_ip[i]);
            let particles: Vec<Particle> = comp
                .particles()
                .iter()
                .zip(&detection[i])
                .map(|(p, &pd)| Particle {
                    weight: p.weight * (1.0 - pd),
                    state: p.state,
                })
                .collect();
            let mass: f64 = particles.iter().map(|p| p.weight).sum();
            if mass > 0.0 {
                out.push(BernoulliComponent::new(r_legacy, particles));
            } else {
                // every particle is detected with certainty; the legacy
                // hypothesis carries no mass and will be pruned
                out.push(BernoulliComponent::new(0.0, comp.particles().to_vec()));
            }
        }

        for z in z_set {
            let mut numerator = 0.0;
            // a positive particle mass below guarantees a positive
            // denominator, so a return outside the clutter support cannot
            // divide by zero
            let mut denominator = sensor.clutter_intensity(z, pose);
            let mut cloud: Vec<Particle> = Vec::new();
            for (i, comp) in comps.iter().enumerate() {
                let r = comp.existence();
                let ratio = r / (1.0 - r);
                let mut psi_ip = 0.0;
                for (p, &pd) in comp.particles().iter().zip(&detection[i]) {
                    let psi = sensor.likelihood(z, &p.state, pose)? * pd;
                    psi_ip += p.weight * psi;
                    cloud.push(Particle {
                        weight: p.weight * ratio * psi,
                        state: p.state,
                    });
                }
                let miss = 1.0 - r * detection_ip[i];
                numerator += r * (1.0 - r) * psi_ip / (miss * miss);
                denominator += r * psi_ip / miss;
            }
            let mass: f64 = cloud.iter().map(|p| p.weight).sum();
            if mass > 0.0 && mass.is_finite() {
                out.push(BernoulliComponent::new(numerator / denominator, cloud));
            }
            // a return with no particle support anywhere carries no existence
            // mass and is dropped
        }
        Ok(out)
    }

    /// Full update: measurement update, per-component resampling back to the
    /// particle budget, pruning and the component cap.
    pub fn update<R: Rng>(
        &self,
        predicted: &PredictedDensity,
        z_set: &MeasurementSet,
        sensor: &SensorModel,
        pose: SensorPose,
        rng: &mut R,
    ) -> Result<MultiBernoulliDensity, FilterError> {
        let updated = self.update_components(predicted, z_set, sensor, pose)?;
        let resampled: Vec<BernoulliComponent> = updated
            .into_iter()
            .map(|c| {
                let particles = match self.config.resampling {
                    ResamplingScheme::Systematic => {
                        systematic_resample(c.particles(), self.config.particles_per_component, rng)
                    }
                };
                BernoulliComponent::new(c.existence(), particles)
            })
            .collect();
        let existences: Vec<f64> = resampled.iter().map(|c| c.existence()).collect();
        let keep = surviving_indices(
            &existences,
            self.config.prune_threshold,
            self.config.max_components,
        );
        let mut keep_iter = keep.into_iter().peekable();
        let components = resampled
            .into_iter()
            .enumerate()
            .filter_map(|(i, c)| {
                if keep_iter.peek() == Some(&i) {
                    keep_iter.next();
                    Some(c)
                } else {
                    None
                }
            })
            .collect();
        Ok(MultiBernoulliDensity { components })
    }

    /// Posterior existence probabilities the full update would produce, with
    /// the same pruning and cap applied but without building any particle
    /// clouds. Used by reward evaluations that only need cardinality
    /// statistics.
    pub(crate) fn update_existences(
        &self,
        predicted: &PredictedDensity,
        z_set: &MeasurementSet,
        sensor: &SensorModel,
        pose: SensorPose,
    ) -> Result<Vec<f64>, FilterError> {
        let comps = &predicted.density.components;
        let detection: Vec<Vec<f64>> = comps
            .iter()
            .map(|c| {
                c.particles()
                    .iter()
                    .map(|p| sensor.detection_probability(&p.state, pose))
                    .collect()
            })
            .collect();
        let detection_ip: Vec<f64> = comps
            .iter()
            .zip(&detection)
            .map(|(c, pd)| {
                c.particles()
                    .iter()
                    .zip(pd)
                    .map(|(p, &d)| p.weight * d)
                    .sum()
            })
            .collect();

        let mut existences = Vec::with_capacity(comps.len() + z_set.len());
        for (i, comp) in comps.iter().enumerate() {
            let miss_mass: f64 = comp
                .particles()
                .iter()
                .zip(&detection[i])
                .map(|(p, &pd)| p.weight * (1.0 - pd))
                .sum();
            if miss_mass > 0.0 {
                existences.push(
                    legacy_existence(comp.existence(), detection_ip[i])
                        .clamp(0.0, crate::rfs::MAX_EXISTENCE),
                );
            } else {
                existences.push(0.0);
            }
        }
        for z in z_set {
            let mut numerator = 0.0;
            let mut denominator = sensor.clutter_intensity(z, pose);
            let mut mass = 0.0;
            for (i, comp) in comps.iter().enumerate() {
                let r = comp.existence();
                let ratio = r / (1.0 - r);
                let mut psi_ip = 0.0;
                for (p, &pd) in comp.particles().iter().zip(&detection[i]) {
                    let psi = sensor.likelihood(z, &p.state, pose)? * pd;
                    psi_ip += p.weight * psi;
                    mass += p.weight * ratio * psi;
                }
                let miss = 1.0 - r * detection_ip[i];
                numerator += r * (1.0 - r) * psi_ip / (miss * miss);
                denominator += r * psi_ip / miss;
            }
            if mass > 0.0 && mass.is_finite() {
                existences.push((numerator / denominator).clamp(0.0, crate::rfs::MAX_EXISTENCE));
            }
        }

        let keep = surviving_indices(
            &existences,
            self.config.prune_threshold,
            self.config.max_components,
        );
        Ok(keep.into_iter().map(|i| existences[i]).collect())
    }

    /// Predict-update convenience step returning the new posterior together
    /// with its cardinality statistics and MAP state estimates.
    pub fn step<R: Rng>(
        &self,
        posterior: &MultiBernoulliDensity,
        z_set: &MeasurementSet,
        sensor: &SensorModel,
        pose: SensorPose,
        rng: &mut R,
    ) -> Result<StepOutcome, FilterError> {
        let predicted = self.predict(posterior, rng);
        let posterior = self.update(&predicted, z_set, sensor, pose, rng)?;
        let stats = cardinality_stats(&posterior.existences())
            .expect("posterior existences are valid by construction");
        let (_, map_estimates) = extract_map_estimate(&posterior);
        Ok(StepOutcome {
            posterior,
            stats,
            map_estimates,
        })
    }
}

/// Existence of a component that survives a scan undetected.
fn legacy_existence(existence: f64, detection_ip: f64) -> f64 {
    existence * (1.0 - detection_ip) / (1.0 - existence * detection_ip)
}

/// Indices that survive pruning at `r_min` and the component cap, keeping the
/// highest existence probabilities; returned in original order.
fn surviving_indices(existences: &[f64], r_min: f64, max_components: usize) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..existences.len())
        .filter(|&i| existences[i] >= r_min)
        .collect();
    if keep.len() > max_components {
        keep.sort_by(|&a, &b| existences[b].total_cmp(&existences[a]).then(a.cmp(&b)));
        keep.truncate(max_components);
        keep.sort_unstable();
    }
    keep
}

/// Systematic resampling to `target` equally weighted particles.
fn systematic_resample<R: Rng>(
    particles: &[Particle],
    target: usize,
    rng: &mut R,
) -> Vec<Particle> {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let offset: f64 = rng.gen();
    let weight = 1.0 / target as f64;
    let mut out = Vec::with_capacity(target);
    let mut cum = particles[0].weight;
    let mut idx = 0;
    for k in 0..target {
        let u = (k as f64 + offset) / target as f64 * total;
        while u > cum && idx + 1 < particles.len() {
            idx += 1;
            cum += particles[idx].weight;
        }
        out.push(Particle {
            weight,
            state: particles[idx].state,
        });
    }
    out
}

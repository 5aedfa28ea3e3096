//! Random-finite-set value types and exact multi-Bernoulli cardinality
//! statistics.
//!
//! A multi-Bernoulli density is a list of independent Bernoulli components,
//! each carrying an existence probability and a weighted particle cloud. The
//! cardinality distribution of such a density is a Poisson-binomial law and is
//! computed exactly here; both the filter and the cardinality-variance control
//! objectives are built on these statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Existence probabilities are clamped strictly below one so that the
/// `r / (1 - r)` mixture weights appearing in the measurement update stay
/// finite.
pub const MAX_EXISTENCE: f64 = 1.0 - 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RfsError {
    #[error("existence probability {0} is not in [0, 1]")]
    InvalidExistence(f64),
    #[error("sample count must be positive")]
    ZeroSampleCount,
}

/// Planar constant-velocity single-object state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    /// Position east (m).
    pub x: f64,
    /// Position north (m).
    pub y: f64,
    /// Velocity east (m/s).
    pub vx: f64,
    /// Velocity north (m/s).
    pub vy: f64,
}

impl StateVector {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

/// A weighted state hypothesis inside one Bernoulli component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub weight: f64,
    pub state: StateVector,
}

/// One hypothesized track: existence probability plus a normalized particle
/// cloud for the spatial density conditional on existence.
#[derive(Clone, Debug)]
pub struct BernoulliComponent {
    existence: f64,
    particles: Vec<Particle>,
}

impl BernoulliComponent {
    /// Builds a component, clamping the existence probability into
    /// `[0, MAX_EXISTENCE]` and normalizing particle weights to sum to one.
    ///
    /// Panics if the existence probability is not finite, the cloud is
    /// empty, or its weights do not have a positive finite sum; all indicate
    /// a construction bug upstream.
    pub fn new(existence: f64, mut particles: Vec<Particle>) -> Self {
        assert!(
            existence.is_finite(),
            "existence probability must be finite, got {existence}"
        );
        assert!(
            !particles.is_empty(),
            "a Bernoulli component needs at least one particle"
        );
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        assert!(
            total.is_finite() && total > 0.0,
            "particle weights must have a positive finite sum, got {total}"
        );
        // already-normalized clouds keep their exact weights
        if (total - 1.0).abs() > 1e-12 {
            for p in &mut particles {
                p.weight /= total;
            }
        }
        Self {
            existence: existence.clamp(0.0, MAX_EXISTENCE),
            particles,
        }
    }

    pub fn existence(&self) -> f64 {
        self.existence
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Weighted particle mean, the point estimate reported for this track.
    pub fn weighted_mean(&self) -> StateVector {
        let mut m = StateVector::new(0.0, 0.0, 0.0, 0.0);
        for p in &self.particles {
            m.x += p.weight * p.state.x;
            m.y += p.weight * p.state.y;
            m.vx += p.weight * p.state.vx;
            m.vy += p.weight * p.state.vy;
        }
        m
    }

    fn cumulative_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.particles
            .iter()
            .map(|p| {
                acc += p.weight;
                acc
            })
            .collect()
    }
}

/// An ordered collection of Bernoulli components; the filter's posterior
/// approximation. May be empty.
#[derive(Clone, Debug, Default)]
pub struct MultiBernoulliDensity {
    pub components: Vec<BernoulliComponent>,
}

impl MultiBernoulliDensity {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn existences(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.existence).collect()
    }
}

/// Cardinality distribution of a multi-Bernoulli density together with its
/// expected-a-posteriori and maximum-a-posteriori summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct CardinalityStats {
    /// `pmf[n]` is the probability that exactly `n` tracks exist.
    pub pmf: Vec<f64>,
    pub n_eap: f64,
    pub var_eap: f64,
    pub n_map: usize,
    pub var_map: f64,
}

/// Probability mass function of the number of successes among independent
/// Bernoulli trials with the given success probabilities.
///
/// Computed by convolving the two-point laws one trial at a time, O(M²).
pub fn cardinality_pmf(existences: &[f64]) -> Result<Vec<f64>, RfsError> {
    for &r in existences {
        if !r.is_finite() || !(0.0..=1.0).contains(&r) {
            return Err(RfsError::InvalidExistence(r));
        }
    }
    let mut pmf = Vec::with_capacity(existences.len() + 1);
    pmf.push(1.0);
    for &r in existences {
        pmf.push(0.0);
        for n in (1..pmf.len()).rev() {
            pmf[n] = pmf[n] * (1.0 - r) + pmf[n - 1] * r;
        }
        pmf[0] *= 1.0 - r;
    }
    Ok(pmf)
}

/// Exact cardinality statistics of a multi-Bernoulli density.
///
/// The mean and variance of the pmf have closed forms (`Σ r_i` and
/// `Σ r_i (1 - r_i)`); the MAP variance is the EAP variance plus the squared
/// gap between the two cardinality estimates. Ties in the pmf resolve to the
/// smallest maximizing count.
pub fn cardinality_stats(existences: &[f64]) -> Result<CardinalityStats, RfsError> {
    let pmf = cardinality_pmf(existences)?;
    let n_eap: f64 = existences.iter().sum();
    let var_eap: f64 = existences.iter().map(|r| r * (1.0 - r)).sum();
    let mut n_map = 0;
    let mut best = pmf[0];
    for (n, &p) in pmf.iter().enumerate().skip(1) {
        if p > best {
            best = p;
            n_map = n;
        }
    }
    let gap = n_map as f64 - n_eap;
    Ok(CardinalityStats {
        pmf,
        n_eap,
        var_eap,
        n_map,
        var_map: var_eap + gap * gap,
    })
}

/// Draws `count` equally weighted multi-object state sets from the density:
/// each component contributes a state with its existence probability, the
/// state picked from the component's particle cloud.
pub fn sample_multi_object<R: Rng>(
    density: &MultiBernoulliDensity,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<StateVector>>, RfsError> {
    if count == 0 {
        return Err(RfsError::ZeroSampleCount);
    }
    let tables: Vec<Vec<f64>> = density
        .components
        .iter()
        .map(|c| c.cumulative_weights())
        .collect();
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut set = Vec::new();
        for (comp, cum) in density.components.iter().zip(&tables) {
            if rng.gen::<f64>() < comp.existence {
                let u = rng.gen::<f64>() * cum.last().copied().unwrap_or(1.0);
                let idx = cum
                    .partition_point(|&c| c < u)
                    .min(comp.particles.len() - 1);
                set.push(comp.particles[idx].state);
            }
        }
        samples.push(set);
    }
    Ok(samples)
}

/// Indices of the `n_map` components with the highest existence
/// probabilities, returned in their original component order. Existence ties
/// also resolve by component order.
pub fn map_component_indices(density: &MultiBernoulliDensity) -> (usize, Vec<usize>) {
    let stats = cardinality_stats(&density.existences())
        .expect("component existences are valid by construction");
    let mut order: Vec<usize> = (0..density.len()).collect();
    order.sort_by(|&a, &b| {
        density.components[b]
            .existence
            .total_cmp(&density.components[a].existence)
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = order.into_iter().take(stats.n_map).collect();
    chosen.sort_unstable();
    (stats.n_map, chosen)
}

/// MAP multi-object estimate: the MAP cardinality together with the weighted
/// particle means of the strongest components.
pub fn extract_map_estimate(density: &MultiBernoulliDensity) -> (usize, Vec<StateVector>) {
    let (n_map, indices) = map_component_indices(density);
    let states = indices
        .into_iter()
        .map(|i| density.components[i].weighted_mean())
        .collect();
    (n_map, states)
}

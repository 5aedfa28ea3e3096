//! Multi-target tracking and sensor management toolkit.
//!
//! The crate propagates a multi-Bernoulli approximation of the multi-object
//! posterior with a sequential Monte Carlo (particle) filter and steers a
//! mobile sensor with myopic control policies: an information-gain reward
//! (Rényi divergence against a predicted ideal measurement set) and two
//! variants of MAP-cardinality-variance minimization. Tracking quality is
//! scored with the OSPA miss distance, and a seeded Monte-Carlo harness wires
//! everything into reproducible experiments.

pub mod assignment;
pub mod control;
pub mod filter;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod rfs;
pub mod rng;

pub use filter::CbMemberFilter;
pub use harness::ScenarioConfig;
pub use rfs::{BernoulliComponent, MultiBernoulliDensity, Particle, StateVector};

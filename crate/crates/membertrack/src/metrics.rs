//! OSPA miss distance between estimated and true multi-object states.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::min_cost_assignment;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("invalid OSPA parameters: order {order}, cutoff {cutoff}")]
    InvalidParams { order: f64, cutoff: f64 },
    #[error("point sets must be finite")]
    NonFinitePoint,
}

/// OSPA order `p >= 1` and cutoff `c > 0` (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OspaParams {
    pub order: f64,
    pub cutoff: f64,
}

impl Default for OspaParams {
    fn default() -> Self {
        Self {
            order: 2.0,
            cutoff: 100.0,
        }
    }
}

/// Total OSPA distance with its localization and cardinality parts. The parts
/// combine as `total^p = localization^p + cardinality^p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OspaResult {
    pub total: f64,
    pub localization: f64,
    pub cardinality: f64,
}

/// OSPA distance between two finite sets of planar points.
///
/// The smaller set is matched one-to-one into the larger set by an exact
/// optimal assignment over cutoff-truncated Euclidean distances; unmatched
/// points pay the full cutoff. Two empty sets are at distance zero.
pub fn ospa(
    x: &[[f64; 2]],
    y: &[[f64; 2]],
    params: &OspaParams,
) -> Result<OspaResult, MetricError> {
    if params.order < 1.0
        || !params.order.is_finite()
        || params.cutoff <= 0.0
        || !params.cutoff.is_finite()
    {
        return Err(MetricError::InvalidParams {
            order: params.order,
            cutoff: params.cutoff,
        });
    }
    if x.iter()
        .chain(y)
        .any(|p| !p[0].is_finite() || !p[1].is_finite())
    {
        return Err(MetricError::NonFinitePoint);
    }

    // canonical operand order makes the computation, and therefore the
    // result, bitwise symmetric in its arguments
    let (small, large) = match x.len().cmp(&y.len()) {
        std::cmp::Ordering::Less => (x, y),
        std::cmp::Ordering::Greater => (y, x),
        std::cmp::Ordering::Equal => {
            let x_first = x
                .iter()
                .flatten()
                .zip(y.iter().flatten())
                .find_map(|(a, b)| match a.total_cmp(b) {
                    std::cmp::Ordering::Equal => None,
                    ord => Some(ord == std::cmp::Ordering::Less),
                })
                .unwrap_or(true);
            if x_first {
                (x, y)
            } else {
                (y, x)
            }
        }
    };
    let m = small.len();
    let n = large.len();
    if n == 0 {
        return Ok(OspaResult {
            total: 0.0,
            localization: 0.0,
            cardinality: 0.0,
        });
    }

    let p = params.order;
    let c = params.cutoff;
    let assignment_cost = if m == 0 {
        0.0
    } else {
        let cost: Vec<Vec<f64>> = small
            .iter()
            .map(|a| {
                large
                    .iter()
                    .map(|b| {
                        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                        d.min(c).powf(p)
                    })
                    .collect()
            })
            .collect();
        min_cost_assignment(&cost).0
    };

    let card_cost = c.powf(p) * (n - m) as f64;
    let nf = n as f64;
    Ok(OspaResult {
        total: ((assignment_cost + card_cost) / nf).powf(1.0 / p),
        localization: (assignment_cost / nf).powf(1.0 / p),
        cardinality: (card_cost / nf).powf(1.0 / p),
    })
}

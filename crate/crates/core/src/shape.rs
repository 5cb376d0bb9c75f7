//! Shape of a region boundary measured against the chord joining its
//! endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the region bounded by a decreasing frontier and the axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    /// Frontier bulges away from the origin.
    Convex,
    /// Frontier caves in towards the origin.
    Concave,
    NearLinear,
    /// Bulges on both sides of the chord.
    Mixed,
}

/// Signed extremes of the frontier's deviation from its endpoint chord.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChordDeviation {
    /// Largest excess above the chord, as a fraction of the dynamic range (≥ 0).
    pub above: f64,
    /// Largest shortfall below the chord, as a fraction of the dynamic range (≥ 0).
    pub below: f64,
}

/// `points` must be sorted by `x`; the dynamic range is the larger of the
/// `x` and `y` spans.
pub fn chord_deviation(points: &[(f64, f64)], min_points: usize) -> Result<ChordDeviation> {
    if points.len() < min_points.max(3) {
        return Err(Error::TooFewPoints { needed: min_points.max(3), got: points.len() });
    }
    let (x0, y0) = points[0];
    let (x1, y1) = points[points.len() - 1];
    let span = |f: fn(&(f64, f64)) -> f64| {
        let (lo, hi) = points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        hi - lo
    };
    let range = span(|p| p.0).max(span(|p| p.1));
    if !(range > 0.0) || !(x1 > x0) {
        return Ok(ChordDeviation { above: 0.0, below: 0.0 });
    }
    let mut dev = ChordDeviation { above: 0.0, below: 0.0 };
    for &(x, y) in points {
        let chord = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        let d = (y - chord) / range;
        dev.above = dev.above.max(d);
        dev.below = dev.below.max(-d);
    }
    Ok(dev)
}

/// Deviations within `band` count as straight.
pub fn classify_shape(dev: ChordDeviation, band: f64) -> RegionShape {
    match (dev.above > band, dev.below > band) {
        (true, true) => RegionShape::Mixed,
        (true, false) => RegionShape::Convex,
        (false, true) => RegionShape::Concave,
        (false, false) => RegionShape::NearLinear,
    }
}

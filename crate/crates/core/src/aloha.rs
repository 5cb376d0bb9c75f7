//! Slotted-Aloha capacity region and its subsets with attempt rates capped at
//! `1/W̄`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::shape::{chord_deviation, classify_shape, RegionShape};

/// Default grid resolution per user axis.
pub const DEFAULT_GRID: usize = 200;

/// Deviation band (fraction of the dynamic range) that counts as straight.
pub const SHAPE_BAND: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlohaPoint {
    pub tau: Vec<f64>,
    pub rates: Vec<f64>,
}

/// `τ_i Π_{j≠i} (1 − τ_j)` per user.
pub fn aloha_rate(tau: &[f64]) -> Vec<f64> {
    (0..tau.len())
        .map(|i| {
            tau.iter()
                .enumerate()
                .map(|(j, &t)| if j == i { t } else { 1.0 - t })
                .product()
        })
        .collect()
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// All rate vectors from the uniform grid over `[0, 1/W̄]^n`.
pub fn grid_points(n: usize, wbar: f64, grid: usize) -> Result<Vec<AlohaPoint>> {
    if n == 0 {
        return param("user count must be at least 1");
    }
    if !(wbar >= 1.0 && wbar.is_finite()) {
        return param(format!("average backoff length must be at least 1, got {wbar}"));
    }
    if grid < 2 {
        return param("grid resolution must be at least 2");
    }
    let cap = 1.0 / wbar;
    let levels: Vec<f64> = (0..grid).map(|g| cap * g as f64 / (grid - 1) as f64).collect();
    let total = grid.checked_pow(n as u32).ok_or(crate::Error::Overflow("aloha grid size"))?;
    let mut out = Vec::with_capacity(total);
    let mut tau = vec![0.0; n];
    for code in 0..total {
        let mut c = code;
        for t in tau.iter_mut() {
            *t = levels[c % grid];
            c /= grid;
        }
        out.push(AlohaPoint { rates: aloha_rate(&tau), tau: tau.clone() });
    }
    Ok(out)
}

/// Pareto frontier of the grid-sampled region, sorted by the first rate.
pub fn region_boundary(n: usize, wbar: f64, grid: usize) -> Result<Vec<AlohaPoint>> {
    let mut pts = grid_points(n, wbar, grid)?;
    // descending first coordinate, then descending rest, so a point can only
    // be dominated by something already kept
    pts.sort_by(|a, b| b.rates.iter().zip(&a.rates).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    let mut frontier: Vec<AlohaPoint> = Vec::new();
    for p in pts {
        let beaten = frontier.iter().any(|f| f.rates == p.rates || dominates(&f.rates, &p.rates));
        if !beaten {
            frontier.push(p);
        }
    }
    frontier.reverse();
    Ok(frontier)
}

/// Shape of an `n = 2` frontier; a straight frontier is reported as `Mixed`.
pub fn frontier_shape(boundary: &[AlohaPoint]) -> Result<RegionShape> {
    let pts: Vec<(f64, f64)> = boundary.iter().map(|p| (p.rates[0], p.rates.get(1).copied().unwrap_or(0.0))).collect();
    let dev = chord_deviation(&pts, 3)?;
    Ok(match classify_shape(dev, SHAPE_BAND) {
        RegionShape::NearLinear => RegionShape::Mixed,
        s => s,
    })
}

/// Whether every point of `inner` is dominated, to within `tol` per
/// coordinate, by some sampled point of `outer`.
pub fn contained_in(inner: &[AlohaPoint], outer: &[AlohaPoint], tol: f64) -> bool {
    inner.iter().all(|p| {
        outer
            .iter()
            .any(|o| o.rates.iter().zip(&p.rates).all(|(a, b)| *a >= b - tol))
    })
}

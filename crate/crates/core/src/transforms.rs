//! Flattening maps between the physical cell and reference strips.
//!
//! Each material region is straightened onto a rectangle: the dielectric onto
//! `D+ = (-1,1) x (0,1)` and the filling onto `D- = (-1,1) x (-1,0)`, with the
//! corrugated interface landing on the shared edge `xt2 = 0`, the conducting
//! plane on `xt2 = -1` and the top boundary on `xt2 = 1`. The maps are used to
//! generate boundary-fitted meshes and to evaluate the pullback metrics that
//! the boundary-condition diagnostics operate on.

use crate::error::{Error, Result};
use crate::problem::{GratingProfile, Region};

/// Change of variables carrying one region onto its reference strip.
#[derive(Debug, Clone)]
pub struct FlatteningMap {
    pub profile: GratingProfile,
    pub h1: f64,
    pub region: Region,
}

impl FlatteningMap {
    /// Builds the map, refusing geometries where a layer collapses.
    pub fn new(profile: &GratingProfile, h1: f64, region: Region) -> Result<Self> {
        if !(profile.period > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "period must be positive, got {}",
                profile.period
            )));
        }
        let (fmin, fmax) = profile.range();
        if !(fmin > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "interface touches or crosses the conducting plane (min f = {fmin})"
            )));
        }
        if !(h1 > fmax) {
            return Err(Error::DegenerateGeometry(format!(
                "top boundary h1 = {h1} does not clear the interface crest {fmax}"
            )));
        }
        Ok(FlatteningMap {
            profile: profile.clone(),
            h1,
            region,
        })
    }

    /// Physical point -> reference point.
    pub fn forward(&self, x: [f64; 2]) -> [f64; 2] {
        let period = self.profile.period;
        let f = self.profile.evaluate(x[0]);
        let xt1 = 2.0 * x[0] / period - 1.0;
        let xt2 = match self.region {
            Region::Upper => (x[1] - f) / (self.h1 - f),
            Region::Lower => (x[1] - f) / f,
        };
        [xt1, xt2]
    }

    /// Reference point -> physical point.
    pub fn inverse(&self, xt: [f64; 2]) -> [f64; 2] {
        let period = self.profile.period;
        let x1 = (xt[0] + 1.0) * period / 2.0;
        let f = self.profile.evaluate(x1);
        let x2 = match self.region {
            Region::Upper => f + xt[1] * (self.h1 - f),
            Region::Lower => f * (xt[1] + 1.0),
        };
        [x1, x2]
    }

    /// Jacobian `[d xt_i / d x_j]` of the forward map, as a function of the
    /// reference point (row i is the physical gradient of xt_i).
    pub fn jacobian(&self, xt: [f64; 2]) -> [[f64; 2]; 2] {
        let period = self.profile.period;
        let x1 = (xt[0] + 1.0) * period / 2.0;
        let f = self.profile.evaluate(x1);
        let fp = self.profile.derivative(x1);
        match self.region {
            Region::Upper => {
                let d = self.h1 - f;
                [[2.0 / period, 0.0], [fp * (xt[1] - 1.0) / d, 1.0 / d]]
            }
            Region::Lower => [[2.0 / period, 0.0], [-fp * (xt[1] + 1.0) / f, 1.0 / f]],
        }
    }

    /// Area factor of the inverse map: `dx = jacobian_det * d(xt)`.
    ///
    /// Depends only on the horizontal coordinate.
    pub fn jacobian_det(&self, xt1: f64) -> f64 {
        let period = self.profile.period;
        let x1 = (xt1 + 1.0) * period / 2.0;
        let f = self.profile.evaluate(x1);
        match self.region {
            Region::Upper => period / 2.0 * (self.h1 - f),
            Region::Lower => period / 2.0 * f,
        }
    }

    /// Pullback metric `J J^T` with `J = [d xt_i / d x_j]`; the coefficient
    /// matrix the straightened divergence-form operator sees.
    pub fn metric(&self, xt: [f64; 2]) -> [[f64; 2]; 2] {
        let j = self.jacobian(xt);
        let mut m = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = j[r][0] * j[c][0] + j[r][1] * j[c][1];
            }
        }
        m
    }
}

/// Lower-region metric reflected into the upper strip: diagonal entries are
/// carried over from the mirrored point `(xt1, -xt2)`, the off-diagonal
/// changes sign. Requires a lower-region map; defined for `xt2 >= 0`.
pub fn reflected_metric(lower: &FlatteningMap, xt: [f64; 2]) -> Result<[[f64; 2]; 2]> {
    if lower.region != Region::Lower {
        return Err(Error::InvalidParameter(
            "reflected_metric needs the lower-region map".to_string(),
        ));
    }
    let m = lower.metric([xt[0], -xt[1]]);
    Ok([[m[0][0], -m[0][1]], [-m[1][0], m[1][1]]])
}

/// Smallest and largest eigenvalue of a symmetric 2x2 matrix.
pub fn sym_eigen_bounds(m: [[f64; 2]; 2]) -> (f64, f64) {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (half_trace * half_trace - det).max(0.0).sqrt();
    (half_trace - disc, half_trace + disc)
}

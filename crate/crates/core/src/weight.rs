//! The radial weight `||x| - 2|^alpha` and Gauss quadrature of weighted
//! integrands over radial and axisymmetric cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sphere_area, INNER_RADIUS, MAX_ALPHA, MID_RADIUS, OUTER_RADIUS};

/// 4-point Gauss-Legendre rule on `[-1, 1]`.
const GAUSS4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS4_W: [f64; 4] = [
    0.347_854_845_137_453_8,
    0.652_145_154_862_546_2,
    0.652_145_154_862_546_2,
    0.347_854_845_137_453_8,
];

/// Gauss points and weights mapped to `[a, b]`.
#[inline]
pub fn gauss4(a: f64, b: f64) -> [(f64, f64); 4] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 4];
    for k in 0..4 {
        out[k] = (c + h * GAUSS4_X[k], h * GAUSS4_W[k]);
    }
    out
}

pub const DEFAULT_UNDERFLOW_FLOOR: f64 = 1e-300;

/// Largest log-variation of the weight accepted inside one quadrature sub-cell.
const MAX_LOG_VARIATION: f64 = 0.5;
const MAX_SUBDIVISIONS: usize = 64;

/// `Psi_alpha` together with its flush-to-zero threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub alpha: f64,
    pub underflow_floor: f64,
}

impl WeightSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_floor(alpha, DEFAULT_UNDERFLOW_FLOOR)
    }

    pub fn with_floor(alpha: f64, underflow_floor: f64) -> Result<Self> {
        if !(0.0..=MAX_ALPHA).contains(&alpha) {
            return Err(Error::Domain(format!("alpha must lie in [0, {MAX_ALPHA}], got {alpha}")));
        }
        if !(1e-300..=1e-30).contains(&underflow_floor) {
            return Err(Error::Domain(format!("underflow floor {underflow_floor:e} outside [1e-300, 1e-30]")));
        }
        Ok(Self { alpha, underflow_floor })
    }

    /// `Psi_alpha(r)` for `1 <= r <= 3`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(INNER_RADIUS..=OUTER_RADIUS).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [1, 3]")));
        }
        Ok(self.eval_unchecked(r))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        if self.alpha == 0.0 {
            return 1.0;
        }
        let d = (r - MID_RADIUS).abs();
        if d == 0.0 {
            return 0.0;
        }
        let v = (self.alpha * d.ln()).exp().min(1.0);
        if v < self.underflow_floor {
            0.0
        } else {
            v
        }
    }

    /// Number of equal sub-intervals used to integrate over the radial cell
    /// `[a, b]`; 0 when the weight is flushed on the whole cell.
    pub fn subdivisions(&self, a: f64, b: f64) -> usize {
        if self.alpha == 0.0 {
            return 1;
        }
        let da = (a - MID_RADIUS).abs();
        let db = (b - MID_RADIUS).abs();
        let dmax = da.max(db);
        if self.eval_unchecked(MID_RADIUS + dmax) == 0.0 {
            return 0;
        }
        let mut m = 1usize;
        let touches = |x: f64| a <= x && x <= b;
        if self.alpha > 10.0 && (touches(INNER_RADIUS) || touches(MID_RADIUS) || touches(OUTER_RADIUS)) {
            m = 4;
        }
        let dmin = da.min(db);
        if self.alpha > 10.0 && dmin > 0.0 {
            let variation = self.alpha * (dmax / dmin).ln();
            let need = (variation / MAX_LOG_VARIATION).ceil() as usize;
            m = m.max(need.min(MAX_SUBDIVISIONS));
        } else if self.alpha > 10.0 {
            m = m.max(16);
        }
        m
    }
}

/// A quadrature cell: a radial shell (integrated over the full sphere) or an
/// axisymmetric `(r, theta)` cell of the `N = 3` reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Radial { a: f64, b: f64, dim: usize },
    Axi { r0: f64, r1: f64, t0: f64, t1: f64 },
}

/// Integral of `Psi_alpha * f` against the geometric measure over `cell`.
/// `f` receives `(r, theta)`; radial cells pass `theta = 0`.
pub fn cell_weighted_integral(cell: Cell, spec: &WeightSpec, f: impl Fn(f64, f64) -> f64) -> Result<f64> {
    cell_weighted_integral_refined(cell, spec, f, 1)
}

/// Same as [`cell_weighted_integral`] with every sub-cell split `refine` more times.
pub fn cell_weighted_integral_refined(
    cell: Cell,
    spec: &WeightSpec,
    f: impl Fn(f64, f64) -> f64,
    refine: usize,
) -> Result<f64> {
    let (a, b) = match cell {
        Cell::Radial { a, b, .. } => (a, b),
        Cell::Axi { r0, r1, .. } => (r0, r1),
    };
    if !(INNER_RADIUS <= a && a < b && b <= OUTER_RADIUS) {
        return Err(Error::Domain(format!("cell [{a}, {b}] not inside [1, 3]")));
    }
    let m = spec.subdivisions(a, b) * refine.max(1);
    if m == 0 {
        return Ok(0.0);
    }
    let h = (b - a) / m as f64;
    let mut sum = 0.0;
    for s in 0..m {
        let sa = a + h * s as f64;
        for (r, wr) in gauss4(sa, sa + h) {
            let psi = spec.eval_unchecked(r);
            if psi == 0.0 {
                continue;
            }
            match cell {
                Cell::Radial { dim, .. } => {
                    sum += wr * psi * r.powi(dim as i32 - 1) * f(r, 0.0);
                }
                Cell::Axi { t0, t1, .. } => {
                    for (t, wt) in gauss4(t0, t1) {
                        sum += wr * wt * psi * r * r * t.sin() * f(r, t);
                    }
                }
            }
        }
    }
    let measure = match cell {
        Cell::Radial { dim, .. } => sphere_area(dim),
        Cell::Axi { .. } => 2.0 * std::f64::consts::PI,
    };
    Ok(measure * sum)
}

//! Explicit trial functions: scaled radial bumps, bumps at the outer boundary,
//! truncated Aubin-Talenti instantons, and the cutoff splitting of a field
//! into an inner and an outer piece.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxiGrid, DiscreteField, GridRef, RadialGrid, INNER_RADIUS, MID_RADIUS, OUTER_RADIUS};

/// Shape of a compactly supported bump on `(-1, 1)` with peak value 1 at 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BumpProfile {
    /// `exp(1 - 1 / (1 - t^2))`.
    #[default]
    Standard,
    /// `(1 - t^2)^k`.
    Polynomial { k: u32 },
}

impl BumpProfile {
    pub fn eval(&self, t: f64) -> f64 {
        let s = 1.0 - t * t;
        if s <= 0.0 {
            return 0.0;
        }
        match *self {
            BumpProfile::Standard => (1.0 - 1.0 / s).exp(),
            BumpProfile::Polynomial { k } => s.powi(k as i32),
        }
    }
}

/// Radial bump squeezed against the outer sphere: the profile on `(1, 3)`
/// rescaled by `alpha`, so that its support is `[3 - 2/alpha, 3]`.
pub fn radial_bump(alpha: f64, grid: &Arc<RadialGrid>, profile: BumpProfile) -> Result<DiscreteField> {
    if !(alpha >= 2.0) {
        return Err(Error::Domain(format!("radial bump needs alpha >= 2, got {alpha}")));
    }
    let f = move |r: f64, _| {
        let s = alpha * (r - OUTER_RADIUS + 3.0 / alpha);
        profile.eval(s - 2.0)
    };
    Ok(DiscreteField::from_fn(GridRef::Radial(grid.clone()), f))
}

/// Bump of radius `1/alpha` centered on the axis at distance `1/alpha` from the outer sphere.
pub fn boundary_bump(alpha: f64, grid: &Arc<AxiGrid>, profile: BumpProfile) -> Result<DiscreteField> {
    boundary_bump_at(alpha, 0.0, grid, profile)
}

/// As [`boundary_bump`] with the center at polar angle `theta`; only the two
/// axis directions are representable in the axisymmetric reduction.
pub fn boundary_bump_at(alpha: f64, theta: f64, grid: &Arc<AxiGrid>, profile: BumpProfile) -> Result<DiscreteField> {
    if !(alpha >= 4.0) {
        return Err(Error::Domain(format!("boundary bump needs alpha >= 4, got {alpha}")));
    }
    let sign = if theta == 0.0 {
        1.0
    } else if theta == PI {
        -1.0
    } else {
        return Err(Error::Domain(format!("center at theta = {theta} is off the symmetry axis")));
    };
    let rc = OUTER_RADIUS - 1.0 / alpha;
    let f = move |r: f64, t: f64| {
        let d2 = r * r + rc * rc - 2.0 * r * rc * sign * t.cos();
        profile.eval(alpha * d2.max(0.0).sqrt())
    };
    Ok(DiscreteField::from_fn(GridRef::Axi(grid.clone()), f))
}

/// Which boundary component an instanton sits against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Near `|x| = 3` (index 0).
    Outer,
    /// Near `|x| = 1` (index 1).
    Inner,
}

/// Largest slope of the instanton cutoff, in units of `|log eps|`.
pub const CUTOFF_SLOPE: f64 = 2.5;

/// Truncated bubble `phi(x) / (eps + |x - x_c|^2)^{1/2}` in `N = 3`, centered on the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstantonParams {
    pub epsilon: f64,
    pub side: Side,
}

impl InstantonParams {
    pub fn new(epsilon: f64, side: Side) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < (-2.0f64).exp()) {
            return Err(Error::Domain(format!("instanton epsilon must lie in (0, e^-2), got {epsilon}")));
        }
        let ip = Self { epsilon, side };
        // The support ball touches the nearer sphere and must stay off the middle sphere.
        let (c, rad) = (ip.center_radius(), ip.support_radius());
        debug_assert!(c - rad >= INNER_RADIUS - 1e-15 && c + rad <= OUTER_RADIUS + 1e-15);
        if (c - MID_RADIUS).abs() <= rad {
            return Err(Error::Domain(format!("instanton support crosses |x| = 2 at epsilon {epsilon}")));
        }
        Ok(ip)
    }

    pub fn log_inv(&self) -> f64 {
        self.epsilon.ln().abs()
    }

    /// Distance of the center from the origin.
    pub fn center_radius(&self) -> f64 {
        match self.side {
            Side::Outer => OUTER_RADIUS - 1.0 / self.log_inv(),
            Side::Inner => INNER_RADIUS + 1.0 / self.log_inv(),
        }
    }

    /// Radius of the plateau where the cutoff equals 1.
    pub fn plateau_radius(&self) -> f64 {
        0.5 / self.log_inv()
    }

    pub fn support_radius(&self) -> f64 {
        1.0 / self.log_inv()
    }

    /// Untruncated bubble at distance `d` from the center.
    pub fn bubble(&self, d: f64) -> f64 {
        1.0 / (self.epsilon + d * d).sqrt()
    }

    /// Cutoff at distance `d` from the center.
    pub fn cutoff(&self, d: f64) -> f64 {
        let (a, b) = (self.plateau_radius(), self.support_radius());
        1.0 - c1_ramp((d - a) / (b - a))
    }

    /// Value of the truncated bubble at `(r, theta)`.
    pub fn value(&self, r: f64, theta: f64) -> f64 {
        let c = self.center_radius();
        let d = (r * r + c * c - 2.0 * r * c * theta.cos()).max(0.0).sqrt();
        if d >= self.support_radius() {
            return 0.0;
        }
        self.cutoff(d) * self.bubble(d)
    }
}

/// Monotone C¹ ramp from 0 (s <= 0) to 1 (s >= 1) whose slope profile is a
/// trapezoid with 20% flanks; peak slope 1.25, so a ramp over a width
/// `1/(2L)` has gradient at most `2.5 L`.
fn c1_ramp(s: f64) -> f64 {
    const A: f64 = 0.2;
    const C: f64 = 1.0 / (1.0 - A);
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else if s < A {
        C * s * s / (2.0 * A)
    } else if s <= 1.0 - A {
        C * A / 2.0 + C * (s - A)
    } else {
        1.0 - C * (1.0 - s) * (1.0 - s) / (2.0 * A)
    }
}

/// Samples the truncated instanton on an axisymmetric grid.
pub fn instanton(ip: &InstantonParams, grid: &Arc<AxiGrid>) -> DiscreteField {
    let ip = *ip;
    DiscreteField::from_fn(GridRef::Axi(grid.clone()), move |r, t| ip.value(r, t))
}

/// Width of the bands next to each sphere where the cutoff equals 1, and of
/// the band around `|x| = 2` where it vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub delta: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self { delta: 0.25 }
    }
}

impl CutoffSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::Domain(format!("cutoff delta must lie in (0, 1/2), got {delta}")));
        }
        Ok(Self { delta })
    }

    /// 1 on `[1, 1+delta]` and `[3-delta, 3]`, 0 on `[2-delta, 2+delta]`,
    /// cubic C¹ ramps in between.
    pub fn phi(&self, r: f64) -> f64 {
        let d = self.delta;
        let smooth = |s: f64| {
            let s = s.clamp(0.0, 1.0);
            s * s * (3.0 - 2.0 * s)
        };
        let w = 1.0 - 2.0 * d;
        if r < MID_RADIUS {
            1.0 - smooth((r - INNER_RADIUS - d) / w)
        } else {
            smooth((r - MID_RADIUS - d) / w)
        }
    }
}

/// Splits `phi * u` into the piece inside `|x| < 2` and the piece outside.
pub fn phi_cutoff_decompose(u: &DiscreteField, spec: CutoffSpec) -> (DiscreteField, DiscreteField) {
    let grid = u.grid().clone();
    let n = grid.node_count();
    let mut inner = vec![0.0; n];
    let mut outer = vec![0.0; n];
    for (k, &v) in u.values().iter().enumerate() {
        let r = grid.radius_of(k);
        let w = spec.phi(r) * v;
        if r < MID_RADIUS {
            inner[k] = w;
        } else {
            outer[k] = w;
        }
    }
    (
        DiscreteField::from_values_unchecked(grid.clone(), inner),
        DiscreteField::from_values_unchecked(grid, outer),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{dirichlet_energy, Functional};
    use crate::geometry::{AngularGrading, Grading, ProblemParams, RadialGrading};

    fn radial(n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(n, Grading::Uniform).unwrap())
    }

    fn axi(nr: usize, nt: usize) -> Arc<AxiGrid> {
        Arc::new(AxiGrid::new(nr, nt, Grading::Graded(RadialGrading::AXI_DEFAULT), AngularGrading::POLAR_DEFAULT).unwrap())
    }

    #[test]
    fn bump_profiles_peak_at_one() {
        for p in [BumpProfile::Standard, BumpProfile::Polynomial { k: 3 }] {
            assert_eq!(p.eval(0.0), 1.0);
            assert_eq!(p.eval(1.0), 0.0);
            assert_eq!(p.eval(-1.2), 0.0);
            assert!(p.eval(0.5) > 0.0 && p.eval(0.5) < 1.0);
        }
    }

    #[test]
    fn radial_bump_support_halves_with_alpha() {
        let g = radial(2000);
        for alpha in [20.0, 40.0] {
            let u = radial_bump(alpha, &g, BumpProfile::Standard).unwrap();
            for (r, v) in g.nodes().iter().zip(u.values()) {
                if *r <= 3.0 - 2.0 / alpha {
                    assert_eq!(*v, 0.0);
                }
            }
            let lo = g.nodes().iter().zip(u.values()).find(|(_, v)| **v > 0.0).unwrap().0;
            assert!((3.0 - lo - 2.0 / alpha).abs() < 2.0 * g.max_spacing());
        }
        assert!(radial_bump(1.5, &g, BumpProfile::Standard).is_err());
    }

    #[test]
    fn boundary_bump_stays_inside_and_rejects_off_axis() {
        let g = axi(64, 32);
        let u = boundary_bump(40.0, &g, BumpProfile::Standard).unwrap();
        assert!(u.max_abs() > 0.0);
        for (k, v) in u.values().iter().enumerate() {
            if *v != 0.0 {
                assert!(u.grid().radius_of(k) > 3.0 - 2.0 / 40.0);
            }
        }
        assert!(boundary_bump_at(40.0, 0.3, &g, BumpProfile::Standard).is_err());
        assert!(boundary_bump_at(40.0, PI, &g, BumpProfile::Standard).is_ok());
        assert!(boundary_bump(3.0, &g, BumpProfile::Standard).is_err());
    }

    #[test]
    fn instanton_center_value_and_support() {
        let ip = InstantonParams::new(1e-3, Side::Outer).unwrap();
        let c = ip.center_radius();
        assert!((ip.value(c, 0.0) - 1e-3f64.powf(-0.5)).abs() < 1e-9);
        let g = axi(128, 48);
        let u = instanton(&ip, &g);
        let ag = match u.grid() {
            GridRef::Axi(a) => a.clone(),
            _ => unreachable!(),
        };
        for i in 0..ag.rs().len() {
            for (j, &t) in ag.thetas().iter().enumerate() {
                let r = ag.rs()[i];
                let v = u.values()[ag.node(i, j)];
                let d = (r * r + c * c - 2.0 * r * c * t.cos()).sqrt();
                if d >= ip.support_radius() {
                    assert_eq!(v, 0.0);
                }
                assert!(v <= ip.bubble(d) + 1e-12);
            }
        }
        assert!(InstantonParams::new(0.2, Side::Inner).is_err());
    }

    #[test]
    fn instanton_cutoff_slope_is_bounded() {
        let ip = InstantonParams::new(1e-2, Side::Inner).unwrap();
        let (a, b) = (ip.plateau_radius(), ip.support_radius());
        let h = (b - a) * 1e-5;
        let mut max_slope: f64 = 0.0;
        let mut d = a;
        while d < b {
            max_slope = max_slope.max((ip.cutoff(d) - ip.cutoff(d + h)) / h);
            d += h;
        }
        assert!(max_slope <= CUTOFF_SLOPE * ip.log_inv() * (1.0 + 1e-6), "{max_slope}");
        assert!(max_slope >= 2.4 * ip.log_inv());
    }

    #[test]
    fn outer_instanton_energy_lives_outside() {
        let g = axi(128, 48);
        let u = instanton(&InstantonParams::new(1e-3, Side::Outer).unwrap(), &g);
        let f = Functional::on_grid(u.grid(), ProblemParams::new(3, 1.0, 5.5).unwrap()).unwrap();
        let (ep, em) = f.halfspace_energies(&u).unwrap();
        assert!(ep > 0.0 && em == 0.0);
    }

    #[test]
    fn cutoff_decomposition_is_exact() {
        let spec = CutoffSpec::default();
        let g = radial(256);
        let u = DiscreteField::from_fn(GridRef::Radial(g.clone()), |r, _| (r - 1.0) * (3.0 - r) * (1.0 + r.sin()));
        let (u1, u2) = phi_cutoff_decompose(&u, spec);
        for (k, (a, b)) in u1.values().iter().zip(u2.values()).enumerate() {
            let r = g.nodes()[k];
            if r >= 2.0 - spec.delta {
                assert_eq!(*a, 0.0);
            }
            if r <= 2.0 + spec.delta {
                assert_eq!(*b, 0.0);
            }
            assert_eq!(a + b, spec.phi(r) * u.values()[k]);
        }
        let phi_u = u1.lin_comb(1.0, &u2, 1.0).unwrap();
        let e = dirichlet_energy(&phi_u, 3).unwrap();
        let e12 = dirichlet_energy(&u1, 3).unwrap() + dirichlet_energy(&u2, 3).unwrap();
        assert!((e - e12).abs() <= 1e-14 * e);
    }

    #[test]
    fn field_inside_inner_band_goes_to_first_piece() {
        let spec = CutoffSpec::default();
        let g = radial(256);
        let u = DiscreteField::from_fn(GridRef::Radial(g), |r, _| if r < 1.0 + spec.delta { (r - 1.0) * (1.25 - r) } else { 0.0 });
        let (u1, u2) = phi_cutoff_decompose(&u, spec);
        assert!(u2.is_zero());
        assert_eq!(u1.values(), u.values());
        assert!(CutoffSpec::new(0.5).is_err());
    }
}

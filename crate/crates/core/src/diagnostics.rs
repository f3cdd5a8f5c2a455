//! Concentration and symmetry measurements on computed fields, the 1-D Hardy
//! inequality with weight `|2 - rho|`, the balance function
//! `(1 + x^{2/p}) / (1 + x)^{2/p}`, and the best Sobolev constant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize, Serializer};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::functional::{Discretization, Functional};
use crate::geometry::{critical_exponent, sphere_area, DiscreteField, GridRef, ProblemParams, MID_RADIUS};
use crate::testfun::{phi_cutoff_decompose, CutoffSpec};
use crate::weight::{gauss4, WeightSpec};

/// Radii at which [`ConcentrationReport::boundary_fraction`] is tabulated.
pub const FRACTION_RADII: [f64; 4] = [0.1, 0.2, 0.3, 0.5];

fn ser_ratio<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_ratio<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ratio {
        Num(f64),
        Text(String),
    }
    match Ratio::deserialize(d)? {
        Ratio::Num(v) => Ok(v),
        Ratio::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Ratio::Text(t) => Err(serde::de::Error::custom(format!("bad ratio {t:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// Weighted `L^p` mass of the inner cutoff piece over that of the outer
    /// piece; `f64::INFINITY` (serialized as `"inf"`) when the outer piece vanishes.
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub lambda: f64,
    /// Same ratio for the Dirichlet energies of the two pieces.
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub xi: f64,
    /// `(rho, fraction)` pairs at [`FRACTION_RADII`].
    pub boundary_fraction: Vec<(f64, f64)>,
    /// `(r, theta)` of the energy barycenter.
    pub barycenter: (f64, f64),
    pub asymmetry_index: f64,
}

impl ConcentrationReport {
    pub fn fraction_at(&self, rho: f64) -> Option<f64> {
        self.boundary_fraction.iter().find(|(r, _)| *r == rho).map(|(_, f)| *f)
    }

    /// Distance of the barycenter from the nearer boundary sphere.
    pub fn barycenter_boundary_distance(&self) -> f64 {
        let r = self.barycenter.0;
        (r - 1.0).abs().min((3.0 - r).abs())
    }
}

/// Energy of each cell together with a representative point `(z, rho_perp)`
/// in the meridian half-plane.
struct EnergyCloud {
    cells: Vec<(f64, f64, f64)>,
    total: f64,
}

fn energy_cloud(disc: &Discretization, u: &DiscreteField) -> EnergyCloud {
    let ce = disc.cell_energies(u);
    let mut cells = Vec::with_capacity(ce.values.len());
    match disc.grid() {
        GridRef::Radial(g) => {
            // Radial fields: energy is spread over spheres, all centered at the origin.
            for (c, e) in ce.values.iter().enumerate() {
                let r = 0.5 * (g.nodes()[c] + g.nodes()[c + 1]);
                cells.push((*e, 0.0, r));
            }
        }
        GridRef::Axi(g) => {
            let (rs, ts) = (g.rs(), g.thetas());
            let nt = ts.len() - 1;
            for (k, e) in ce.values.iter().enumerate() {
                let (c, d) = (k / nt, k % nt);
                let r = 0.5 * (rs[c] + rs[c + 1]);
                let t = 0.5 * (ts[d] + ts[d + 1]);
                cells.push((*e, r * t.cos(), r * t.sin()));
            }
        }
    }
    let total = cells.iter().map(|c| c.0).sum();
    EnergyCloud { cells, total }
}

impl EnergyCloud {
    /// Cartesian barycenter; lies on the symmetry axis.
    fn barycenter_z(&self, radial: bool) -> f64 {
        if radial {
            return 0.0;
        }
        self.cells.iter().map(|(e, z, _)| e * z).sum::<f64>() / self.total
    }

    fn fraction_within(&self, zb: f64, rho: f64, radial: bool) -> f64 {
        let inside: f64 = self
            .cells
            .iter()
            .filter(|(_, z, p)| {
                // For radial grids the cell is a sphere of radius p around the origin.
                let d = if radial { *p } else { (p * p + (z - zb) * (z - zb)).sqrt() };
                d <= rho
            })
            .map(|c| c.0)
            .sum();
        (inside / self.total).clamp(0.0, 1.0)
    }
}

/// Fraction of the Dirichlet energy within Euclidean distance `rho` of the
/// energy barycenter.
pub fn boundary_fraction(u: &DiscreteField, rho: f64) -> Result<f64> {
    let disc = Discretization::for_grid(u.grid(), 3)?;
    let cloud = energy_cloud(&disc, u);
    if !(cloud.total > 0.0) {
        return Err(Error::Degenerate("field has no Dirichlet energy".into()));
    }
    let radial = matches!(u.grid(), GridRef::Radial(_));
    Ok(cloud.fraction_within(cloud.barycenter_z(radial), rho, radial))
}

/// Normalized angular variance `1 - m^2 / E[e^2]` of the energy per unit
/// solid angle `e(theta)`; 0 for fields constant in `theta`, at most 1.
pub fn asymmetry_index(u: &DiscreteField) -> Result<f64> {
    let GridRef::Axi(_) = u.grid() else {
        return Err(Error::GridCompatibility("asymmetry index needs an axisymmetric field".into()));
    };
    let disc = Discretization::for_grid(u.grid(), 3)?;
    asymmetry_with(&disc, u)
}

fn asymmetry_with(disc: &Discretization, u: &DiscreteField) -> Result<f64> {
    if u.is_zero() {
        return Err(Error::Degenerate("asymmetry index of the zero field".into()));
    }
    let ce = disc.cell_energies(u);
    let solid = disc.angular_cell_measure().expect("axisymmetric discretization");
    let nt = solid.len();
    let mut col = vec![0.0; nt];
    for (k, e) in ce.values.iter().enumerate() {
        col[k % nt] += e;
    }
    let total_solid: f64 = solid.iter().sum();
    let (mut m, mut m2) = (0.0, 0.0);
    for (e, w) in col.iter().zip(&solid) {
        let density = e / w;
        let wt = w / total_solid;
        m += wt * density;
        m2 += wt * density * density;
    }
    if !(m2 > 0.0) {
        return Err(Error::Degenerate("field has no Dirichlet energy".into()));
    }
    Ok((1.0 - m * m / m2).clamp(0.0, 1.0))
}

fn ratio(a: f64, b: f64, what: &str) -> Result<f64> {
    match (a > 0.0, b > 0.0) {
        (_, true) => Ok(a / b),
        (true, false) => Ok(f64::INFINITY),
        (false, false) => Err(Error::Degenerate(format!("both cutoff pieces have zero {what}"))),
    }
}

/// All concentration measurements of `u`.
pub fn concentration_report(u: &DiscreteField, params: ProblemParams, spec: CutoffSpec) -> Result<ConcentrationReport> {
    let f = Functional::on_grid(u.grid(), params)?;
    concentration_report_with(&f, u, spec)
}

pub fn concentration_report_with(f: &Functional, u: &DiscreteField, spec: CutoffSpec) -> Result<ConcentrationReport> {
    if u.is_zero() {
        return Err(Error::Degenerate("concentration report of the zero field".into()));
    }
    let (u1, u2) = phi_cutoff_decompose(u, spec);
    let lambda = ratio(f.weighted_pnorm_p(&u1)?, f.weighted_pnorm_p(&u2)?, "weighted mass")?;
    let xi = ratio(f.dirichlet_energy(&u1)?, f.dirichlet_energy(&u2)?, "energy")?;
    let disc = f.disc();
    let cloud = energy_cloud(disc, u);
    let radial = matches!(u.grid(), GridRef::Radial(_));
    let zb = cloud.barycenter_z(radial);
    let boundary_fraction = FRACTION_RADII.iter().map(|&rho| (rho, cloud.fraction_within(zb, rho, radial))).collect();
    let barycenter = (zb.abs(), if zb < 0.0 { PI } else { 0.0 });
    let asymmetry_index = if radial { 0.0 } else { asymmetry_with(disc, u)? };
    Ok(ConcentrationReport { lambda, xi, boundary_fraction, barycenter, asymmetry_index })
}

/// `λ` computed with `dρ` in place of the volume element, for radial fields.
/// Under `rho -> 4 - rho` the two cutoff pieces trade places exactly.
pub fn lambda_measure_free(u: &DiscreteField, alpha: f64, p: f64, spec: CutoffSpec) -> Result<f64> {
    let GridRef::Radial(g) = u.grid() else {
        return Err(Error::GridCompatibility("measure-free ratio needs a radial field".into()));
    };
    let w = WeightSpec::new(alpha)?;
    let mass = |v: &DiscreteField| {
        let mut s = 0.0;
        for (c, x) in g.nodes().windows(2).enumerate() {
            let (a, b) = (v.values()[c], v.values()[c + 1]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let m = w.subdivisions(x[0], x[1]);
            let hs = (x[1] - x[0]) / m.max(1) as f64;
            for k in 0..m {
                let lo = x[0] + hs * k as f64;
                for (r, wq) in gauss4(lo, lo + hs) {
                    let t = (r - x[0]) / (x[1] - x[0]);
                    let val = (1.0 - t) * a + t * b;
                    s += wq * w.eval_unchecked(r) * val.abs().powf(p);
                }
            }
        }
        s
    };
    let (u1, u2) = phi_cutoff_decompose(u, spec);
    ratio(mass(&u1), mass(&u2), "weighted mass")
}

/// `∫ |v'|^2 |2 - rho| - c_p (∫ |v|^p)^{2/p}` over `(1, 3)` with
/// `c_p = 1 / (2^{2/p} Gamma((p+2)/2)^{2/p})`; all integrals exact for P1 fields.
pub fn hardy_margin(v: &DiscreteField, p: f64) -> Result<f64> {
    let GridRef::Radial(g) = v.grid() else {
        return Err(Error::GridCompatibility("Hardy margin needs a radial field".into()));
    };
    if !(p >= 2.0) {
        return Err(Error::Domain(format!("Hardy margin needs p >= 2, got {p}")));
    }
    let vals = v.values();
    if vals[0] != 0.0 || vals[vals.len() - 1] != 0.0 {
        return Err(Error::Domain("field must vanish at both ends".into()));
    }
    let mut lhs = 0.0;
    let mut lp = 0.0;
    for (c, x) in g.nodes().windows(2).enumerate() {
        let (a, b) = (vals[c], vals[c + 1]);
        let h = x[1] - x[0];
        let slope = (b - a) / h;
        // |2 - rho| is linear on the cell because 2 is a node.
        let dm = 0.5 * ((x[0] - MID_RADIUS).abs() + (x[1] - MID_RADIUS).abs());
        lhs += slope * slope * dm * h;
        lp += linear_power_integral(a, b, h, p);
    }
    let cp = 1.0 / (2f64.powf(2.0 / p) * gamma((p + 2.0) / 2.0).powf(2.0 / p));
    Ok(lhs - cp * lp.powf(2.0 / p))
}

/// `∫_0^h |a + (b - a) s / h|^p ds`.
fn linear_power_integral(a: f64, b: f64, h: f64, p: f64) -> f64 {
    let one_sided = |a: f64, b: f64, h: f64| {
        // a, b with equal sign (or zero).
        let (a, b) = (a.abs(), b.abs());
        if (b - a).abs() <= 1e-12 * a.max(b) {
            h * (0.5 * (a + b)).powf(p)
        } else {
            h * (b.powf(p + 1.0) - a.powf(p + 1.0)) / ((p + 1.0) * (b - a))
        }
    };
    if a * b < 0.0 {
        let s = h * a.abs() / (a.abs() + b.abs());
        one_sided(a, 0.0, s) + one_sided(0.0, b, h - s)
    } else {
        one_sided(a, b, h)
    }
}

/// `(1 + x^{2/p}) / (1 + x)^{2/p}`.
pub fn balance_f(x: f64, p: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("balance function needs x > 0, got {x}")));
    }
    if !(p > 2.0) {
        return Err(Error::Domain(format!("balance function needs p > 2, got {p}")));
    }
    let q = 2.0 / p;
    // Divide through by the larger term to stay finite for huge x.
    if x > 1.0 {
        Ok((x.powf(-q) + 1.0) / (1.0 / x + 1.0).powf(q))
    } else {
        Ok((1.0 + x.powf(q)) / (1.0 + x).powf(q))
    }
}

/// Best Sobolev constant in `R^N`, from the quotient `R_{0,2*}` of the
/// profile `(theta^2 + |x|^2)^{-(N-2)/2}` over a ball of radius 1000, with the
/// exterior added through the substitution `r = R / t`.
pub fn sobolev_constant(dim: usize) -> Result<f64> {
    sobolev_constant_with(dim, 1.0, 1000.0)
}

pub fn sobolev_constant_with(dim: usize, theta: f64, radius: f64) -> Result<f64> {
    if dim < 3 {
        return Err(Error::Config(format!("dimension must be at least 3, got {dim}")));
    }
    if !(theta > 0.0 && radius > theta) {
        return Err(Error::Domain("need 0 < theta < radius".into()));
    }
    let n = dim as f64;
    let q = critical_exponent(dim);
    let k = (n - 2.0) / 2.0;
    let t2 = theta * theta;
    // Radial integrands: |U'|^2 r^{N-1} and U^{2*} r^{N-1}.
    let grad = |r: f64| {
        let d = (n - 2.0) * r * (t2 + r * r).powf(-k - 1.0);
        d * d * r.powf(n - 1.0)
    };
    let mass = |r: f64| (t2 + r * r).powf(-k * q) * r.powf(n - 1.0);
    let geometric = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, panels: usize| {
        let ratio = (hi / lo).powf(1.0 / panels as f64);
        let mut s = 0.0;
        let mut a = lo;
        for _ in 0..panels {
            let b = a * ratio;
            s += gauss4(a, b).iter().map(|&(x, w)| w * f(x)).sum::<f64>();
            a = b;
        }
        s
    };
    let integral = |f: &dyn Fn(f64) -> f64| {
        let core = 1e-6 * theta;
        let head: f64 = (0..16)
            .map(|i| {
                let (a, b) = (core * i as f64 / 16.0, core * (i + 1) as f64 / 16.0);
                gauss4(a, b).iter().map(|&(x, w)| w * f(x)).sum::<f64>()
            })
            .sum();
        let ball = geometric(f, core, radius, 4000);
        let tail_f = |t: f64| f(radius / t) * radius / (t * t);
        let tail = geometric(&tail_f, 1e-12, 1.0, 4000);
        head + ball + tail
    };
    let omega = sphere_area(dim);
    let e = omega * integral(&grad);
    let m = omega * integral(&mass);
    Ok(e / m.powf(2.0 / q))
}

/// `pi N (N-2) (Gamma(N/2) / Gamma(N))^{2/N}`.
pub fn sobolev_constant_closed_form(dim: usize) -> f64 {
    let n = dim as f64;
    PI * n * (n - 2.0) * (gamma(n / 2.0) / gamma(n)).powf(2.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{embed_radial, AngularGrading, AxiGrid, Grading, RadialGrid, RadialGrading};
    use crate::testfun::{instanton, InstantonParams, Side};
    use std::sync::Arc;

    fn radial(n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(n, Grading::Uniform).unwrap())
    }

    #[test]
    fn tent_hardy_margin() {
        let g = radial(64);
        let v = DiscreteField::from_fn(GridRef::Radial(g), |r, _| (r - 1.0).min(3.0 - r));
        let m = hardy_margin(&v, 2.0).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12, "{m}");
        let z = DiscreteField::zeros(v.grid().clone());
        assert_eq!(hardy_margin(&z, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_power_integral_matches_quadrature() {
        for &(a, b, p) in &[(0.3, 1.2, 3.0), (-0.5, 0.7, 2.5), (1.0, 1.0, 4.0), (0.0, -2.0, 2.2)] {
            let n = 100_000;
            let h = 0.37;
            let mut s = 0.0;
            for k in 0..n {
                let t = (k as f64 + 0.5) / n as f64;
                s += (a + (b - a) * t).abs().powf(p) * h / n as f64;
            }
            let exact = linear_power_integral(a, b, h, p);
            assert!((exact - s).abs() < 1e-8 * s.max(1e-3), "{a} {b} {p}: {exact} vs {s}");
        }
    }

    #[test]
    fn balance_function_shape() {
        assert!((balance_f(1.0, 4.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        // f(x) - 1 ~ x^{2/p} near 0, so the 1e-4 check holds for p <= 4.
        for p in [2.5, 3.0, 4.0] {
            assert!((balance_f(1e-8, p).unwrap() - 1.0).abs() < 1e-4);
            assert!((balance_f(1e8, p).unwrap() - 1.0).abs() < 1e-4);
        }
        assert!(balance_f(0.0, 4.0).is_err());
        assert!(balance_f(-1.0, 4.0).is_err());
    }

    #[test]
    fn sobolev_constant_matches_closed_form() {
        let s3 = sobolev_constant(3).unwrap();
        assert!((s3 - 5.4779).abs() < 1e-4, "{s3}");
        assert!((s3 / sobolev_constant_closed_form(3) - 1.0).abs() < 1e-8);
        let s4 = sobolev_constant(4).unwrap();
        assert!((s4 / sobolev_constant_closed_form(4) - 1.0).abs() < 1e-8);
        let doubled = sobolev_constant_with(3, 1.0, 2000.0).unwrap();
        assert!((doubled - s3).abs() < 1e-4 * s3);
        for theta in [0.5, 2.0] {
            let v = sobolev_constant_with(3, theta, 1000.0).unwrap();
            assert!((v - s3).abs() < 1e-6 * s3);
        }
    }

    fn axi() -> Arc<AxiGrid> {
        Arc::new(AxiGrid::new(96, 48, Grading::Graded(RadialGrading::AXI_DEFAULT), AngularGrading::POLAR_DEFAULT).unwrap())
    }

    #[test]
    fn asymmetry_of_radial_and_bubble_fields() {
        let g = axi();
        let rg = Arc::new(g.radial().clone());
        let v = DiscreteField::from_fn(GridRef::Radial(rg), |r, _| (r - 1.0) * (3.0 - r));
        let w = embed_radial(&v, &g).unwrap();
        assert!(asymmetry_index(&w).unwrap() < 1e-12);
        let b = instanton(&InstantonParams::new(1e-2, Side::Outer).unwrap(), &g);
        let a = asymmetry_index(&b).unwrap();
        assert!(a >= 0.5, "{a}");
        assert!((asymmetry_index(&b.scaled(3.7)).unwrap() - a).abs() < 1e-12);
        assert!(asymmetry_index(&DiscreteField::zeros(w.grid().clone())).is_err());
    }

    #[test]
    fn fractions_are_monotone_and_saturate() {
        let g = axi();
        let b = instanton(&InstantonParams::new(1e-2, Side::Outer).unwrap(), &g);
        let mut prev = 0.0;
        for k in 1..=80 {
            let rho = 0.1 * k as f64;
            let fr = boundary_fraction(&b, rho).unwrap();
            assert!(fr >= prev && (0.0..=1.0).contains(&fr));
            prev = fr;
        }
        assert_eq!(boundary_fraction(&b, 6.0).unwrap(), 1.0);
    }

    #[test]
    fn sentinel_for_inner_band_field() {
        let g = radial(128);
        let u = DiscreteField::from_fn(GridRef::Radial(g), |r, _| if r < 1.2 { (r - 1.0) * (1.2 - r) } else { 0.0 });
        let params = ProblemParams::new(3, 2.0, 4.0).unwrap();
        let rep = concentration_report(&u, params, CutoffSpec::default()).unwrap();
        assert!(rep.lambda.is_infinite() && rep.xi.is_infinite());
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"lambda\":\"inf\""));
        let back: ConcentrationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn reflection_inverts_measure_free_lambda() {
        let g = radial(256);
        let f = |r: f64| (r - 1.0) * (3.0 - r) * (1.0 + 2.0 * (r - 1.0)).powi(2);
        let u = DiscreteField::from_fn(GridRef::Radial(g.clone()), move |r, _| f(r));
        let refl = DiscreteField::from_fn(GridRef::Radial(g), move |r, _| f(4.0 - r));
        let spec = CutoffSpec::default();
        let l = lambda_measure_free(&u, 3.0, 4.0, spec).unwrap();
        let lr = lambda_measure_free(&refl, 3.0, 4.0, spec).unwrap();
        assert!((l * lr - 1.0).abs() < 1e-6, "{l} {lr}");
    }
}

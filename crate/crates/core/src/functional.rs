//! Dirichlet energy, weighted `L^p` mass and the Rayleigh quotient
//!
//! ```text
//!   R(u) = ∫|∇u|² / (∫ Psi_alpha |u|^p)^{2/p}
//! ```
//!
//! on P1 (radial) and tensor-product bilinear (axisymmetric) elements, together
//! with the gradient of `R`, the split of the energy at `|x| = 2`, and the
//! weak-form defect of `-Δu = level^{p/2} Psi_alpha u^{p-1}`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sphere_area, AxiGrid, DiscreteField, GridDescriptor, GridRef, ProblemParams, RadialGrid};
use crate::linalg::{BandLu, Cholesky, SymBand};
use crate::weight::{gauss4, WeightSpec};

/// Which level a report stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelTag {
    Raw,
    SRad,
    S,
    T,
    Lambda,
    Beta,
}

/// Energy, weighted mass and quotient of one field, with solver metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighReport {
    pub dirichlet_energy: f64,
    pub weighted_pnorm_p: f64,
    pub quotient: f64,
    pub level_tag: LevelTag,
    pub iterations: usize,
    pub residual: f64,
    pub grid: GridDescriptor,
}

/// Stiffness data and element geometry of one grid; independent of `alpha` and `p`.
pub struct Discretization {
    grid: GridRef,
    dim: usize,
    first_free: usize,
    n_free: usize,
    bands: OnceLock<Bands>,
    chol: OnceLock<Cholesky>,
    geom: ElementGeometry,
}

struct Bands {
    full: SymBand,
    minus: SymBand,
    plus: SymBand,
}

enum ElementGeometry {
    Radial {
        /// `omega * ∫ r^{N-1} dr / h^2` per cell.
        coef: Vec<f64>,
        mid_cell: usize,
    },
    Axi {
        /// `∫ r^2 dr / h^2` per radial cell.
        ar: Vec<f64>,
        /// `h / 3` per radial cell (consistent mass without the measure).
        mr: Vec<f64>,
        /// Local angular mass `[m11, m12, m22]` against `sin(theta)`.
        mt: Vec<[f64; 3]>,
        /// `∫ sin(theta) dtheta / h^2` per angular cell.
        at: Vec<f64>,
        mid_cell: usize,
    },
}

/// Per-cell Dirichlet energies: a flat vector, radial-major for axisymmetric grids.
#[derive(Debug, Clone)]
pub struct CellEnergies {
    pub values: Vec<f64>,
    /// Number of angular cells (1 for radial grids).
    pub angular_cells: usize,
    /// First radial cell of the outer half.
    pub mid_cell: usize,
}

impl CellEnergies {
    pub fn total(&self) -> f64 {
        let (m, p) = self.halves();
        m + p
    }

    /// `(E_minus, E_plus)`.
    pub fn halves(&self) -> (f64, f64) {
        let split = self.mid_cell * self.angular_cells;
        let minus: f64 = self.values[..split].iter().sum();
        let plus: f64 = self.values[split..].iter().sum();
        (minus, plus)
    }
}

impl Discretization {
    pub fn radial(grid: Arc<RadialGrid>, dim: usize) -> Result<Arc<Self>> {
        if dim < 3 {
            return Err(Error::Config(format!("dimension must be at least 3, got {dim}")));
        }
        let r = grid.nodes();
        let omega = sphere_area(dim);
        let nd = dim as i32;
        let coef: Vec<f64> = r
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let h = b - a;
                omega * (b.powi(nd) - a.powi(nd)) / (dim as f64 * h * h)
            })
            .collect();
        let mid_cell = grid.mid_index();
        let n_free = r.len() - 2;
        Ok(Arc::new(Self {
            grid: GridRef::Radial(grid),
            dim,
            first_free: 1,
            n_free,
            bands: OnceLock::new(),
            chol: OnceLock::new(),
            geom: ElementGeometry::Radial { coef, mid_cell },
        }))
    }

    pub fn axi(grid: Arc<AxiGrid>) -> Result<Arc<Self>> {
        let rs = grid.rs();
        let ts = grid.thetas();
        let ar: Vec<f64> = rs
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let h = b - a;
                (b * b * b - a * a * a) / (3.0 * h * h)
            })
            .collect();
        let mr: Vec<f64> = rs.windows(2).map(|w| (w[1] - w[0]) / 3.0).collect();
        let mut mt = Vec::with_capacity(ts.len() - 1);
        let mut at = Vec::with_capacity(ts.len() - 1);
        for w in ts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            let mut m = [0.0; 3];
            for (t, wq) in gauss4(a, b) {
                let pa = (b - t) / h;
                let pb = 1.0 - pa;
                let ws = wq * t.sin();
                m[0] += ws * pa * pa;
                m[1] += ws * pa * pb;
                m[2] += ws * pb * pb;
            }
            mt.push(m);
            at.push((a.cos() - b.cos()) / (h * h));
        }
        let mid_cell = grid.radial().mid_index();
        let stride = grid.stride();
        let n_free = (rs.len() - 2) * stride;
        Ok(Arc::new(Self {
            grid: GridRef::Axi(grid),
            dim: 3,
            first_free: stride,
            n_free,
            bands: OnceLock::new(),
            chol: OnceLock::new(),
            geom: ElementGeometry::Axi { ar, mr, mt, at, mid_cell },
        }))
    }

    /// Assembles `(K, K_minus, K_plus)` on the free nodes.
    fn assemble(&self) -> Bands {
        let (kp, km) = match &self.geom {
            ElementGeometry::Radial { coef, mid_cell } => {
                let n = self.n_free;
                let mut kp = SymBand::zeros(n, 1);
                let mut km = SymBand::zeros(n, 1);
                for (c, &k) in coef.iter().enumerate() {
                    let m = if c >= *mid_cell { &mut kp } else { &mut km };
                    // Free index of node c is c - 1.
                    let left = c.checked_sub(1);
                    let right = (c < n).then_some(c);
                    if let Some(i) = left {
                        m.add(i, i, k);
                    }
                    if let Some(j) = right {
                        m.add(j, j, k);
                    }
                    if let (Some(i), Some(j)) = (left, right) {
                        m.add(j, i, -k);
                    }
                }
                (kp, km)
            }
            ElementGeometry::Axi { ar, mr, mt, at, mid_cell } => {
                let stride = self.first_free;
                let nrc = ar.len();
                let bw = stride + 1;
                let mut kp = SymBand::zeros(self.n_free, bw);
                let mut km = SymBand::zeros(self.n_free, bw);
                let tp = 2.0 * PI;
                for c in 0..nrc {
                    let k = if c >= *mid_cell { &mut kp } else { &mut km };
                    let arl = [[ar[c], -ar[c]], [-ar[c], ar[c]]];
                    let hm = mr[c] / 2.0;
                    let mrl = [[2.0 * hm, hm], [hm, 2.0 * hm]];
                    for d in 0..mt.len() {
                        let m = mt[d];
                        let mtl = [[m[0], m[1]], [m[1], m[2]]];
                        let atl = [[at[d], -at[d]], [-at[d], at[d]]];
                        let nodes = [(c, d), (c, d + 1), (c + 1, d), (c + 1, d + 1)];
                        for a in 0..4 {
                            let (ia, ja) = (a / 2, a % 2);
                            let (ra, ta) = nodes[a];
                            if ra == 0 || ra == nrc {
                                continue;
                            }
                            let fa = (ra - 1) * stride + ta;
                            for b in 0..=a {
                                let (ib, jb) = (b / 2, b % 2);
                                let (rb, tb) = nodes[b];
                                if rb == 0 || rb == nrc {
                                    continue;
                                }
                                let fb = (rb - 1) * stride + tb;
                                k.add(fa, fb, tp * (arl[ia][ib] * mtl[ja][jb] + mrl[ia][ib] * atl[ja][jb]));
                            }
                        }
                    }
                }
                (kp, km)
            }
        };
        Bands { full: kp.combine(1.0, &km, 1.0), minus: km, plus: kp }
    }

    /// Builds the discretization matching a field's grid.
    pub fn for_grid(grid: &GridRef, dim: usize) -> Result<Arc<Self>> {
        match grid {
            GridRef::Radial(g) => Self::radial(g.clone(), dim),
            GridRef::Axi(g) => {
                if dim != 3 {
                    return Err(Error::Config("the axisymmetric reduction is only available for N = 3".into()));
                }
                Self::axi(g.clone())
            }
        }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    fn bands(&self) -> &Bands {
        self.bands.get_or_init(|| self.assemble())
    }

    pub fn stiffness(&self) -> &SymBand {
        &self.bands().full
    }

    /// `(K_minus, K_plus)`: stiffness of the cells inside and outside `|x| = 2`.
    pub fn stiffness_halves(&self) -> (&SymBand, &SymBand) {
        let b = self.bands();
        (&b.minus, &b.plus)
    }

    pub(crate) fn cholesky(&self) -> &Cholesky {
        self.chol.get_or_init(|| self.stiffness().cholesky().expect("stiffness matrix is positive definite"))
    }

    pub(crate) fn check_field(&self, u: &DiscreteField) -> Result<()> {
        if !self.grid.same_as(u.grid()) {
            return Err(Error::GridCompatibility("field does not live on this discretization's grid".into()));
        }
        Ok(())
    }

    /// Free (non-Dirichlet) coefficients of `u`.
    pub fn free<'a>(&self, u: &'a DiscreteField) -> &'a [f64] {
        &u.values()[self.first_free..self.first_free + self.n_free]
    }

    /// Field with the given free coefficients and zero boundary values.
    pub fn field_from_free(&self, free: &[f64]) -> DiscreteField {
        assert_eq!(free.len(), self.n_free);
        let mut v = vec![0.0; self.grid.node_count()];
        v[self.first_free..self.first_free + self.n_free].copy_from_slice(free);
        DiscreteField::from_values_unchecked(self.grid.clone(), v)
    }

    /// `K u` on the free coefficients.
    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_free];
        self.stiffness().matvec(u, &mut y);
        y
    }

    /// `K^{-1} b` on the free coefficients.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.cholesky().solve(b)
    }

    /// `sqrt(r^T K^{-1} r)`: the discrete `H^{-1}` norm of a residual.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        let x = self.solve(r);
        x.iter().zip(r).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// Dirichlet energy cell by cell.
    pub fn cell_energies(&self, u: &DiscreteField) -> CellEnergies {
        let v = u.values();
        match &self.geom {
            ElementGeometry::Radial { coef, mid_cell } => {
                let values = coef.iter().enumerate().map(|(c, k)| k * (v[c + 1] - v[c]).powi(2)).collect();
                CellEnergies { values, angular_cells: 1, mid_cell: *mid_cell }
            }
            ElementGeometry::Axi { ar, mr, mt, at, mid_cell } => {
                let GridRef::Axi(g) = &self.grid else { unreachable!() };
                let s = g.stride();
                let ntc = s - 1;
                let mut values = Vec::with_capacity(ar.len() * ntc);
                for c in 0..ar.len() {
                    let row0 = &v[c * s..(c + 1) * s];
                    let row1 = &v[(c + 1) * s..(c + 2) * s];
                    for d in 0..ntc {
                        let dj0 = row1[d] - row0[d];
                        let dj1 = row1[d + 1] - row0[d + 1];
                        let m = mt[d];
                        let radial = ar[c] * (m[0] * dj0 * dj0 + 2.0 * m[1] * dj0 * dj1 + m[2] * dj1 * dj1);
                        let di0 = row0[d + 1] - row0[d];
                        let di1 = row1[d + 1] - row1[d];
                        let angular = at[d] * mr[c] * (di0 * di0 + di0 * di1 + di1 * di1);
                        values.push(2.0 * PI * (radial + angular));
                    }
                }
                CellEnergies { values, angular_cells: ntc, mid_cell: *mid_cell }
            }
        }
    }

    /// Solid angle weight `2 pi ∫ sin(theta)` of each angular cell, computed
    /// with the same rule as the element mass (axisymmetric grids only).
    pub fn angular_cell_measure(&self) -> Option<Vec<f64>> {
        match &self.geom {
            ElementGeometry::Axi { mt, .. } => {
                Some(mt.iter().map(|m| 2.0 * PI * (m[0] + 2.0 * m[1] + m[2])).collect())
            }
            ElementGeometry::Radial { .. } => None,
        }
    }
}

/// Quadrature point along the radius: owning cell, weight (measure and `Psi`
/// included) and the value of the left hat function.
#[derive(Debug, Clone, Copy)]
struct RadialPoint {
    w: f64,
    phi_a: f64,
}

/// The Rayleigh functional `R_{alpha,p}` on a fixed discretization.
pub struct Functional {
    disc: Arc<Discretization>,
    params: ProblemParams,
    weight: WeightSpec,
    /// Points of radial cell `c` are `rpts[rptr[c]..rptr[c + 1]]`.
    rpts: Vec<RadialPoint>,
    rptr: Vec<usize>,
    /// Angular points per angular cell: `(w sin(theta), psi_a)`.
    tpts: Vec<[(f64, f64); 4]>,
}

/// Weighted mass and its first variation at one field.
pub(crate) struct MassEval {
    /// `∫ Psi |u|^p`.
    pub mass: f64,
    /// `∫ Psi |u|^{p-2} u phi_i` for every free node.
    pub force: Vec<f64>,
}

impl Functional {
    pub fn new(disc: Arc<Discretization>, params: ProblemParams) -> Result<Self> {
        if params.dim != disc.dim {
            return Err(Error::Config(format!(
                "dimension {} does not match the discretization ({})",
                params.dim, disc.dim
            )));
        }
        if !(params.p >= 2.0) {
            return Err(Error::Domain(format!("p must be at least 2, got {}", params.p)));
        }
        let weight = WeightSpec::new(params.alpha)?;
        let rnodes = disc.grid.radial_nodes();
        let (measure, rpow): (f64, i32) = match disc.geom {
            ElementGeometry::Radial { .. } => (sphere_area(disc.dim), disc.dim as i32 - 1),
            ElementGeometry::Axi { .. } => (2.0 * PI, 2),
        };
        let mut rpts = Vec::new();
        let mut rptr = Vec::with_capacity(rnodes.len());
        for c in 0..rnodes.len() - 1 {
            rptr.push(rpts.len());
            let (a, b) = (rnodes[c], rnodes[c + 1]);
            let m = weight.subdivisions(a, b);
            if m == 0 {
                continue;
            }
            let hs = (b - a) / m as f64;
            for s in 0..m {
                let sa = a + hs * s as f64;
                for (r, w) in gauss4(sa, sa + hs) {
                    let psi = weight.eval_unchecked(r);
                    if psi == 0.0 {
                        continue;
                    }
                    rpts.push(RadialPoint { w: measure * w * psi * r.powi(rpow), phi_a: (b - r) / (b - a) });
                }
            }
        }
        rptr.push(rpts.len());
        let tpts = match &disc.grid {
            GridRef::Axi(g) => g
                .thetas()
                .windows(2)
                .map(|t| {
                    let mut pts = [(0.0, 0.0); 4];
                    for (k, (th, w)) in gauss4(t[0], t[1]).into_iter().enumerate() {
                        pts[k] = (w * th.sin(), (t[1] - th) / (t[1] - t[0]));
                    }
                    pts
                })
                .collect(),
            GridRef::Radial(_) => Vec::new(),
        };
        Ok(Self { disc, params, weight, rpts, rptr, tpts })
    }

    /// Convenience constructor that assembles the discretization for `grid`.
    pub fn on_grid(grid: &GridRef, params: ProblemParams) -> Result<Self> {
        Self::new(Discretization::for_grid(grid, params.dim)?, params)
    }

    pub fn params(&self) -> ProblemParams {
        self.params
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn grid(&self) -> &GridRef {
        &self.disc.grid
    }

    pub fn dirichlet_energy(&self, u: &DiscreteField) -> Result<f64> {
        self.disc.check_field(u)?;
        Ok(self.disc.cell_energies(u).total())
    }

    /// `(E_plus, E_minus)`: energies of the outer half `2 < |x| < 3` and the
    /// inner half `1 < |x| < 2`.
    pub fn halfspace_energies(&self, u: &DiscreteField) -> Result<(f64, f64)> {
        self.disc.check_field(u)?;
        let (m, p) = self.disc.cell_energies(u).halves();
        Ok((p, m))
    }

    /// `∫ Psi_alpha |u|^p`.
    pub fn weighted_pnorm_p(&self, u: &DiscreteField) -> Result<f64> {
        self.disc.check_field(u)?;
        Ok(self.mass(u.values(), false).mass)
    }

    /// Weighted mass and, when `with_force`, its nodal first variation.
    pub(crate) fn mass(&self, v: &[f64], with_force: bool) -> MassEval {
        let p = self.params.p;
        let pm2 = p - 2.0;
        let n_free = self.disc.n_free;
        let first = self.disc.first_free;
        let mut force = if with_force { vec![0.0; n_free] } else { Vec::new() };
        let mut mass = 0.0;
        let linear = pm2 == 0.0;
        let pw = |x: f64| -> (f64, f64) {
            // (|x|^p, |x|^{p-2} x)
            if linear {
                (x * x, x)
            } else {
                let a = x.abs();
                if a == 0.0 {
                    return (0.0, 0.0);
                }
                let q = a.powf(pm2);
                (q * a * a, q * x)
            }
        };
        let mut add_force = |node: usize, val: f64| {
            if node >= first && node < first + n_free {
                force[node - first] += val;
            }
        };
        match &self.disc.grid {
            GridRef::Radial(_) => {
                for c in 0..self.rptr.len() - 1 {
                    let (ua, ub) = (v[c], v[c + 1]);
                    if ua == 0.0 && ub == 0.0 {
                        continue;
                    }
                    let (mut fa, mut fb) = (0.0, 0.0);
                    for pt in &self.rpts[self.rptr[c]..self.rptr[c + 1]] {
                        let x = pt.phi_a * ua + (1.0 - pt.phi_a) * ub;
                        let (xp, xf) = pw(x);
                        mass += pt.w * xp;
                        if with_force {
                            fa += pt.w * xf * pt.phi_a;
                            fb += pt.w * xf * (1.0 - pt.phi_a);
                        }
                    }
                    if with_force {
                        add_force(c, fa);
                        add_force(c + 1, fb);
                    }
                }
            }
            GridRef::Axi(g) => {
                let s = g.stride();
                for c in 0..self.rptr.len() - 1 {
                    let pts = &self.rpts[self.rptr[c]..self.rptr[c + 1]];
                    if pts.is_empty() {
                        continue;
                    }
                    let row0 = &v[c * s..(c + 1) * s];
                    let row1 = &v[(c + 1) * s..(c + 2) * s];
                    for d in 0..s - 1 {
                        let (u00, u01, u10, u11) = (row0[d], row0[d + 1], row1[d], row1[d + 1]);
                        if u00 == 0.0 && u01 == 0.0 && u10 == 0.0 && u11 == 0.0 {
                            continue;
                        }
                        let tp = &self.tpts[d];
                        let mut loc = [0.0; 4];
                        for rp in pts {
                            let pa = rp.phi_a;
                            let pb = 1.0 - pa;
                            let v0 = pa * u00 + pb * u10;
                            let v1 = pa * u01 + pb * u11;
                            let mut acc = 0.0;
                            let (mut g0, mut g1) = (0.0, 0.0);
                            for &(wt, qa) in tp {
                                let x = qa * v0 + (1.0 - qa) * v1;
                                let (xp, xf) = pw(x);
                                acc += wt * xp;
                                if with_force {
                                    g0 += wt * xf * qa;
                                    g1 += wt * xf * (1.0 - qa);
                                }
                            }
                            mass += rp.w * acc;
                            if with_force {
                                loc[0] += rp.w * pa * g0;
                                loc[1] += rp.w * pa * g1;
                                loc[2] += rp.w * pb * g0;
                                loc[3] += rp.w * pb * g1;
                            }
                        }
                        if with_force {
                            add_force(c * s + d, loc[0]);
                            add_force(c * s + d + 1, loc[1]);
                            add_force((c + 1) * s + d, loc[2]);
                            add_force((c + 1) * s + d + 1, loc[3]);
                        }
                    }
                }
            }
        }
        MassEval { mass, force }
    }

    pub fn rayleigh(&self, u: &DiscreteField) -> Result<RayleighReport> {
        self.disc.check_field(u)?;
        if u.is_zero() {
            return Err(Error::Degenerate("Rayleigh quotient of the zero field".into()));
        }
        let e = self.disc.cell_energies(u).total();
        let m = self.mass(u.values(), false).mass;
        if !(m > 0.0) {
            return Err(Error::Degenerate("weighted mass vanishes on the grid".into()));
        }
        Ok(RayleighReport {
            dirichlet_energy: e,
            weighted_pnorm_p: m,
            quotient: e / m.powf(2.0 / self.params.p),
            level_tag: LevelTag::Raw,
            iterations: 0,
            residual: 0.0,
            grid: self.disc.grid.descriptor(),
        })
    }

    /// Quotient only; skips the report bookkeeping.
    pub fn quotient(&self, u: &DiscreteField) -> Result<f64> {
        Ok(self.rayleigh(u)?.quotient)
    }

    /// Euclidean gradient of `R` with respect to the nodal coefficients
    /// (zero on the Dirichlet nodes).
    pub fn gradient(&self, u: &DiscreteField) -> Result<DiscreteField> {
        self.disc.check_field(u)?;
        let st = self.state(u)?;
        Ok(self.disc.field_from_free(&st.gradient()))
    }

    /// Energy, mass, `K u` and the force at `u`.
    pub(crate) fn state(&self, u: &DiscreteField) -> Result<State> {
        if u.is_zero() {
            return Err(Error::Degenerate("gradient at the zero field".into()));
        }
        let free = self.disc.free(u);
        let ku = self.disc.apply_stiffness(free);
        let energy: f64 = ku.iter().zip(free).map(|(a, b)| a * b).sum();
        let MassEval { mass, force } = self.mass(u.values(), true);
        if !(mass > 0.0) {
            return Err(Error::Degenerate("weighted mass vanishes on the grid".into()));
        }
        Ok(State { energy, mass, ku, force, p: self.params.p })
    }

    /// `|| K u - level^{p/2} f(u) ||` in the discrete `H^{-1}` norm, where
    /// `f(u) = Psi_alpha |u|^{p-2} u` tested against the hat functions.
    pub fn residual_pde(&self, u: &DiscreteField, level: f64) -> Result<f64> {
        self.disc.check_field(u)?;
        if u.is_zero() {
            return Err(Error::Degenerate("PDE residual of the zero field".into()));
        }
        if !(level >= 0.0) {
            return Err(Error::Domain(format!("level must be nonnegative, got {level}")));
        }
        let free = self.disc.free(u);
        let ku = self.disc.apply_stiffness(free);
        let scale = level.powf(self.params.p / 2.0);
        let r: Vec<f64> = if scale == 0.0 {
            ku
        } else {
            let f = self.mass(u.values(), true).force;
            ku.iter().zip(&f).map(|(a, b)| a - scale * b).collect()
        };
        Ok(self.disc.dual_norm(&r))
    }

    /// Rescales a minimizer normalized by `∫ Psi |u|^p = 1` into the form with
    /// unit Dirichlet energy, which solves `-Δu = S^{p/2} Psi u^{p-1}`.
    pub fn to_unit_energy(&self, u: &DiscreteField) -> Result<DiscreteField> {
        let e = self.dirichlet_energy(u)?;
        if !(e > 0.0) {
            return Err(Error::Degenerate("zero Dirichlet energy".into()));
        }
        Ok(u.scaled(1.0 / e.sqrt()))
    }

    /// Rescales a critical point of `R` into a solution of `-Δu = Psi u^{p-1}`:
    /// multiply the unit-mass field by `R^{1/(p-2)}`.
    pub fn to_pde_solution(&self, u: &DiscreteField) -> Result<DiscreteField> {
        let rep = self.rayleigh(u)?;
        let p = self.params.p;
        if p == 2.0 {
            return Err(Error::Domain("no scaling to a PDE solution in the linear case".into()));
        }
        let unit = u.scaled(1.0 / rep.weighted_pnorm_p.powf(1.0 / p));
        Ok(unit.scaled(rep.quotient.powf(1.0 / (p - 2.0))))
    }

    /// Normalizes `u` to unit weighted mass.
    pub fn normalize(&self, u: &DiscreteField) -> Result<DiscreteField> {
        let m = self.weighted_pnorm_p(u)?;
        if !(m > 0.0) {
            return Err(Error::Degenerate("cannot normalize a field with zero weighted mass".into()));
        }
        Ok(u.scaled(m.powf(-1.0 / self.params.p)))
    }

    /// Jacobian `K - (p-1) M(U)` of `U -> K U - f(U)` on the free nodes.
    pub(crate) fn pde_jacobian(&self, v: &[f64]) -> SymBand {
        let p = self.params.p;
        let mut jac = self.disc.stiffness().clone();
        let first = self.disc.first_free;
        let n_free = self.disc.n_free;
        let pm2 = p - 2.0;
        let coeff = |x: f64| -> f64 {
            let a = x.abs();
            if pm2 == 0.0 {
                1.0
            } else if a == 0.0 {
                0.0
            } else {
                a.powf(pm2)
            }
        };
        let scale = -(p - 1.0);
        let mut add = |a: usize, b: usize, val: f64| {
            let in_range = |k: usize| k >= first && k < first + n_free;
            if in_range(a) && in_range(b) && a >= b {
                jac.add(a - first, b - first, val);
            }
        };
        match &self.disc.grid {
            GridRef::Radial(_) => {
                for c in 0..self.rptr.len() - 1 {
                    let (ua, ub) = (v[c], v[c + 1]);
                    if ua == 0.0 && ub == 0.0 {
                        continue;
                    }
                    let mut m = [0.0; 3];
                    for pt in &self.rpts[self.rptr[c]..self.rptr[c + 1]] {
                        let pa = pt.phi_a;
                        let pb = 1.0 - pa;
                        let w = pt.w * coeff(pa * ua + pb * ub);
                        m[0] += w * pa * pa;
                        m[1] += w * pa * pb;
                        m[2] += w * pb * pb;
                    }
                    add(c, c, scale * m[0]);
                    add(c + 1, c, scale * m[1]);
                    add(c + 1, c + 1, scale * m[2]);
                }
            }
            GridRef::Axi(g) => {
                let s = g.stride();
                for c in 0..self.rptr.len() - 1 {
                    let pts = &self.rpts[self.rptr[c]..self.rptr[c + 1]];
                    if pts.is_empty() {
                        continue;
                    }
                    for d in 0..s - 1 {
                        let nodes = [c * s + d, c * s + d + 1, (c + 1) * s + d, (c + 1) * s + d + 1];
                        let u = [v[nodes[0]], v[nodes[1]], v[nodes[2]], v[nodes[3]]];
                        if u.iter().all(|&x| x == 0.0) {
                            continue;
                        }
                        let mut m = [[0.0; 4]; 4];
                        for rp in pts {
                            let pa = rp.phi_a;
                            let pb = 1.0 - pa;
                            for &(wt, qa) in &self.tpts[d] {
                                let qb = 1.0 - qa;
                                let phi = [pa * qa, pa * qb, pb * qa, pb * qb];
                                let x = phi[0] * u[0] + phi[1] * u[1] + phi[2] * u[2] + phi[3] * u[3];
                                let w = rp.w * wt * coeff(x);
                                if w == 0.0 {
                                    continue;
                                }
                                for a in 0..4 {
                                    for b in 0..=a {
                                        m[a][b] += w * phi[a] * phi[b];
                                    }
                                }
                            }
                        }
                        for a in 0..4 {
                            for b in 0..=a {
                                let (na, nb) = if nodes[a] >= nodes[b] { (nodes[a], nodes[b]) } else { (nodes[b], nodes[a]) };
                                add(na, nb, scale * m[a][b]);
                            }
                        }
                    }
                }
            }
        }
        jac
    }

    /// Newton iteration on `K U = f(U)` started from the PDE scaling of `u`.
    /// Returns the refined field normalized to unit weighted mass, and the
    /// final relative defect.
    pub(crate) fn newton_polish(&self, u: &DiscreteField, max_steps: usize, rtol: f64) -> Result<(DiscreteField, f64)> {
        let mut big = self.to_pde_solution(u)?;
        let mut rel = f64::INFINITY;
        for _ in 0..max_steps {
            let free = self.disc.free(&big).to_vec();
            let ku = self.disc.apply_stiffness(&free);
            let f = self.mass(big.values(), true).force;
            let res: Vec<f64> = ku.iter().zip(&f).map(|(a, b)| a - b).collect();
            let norm_ku = self.disc.dual_norm(&ku);
            rel = self.disc.dual_norm(&res) / norm_ku.max(f64::MIN_POSITIVE);
            log::debug!("newton defect {rel:.3e}");
            if rel <= rtol {
                break;
            }
            let jac = self.pde_jacobian(big.values());
            let lu = BandLu::from_sym(&jac).factor()?;
            let mut step = res.clone();
            lu.solve_in_place(&mut step);
            // Damped update: accept the largest step in {1, 1/2, ...} that lowers the defect.
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..8 {
                let trial: Vec<f64> = free.iter().zip(&step).map(|(x, s)| x - t * s).collect();
                let cand = self.disc.field_from_free(&trial);
                if cand.is_zero() {
                    t *= 0.5;
                    continue;
                }
                let kc = self.disc.apply_stiffness(&trial);
                let fc = self.mass(cand.values(), true).force;
                let rc: Vec<f64> = kc.iter().zip(&fc).map(|(a, b)| a - b).collect();
                let relc = self.disc.dual_norm(&rc) / self.disc.dual_norm(&kc).max(f64::MIN_POSITIVE);
                log::trace!("newton trial t={t} defect {relc:.3e}");
                if relc < rel {
                    big = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                log::debug!("newton stalled at defect {rel:.3e}");
                break;
            }
        }
        let normalized = self.normalize(&big)?;
        Ok((normalized, rel))
    }
}

/// Quantities shared by the gradient, the residual and the solvers.
pub(crate) struct State {
    pub energy: f64,
    pub mass: f64,
    pub ku: Vec<f64>,
    pub force: Vec<f64>,
    pub p: f64,
}

impl State {
    pub fn quotient(&self) -> f64 {
        self.energy / self.mass.powf(2.0 / self.p)
    }

    /// `∇R = (2 / N^2) (K u - R m^{2/p - 1} f)` with `N^2 = m^{2/p}`.
    pub fn gradient(&self) -> Vec<f64> {
        let n2 = self.mass.powf(2.0 / self.p);
        let r = self.energy / n2;
        let c = r * self.mass.powf(2.0 / self.p - 1.0);
        self.ku.iter().zip(&self.force).map(|(k, f)| 2.0 / n2 * (k - c * f)).collect()
    }
}

/// One-shot evaluation helpers that assemble a throwaway discretization.
pub fn dirichlet_energy(u: &DiscreteField, dim: usize) -> Result<f64> {
    let disc = Discretization::for_grid(u.grid(), dim)?;
    Ok(disc.cell_energies(u).total())
}

pub fn weighted_pnorm_p(u: &DiscreteField, params: ProblemParams) -> Result<f64> {
    Functional::on_grid(u.grid(), params)?.weighted_pnorm_p(u)
}

pub fn rayleigh(u: &DiscreteField, params: ProblemParams) -> Result<RayleighReport> {
    Functional::on_grid(u.grid(), params)?.rayleigh(u)
}

pub fn halfspace_energies(u: &DiscreteField, dim: usize) -> Result<(f64, f64)> {
    let disc = Discretization::for_grid(u.grid(), dim)?;
    let (m, p) = disc.cell_energies(u).halves();
    Ok((p, m))
}

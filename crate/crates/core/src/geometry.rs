//! Grids on the annulus `1 < |x| < 3` in the radial (1-D) and axisymmetric
//! (2-D, `N = 3`) reductions, plus the piecewise-linear fields living on them.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INNER_RADIUS: f64 = 1.0;
pub const OUTER_RADIUS: f64 = 3.0;
pub const MID_RADIUS: f64 = 2.0;

/// Largest weight exponent accepted by the public API.
pub const MAX_ALPHA: f64 = 1000.0;

/// Dimension, weight exponent and nonlinearity exponent of one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub dim: usize,
    pub alpha: f64,
    pub p: f64,
}

impl ProblemParams {
    /// A nonlinear instance: `N >= 3`, `0 <= alpha <= 1000`, `2 < p < 2*`.
    pub fn new(dim: usize, alpha: f64, p: f64) -> Result<Self> {
        let params = Self { dim, alpha, p };
        params.check(false)?;
        Ok(params)
    }

    /// The linear validation instance `p = 2`.
    pub fn linear(dim: usize, alpha: f64) -> Result<Self> {
        let params = Self { dim, alpha, p: 2.0 };
        params.check(true)?;
        Ok(params)
    }

    /// Accepts `p = 2` as well, for callers that already know they want the
    /// validation path.
    pub fn with_validation(dim: usize, alpha: f64, p: f64) -> Result<Self> {
        let params = Self { dim, alpha, p };
        params.check(true)?;
        Ok(params)
    }

    fn check(&self, allow_linear: bool) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::Config(format!("dimension must be at least 3, got {}", self.dim)));
        }
        if !(self.alpha >= 0.0 && self.alpha <= MAX_ALPHA) {
            return Err(Error::Config(format!("alpha must lie in [0, {MAX_ALPHA}], got {}", self.alpha)));
        }
        let ts = self.two_star();
        let lower_ok = if allow_linear { self.p >= 2.0 } else { self.p > 2.0 };
        if !lower_ok || !(self.p < ts) {
            let lo = if allow_linear { "[2" } else { "(2" };
            return Err(Error::Config(format!("p must lie in {lo}, {ts}), got {}", self.p)));
        }
        Ok(())
    }

    /// Critical Sobolev exponent `2N/(N-2)`.
    pub fn two_star(&self) -> f64 {
        critical_exponent(self.dim)
    }

    pub fn is_linear(&self) -> bool {
        self.p == 2.0
    }
}

pub fn critical_exponent(dim: usize) -> f64 {
    2.0 * dim as f64 / (dim as f64 - 2.0)
}

/// Surface area of the unit sphere in `R^dim`.
pub fn sphere_area(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half)
}

/// Node density for the graded radial option: boundary layers at `r = 1, 3`
/// and a milder layer at the midpoint `r = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrading {
    /// Extra node density at `r = 1` and `r = 3`, relative to the bulk.
    pub boundary_factor: f64,
    pub boundary_width: f64,
    /// Extra node density at `r = 2`.
    pub midpoint_factor: f64,
    pub midpoint_width: f64,
}

impl RadialGrading {
    /// Grading used by the 1-D radial solves.
    pub const RADIAL_DEFAULT: Self =
        Self { boundary_factor: 20.0, boundary_width: 0.02, midpoint_factor: 1.0, midpoint_width: 0.05 };
    /// Grading used by the axisymmetric solves (fewer radial nodes, so stronger).
    pub const AXI_DEFAULT: Self =
        Self { boundary_factor: 100.0, boundary_width: 0.01, midpoint_factor: 4.0, midpoint_width: 0.02 };

    /// Nominal ratio between bulk spacing and spacing at the outer wall.
    pub fn factor(&self) -> f64 {
        1.0 + self.boundary_factor
    }

    fn density(&self, dist_wall: f64, dist_mid: f64) -> f64 {
        1.0 + self.boundary_factor * (-dist_wall / self.boundary_width).exp()
            + self.midpoint_factor * (-dist_mid / self.midpoint_width).exp()
    }

    /// Cumulative density on a half annulus, measured from the wall.
    fn cumulative(&self, s: f64) -> f64 {
        let (a, la) = (self.boundary_factor, self.boundary_width);
        let (b, lb) = (self.midpoint_factor, self.midpoint_width);
        s + a * la * (1.0 - (-s / la).exp()) + b * lb * ((-(1.0 - s) / lb).exp() - (-1.0 / lb).exp())
    }

    fn validate(&self) -> Result<()> {
        let ok = self.boundary_factor >= 0.0
            && self.midpoint_factor >= 0.0
            && self.boundary_width > 0.0
            && self.midpoint_width > 0.0
            && [self.boundary_factor, self.boundary_width, self.midpoint_factor, self.midpoint_width]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid radial grading {self:?}")))
        }
    }
}

/// Radial node distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grading {
    Uniform,
    Graded(RadialGrading),
}

impl Grading {
    pub fn graded() -> Self {
        Grading::Graded(RadialGrading::RADIAL_DEFAULT)
    }
}

/// Angular node distribution on `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngularGrading {
    Uniform,
    /// Density `1 + factor * exp(-theta / width)`: refines toward the pole
    /// `theta = 0`, where the boundary bubbles sit.
    Polar { factor: f64, width: f64 },
}

impl AngularGrading {
    pub const POLAR_DEFAULT: Self = AngularGrading::Polar { factor: 200.0, width: 0.01 };
}

/// Strictly increasing nodes `1 = r_0 < ... < r_n = 3` with `r = 2` a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    grading: Grading,
    mid_index: usize,
}

/// Minimum number of radial cells.
pub const MIN_RADIAL_CELLS: usize = 16;
/// Minimum number of angular cells.
pub const MIN_ANGULAR_CELLS: usize = 8;

impl RadialGrid {
    /// Builds a grid with `n` cells. Odd `n` is rounded up so that `r = 2`
    /// falls on a node.
    pub fn new(n: usize, grading: Grading) -> Result<Self> {
        if n < MIN_RADIAL_CELLS {
            return Err(Error::Config(format!("radial grid needs at least {MIN_RADIAL_CELLS} cells, got {n}")));
        }
        let half = n.div_ceil(2);
        if half * 2 != n {
            log::info!("radial cell count {n} is odd; using {} so that r = 2 is a node", 2 * half);
        }
        let inner = match grading {
            Grading::Uniform => (0..=half).map(|k| k as f64 / half as f64).collect::<Vec<_>>(),
            Grading::Graded(g) => {
                g.validate()?;
                graded_half(&g, half)
            }
        };
        // `inner[k]` is the distance from the wall as a fraction of the half width.
        let mut nodes = Vec::with_capacity(2 * half + 1);
        for s in &inner {
            nodes.push(INNER_RADIUS + s);
        }
        for s in inner.iter().rev().skip(1) {
            nodes.push(OUTER_RADIUS - s);
        }
        nodes[0] = INNER_RADIUS;
        nodes[half] = MID_RADIUS;
        nodes[2 * half] = OUTER_RADIUS;
        let grid = Self { nodes, grading, mid_index: half };
        grid.assert_invariants();
        Ok(grid)
    }

    /// Grid with an explicit node list (must contain 1, 2 and 3 and increase strictly).
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < MIN_RADIAL_CELLS + 1 {
            return Err(Error::Config("too few radial nodes".into()));
        }
        if nodes[0] != INNER_RADIUS || *nodes.last().unwrap() != OUTER_RADIUS {
            return Err(Error::Config("radial nodes must start at 1 and end at 3".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("radial nodes must increase strictly".into()));
        }
        let mid_index = nodes
            .iter()
            .position(|&r| r == MID_RADIUS)
            .ok_or_else(|| Error::Config("r = 2 must be a node".into()))?;
        Ok(Self { nodes, grading: Grading::Uniform, mid_index })
    }

    fn assert_invariants(&self) {
        assert_eq!(self.nodes[0], INNER_RADIUS);
        assert_eq!(self.nodes[self.mid_index], MID_RADIUS);
        assert_eq!(*self.nodes.last().unwrap(), OUTER_RADIUS);
        assert!(self.nodes.windows(2).all(|w| w[1] > w[0]), "radial nodes not increasing");
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    /// Index of the node `r = 2`.
    pub fn mid_index(&self) -> usize {
        self.mid_index
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

fn graded_half(g: &RadialGrading, cells: usize) -> Vec<f64> {
    let total = g.cumulative(1.0);
    let mut out = Vec::with_capacity(cells + 1);
    out.push(0.0);
    for k in 1..cells {
        let target = total * k as f64 / cells as f64;
        out.push(invert_monotone(|s| g.cumulative(s), target, 0.0, 1.0));
    }
    out.push(1.0);
    debug_assert!(g.density(0.0, 1.0) > 0.0);
    out
}

fn invert_monotone(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Tensor grid in spherical coordinates `(r, theta)`, `theta` in `[0, pi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiGrid {
    radial: RadialGrid,
    thetas: Vec<f64>,
    angular: AngularGrading,
}

impl AxiGrid {
    pub fn new(nr: usize, ntheta: usize, grading: Grading, angular: AngularGrading) -> Result<Self> {
        if ntheta < MIN_ANGULAR_CELLS {
            return Err(Error::Config(format!("angular grid needs at least {MIN_ANGULAR_CELLS} cells, got {ntheta}")));
        }
        let radial = RadialGrid::new(nr, grading)?;
        let pi = std::f64::consts::PI;
        let thetas = match angular {
            AngularGrading::Uniform => (0..=ntheta).map(|j| pi * j as f64 / ntheta as f64).collect(),
            AngularGrading::Polar { factor, width } => {
                if !(factor >= 0.0 && width > 0.0 && factor.is_finite() && width.is_finite()) {
                    return Err(Error::Config(format!("invalid angular grading {angular:?}")));
                }
                let cum = |t: f64| t + factor * width * (1.0 - (-t / width).exp());
                let total = cum(pi);
                let mut t: Vec<f64> = (0..=ntheta)
                    .map(|j| invert_monotone(cum, total * j as f64 / ntheta as f64, 0.0, pi))
                    .collect();
                t[0] = 0.0;
                t[ntheta] = pi;
                t
            }
        };
        let grid = Self { radial, thetas, angular };
        assert!(grid.thetas.windows(2).all(|w| w[1] > w[0]), "angular nodes not increasing");
        Ok(grid)
    }

    /// The desk-scale default: 256 x 96, graded toward the walls and the pole.
    pub fn desk_default() -> Self {
        Self::new(256, 96, Grading::Graded(RadialGrading::AXI_DEFAULT), AngularGrading::POLAR_DEFAULT)
            .expect("default grid is valid")
    }

    pub fn radial(&self) -> &RadialGrid {
        &self.radial
    }

    pub fn rs(&self) -> &[f64] {
        self.radial.nodes()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn angular_grading(&self) -> AngularGrading {
        self.angular
    }

    /// Nodes per radial line (`ntheta + 1`).
    pub fn stride(&self) -> usize {
        self.thetas.len()
    }

    pub fn node_count(&self) -> usize {
        self.rs().len() * self.thetas.len()
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.stride() + j
    }
}

/// Shared handle to the grid a field lives on.
#[derive(Debug, Clone)]
pub enum GridRef {
    Radial(Arc<RadialGrid>),
    Axi(Arc<AxiGrid>),
}

impl GridRef {
    pub fn node_count(&self) -> usize {
        match self {
            GridRef::Radial(g) => g.nodes().len(),
            GridRef::Axi(g) => g.node_count(),
        }
    }

    pub fn radial_nodes(&self) -> &[f64] {
        match self {
            GridRef::Radial(g) => g.nodes(),
            GridRef::Axi(g) => g.rs(),
        }
    }

    /// True for nodes on `r = 1` or `r = 3`.
    pub fn is_dirichlet(&self, k: usize) -> bool {
        match self {
            GridRef::Radial(g) => k == 0 || k + 1 == g.nodes().len(),
            GridRef::Axi(g) => {
                let i = k / g.stride();
                i == 0 || i + 1 == g.rs().len()
            }
        }
    }

    /// Radius of node `k`.
    pub fn radius_of(&self, k: usize) -> f64 {
        match self {
            GridRef::Radial(g) => g.nodes()[k],
            GridRef::Axi(g) => g.rs()[k / g.stride()],
        }
    }

    pub fn same_as(&self, other: &GridRef) -> bool {
        match (self, other) {
            (GridRef::Radial(a), GridRef::Radial(b)) => Arc::ptr_eq(a, b) || a == b,
            (GridRef::Axi(a), GridRef::Axi(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }

    pub fn descriptor(&self) -> GridDescriptor {
        match self {
            GridRef::Radial(g) => GridDescriptor {
                kind: "radial".into(),
                radial_cells: g.cells(),
                angular_cells: None,
                radial_grading: g.grading(),
                angular_grading: None,
                min_radial_spacing: g.min_spacing(),
            },
            GridRef::Axi(g) => GridDescriptor {
                kind: "axisymmetric".into(),
                radial_cells: g.radial().cells(),
                angular_cells: Some(g.thetas().len() - 1),
                radial_grading: g.radial().grading(),
                angular_grading: Some(g.angular_grading()),
                min_radial_spacing: g.radial().min_spacing(),
            },
        }
    }

    /// Writes the node lists as `#`-prefixed CSV header lines.
    pub fn write_csv_header(&self, w: &mut impl Write) -> std::io::Result<()> {
        let d = self.descriptor();
        writeln!(w, "# grid,{},{}", d.kind, serde_json::to_string(&d).unwrap_or_default())?;
        write!(w, "# r_nodes")?;
        for r in self.radial_nodes() {
            write!(w, ",{r:.17e}")?;
        }
        writeln!(w)?;
        if let GridRef::Axi(g) = self {
            write!(w, "# theta_nodes")?;
            for t in g.thetas() {
                write!(w, ",{t:.17e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Grid metadata attached to every reported level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub kind: String,
    pub radial_cells: usize,
    pub angular_cells: Option<usize>,
    pub radial_grading: Grading,
    pub angular_grading: Option<AngularGrading>,
    pub min_radial_spacing: f64,
}

impl fmt::Display for GridDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = match self.radial_grading {
            Grading::Uniform => "uniform",
            Grading::Graded(_) => "graded",
        };
        match self.angular_cells {
            Some(nt) => write!(f, "axi{}x{}-{}", self.radial_cells, nt, g),
            None => write!(f, "radial{}-{}", self.radial_cells, g),
        }
    }
}

/// Nodal coefficients of a continuous piecewise-linear field, zero on `r = 1, 3`.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    grid: GridRef,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: GridRef) -> Self {
        let n = grid.node_count();
        Self { grid, values: vec![0.0; n] }
    }

    /// Samples `f(r, theta)` at the nodes; Dirichlet nodes are forced to zero.
    /// For radial grids `theta` is passed as 0.
    pub fn from_fn(grid: GridRef, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = match &grid {
            GridRef::Radial(g) => g.nodes().iter().map(|&r| f(r, 0.0)).collect::<Vec<_>>(),
            GridRef::Axi(g) => {
                let mut v = Vec::with_capacity(g.node_count());
                for &r in g.rs() {
                    for &t in g.thetas() {
                        v.push(f(r, t));
                    }
                }
                v
            }
        };
        let mut field = Self { grid, values };
        field.apply_mask();
        field
    }

    /// Wraps raw coefficients; rejects non-finite entries and nonzero boundary values.
    pub fn from_values(grid: GridRef, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridCompatibility(format!(
                "expected {} coefficients, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite coefficient at node {k}")));
        }
        for (k, v) in values.iter().enumerate() {
            if grid.is_dirichlet(k) && *v != 0.0 {
                return Err(Error::Domain(format!("nonzero value {v} on the boundary node {k}")));
            }
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: GridRef, values: Vec<f64>) -> Self {
        let mut f = Self { grid, values };
        f.apply_mask();
        f
    }

    fn apply_mask(&mut self) {
        for k in 0..self.values.len() {
            if self.grid.is_dirichlet(k) {
                self.values[k] = 0.0;
            }
        }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    /// `a * self + b * other` on the same grid.
    pub fn lin_comb(&self, a: f64, other: &DiscreteField, b: f64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridCompatibility("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// Pointwise `max(u, 0)`.
    pub fn clamp_nonnegative(&mut self) {
        for v in &mut self.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Snapshot as CSV (`r,theta,value`; radial grids omit `theta`), preceded
    /// by the grid header block.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        self.grid.write_csv_header(w)?;
        match &self.grid {
            GridRef::Radial(g) => {
                writeln!(w, "r,value")?;
                for (r, v) in g.nodes().iter().zip(&self.values) {
                    writeln!(w, "{r:.17e},{v:.17e}")?;
                }
            }
            GridRef::Axi(g) => {
                writeln!(w, "r,theta,value")?;
                for (i, r) in g.rs().iter().enumerate() {
                    for (j, t) in g.thetas().iter().enumerate() {
                        writeln!(w, "{r:.17e},{t:.17e},{:.17e}", self.values[g.node(i, j)])?;
                    }
                }
            }
        }
        Ok(())
    }
}

impl DiscreteField {
    /// Reads a snapshot written by [`DiscreteField::write_csv`]; the grid is
    /// rebuilt from the header block.
    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("field snapshot: {m}"));
        let parse_list = |line: &str| -> Result<Vec<f64>> {
            line.split(',').skip(1).map(|t| t.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))).collect()
        };
        let mut desc: Option<GridDescriptor> = None;
        let (mut rs, mut ts) = (None, None);
        let mut values = Vec::new();
        let mut columns = 0;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# grid,") {
                let json = rest.split_once(',').map(|x| x.1).ok_or_else(|| bad("grid line"))?;
                desc = Some(serde_json::from_str(json).map_err(|e| bad(&e.to_string()))?);
            } else if line.starts_with("# r_nodes") {
                rs = Some(parse_list(line)?);
            } else if line.starts_with("# theta_nodes") {
                ts = Some(parse_list(line)?);
            } else if line.starts_with('#') {
                continue;
            } else if line.starts_with('r') {
                columns = line.split(',').count();
            } else {
                let v = line.rsplit(',').next().ok_or_else(|| bad("empty row"))?;
                values.push(v.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
            }
        }
        let desc = desc.ok_or_else(|| bad("missing grid line"))?;
        let mut radial = RadialGrid::from_nodes(rs.ok_or_else(|| bad("missing radial nodes"))?)?;
        radial.grading = desc.radial_grading;
        let grid = match (ts, desc.angular_grading) {
            (Some(thetas), Some(angular)) if columns == 3 => {
                if thetas.len() < MIN_ANGULAR_CELLS + 1 || thetas.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(bad("angular nodes must increase strictly"));
                }
                GridRef::Axi(Arc::new(AxiGrid { radial, thetas, angular }))
            }
            (None, None) if columns == 2 => GridRef::Radial(Arc::new(radial)),
            _ => return Err(bad("header and columns disagree")),
        };
        DiscreteField::from_values(grid, values)
    }
}

/// Theta-constant extension of a radial field onto an axisymmetric grid with
/// the same radial nodes.
pub fn embed_radial(v: &DiscreteField, g: &Arc<AxiGrid>) -> Result<DiscreteField> {
    let rg = match v.grid() {
        GridRef::Radial(rg) => rg,
        GridRef::Axi(_) => return Err(Error::GridCompatibility("embed_radial expects a radial field".into())),
    };
    if rg.nodes() != g.rs() {
        return Err(Error::GridCompatibility("radial nodes differ from the axisymmetric grid".into()));
    }
    let stride = g.stride();
    let mut values = Vec::with_capacity(g.node_count());
    for &val in v.values() {
        values.extend(std::iter::repeat(val).take(stride));
    }
    Ok(DiscreteField { grid: GridRef::Axi(g.clone()), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_sixteen_cells() {
        let g = RadialGrid::new(16, Grading::Uniform).unwrap();
        assert_eq!(g.nodes().len(), 17);
        assert_eq!(g.nodes()[1], 1.125);
        assert_eq!(g.nodes()[8], 2.0);
        assert_eq!(g.mid_index(), 8);
    }

    #[test]
    fn odd_count_is_adjusted() {
        let g = RadialGrid::new(17, Grading::Uniform).unwrap();
        assert_eq!(g.cells(), 18);
        assert_eq!(g.nodes()[g.mid_index()], 2.0);
    }

    #[test]
    fn too_small_rejected() {
        assert!(matches!(RadialGrid::new(15, Grading::Uniform), Err(Error::Config(_))));
        assert!(matches!(
            AxiGrid::new(16, 7, Grading::Uniform, AngularGrading::Uniform),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn graded_spacing_ratio_matches_factor() {
        let g = RadialGrid::new(2000, Grading::graded()).unwrap();
        let n = g.nodes();
        let h_wall = n[n.len() - 1] - n[n.len() - 2];
        let quarter = n.iter().position(|&r| r > 1.5).unwrap();
        let h_bulk = n[quarter] - n[quarter - 1];
        let ratio = h_bulk / h_wall;
        let f = RadialGrading::RADIAL_DEFAULT.factor();
        assert!((ratio / f - 1.0).abs() < 0.05, "ratio {ratio} vs factor {f}");
        assert!(g.min_spacing() <= h_wall * (1.0 + 1e-9));
    }

    #[test]
    fn axi_lattice_counts() {
        let g = AxiGrid::new(16, 8, Grading::Uniform, AngularGrading::Uniform).unwrap();
        assert_eq!(g.rs().len(), 17);
        assert_eq!(g.thetas().len(), 9);
        assert_eq!(g.node_count(), 17 * 9);
        let g = AxiGrid::new(33, 8, Grading::Uniform, AngularGrading::Uniform).unwrap();
        assert!(g.rs().contains(&2.0));
    }

    #[test]
    fn graded_axi_keeps_uniform_angles() {
        let g = AxiGrid::new(256, 96, Grading::graded(), AngularGrading::Uniform).unwrap();
        let d: Vec<f64> = g.thetas().windows(2).map(|w| w[1] - w[0]).collect();
        let h = std::f64::consts::PI / 96.0;
        assert!(d.iter().all(|x| (x - h).abs() < 1e-12));
        assert!(g.radial().max_spacing() / g.radial().min_spacing() > 5.0);
    }

    #[test]
    fn boundary_values_rejected() {
        let g = GridRef::Radial(Arc::new(RadialGrid::new(16, Grading::Uniform).unwrap()));
        let mut v = vec![0.0; 17];
        v[0] = 1.0;
        assert!(DiscreteField::from_values(g.clone(), v).is_err());
        let mut v = vec![0.0; 17];
        v[3] = f64::NAN;
        assert!(DiscreteField::from_values(g, v).is_err());
    }

    #[test]
    fn embedding_is_theta_constant() {
        let ag = Arc::new(AxiGrid::new(16, 8, Grading::Uniform, AngularGrading::Uniform).unwrap());
        let rg = GridRef::Radial(Arc::new(ag.radial().clone()));
        let hat = DiscreteField::from_fn(rg, |r, _| (1.0 - (r - 2.0).abs() * 8.0).max(0.0));
        let e = embed_radial(&hat, &ag).unwrap();
        for i in 0..ag.rs().len() {
            let row = &e.values()[ag.node(i, 0)..ag.node(i, 0) + ag.stride()];
            assert!(row.iter().all(|&v| v == row[0]));
        }
        assert_eq!(e.values()[ag.node(8, 3)], 1.0);
        let z = embed_radial(&DiscreteField::zeros(hat.grid().clone()), &ag).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn embedding_rejects_mismatched_nodes() {
        let ag = Arc::new(AxiGrid::new(32, 8, Grading::Uniform, AngularGrading::Uniform).unwrap());
        let rg = GridRef::Radial(Arc::new(RadialGrid::new(16, Grading::Uniform).unwrap()));
        let v = DiscreteField::zeros(rg);
        assert!(matches!(embed_radial(&v, &ag), Err(Error::GridCompatibility(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        for grid in [
            GridRef::Radial(Arc::new(RadialGrid::new(20, Grading::graded()).unwrap())),
            GridRef::Axi(Arc::new(AxiGrid::new(20, 10, Grading::graded(), AngularGrading::POLAR_DEFAULT).unwrap())),
        ] {
            let u = DiscreteField::from_fn(grid.clone(), |r, t| (r - 1.0) * (3.0 - r) * (1.0 + t.cos()) / 3.0);
            let mut buf = Vec::new();
            u.write_csv(&mut buf).unwrap();
            let back = DiscreteField::read_csv(&buf[..]).unwrap();
            assert!(back.grid().same_as(u.grid()));
            assert_eq!(back.values(), u.values());
        }
        assert!(DiscreteField::read_csv(&b"r,value\n1,0\n"[..]).is_err());
    }
}

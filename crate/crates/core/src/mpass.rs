//! Mountain-pass level between the two instantons by a string method: the
//! interior nodes of a discrete path descend along the Sobolev gradient of
//! `R`, the path is re-equidistributed in the energy norm, and the highest
//! node is finally refined to a critical point by Newton's method.

use std::io::Write;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::asymmetry_index;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::geometry::{DiscreteField, GridRef};

/// Fewest segments a path may have.
pub const MIN_SEGMENTS: usize = 9;

/// Discrete path `gamma(t_0), ..., gamma(t_m)` of unit-mass fields.
#[derive(Debug, Clone)]
pub struct PathState {
    pub nodes: Vec<DiscreteField>,
    pub quotients: Vec<f64>,
}

impl PathState {
    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn max_index(&self) -> usize {
        self.quotients
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &q)| if q > acc.1 { (i, q) } else { acc })
            .0
    }

    pub fn max_quotient(&self) -> f64 {
        self.quotients[self.max_index()]
    }
}

/// `t u1 + (1 - t) u0` at `t = k/m`, each node scaled to unit weighted mass.
pub fn straight_path(f: &Functional, u0: &DiscreteField, u1: &DiscreteField, m: usize) -> Result<PathState> {
    if m < MIN_SEGMENTS {
        return Err(Error::Config(format!("a path needs at least {MIN_SEGMENTS} segments, got {m}")));
    }
    if u0.is_zero() || u1.is_zero() {
        return Err(Error::Degenerate("path endpoints must be nonzero".into()));
    }
    let a = f.normalize(u0)?;
    let b = f.normalize(u1)?;
    let mut nodes = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let node = if k == 0 {
            a.clone()
        } else if k == m {
            b.clone()
        } else {
            let t = k as f64 / m as f64;
            let v = a.lin_comb(1.0 - t, &b, t)?;
            if v.is_zero() {
                return Err(Error::Degenerate(format!("path node {k} vanishes")));
            }
            f.normalize(&v)?
        };
        nodes.push(node);
    }
    let quotients = nodes.iter().map(|u| f.quotient(u)).collect::<Result<_>>()?;
    Ok(PathState { nodes, quotients })
}

/// First node where `E_plus - E_minus` has the opposite sign to node 0.
pub fn path_crossing(f: &Functional, path: &PathState) -> Result<usize> {
    let defect = |u: &DiscreteField| -> Result<f64> {
        let (p, m) = f.halfspace_energies(u)?;
        Ok(p - m)
    };
    let g0 = defect(&path.nodes[0])?;
    let gm = defect(&path.nodes[path.nodes.len() - 1])?;
    if g0 == 0.0 || g0.signum() == gm.signum() {
        return Err(Error::Contract("path endpoints do not lie on opposite sides of the balanced set".into()));
    }
    for (k, u) in path.nodes.iter().enumerate().skip(1) {
        if defect(u)?.signum() != g0.signum() {
            return Ok(k);
        }
    }
    unreachable!("the last node has the opposite sign")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpassOptions {
    /// Fraction of the inverse-power step taken by each node.
    pub step: f64,
    /// Relative weak-form defect required of the refined pass.
    pub tol: f64,
    pub max_iter: usize,
    pub reparam_every: usize,
}

impl Default for MpassOptions {
    fn default() -> Self {
        Self { step: 0.25, tol: 1e-7, max_iter: 4000, reparam_every: 20 }
    }
}

/// Largest weak-form defect accepted for the critical point at the pass.
pub const SADDLE_RESIDUAL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct MpassResult {
    pub beta: f64,
    #[serde(skip)]
    pub w: DiscreteField,
    pub iterations: usize,
    pub converged: bool,
    /// `R` at the two endpoints.
    pub endpoint_levels: (f64, f64),
    /// Largest `R` along the initial straight path.
    pub straight_max: f64,
    /// Path index of the node carrying `beta`.
    pub max_index: usize,
    /// Level and defect of the Newton-refined highest interior node.
    pub pass_level: Option<f64>,
    pub pass_residual: Option<f64>,
    /// Weak-form defect of `w` after rescaling.
    pub w_residual: f64,
    pub w_asymmetry: Option<f64>,
    /// `(iteration, node, quotient)` samples, one row per node per recorded iteration.
    #[serde(skip)]
    pub trace: Vec<(usize, usize, f64)>,
    #[serde(skip)]
    pub path: Vec<DiscreteField>,
}

impl MpassResult {
    pub fn endpoint_max(&self) -> f64 {
        self.endpoint_levels.0.max(self.endpoint_levels.1)
    }

    pub fn write_trace_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "iteration,node,quotient")?;
        for (it, k, q) in &self.trace {
            writeln!(w, "{it},{k},{q}")?;
        }
        Ok(())
    }
}

/// Downhill inverse-power displacement at `u` (a positive multiple of minus
/// the Sobolev gradient), the chord `next - prev`, and the coefficient of the
/// displacement along that chord in the energy inner product.
fn split_direction(
    f: &Functional,
    prev: &DiscreteField,
    u: &DiscreteField,
    next: &DiscreteField,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let disc = f.disc();
    let st = f.state(u)?;
    let c = st.quotient() * st.mass.powf(2.0 / f.params().p - 1.0);
    let v = disc.solve(&st.force);
    let dir: Vec<f64> = disc.free(u).iter().zip(&v).map(|(x, y)| c * y - x).collect();
    let tau: Vec<f64> = disc.free(next).iter().zip(disc.free(prev)).map(|(a, b)| a - b).collect();
    let ktau = disc.apply_stiffness(&tau);
    let tt: f64 = tau.iter().zip(&ktau).map(|(a, b)| a * b).sum();
    let dt = if tt > 0.0 { dir.iter().zip(&ktau).map(|(a, b)| a * b).sum::<f64>() / tt } else { 0.0 };
    Ok((dir, tau, dt))
}

/// `u + t d`, clipped to be nonnegative and scaled to unit mass.
fn moved(f: &Functional, u: &DiscreteField, d: &[f64], t: f64) -> Result<Option<DiscreteField>> {
    let disc = f.disc();
    let trial: Vec<f64> = disc.free(u).iter().zip(d).map(|(x, y)| x + t * y).collect();
    let mut cand = disc.field_from_free(&trial);
    cand.clamp_nonnegative();
    if cand.is_zero() {
        return Ok(None);
    }
    f.normalize(&cand).map(Some)
}

/// One descent step of a node along the Sobolev gradient with its component
/// along the path tangent removed; backtracks until the quotient drops and
/// keeps the node when it cannot.
fn descend_node(
    f: &Functional,
    prev: &DiscreteField,
    u: &DiscreteField,
    next: &DiscreteField,
    q: f64,
    step: f64,
) -> Result<(DiscreteField, f64)> {
    let (mut dir, tau, dt) = split_direction(f, prev, u, next)?;
    dir.iter_mut().zip(&tau).for_each(|(d, t)| *d -= dt * t);
    let mut t = step;
    for _ in 0..30 {
        if let Some(cand) = moved(f, u, &dir, t)? {
            let qc = f.quotient(&cand)?;
            if qc < q {
                return Ok((cand, qc));
            }
        }
        t *= 0.5;
    }
    Ok((u.clone(), q))
}

/// Defect below which the climbing node is handed to Newton.
const CLIMB_TARGET: f64 = 1e-3;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Finite-difference action of the Hessian of `R` at `u` on `v`.
fn hessian_apply(f: &Functional, u: &DiscreteField, v: &[f64], h: f64) -> Result<Vec<f64>> {
    let disc = f.disc();
    let free = disc.free(u);
    let shifted = |s: f64| disc.field_from_free(&free.iter().zip(v).map(|(x, y)| x + s * y).collect::<Vec<_>>());
    let gp = f.state(&shifted(h))?.gradient();
    let gm = f.state(&shifted(-h))?.gradient();
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// One Rayleigh-Ritz step turning `tau` toward the direction of least
/// curvature of `R` at `u`, in the energy inner product. Returns the new
/// direction with unit energy norm.
fn rotate_toward_unstable(f: &Functional, u: &DiscreteField, tau: &[f64]) -> Result<Vec<f64>> {
    let disc = f.disc();
    let knorm = |v: &[f64]| dot(v, &disc.apply_stiffness(v)).max(0.0).sqrt();
    let h = 1e-5 * knorm(disc.free(u));
    let n = knorm(tau);
    if n == 0.0 {
        return Ok(tau.to_vec());
    }
    let t: Vec<f64> = tau.iter().map(|x| x / n).collect();
    let kt = disc.apply_stiffness(&t);
    let ht = hessian_apply(f, u, &t, h)?;
    let lam = dot(&t, &ht);
    let r: Vec<f64> = ht.iter().zip(&kt).map(|(a, b)| a - lam * b).collect();
    let mut w = disc.solve(&r);
    let c = dot(&w, &kt);
    w.iter_mut().zip(&t).for_each(|(x, y)| *x -= c * y);
    let wn = knorm(&w);
    if !(wn > 1e-14) {
        return Ok(t);
    }
    w.iter_mut().for_each(|x| *x /= wn);
    let hw = hessian_apply(f, u, &w, h)?;
    let (a11, a22) = (lam, dot(&w, &hw));
    let a12 = 0.5 * (dot(&t, &hw) + dot(&w, &ht));
    // Lowest eigenvector of the symmetric 2x2 Ritz matrix.
    let theta = 0.5 * (2.0 * a12).atan2(a11 - a22);
    let (cs, sn) = (theta.cos(), theta.sin());
    let (e1, e2) = (cs, sn);
    let low = a11 * e1 * e1 + 2.0 * a12 * e1 * e2 + a22 * e2 * e2;
    let high = a11 * sn * sn - 2.0 * a12 * cs * sn + a22 * cs * cs;
    let (x, y) = if low <= high { (cs, sn) } else { (-sn, cs) };
    Ok(t.iter().zip(&w).map(|(a, b)| x * a + y * b).collect())
}

/// Climbing-image refinement of the highest node with its neighbours held
/// fixed. The component of the descent direction along the unstable
/// direction is reversed, so the node moves uphill along it and downhill
/// across it; the unstable direction starts as the chord between the
/// neighbours and is rotated toward least curvature before every step.
/// Steps are accepted when the weak-form defect drops.
fn climb_node(
    f: &Functional,
    prev: &DiscreteField,
    u: &DiscreteField,
    next: &DiscreteField,
    step: f64,
    max_iter: usize,
) -> Result<(DiscreteField, f64)> {
    let disc = f.disc();
    let mut cur = u.clone();
    let mut g = relative_defect(f, &cur)?;
    let mut tau: Vec<f64> = disc.free(next).iter().zip(disc.free(prev)).map(|(a, b)| a - b).collect();
    let mut t = step;
    for it in 0..max_iter {
        if g <= CLIMB_TARGET {
            break;
        }
        tau = rotate_toward_unstable(f, &cur, &tau)?;
        let (mut dir, _, _) = split_direction(f, prev, &cur, next)?;
        let kt = disc.apply_stiffness(&tau);
        let dt = dot(&dir, &kt) / dot(&tau, &kt);
        dir.iter_mut().zip(&tau).for_each(|(d, x)| *d -= 2.0 * dt * x);
        let mut accepted = false;
        for _ in 0..20 {
            if let Some(cand) = moved(f, &cur, &dir, t)? {
                let gc = relative_defect(f, &cand)?;
                if gc < g {
                    cur = cand;
                    g = gc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            debug!("climbing stalled after {it} steps at defect {g:.3e}");
            break;
        }
        t = (2.0 * t).min(step);
    }
    Ok((cur, g))
}

/// Energy-norm distance between consecutive nodes.
fn arc_lengths(f: &Functional, nodes: &[DiscreteField]) -> Vec<f64> {
    let disc = f.disc();
    let k = disc.stiffness();
    let mut s = vec![0.0];
    for w in nodes.windows(2) {
        let d: Vec<f64> = disc.free(&w[1]).iter().zip(disc.free(&w[0])).map(|(a, b)| a - b).collect();
        let last = *s.last().unwrap();
        s.push(last + k.quad_form(&d).max(0.0).sqrt());
    }
    s
}

/// Redistributes interior nodes uniformly in arc length.
fn equidistribute(f: &Functional, path: &PathState) -> Result<PathState> {
    let s = arc_lengths(f, &path.nodes);
    let total = *s.last().unwrap();
    let m = path.segments();
    let mut nodes = Vec::with_capacity(m + 1);
    nodes.push(path.nodes[0].clone());
    let mut j = 0;
    for k in 1..m {
        let target = total * k as f64 / m as f64;
        while j + 1 < m && s[j + 1] < target {
            j += 1;
        }
        let span = s[j + 1] - s[j];
        let t = if span > 0.0 { ((target - s[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let v = path.nodes[j].lin_comb(1.0 - t, &path.nodes[j + 1], t)?;
        nodes.push(f.normalize(&v)?);
    }
    nodes.push(path.nodes[m].clone());
    let quotients = nodes.iter().map(|u| f.quotient(u)).collect::<Result<_>>()?;
    Ok(PathState { nodes, quotients })
}

/// Relative gradient at the pass above which Newton is not attempted.
const NEWTON_SWITCH: f64 = 5e-2;

/// Iteration cap of the climbing refinement.
const CLIMB_MAX: usize = 500;

/// Largest relative level change accepted from the Newton refinement.
const NEWTON_DRIFT: f64 = 0.05;

/// Highest interior node.
fn interior_max(path: &PathState) -> usize {
    let m = path.segments();
    (1..m).fold(1, |best, k| if path.quotients[k] > path.quotients[best] { k } else { best })
}

/// Relative weak-form defect of `u` at its own level.
fn relative_defect(f: &Functional, u: &DiscreteField) -> Result<f64> {
    let unit = f.to_unit_energy(u)?;
    f.residual_pde(&unit, f.quotient(u)?)
}

/// Climbing followed by Newton refinement of interior node `k`; `None` when
/// the result wanders off.
fn refine(f: &Functional, path: &PathState, k: usize, step: f64) -> Option<(DiscreteField, f64, f64)> {
    let level = path.quotients[k];
    let (u, g) = match climb_node(f, &path.nodes[k - 1], &path.nodes[k], &path.nodes[k + 1], step, CLIMB_MAX) {
        Ok(x) => x,
        Err(e) => {
            debug!("climbing failed: {e}");
            return None;
        }
    };
    debug!("climbing reached defect {g:.3e} at level {:.10}", f.quotient(&u).ok()?);
    match f.newton_polish(&u, 30, 1e-12) {
        Ok((cand, _)) => {
            let qc = f.quotient(&cand).ok()?;
            let drift = (qc - level).abs() / level;
            if drift > NEWTON_DRIFT {
                debug!("Newton refinement moved the level by {drift:.3e}");
                return None;
            }
            let res = relative_defect(f, &cand).ok()?;
            Some((cand, qc, res))
        }
        Err(e) => {
            debug!("Newton refinement failed: {e}");
            None
        }
    }
}

/// String-method descent of `path`; endpoints stay fixed bit for bit.
///
/// Every `reparam_every` iterations the path is re-equidistributed and, once
/// the highest interior node is close to critical, Newton's method refines it
/// to the pass. `beta` is the largest quotient on the final path, endpoints
/// included, with the refined pass in place of its node.
pub fn mountain_pass(f: &Functional, path: PathState, opts: &MpassOptions) -> Result<MpassResult> {
    if path.segments() < MIN_SEGMENTS {
        return Err(Error::Config(format!("a path needs at least {MIN_SEGMENTS} segments")));
    }
    let m = path.segments();
    let endpoint_levels = (path.quotients[0], path.quotients[m]);
    let straight_max = path.max_quotient();
    let mut path = path;
    let mut trace = Vec::new();
    let record = |trace: &mut Vec<(usize, usize, f64)>, it: usize, p: &PathState| {
        trace.extend(p.quotients.iter().enumerate().map(|(k, &q)| (it, k, q)));
    };
    record(&mut trace, 0, &path);
    let mut running_max = path.max_quotient();
    let mut saddle: Option<(usize, DiscreteField, f64, f64)> = None;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let updated: Vec<Result<(DiscreteField, f64)>> = (1..m)
            .into_par_iter()
            .map(|k| descend_node(f, &path.nodes[k - 1], &path.nodes[k], &path.nodes[k + 1], path.quotients[k], opts.step))
            .collect();
        for (k, res) in (1..m).zip(updated) {
            let (u, q) = res?;
            path.nodes[k] = u;
            path.quotients[k] = q;
        }
        let now = path.max_quotient();
        debug_assert!(now <= running_max * (1.0 + 1e-10), "path maximum rose: {running_max} -> {now}");
        running_max = running_max.min(now);
        if iterations % opts.reparam_every == 0 {
            // Interpolated nodes may sit slightly higher than the old ones, so
            // the running maximum restarts after each equidistribution.
            path = equidistribute(f, &path)?;
            running_max = path.max_quotient();
            let k = interior_max(&path);
            let g = relative_defect(f, &path.nodes[k])?;
            debug!("mountain pass iteration {iterations}: pass {:.10} at node {k} (defect {g:.2e})", path.quotients[k]);
            if g <= NEWTON_SWITCH {
                if let Some((w, q, res)) = refine(f, &path, k, opts.step) {
                    if res <= opts.tol {
                        info!("pass refined by Newton at iteration {iterations}: {:.10} -> {q:.10}", path.quotients[k]);
                        saddle = Some((k, w, q, res));
                    }
                }
            }
        }
        record(&mut trace, iterations, &path);
        if saddle.is_some() {
            break;
        }
    }
    if saddle.is_none() {
        warn!("mountain pass stopped after {iterations} iterations without a refined pass");
        let k = interior_max(&path);
        if let Some((w, q, res)) = refine(f, &path, k, opts.step) {
            saddle = Some((k, w, q, res));
        }
    }
    let mut levels = path.quotients.clone();
    let pass = saddle.as_ref().map(|(k, _, q, res)| (*k, *q, *res));
    if let Some((k, _, q, _)) = &saddle {
        levels[*k] = *q;
    }
    let max_index = (0..=m).fold(0, |best, k| if levels[k] > levels[best] { k } else { best });
    let beta = levels[max_index];
    let w = match saddle {
        Some((k, w, _, _)) if k == max_index => w,
        _ => path.nodes[max_index].clone(),
    };
    if max_index == 0 || max_index == m {
        warn!("path maximum sits at an endpoint (node {max_index})");
    }
    let w_residual = relative_defect(f, &w)?;
    let w_asymmetry = match w.grid() {
        GridRef::Axi(_) => Some(asymmetry_index(&w)?),
        GridRef::Radial(_) => None,
    };
    let converged = pass.is_some_and(|(_, _, res)| res <= opts.tol) && w_residual <= SADDLE_RESIDUAL_TOL;
    Ok(MpassResult {
        beta,
        w,
        iterations,
        converged,
        endpoint_levels,
        straight_max,
        max_index,
        pass_level: pass.map(|(_, q, _)| q),
        pass_residual: pass.map(|(_, _, r)| r),
        w_residual,
        w_asymmetry,
        trace,
        path: path.nodes,
    })
}

//! Parameter sweeps, exponent fits, level-ordering checks and result files.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{concentration_report_with, ConcentrationReport};
use crate::error::{Error, Result};
use crate::functional::{Functional, LevelTag};
use crate::geometry::{AngularGrading, AxiGrid, Grading, GridDescriptor, GridRef, ProblemParams, RadialGrading, RadialGrid};
use crate::minimize::{self, SigmaOptions, SolveResult, SolverOptions};
use crate::mpass::{self, MpassOptions};
use crate::testfun::{instanton, CutoffSpec, InstantonParams, Side};

/// Which parameter a sweep varies; the other one is held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis")]
pub enum SweepAxis {
    Alpha { p: f64 },
    P { alpha: f64 },
}

/// Levels computed at every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSelection {
    pub radial: bool,
    pub ground: bool,
    pub sigma: bool,
    pub lambda: bool,
    pub mpass: bool,
}

impl LevelSelection {
    pub const RADIAL: Self = Self { radial: true, ground: false, sigma: false, lambda: false, mpass: false };
    pub const ALL: Self = Self { radial: true, ground: true, sigma: true, lambda: true, mpass: true };

    fn any(&self) -> bool {
        self.radial || self.ground || self.sigma || self.lambda || self.mpass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub dim: usize,
    pub radial_cells: usize,
    pub axi_radial_cells: usize,
    pub axi_angular_cells: usize,
    pub solver: SolverOptions,
    pub sigma: SigmaOptions,
    pub mpass: MpassOptions,
    pub epsilon: f64,
    pub cutoff: CutoffSpec,
    pub levels: LevelSelection,
    /// Segments of the initial mountain-pass path.
    pub path_segments: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>, levels: LevelSelection) -> Self {
        Self {
            axis,
            values,
            dim: 3,
            radial_cells: 2000,
            axi_radial_cells: 256,
            axi_angular_cells: 96,
            solver: SolverOptions::default(),
            sigma: SigmaOptions::default(),
            mpass: MpassOptions::default(),
            epsilon: 1e-3,
            cutoff: CutoffSpec::default(),
            levels,
            path_segments: 16,
            seed: 0,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("a sweep needs at least one parameter value".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("sweep values must be strictly ascending: {:?}", self.values)));
        }
        if !self.levels.any() {
            return Err(Error::Config("no level selected".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be positive".into()));
        }
        if self.path_segments < mpass::MIN_SEGMENTS {
            return Err(Error::Config(format!("path needs at least {} segments", mpass::MIN_SEGMENTS)));
        }
        InstantonParams::new(self.epsilon, Side::Outer)?;
        CutoffSpec::new(self.cutoff.delta)?;
        for &v in &self.values {
            self.params_at(v)?;
        }
        Ok(())
    }

    pub fn params_at(&self, value: f64) -> Result<ProblemParams> {
        match self.axis {
            SweepAxis::Alpha { p } => ProblemParams::new(self.dim, value, p),
            SweepAxis::P { alpha } => ProblemParams::new(self.dim, alpha, value),
        }
    }

    pub fn radial_grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.radial_cells, Grading::graded())
    }

    pub fn axi_grid(&self) -> Result<AxiGrid> {
        AxiGrid::new(
            self.axi_radial_cells,
            self.axi_angular_cells,
            Grading::Graded(RadialGrading::AXI_DEFAULT),
            AngularGrading::POLAR_DEFAULT,
        )
    }
}

/// One computed level with the metadata needed to interpret it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub tag: LevelTag,
    /// `None` when the solve failed outright.
    pub value: Option<f64>,
    pub converged: bool,
    pub grid: GridDescriptor,
    pub tol: f64,
    pub iterations: usize,
    pub residual: Option<f64>,
    pub seconds: f64,
    pub init: String,
    pub error: Option<String>,
}

impl LevelEntry {
    fn from_solve(tag: LevelTag, res: &SolveResult, tol: f64, seconds: f64) -> Self {
        Self {
            tag,
            value: Some(res.level()),
            converged: res.converged,
            grid: res.report.grid.clone(),
            tol,
            iterations: res.report.iterations,
            residual: Some(res.pde_residual),
            seconds,
            init: res.init_tag.clone(),
            error: None,
        }
    }

    fn failed(tag: LevelTag, grid: GridDescriptor, tol: f64, seconds: f64, err: &Error) -> Self {
        Self {
            tag,
            value: None,
            converged: false,
            grid,
            tol,
            iterations: 0,
            residual: None,
            seconds,
            init: String::new(),
            error: Some(err.to_string()),
        }
    }
}

/// Mountain-pass quantities beyond the level itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpassSummary {
    pub endpoint_levels: (f64, f64),
    pub straight_max: f64,
    /// Quotient of the first straight-path node past the balanced set.
    pub crossing_level: f64,
    pub pass_level: Option<f64>,
    pub w_residual: f64,
    pub w_asymmetry: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub params: ProblemParams,
    pub levels: Vec<LevelEntry>,
    /// Report of the ground state.
    pub concentration: Option<ConcentrationReport>,
    /// `(E_plus - E_minus) / E` of the second minimizer.
    pub lambda_margin: Option<f64>,
    pub lambda_escaped: Option<bool>,
    pub lambda_asymmetry: Option<f64>,
    pub mpass: Option<MpassSummary>,
    pub seconds: f64,
}

impl ResultRecord {
    pub fn entry(&self, tag: LevelTag) -> Option<&LevelEntry> {
        self.levels.iter().find(|e| e.tag == tag)
    }

    pub fn level(&self, tag: LevelTag) -> Option<f64> {
        self.entry(tag).and_then(|e| e.value)
    }

    pub fn converged(&self, tag: LevelTag) -> bool {
        self.entry(tag).is_some_and(|e| e.converged)
    }

    pub fn all_converged(&self) -> bool {
        self.levels.iter().all(|e| e.converged)
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

/// Side whose half of the annulus carries more energy in `u`.
pub fn heavy_side(f: &Functional, u: &crate::geometry::DiscreteField) -> Result<Side> {
    let (ep, em) = f.halfspace_energies(u)?;
    Ok(if ep >= em { Side::Outer } else { Side::Inner })
}

/// The full solve chain at one parameter point. Failures are recorded in the
/// entries, never propagated.
pub fn solve_point(spec: &SweepSpec, params: ProblemParams, radial: Option<&Arc<RadialGrid>>, axi: Option<&Arc<AxiGrid>>) -> ResultRecord {
    let start = Instant::now();
    let mut rec = ResultRecord {
        params,
        levels: Vec::new(),
        concentration: None,
        lambda_margin: None,
        lambda_escaped: None,
        lambda_asymmetry: None,
        mpass: None,
        seconds: 0.0,
    };
    let tol = spec.solver.tol;
    if spec.levels.radial {
        let g = radial.expect("radial grid prepared");
        let (res, secs) = timed(|| minimize::solve_radial(params, g, &spec.solver));
        rec.levels.push(match res {
            Ok(r) => LevelEntry::from_solve(LevelTag::SRad, &r, tol, secs),
            Err(e) => LevelEntry::failed(LevelTag::SRad, GridRef::Radial(g.clone()).descriptor(), tol, secs, &e),
        });
    }
    let needs_axi = spec.levels.ground || spec.levels.sigma || spec.levels.lambda || spec.levels.mpass;
    if needs_axi {
        let g = axi.expect("axisymmetric grid prepared");
        let desc = GridRef::Axi(g.clone()).descriptor();
        let f = match Functional::on_grid(&GridRef::Axi(g.clone()), params) {
            Ok(f) => f,
            Err(e) => {
                for tag in [LevelTag::S, LevelTag::T, LevelTag::Lambda, LevelTag::Beta] {
                    rec.levels.push(LevelEntry::failed(tag, desc.clone(), tol, 0.0, &e));
                }
                rec.seconds = start.elapsed().as_secs_f64();
                return rec;
            }
        };
        let mut ground_side = None;
        if spec.levels.ground {
            let (res, secs) = timed(|| minimize::solve_ground_with(&f, None, &spec.solver));
            match res {
                Ok(r) => {
                    rec.levels.push(LevelEntry::from_solve(LevelTag::S, &r, tol, secs));
                    match concentration_report_with(&f, &r.field, spec.cutoff) {
                        Ok(c) => rec.concentration = Some(c),
                        Err(e) => warn!("no concentration report at {params:?}: {e}"),
                    }
                    ground_side = heavy_side(&f, &r.field).ok();
                }
                Err(e) => rec.levels.push(LevelEntry::failed(LevelTag::S, desc.clone(), tol, secs, &e)),
            }
        }
        if spec.levels.sigma {
            let (res, secs) = timed(|| {
                let init = minimize::balanced_init(&f)?;
                minimize::solve_sigma_from(&f, &init, &spec.sigma)
            });
            rec.levels.push(match res {
                Ok(r) => LevelEntry::from_solve(LevelTag::T, &r, spec.sigma.ctol, secs),
                Err(e) => LevelEntry::failed(LevelTag::T, desc.clone(), spec.sigma.ctol, secs, &e),
            });
        }
        if spec.levels.lambda {
            // The second minimizer lives on the side away from the ground state.
            let heavy = match ground_side {
                Some(Side::Inner) => Side::Outer,
                _ => Side::Inner,
            };
            let (res, secs) = timed(|| {
                let init = instanton(&InstantonParams::new(spec.epsilon, heavy)?, g);
                minimize::solve_lambda_from(&f, &init, heavy, &spec.solver)
            });
            match res {
                Ok(r) => {
                    let mut entry = LevelEntry::from_solve(LevelTag::Lambda, &r, tol, secs);
                    entry.converged = r.converged && !r.escaped;
                    rec.levels.push(entry);
                    rec.lambda_margin = Some(r.constraint_defect / r.report.dirichlet_energy);
                    rec.lambda_escaped = Some(r.escaped);
                    rec.lambda_asymmetry = crate::diagnostics::asymmetry_index(&r.field).ok();
                }
                Err(e) => rec.levels.push(LevelEntry::failed(LevelTag::Lambda, desc.clone(), tol, secs, &e)),
            }
        }
        if spec.levels.mpass {
            let (res, secs) = timed(|| -> Result<_> {
                let u0 = instanton(&InstantonParams::new(spec.epsilon, Side::Outer)?, g);
                let u1 = instanton(&InstantonParams::new(spec.epsilon, Side::Inner)?, g);
                let path = mpass::straight_path(&f, &u0, &u1, spec.path_segments)?;
                let k = mpass::path_crossing(&f, &path)?;
                let crossing_level = path.quotients[k];
                let res = mpass::mountain_pass(&f, path, &spec.mpass)?;
                Ok((res, crossing_level))
            });
            match res {
                Ok((r, crossing_level)) => {
                    rec.levels.push(LevelEntry {
                        tag: LevelTag::Beta,
                        value: Some(r.beta),
                        converged: r.converged,
                        grid: desc.clone(),
                        tol: spec.mpass.tol,
                        iterations: r.iterations,
                        residual: Some(r.w_residual),
                        seconds: secs,
                        init: "straight-path".into(),
                        error: None,
                    });
                    rec.mpass = Some(MpassSummary {
                        endpoint_levels: r.endpoint_levels,
                        straight_max: r.straight_max,
                        crossing_level,
                        pass_level: r.pass_level,
                        w_residual: r.w_residual,
                        w_asymmetry: r.w_asymmetry,
                    });
                }
                Err(e) => rec.levels.push(LevelEntry::failed(LevelTag::Beta, desc, spec.mpass.tol, secs, &e)),
            }
        }
    }
    rec.seconds = start.elapsed().as_secs_f64();
    rec
}

/// Append-only record store shared by the sweep workers; an optional journal
/// receives each record as soon as it completes.
pub struct RecordSink {
    records: Mutex<Vec<(usize, ResultRecord)>>,
    journal: Option<Mutex<BufWriter<File>>>,
}

impl RecordSink {
    pub fn in_memory() -> Self {
        Self { records: Mutex::new(Vec::new()), journal: None }
    }

    pub fn with_journal(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { records: Mutex::new(Vec::new()), journal: Some(Mutex::new(BufWriter::new(file))) })
    }

    pub fn push(&self, index: usize, rec: ResultRecord) -> Result<()> {
        if let Some(j) = &self.journal {
            let mut w = j.lock().expect("journal lock");
            writeln!(w, "{}", to_json_line(&rec)?)?;
            w.flush()?;
        }
        self.records.lock().expect("record lock").push((index, rec));
        Ok(())
    }

    /// Records in parameter order.
    pub fn into_records(self) -> Vec<ResultRecord> {
        let mut v = self.records.into_inner().expect("record lock");
        v.sort_by_key(|(i, _)| *i);
        v.into_iter().map(|(_, r)| r).collect()
    }
}

/// Runs every point of the sweep, concurrently up to the worker bound.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRecord>> {
    let sink = RecordSink::in_memory();
    run_sweep_into(spec, &sink)?;
    Ok(sink.into_records())
}

pub fn run_sweep_into(spec: &SweepSpec, sink: &RecordSink) -> Result<()> {
    spec.validate()?;
    let radial = if spec.levels.radial { Some(Arc::new(spec.radial_grid()?)) } else { None };
    let needs_axi = spec.levels.ground || spec.levels.sigma || spec.levels.lambda || spec.levels.mpass;
    let axi = if needs_axi { Some(Arc::new(spec.axi_grid()?)) } else { None };
    let work = || -> Result<()> {
        spec.values.par_iter().enumerate().try_for_each(|(i, &v)| {
            let params = spec.params_at(v)?;
            info!("sweep point {v}");
            let rec = solve_point(spec, params, radial.as_ref(), axi.as_ref());
            sink.push(i, rec)
        })
    };
    match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Runs the sweep with a journal next to `stem`, then writes the canonical
/// `stem.jsonl` and `stem.csv`. The journal holds whatever completed if a
/// write fails midway.
pub fn run_sweep_to(spec: &SweepSpec, stem: &Path) -> Result<Vec<ResultRecord>> {
    let journal = stem.with_extension("partial.jsonl");
    if journal.exists() {
        fs::remove_file(&journal)?;
    }
    let sink = RecordSink::with_journal(&journal)?;
    run_sweep_into(spec, &sink)?;
    let records = sink.into_records();
    write_jsonl(&stem.with_extension("jsonl"), &records)?;
    write_csv(&stem.with_extension("csv"), &records)?;
    fs::remove_file(&journal)?;
    Ok(records)
}

fn to_json_line(rec: &ResultRecord) -> Result<String> {
    serde_json::to_string(rec).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_jsonl(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", to_json_line(r)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ResultRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

fn tag_name(tag: LevelTag) -> String {
    serde_json::to_value(tag).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

/// Flat summary, one row per level: `alpha,p,level_tag,value,converged,grid`.
pub fn write_csv_to(w: &mut impl Write, records: &[ResultRecord]) -> Result<()> {
    writeln!(w, "alpha,p,level_tag,value,converged,grid")?;
    for r in records {
        for e in &r.levels {
            let value = e.value.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{}", r.params.alpha, r.params.p, tag_name(e.tag), value, e.converged, e.grid)?;
        }
    }
    Ok(())
}

pub fn write_csv(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(&mut w, records)?;
    w.flush()?;
    Ok(())
}

/// Least-squares fit of `log(level)` against `log(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn fit_exponent(records: &[ResultRecord], tag: LevelTag, force: bool) -> Result<ExponentFit> {
    let mut pts = Vec::with_capacity(records.len());
    for r in records {
        let e = r
            .entry(tag)
            .ok_or_else(|| Error::Config(format!("record at alpha {} has no {} level", r.params.alpha, tag_name(tag))))?;
        if !e.converged && !force {
            return Err(Error::NonConvergence(format!(
                "{} at alpha {} did not converge; pass the force flag to fit anyway",
                tag_name(tag),
                r.params.alpha
            )));
        }
        let v = e.value.ok_or_else(|| Error::Config(format!("{} at alpha {} failed", tag_name(tag), r.params.alpha)))?;
        pts.push((r.params.alpha, v));
    }
    fit_power_law(&pts)
}

/// Slope of `log y` against `log x`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(Error::Config(format!("a fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Domain("fits need positive parameters and levels".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all parameters coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ExponentFit { slope, intercept, r_squared, points: points.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub name: String,
    pub status: CheckStatus,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub checks: Vec<ChainCheck>,
}

impl ChainReport {
    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }

    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Fail)
    }
}

/// Level ordering `S <= S_rad`, `S <= T`, `beta >= max endpoint` and
/// `beta >= T`, each with relative slack `tol`. Missing levels skip the check.
pub fn chain_check(record: &ResultRecord, tol: f64) -> ChainReport {
    let s = record.level(LevelTag::S);
    let endpoint_max = record.mpass.as_ref().map(|m| m.endpoint_levels.0.max(m.endpoint_levels.1));
    let beta = record.level(LevelTag::Beta);
    let t = record.level(LevelTag::T);
    // lhs <= rhs up to tol
    let le = |name: &str, lhs: Option<f64>, rhs: Option<f64>| {
        let status = match (lhs, rhs) {
            (Some(a), Some(b)) if a <= b + tol * a.abs().max(b.abs()) => CheckStatus::Pass,
            (Some(_), Some(_)) => CheckStatus::Fail,
            _ => CheckStatus::Skipped,
        };
        ChainCheck { name: name.into(), status, lhs, rhs }
    };
    ChainReport {
        checks: vec![
            le("s_le_s_rad", s, record.level(LevelTag::SRad)),
            le("s_le_t", s, t),
            le("endpoints_le_beta", endpoint_max, beta),
            le("t_le_beta", t, beta),
        ],
    }
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(Error::Parse(format!("config line {}: empty key", n + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config(&fs::read_to_string(path)?)
}

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use henon_core::diagnostics::{concentration_report_with, ConcentrationReport};
use henon_core::functional::{Functional, LevelTag};
use henon_core::geometry::{AngularGrading, AxiGrid, DiscreteField, Grading, GridRef, ProblemParams, RadialGrading, RadialGrid};
use henon_core::harness::{self, chain_check, fit_exponent, LevelSelection, SweepAxis, SweepSpec};
use henon_core::minimize::{self, SigmaOptions, SolveResult, SolverOptions};
use henon_core::mpass::{self, MpassOptions};
use henon_core::testfun::{instanton, CutoffSpec, InstantonParams, Side};
use henon_core::{Error, Result};

#[derive(Parser)]
#[command(name = "henon", version, about = "Ground states and mountain-pass levels of a Henon-type equation on an annulus")]
#[command(args_override_self = true)]
struct Cli {
    /// `key = value` file supplying any flag; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Radial level by inverse power iteration.
    SolveRadial(Common),
    /// Ground level over axisymmetric fields.
    SolveGround(Common),
    /// Minimum over fields with equal energy in both halves.
    SolveSigma(Common),
    /// Local minimum with more energy on one side.
    SolveLambda(LambdaArgs),
    /// Mountain-pass level between the two boundary bubbles.
    MountainPass(MpassArgs),
    /// Sweep over alpha or p.
    Sweep(SweepArgs),
    /// Concentration report of a field snapshot, or of the ground state.
    Diagnose(DiagnoseArgs),
    /// Exponent of a level against alpha from a sweep file.
    Fit(FitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Inner,
    Outer,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Inner => Side::Inner,
            SideArg::Outer => Side::Outer,
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 4.0)]
    p: f64,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Radial cells (default 2000 for radial solves, 256 otherwise).
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long, default_value_t = 96)]
    ntheta: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Balanced-energy constraint tolerance.
    #[arg(long, default_value_t = 1e-6)]
    ctol: f64,
    /// Bubble concentration parameter.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Cutoff band width.
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `json` writes the report; `csv` writes the field snapshot.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
}

#[derive(Args)]
struct LambdaArgs {
    #[command(flatten)]
    common: Common,
    /// Half that keeps the larger share of the energy.
    #[arg(long, value_enum, default_value_t = SideArg::Inner)]
    side: SideArg,
}

#[derive(Args)]
struct MpassArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 16)]
    segments: usize,
    /// Per-iteration path levels as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Alpha,
    P,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = AxisArg::Alpha)]
    axis: AxisArg,
    /// Comma-separated parameter values, ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Comma-separated levels: radial, ground, sigma, lambda, mpass.
    #[arg(long, value_delimiter = ',', default_value = "radial")]
    levels: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Radial cells of the radial solves.
    #[arg(long, default_value_t = 2000)]
    nr_radial: usize,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: Common,
    /// Field snapshot to analyse instead of solving for the ground state.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Sweep records (JSON lines).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "s")]
    level: String,
    /// Fit even when some records did not converge.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Command line with the config file's entries inserted right after the
/// subcommand, so that later command-line flags override them.
fn merged_args() -> Result<Vec<String>> {
    let args: Vec<String> = std::env::args().collect();
    let mut config = None;
    for (i, a) in args.iter().enumerate() {
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if a == "--config" {
            config = args.get(i + 1).cloned();
        }
    }
    let Some(path) = config else { return Ok(args) };
    let entries = harness::read_config(Path::new(&path))?;
    let Some(sub) = args.iter().skip(1).position(|a| !a.starts_with('-') && Some(a) != Some(&path)).map(|i| i + 1) else {
        return Ok(args);
    };
    let mut out = args[..=sub].to_vec();
    for (k, v) in entries {
        if k == "config" {
            continue;
        }
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => out.push(format!("--{k}={v}")),
        }
    }
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn run() -> Result<ExitCode> {
    let args = merged_args()?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            e.print().ok();
            return Ok(ExitCode::from(3));
        }
        Err(e) => {
            e.print().ok();
            return Ok(ExitCode::SUCCESS);
        }
    };
    match cli.command {
        Command::SolveRadial(c) => {
            let params = ProblemParams::with_validation(c.dim, c.alpha, c.p)?;
            let grid = Arc::new(RadialGrid::new(c.nr.unwrap_or(2000), Grading::graded())?);
            let res = minimize::solve_radial(params, &grid, &c.solver())?;
            emit_solve(&c, &res, json!({}))
        }
        Command::SolveGround(c) => {
            let f = c.axi_functional()?;
            let res = minimize::solve_ground_with(&f, None, &c.solver())?;
            let rep = concentration_report_with(&f, &res.field, c.cutoff()?)?;
            emit_solve(&c, &res, json!({ "concentration": rep }))
        }
        Command::SolveSigma(c) => {
            let f = c.axi_functional()?;
            let init = minimize::balanced_init(&f)?;
            let opts = SigmaOptions { ctol: c.ctol, solver: SolverOptions { tol: c.tol, ..SigmaOptions::default().solver }, ..Default::default() };
            let res = minimize::solve_sigma_from(&f, &init, &opts)?;
            emit_solve(&c, &res, json!({}))
        }
        Command::SolveLambda(a) => {
            let c = &a.common;
            let f = c.axi_functional()?;
            let side = Side::from(a.side);
            let init = instanton(&InstantonParams::new(c.eps, side)?, &c.axi_grid()?);
            let res = minimize::solve_lambda_from(&f, &init, side, &c.solver())?;
            let rep = concentration_report_with(&f, &res.field, c.cutoff()?)?;
            let code = emit_solve(c, &res, json!({ "escaped": res.escaped, "concentration": rep }))?;
            Ok(if res.escaped { ExitCode::from(2) } else { code })
        }
        Command::MountainPass(a) => {
            let c = &a.common;
            let grid = c.axi_grid()?;
            let f = Functional::on_grid(&GridRef::Axi(grid.clone()), c.params()?)?;
            let u0 = instanton(&InstantonParams::new(c.eps, Side::Outer)?, &grid);
            let u1 = instanton(&InstantonParams::new(c.eps, Side::Inner)?, &grid);
            let path = mpass::straight_path(&f, &u0, &u1, a.segments)?;
            let crossing = mpass::path_crossing(&f, &path)?;
            let crossing_level = path.quotients[crossing];
            let opts = MpassOptions { max_iter: c.max_iter, ..Default::default() };
            let res = mpass::mountain_pass(&f, path, &opts)?;
            if let Some(t) = &a.trace {
                let mut w = BufWriter::new(File::create(t)?);
                res.write_trace_csv(&mut w)?;
                w.flush()?;
            }
            match c.format {
                Format::Json => {
                    let mut v = serde_json::to_value(&res).map_err(|e| Error::Parse(e.to_string()))?;
                    v["crossing_index"] = json!(crossing);
                    v["crossing_level"] = json!(crossing_level);
                    write_json(c.out.as_deref(), &v)?;
                }
                Format::Csv => write_field(c.out.as_deref(), &res.w)?,
            }
            Ok(if res.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Sweep(a) => {
            let c = &a.common;
            let axis = match a.axis {
                AxisArg::Alpha => SweepAxis::Alpha { p: c.p },
                AxisArg::P => SweepAxis::P { alpha: c.alpha },
            };
            let mut levels = LevelSelection { radial: false, ground: false, sigma: false, lambda: false, mpass: false };
            for l in &a.levels {
                match l.trim() {
                    "radial" => levels.radial = true,
                    "ground" => levels.ground = true,
                    "sigma" => levels.sigma = true,
                    "lambda" => levels.lambda = true,
                    "mpass" => levels.mpass = true,
                    "all" => levels = LevelSelection::ALL,
                    other => return Err(Error::Config(format!("unknown level {other:?}"))),
                }
            }
            let mut spec = SweepSpec::new(axis, a.values.clone(), levels);
            spec.dim = c.dim;
            spec.radial_cells = a.nr_radial;
            spec.axi_radial_cells = c.nr.unwrap_or(256);
            spec.axi_angular_cells = c.ntheta;
            spec.solver = c.solver();
            spec.sigma.ctol = c.ctol;
            spec.epsilon = c.eps;
            spec.cutoff = c.cutoff()?;
            spec.seed = c.seed;
            spec.workers = a.workers;
            let records = match &c.out {
                Some(stem) => harness::run_sweep_to(&spec, stem)?,
                None => {
                    let recs = harness::run_sweep(&spec)?;
                    let mut out = io::stdout().lock();
                    match c.format {
                        Format::Json => {
                            for r in &recs {
                                writeln!(out, "{}", serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?)?;
                            }
                        }
                        Format::Csv => harness::write_csv_to(&mut out, &recs)?,
                    }
                    recs
                }
            };
            for r in &records {
                let chain = chain_check(r, 1e-6);
                if chain.failed() {
                    log::warn!("level ordering violated at {:?}: {:?}", r.params, chain.checks);
                }
            }
            Ok(if records.iter().all(|r| r.all_converged()) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Diagnose(a) => {
            let c = &a.common;
            let (f, u) = match &a.input {
                Some(path) => {
                    let u = DiscreteField::read_csv(BufReader::new(File::open(path)?))?;
                    let f = Functional::on_grid(u.grid(), c.params()?)?;
                    (f, u)
                }
                None => {
                    let f = c.axi_functional()?;
                    let res = minimize::solve_ground_with(&f, None, &c.solver())?;
                    (f, res.field)
                }
            };
            let rep: ConcentrationReport = concentration_report_with(&f, &u, c.cutoff()?)?;
            match c.format {
                Format::Json => write_json(c.out.as_deref(), &json!({ "params": f.params(), "quotient": f.quotient(&u)?, "report": rep }))?,
                Format::Csv => {
                    let mut w = sink(c.out.as_deref())?;
                    writeln!(w, "rho,fraction")?;
                    for (rho, fr) in &rep.boundary_fraction {
                        writeln!(w, "{rho},{fr}")?;
                    }
                    w.flush()?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit(a) => {
            let records = harness::read_jsonl(&a.input)?;
            let tag: LevelTag = serde_json::from_value(json!(a.level)).map_err(|_| Error::Config(format!("unknown level {:?}", a.level)))?;
            let fit = fit_exponent(&records, tag, a.force)?;
            let mut w = sink(a.out.as_deref())?;
            match a.format {
                Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&fit).map_err(|e| Error::Parse(e.to_string()))?)?,
                Format::Csv => {
                    writeln!(w, "level,slope,intercept,r_squared,points")?;
                    writeln!(w, "{},{},{},{},{}", a.level, fit.slope, fit.intercept, fit.r_squared, fit.points)?;
                }
            }
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

impl Common {
    fn params(&self) -> Result<ProblemParams> {
        ProblemParams::new(self.dim, self.alpha, self.p)
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_iter: self.max_iter, ..Default::default() }
    }

    fn cutoff(&self) -> Result<CutoffSpec> {
        CutoffSpec::new(self.delta)
    }

    fn axi_grid(&self) -> Result<Arc<AxiGrid>> {
        Ok(Arc::new(AxiGrid::new(
            self.nr.unwrap_or(256),
            self.ntheta,
            Grading::Graded(RadialGrading::AXI_DEFAULT),
            AngularGrading::POLAR_DEFAULT,
        )?))
    }

    fn axi_functional(&self) -> Result<Functional> {
        Functional::on_grid(&GridRef::Axi(self.axi_grid()?), self.params()?)
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json(path: Option<&Path>, v: &serde_json::Value) -> Result<()> {
    let mut w = sink(path)?;
    writeln!(w, "{}", serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?)?;
    w.flush()?;
    Ok(())
}

fn write_field(path: Option<&Path>, u: &DiscreteField) -> Result<()> {
    let mut w = sink(path)?;
    u.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn emit_solve(c: &Common, res: &SolveResult, extra: serde_json::Value) -> Result<ExitCode> {
    match c.format {
        Format::Json => {
            let mut v = res.to_json();
            if let (Some(obj), Some(more)) = (v.as_object_mut(), extra.as_object()) {
                obj.extend(more.clone());
            }
            write_json(c.out.as_deref(), &v)?;
        }
        Format::Csv => write_field(c.out.as_deref(), &res.field)?,
    }
    Ok(if res.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

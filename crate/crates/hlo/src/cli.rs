//! Command-line driver: loads a config or preset, runs one experiment and
//! writes CSV tables plus a JSON summary (schemas/summary.schema.json) into a
//! run directory named after the command and the config hash.

use crate::characteristics::{funnel, light_cone_radii, Integrator};
use crate::config::RunConfig;
use crate::ergodics::{asymptotic_velocity_experiment, coincidence_check, estimate_rho, pullback_experiment, InitialPotential};
use crate::error::HloError;
use crate::field::{fmt_f64, l1_distance, linspace, midpoints, write_csv, PiecewiseField};
use crate::forcing::{trace_rows, BoundaryTrace};
use crate::hlo_flat::solve_ivbp_flat;
use crate::hlo_schwarzschild::solve_ivbp_schw;
use crate::oracle_fv::{fv_run, FvGrid, FvRun};
use crate::transport::{Origin, Traced};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SUMMARY_VERSION: u32 = 1;

/// Drops between neighbouring samples above this are reported as shocks.
pub const SHOCK_JUMP: f64 = 1e-2;

/// Light-cone samples written by `characteristics`.
const LIGHT_CONE_SAMPLES: usize = 400;

#[derive(Debug, Parser)]
#[command(name = "hlo-lab", version, about = "Variational Burgers solvers on flat and Schwarzschild backgrounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Shipped preset to use instead of --config.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Overrides the seed of the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Parent directory of the run directories.
    #[arg(long, global = true, value_name = "DIR", default_value = "runs")]
    pub out: PathBuf,
    /// Also run the finite-volume reference solver (solve only).
    #[arg(long, global = true)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Funnel of characteristics from a base point plus its light cone.
    Characteristics,
    /// Initial-boundary value problem on a window.
    Solve,
    /// Action rate, asymptotic speed and far-field velocities.
    Ergodic,
    /// Pullback attraction and coincidence of solutions.
    Attract,
    /// Variational solution against the finite-volume reference.
    OracleDiff,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Characteristics => "characteristics",
            Command::Solve => "solve",
            Command::Ergodic => "ergodic",
            Command::Attract => "attract",
            Command::OracleDiff => "oracle-diff",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<HloError> for CliError {
    fn from(e: HloError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

/// Where a run wrote its artifacts.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub summary: Value,
}

/// Parses arguments, runs and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            println!("{}", out.dir.display());
            0
        }
        Err(e) => {
            eprintln!("hlo-lab: {e}");
            e.exit_code()
        }
    }
}

/// Config from --config or --preset with the --seed override applied.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => return Err(CliError::Config("pass either --config or --preset, not both".into())),
        (None, None) => return Err(CliError::Config("one of --config or --preset is required".into())),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => RunConfig::preset(name)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<RunOutput, CliError> {
    let cfg = load_config(cli)?;
    if cli.oracle && cli.command != Command::Solve {
        return Err(CliError::Config("--oracle only applies to solve".into()));
    }
    let mut run = Run::new(&cfg, cli)?;
    let results = match cli.command {
        Command::Characteristics => cmd_characteristics(&cfg, &mut run)?,
        Command::Solve => cmd_solve(&cfg, &mut run, cli.oracle)?,
        Command::Ergodic => cmd_ergodic(&cfg, &mut run)?,
        Command::Attract => cmd_attract(&cfg, &mut run)?,
        Command::OracleDiff => cmd_oracle_diff(&cfg, &mut run)?,
    };
    run.finish(&cfg, cli.command, results)
}

struct Run {
    dir: PathBuf,
    files: Vec<String>,
    hash: String,
}

impl Run {
    fn new(cfg: &RunConfig, cli: &Cli) -> Result<Self, CliError> {
        let hash = cfg.hash();
        let dir = run_dir(&cli.out, cli.command, cfg, cli.oracle);
        std::fs::create_dir_all(&dir)?;
        let mut run = Run { dir, files: vec![], hash };
        let text = serde_json::to_string_pretty(cfg).expect("config serializes");
        run.write_text("config.json", &text)?;
        Ok(run)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let mut f = std::fs::File::create(self.dir.join(name))?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv<R: AsRef<[f64]>>(&mut self, name: &str, header: &[&str], rows: &[R]) -> Result<(), CliError> {
        write_csv(self.dir.join(name), header, rows)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// CSV whose leading columns are integer labels.
    fn labelled_csv(&mut self, name: &str, header: &[&str], rows: &[(Vec<usize>, Vec<f64>)]) -> Result<(), CliError> {
        let mut out = String::new();
        out.push_str(&header.join(","));
        for (labels, values) in rows {
            out.push('\n');
            let cells: Vec<String> = labels.iter().map(|l| l.to_string()).chain(values.iter().map(|v| fmt_f64(*v))).collect();
            out.push_str(&cells.join(","));
        }
        self.write_text(name, &out)
    }

    fn finish(mut self, cfg: &RunConfig, command: Command, results: Value) -> Result<RunOutput, CliError> {
        self.files.push("summary.json".into());
        self.files.sort();
        let summary = json!({
            "version": SUMMARY_VERSION,
            "command": command.name(),
            "name": cfg.name,
            "config_hash": self.hash,
            "seed": cfg.seed,
            "model": if cfg.is_flat() { "flat" } else { "schwarzschild" },
            "background": { "mass": cfg.background.mass, "r_star": cfg.background.r_star },
            "files": self.files,
            "results": results,
        });
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(self.dir.join("summary.json"), format!("{text}\n"))?;
        Ok(RunOutput { dir: self.dir, summary })
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("config has no \"{section}\" section"))
}

fn cmd_characteristics(cfg: &RunConfig, run: &mut Run) -> Result<Value, CliError> {
    let c = cfg.characteristics.as_ref().ok_or_else(|| missing("characteristics"))?;
    let bg = cfg.background()?;
    let integ = Integrator::new(bg);
    let arcs = funnel(&integ, c.t0, c.r0, &c.velocities, c.t_end)?;
    let mut rows = Vec::new();
    for (i, arc) in arcs.iter().enumerate() {
        for s in &arc.states {
            rows.push((vec![i], vec![c.velocities[i], s.t, s.r, s.u, arc.c]));
        }
    }
    run.labelled_csv("arcs.csv", &["arc", "u0", "t", "r", "u", "c"], &rows)?;
    let cone: Vec<[f64; 3]> = linspace(c.t0, c.t_end, LIGHT_CONE_SAMPLES)
        .into_iter()
        .map(|t| {
            let (out, inn) = light_cone_radii(bg.mass, c.t0, c.r0, t);
            [t, out, inn]
        })
        .collect();
    run.csv("light_cone.csv", &["t", "r_out", "r_in"], &cone)?;
    let summary: Vec<Value> = arcs
        .iter()
        .zip(&c.velocities)
        .enumerate()
        .map(|(i, (a, u0))| {
            json!({
                "arc": i,
                "u0": u0,
                "c": a.c,
                "classification": a.classification.as_str(),
                "end": a.end,
                "samples": a.states.len(),
                "max_drift": a.max_drift,
            })
        })
        .collect();
    Ok(json!({
        "r0": c.r0,
        "t0": c.t0,
        "t_end": c.t_end,
        "escape_velocity": bg.escape_velocity(c.r0)?,
        "arc_count": arcs.len(),
        "light_cone_curves": 2,
        "arcs": summary,
    }))
}

/// Variational solution of the `solve` section: (u field, CSV rows, header,
/// origin counts).
struct Solved {
    u: PiecewiseField,
    rows: Vec<Vec<f64>>,
    header: Vec<&'static str>,
    from_initial: usize,
    from_boundary: usize,
}

fn count_origins<M: Traced>(ms: &[M]) -> (usize, usize) {
    let init = ms.iter().filter(|m| matches!(m.origin(), Origin::InitialLine { .. })).count();
    (init, ms.len() - init)
}

fn solve_section(cfg: &RunConfig) -> Result<Solved, CliError> {
    let s = cfg.solve.as_ref().ok_or_else(|| missing("solve"))?;
    let init = cfg.initial.as_ref().ok_or_else(|| missing("initial"))?;
    let bg = cfg.background()?;
    let forcing = cfg.forcing()?;
    let trace = forcing.trace();
    let o = cfg.origin();
    let grid = midpoints(o, o + s.window, s.n_grid);
    let v0 = cfg.initial_density(init)?;
    Ok(match cfg.initial_potential(init)? {
        InitialPotential::Flat(u0) => {
            let sol = solve_ivbp_flat(&u0, &v0, trace, s.t0, s.t1, &grid)?;
            let (from_initial, from_boundary) = count_origins(&sol.minimizers);
            Solved {
                rows: sol.rows().iter().map(|r| r.to_vec()).collect(),
                u: sol.u,
                header: vec!["x", "u", "v", "U"],
                from_initial,
                from_boundary,
            }
        }
        InitialPotential::Schw(w) => {
            let sol = solve_ivbp_schw(&bg, &w, &v0, trace, s.t0, s.t1, &grid)?;
            let (from_initial, from_boundary) = count_origins(&sol.minimizers);
            Solved {
                rows: sol.rows().iter().map(|r| r.to_vec()).collect(),
                u: sol.u,
                header: vec!["r", "u", "v", "U", "C"],
                from_initial,
                from_boundary,
            }
        }
    })
}

fn oracle_section(cfg: &RunConfig) -> Result<(FvGrid, FvRun), CliError> {
    let s = cfg.solve.as_ref().ok_or_else(|| missing("solve"))?;
    let init = cfg.initial.as_ref().ok_or_else(|| missing("initial"))?;
    let bg = cfg.background()?;
    let forcing = cfg.forcing()?;
    let o = cfg.origin();
    let grid = FvGrid::new(o, o + s.window, s.n_grid, s.cfl)?;
    let u0 = match cfg.initial_potential(init)? {
        InitialPotential::Flat(p) => grid.averages_flat(&p),
        InitialPotential::Schw(w) => grid.averages_schw(&w),
    };
    let fv = fv_run(&bg, &u0, forcing.trace(), s.t0, s.t1, grid)?;
    Ok((grid, fv))
}

fn oracle_stats(hlo: &PiecewiseField, fv: &FvRun) -> Result<Value, CliError> {
    let linf = hlo.values.iter().zip(&fv.u.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(json!({
        "l1": l1_distance(hlo, &fv.u)?,
        "linf": linf,
        "steps": fv.steps,
        "mass_initial": fv.mass_initial,
        "mass_final": fv.mass_final,
        "conservation_defect": (fv.mass_final - fv.mass_initial) - (fv.flux_in - fv.flux_out),
    }))
}

fn cmd_solve(cfg: &RunConfig, run: &mut Run, oracle: bool) -> Result<Value, CliError> {
    let solved = solve_section(cfg)?;
    let s = cfg.solve.as_ref().expect("checked by solve_section");
    run.csv("solution.csv", &solved.header, &solved.rows)?;
    let forcing = cfg.forcing()?;
    let trace = trace_rows(forcing.trace(), s.t0, s.t1);
    run.csv("trace.csv", &["t", "phi", "psi"], &trace)?;
    let mut results = json!({
        "t0": s.t0,
        "t1": s.t1,
        "window": s.window,
        "n_grid": s.n_grid,
        "shock_jump": SHOCK_JUMP,
        "shocks": solved.u.downward_jumps(SHOCK_JUMP),
        "bv_seminorm": solved.u.total_variation(),
        "u_min": solved.u.values.iter().cloned().fold(f64::INFINITY, f64::min),
        "u_max": solved.u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "origins": { "initial_line": solved.from_initial, "boundary": solved.from_boundary },
        "trace_cells": trace.len() - 1,
        "forcing": forcing.trace().description(),
    });
    if oracle {
        let (grid, fv) = oracle_section(cfg)?;
        let rows: Vec<[f64; 2]> = fv.u.xs.iter().zip(&fv.u.values).map(|(x, u)| [*x, *u]).collect();
        run.csv("fv.csv", &[solved.header[0], "u"], &rows)?;
        let mut stats = oracle_stats(&solved.u, &fv)?;
        stats["n_cells"] = json!(grid.n_cells);
        results["oracle"] = stats;
    }
    Ok(results)
}

fn cmd_oracle_diff(cfg: &RunConfig, run: &mut Run) -> Result<Value, CliError> {
    let solved = solve_section(cfg)?;
    let (grid, fv) = oracle_section(cfg)?;
    let rows: Vec<[f64; 4]> = solved
        .u
        .xs
        .iter()
        .zip(solved.u.values.iter().zip(&fv.u.values))
        .map(|(x, (a, b))| [*x, *a, *b, (a - b).abs()])
        .collect();
    run.csv("diff.csv", &[solved.header[0], "u_hlo", "u_fv", "abs_diff"], &rows)?;
    let mut stats = oracle_stats(&solved.u, &fv)?;
    stats["n_cells"] = json!(grid.n_cells);
    stats["cfl"] = json!(grid.cfl);
    Ok(stats)
}

fn cmd_ergodic(cfg: &RunConfig, run: &mut Run) -> Result<Value, CliError> {
    let e = cfg.ergodic.as_ref().ok_or_else(|| missing("ergodic"))?;
    let bg = cfg.background()?;
    let forcing = cfg.forcing()?;
    let spec = forcing.process()?;
    let mut report = estimate_rho(&bg, spec, &e.spans)?;
    if !e.radii.is_empty() {
        report.asymptotic_records = asymptotic_velocity_experiment(&bg, spec, &e.radii)?;
    }
    run.write_text("report.json", &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    let rho: Vec<[f64; 2]> = report.rho_estimates.iter().map(|(s, r)| [*s, *r]).collect();
    run.csv("rho.csv", &["span", "s_over_span"], &rho)?;
    let asym: Vec<[f64; 2]> = report.asymptotic_records.iter().map(|(r, u)| [*r, *u]).collect();
    run.csv("asymptotic.csv", &[if cfg.is_flat() { "x" } else { "r" }, "u"], &asym)?;
    let e_star = bg.ue2_star();
    let bound = spec.mean_phi_plus_sq().map(|m| {
        let stay = -0.5 * (m - e_star) / (1.0 - e_star);
        json!({
            "mean_phi_plus_sq": m,
            "escape_velocity_sq": e_star,
            "credit_exceeds_escape": m > e_star,
            "stay_rate_bound": stay,
            "rho_hat_minus_bound": report.rho_hat - stay,
        })
    });
    Ok(json!({
        "rho_hat": report.rho_hat,
        "theta_hat": report.theta_hat,
        "fit_slope": report.fit_slope,
        "fit_residual": report.fit_residual,
        "global_solution_expected": report.global_solution_expected,
        "note": report.note,
        "forcing": spec.description(),
        "bound": bound,
        "asymptotic": asym.iter().map(|p| json!({ "position": p[0], "u": p[1] })).collect::<Vec<_>>(),
    }))
}

fn cmd_attract(cfg: &RunConfig, run: &mut Run) -> Result<Value, CliError> {
    let a = cfg.attract.as_ref().ok_or_else(|| missing("attract"))?;
    let init = cfg.initial.as_ref().ok_or_else(|| missing("initial"))?;
    let bg = cfg.background()?;
    let forcing = cfg.forcing()?;
    let spec = forcing.process()?;
    let w = cfg.initial_potential(init)?;
    let res = pullback_experiment(&bg, spec, &w, a.window, &a.lookbacks, a.n_grid)?;
    let rows: Vec<[f64; 3]> = res.records.iter().map(|r| [r.lookback, r.d, r.agreement_radius]).collect();
    run.csv("attraction.csv", &["lookback", "d", "agreement_radius"], &rows)?;
    let global: Vec<[f64; 2]> = res.global.xs.iter().zip(&res.global.values).map(|(x, u)| [*x, *u]).collect();
    run.csv("global.csv", &[if cfg.is_flat() { "x" } else { "r" }, "u"], &global)?;
    let mut results = json!({
        "window": a.window,
        "n_grid": a.n_grid,
        "records": res.records,
        "global_converged": res.global_converged,
        "warnings": res.warnings,
        "coincidence": Value::Null,
    });
    if !a.others.is_empty() {
        let mut ws = vec![w];
        for o in &a.others {
            ws.push(cfg.initial_potential(o)?);
        }
        let t_deep = a.t_deep.unwrap_or_else(|| a.lookbacks.iter().cloned().fold(0.0, f64::max));
        let rep = coincidence_check(&bg, spec, &ws, t_deep, a.window, a.n_grid)?;
        let rows: Vec<(Vec<usize>, Vec<f64>)> = rep.pairs.iter().map(|(i, j, d)| (vec![*i, *j], vec![*d])).collect();
        run.labelled_csv("coincidence.csv", &["i", "j", "d"], &rows)?;
        results["coincidence"] = json!({
            "t_deep": t_deep,
            "bound": (-a.window).exp(),
            "coincide": rep.coincide,
            "pairs": rep.pairs.iter().map(|(i, j, d)| json!({ "i": i, "j": j, "d": d })).collect::<Vec<_>>(),
            "warnings": rep.warnings,
        });
    }
    Ok(results)
}

/// Directory a run of `command` with `cfg` writes to under `out`.
pub fn run_dir(out: &Path, command: Command, cfg: &RunConfig, oracle: bool) -> PathBuf {
    let mut name = format!("{}-{}", command.name(), cfg.hash());
    if oracle {
        name.push_str("-oracle");
    }
    out.join(name)
}

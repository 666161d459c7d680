//! `dynreg`: batch front end for the regularity diagnostics.
//!
//! Every subcommand reads one TOML run config, writes `<command>.json` and
//! CSV side files into the output directory, and exits with 0 on success,
//! 1 on a numerical failure (after writing a partial report) and 2 on a
//! configuration error.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dynreg::appendix::{jordanizer, m_infinity, ReducedSystem};
use dynreg::criteria::{classify, LadderBudget};
use dynreg::dynsys::{
    analysis_grid, analyze, fundamental_matrix, integrate_on_grid, running_constant, spectral_norm, FieldGenerator, Generator,
};
use dynreg::gilbarg_serrin::{
    build_cesari_counterexample, gs_mode_ode_solution, scalar_reduction, verify_independence, CesariKind, CesariParams,
};
use dynreg::pde::{dyadic_radii, gradient_at_origin, lipschitz_quotient, solve_dirichlet, spectral_decompose, SolverOptions};
use dynreg::sphmean::appendix_moments;
use dynreg::{CoefficientField, Radius};
use nalgebra::DVector;
use serde_json::json;

use config::{digest, PdeOptions, RunConfig};
use report::Run;

pub const OUT_DIR_ENV: &str = "DYNREG_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure in {module}: {message}")]
    Numerical { module: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "dynreg", version, about = "Pointwise regularity diagnostics for divergence-form elliptic equations")]
struct Cli {
    /// Output directory; overrides the DYNREG_OUT_DIR variable and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spherical moments R(r), S(r) and μ on dyadic radii.
    Moments(ConfigArg),
    /// Integrate the log-time system and estimate its stability.
    Integrate(IntegrateArgs),
    /// Run every integral condition and classify the origin.
    Classify(ConfigArg),
    /// First-order block reduction along the log-time window.
    Appendix(ConfigArg),
    /// Gilbarg–Serrin laboratory: a configured field or a built-in example.
    Gs(GsArgs),
    /// Solve the PDE on the square and read off the behavior at the origin.
    Verify(ConfigArg),
    /// Moments, dynamics, classification and (with a [pde] section) the PDE check.
    Report(ConfigArg),
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Run config (TOML).
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(clap::Args)]
struct GsArgs {
    #[arg(short, long, required_unless_present = "example", conflicts_with = "example")]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<Example>,
}

#[derive(clap::Args)]
struct IntegrateArgs {
    #[arg(short, long, required_unless_present = "example", conflicts_with = "example")]
    config: Option<PathBuf>,
    /// Integrate a built-in scalar generator instead of a configured field.
    #[arg(long)]
    example: Option<Example>,
    #[arg(long, allow_negative_numbers = true)]
    t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
}

impl IntegrateArgs {
    fn overrides(&self) -> serde_json::Value {
        json!({ "t0": self.t0, "t1": self.t1, "tol": self.tol })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    CesariConvergent,
    CesariMinusInfinity,
}

fn out_dir(flag: Option<PathBuf>, cfg: Option<&RunConfig>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("dynreg-out"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dynreg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    let load = |p: &Option<PathBuf>| p.as_ref().map(|p| RunConfig::load(p)).transpose();
    let (name, cfg, example) = match &cli.command {
        Command::Moments(a) => ("moments", Some(RunConfig::load(&a.config)?), None),
        Command::Integrate(a) => ("integrate", load(&a.config)?, a.example),
        Command::Classify(a) => ("classify", Some(RunConfig::load(&a.config)?), None),
        Command::Appendix(a) => ("appendix", Some(RunConfig::load(&a.config)?), None),
        Command::Gs(a) => ("gs", load(&a.config)?, a.example),
        Command::Verify(a) => ("verify", Some(RunConfig::load(&a.config)?), None),
        Command::Report(a) => ("report", Some(RunConfig::load(&a.config)?), None),
    };
    let dir = out_dir(cli.out.clone(), cfg.as_ref());
    let (mut cfg_value, mut hash) = match (&cfg, example) {
        (Some(c), _) => (serde_json::to_value(c).expect("config serializes"), c.hash()),
        (None, Some(e)) => {
            let name = example_name(e);
            (json!({ "example": name }), digest(&format!("example:{name}")))
        }
        (None, None) => unreachable!("clap requires a config or an example"),
    };
    if let Command::Integrate(a) = &cli.command {
        let o = a.overrides();
        hash = digest(&format!("{hash}:{o}"));
        cfg_value = json!({ "source": cfg_value, "overrides": o });
    }
    let mut run = Run::new(name, dir, cfg_value, hash)?;
    let outcome = match (&cli.command, &cfg) {
        (Command::Moments(_), Some(c)) => moments(&mut run, c),
        (Command::Integrate(a), _) => integrate(&mut run, cfg.as_ref(), a),
        (Command::Classify(_), Some(c)) => classify_cmd(&mut run, c),
        (Command::Appendix(_), Some(c)) => appendix(&mut run, c),
        (Command::Verify(_), Some(c)) => verify(&mut run, c, c.pde.clone().unwrap_or_default()),
        (Command::Report(_), Some(c)) => full_report(&mut run, c),
        (Command::Gs(_), Some(c)) => gs_field(&mut run, c),
        (Command::Gs(_), None) => gs_example(&mut run, example.expect("clap requires an example")),
        _ => unreachable!(),
    };
    match outcome {
        Ok(summary) => {
            let path = run.finish(None)?;
            Ok(format!("{summary} -> {}", path.display()))
        }
        Err(e @ CliError::Numerical { .. }) => {
            let path = run.finish(Some(&e))?;
            eprintln!("dynreg: partial report written to {}", path.display());
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn example_name(e: Example) -> &'static str {
    match e {
        Example::CesariConvergent => "cesari-convergent",
        Example::CesariMinusInfinity => "cesari-minus-infinity",
    }
}

fn horizon(field: &CoefficientField, b: &LadderBudget) -> f64 {
    field.horizon().unwrap_or(b.dynsys_horizon)
}

fn moments(run: &mut Run, c: &RunConfig) -> Result<String, CliError> {
    let field = c.build_field()?;
    let grid = c.budget.grid(field.dim()).map_err(|e| CliError::Config(format!("[budget] {e}")))?;
    let n = field.dim();
    let radii: Vec<f64> = (0..c.moments.levels).map(|k| 0.5f64.powi(k as i32)).collect();
    let data = run.stage("moments", "sphmean", || {
        Ok(radii.iter().map(|&r| appendix_moments(&field, Radius::from_r(r), &grid)).collect::<Vec<_>>())
    })?;
    let mut header = vec!["r".to_string(), "t".to_string(), "mu".to_string(), "consistency".to_string()];
    for i in 0..n {
        for j in 0..n {
            header.push(format!("R{}{}", i + 1, j + 1));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = radii.iter().zip(&data).map(|(&r, m)| {
        let mut row = vec![r, -r.ln(), m.mu, m.consistency];
        for i in 0..n {
            for j in 0..n {
                row.push(m.r_mat[(i, j)]);
            }
        }
        row
    });
    run.csv("moments.csv", &header, rows)?;
    let worst = data.iter().map(|m| m.mu).fold(f64::NEG_INFINITY, f64::max);
    Ok(format!("moments: {} radii, max μ = {worst:.6e}", data.len()))
}

fn cesari(e: Example) -> CesariParams {
    CesariParams::new(match e {
        Example::CesariConvergent => CesariKind::ConvergentImproper,
        Example::CesariMinusInfinity => CesariKind::MinusInfinity,
    })
}

fn integrate(run: &mut Run, c: Option<&RunConfig>, a: &IntegrateArgs) -> Result<String, CliError> {
    let b = c.map(|c| c.budget.clone()).unwrap_or_default();
    let field = c.map(RunConfig::build_field).transpose()?;
    let grid = match &field {
        Some(f) => Some(b.grid(f.dim()).map_err(|e| CliError::Config(format!("[budget] {e}")))?),
        None => None,
    };
    let mut construction = None;
    if let Some(e) = a.example {
        run.stage("construction", "gilbarg_serrin", || {
            let c = build_cesari_counterexample(&cesari(e))?;
            let v = json!({ "example": example_name(e), "blocks": c.blocks.len(), "horizon": c.generator.horizon });
            construction = Some(c);
            Ok(v)
        })?;
    }
    let field_gen = field.as_ref().zip(grid.as_ref()).map(|(field, grid)| FieldGenerator { field, grid });
    let gen: &dyn Generator = match (&field_gen, &construction) {
        (Some(g), _) => g,
        (None, Some(c)) => &c.generator,
        (None, None) => unreachable!(),
    };
    let default_t1 = match (&field, &construction) {
        (Some(f), _) => horizon(f, &b),
        (None, Some(c)) => c.generator.horizon.unwrap_or(b.dynsys_horizon),
        (None, None) => unreachable!(),
    };
    let t0 = a.t0.unwrap_or(b.t0);
    let t1 = a.t1.unwrap_or(default_t1);
    let tol = a.tol.unwrap_or(b.dynsys_tol);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::Config(format!("--tol = {tol} must lie in (0, 1)")));
    }
    if !(t0 >= 0.0 && t1 > t0 && t1 <= 1e6) {
        return Err(CliError::Config(format!("--t0 = {t0}, --t1 = {t1} must satisfy 0 <= t0 < t1 <= 1e6")));
    }
    let rep = run.stage("stability", "dynsys", || analyze(gen, t0, t1, b.dynsys_samples, tol))?;
    let n = gen.dim();
    let tgrid = analysis_grid(t0, t1, b.dynsys_samples, &gen.breakpoints());
    let phi0 = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut series = None;
    run.stage("trajectory_summary", "dynsys", || {
        let tr = integrate_on_grid(gen, &tgrid, &phi0, tol)?;
        let track = fundamental_matrix(gen, &tgrid, tol)?;
        let (running, diagnostic) = running_constant(&track);
        let v = json!({
            "samples": tgrid.len(),
            "final_norm": tr.phi.last().map(|p| p.norm()),
            "running_k_samples": running.len(),
            "diagnostic": diagnostic,
        });
        series = Some((tr, track, running));
        Ok(v)
    })?;
    let (tr, track, running) = series.expect("set on success");
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("phi{}", i + 1)));
    header.extend(["phi_norm".into(), "fundamental_norm".into(), "k_hat_running".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    run.csv(
        "trajectory.csv",
        &header,
        tr.t.iter().zip(&tr.phi).enumerate().map(|(k, (t, p))| {
            let mut row = vec![*t];
            row.extend(p.iter().copied());
            row.push(p.norm());
            row.push(spectral_norm(&track.phi[k]));
            // past an ill-conditioned Φ the running constant is undefined
            row.push(running.get(k).copied().unwrap_or(f64::NAN));
            row
        }),
    )?;
    run.csv("k_trend.csv", &["window_end", "k"], rep.k_trend.iter().map(|&(t, k)| vec![t, k]))?;
    Ok(format!("integrate: K = {:.6}, {}", rep.k_hat, short(&rep.verdict_uniform_stability)))
}

/// Variant name of an evidence enum, without its payload.
fn short<T: std::fmt::Debug>(v: &T) -> String {
    let s = format!("{v:?}");
    s.split([' ', '{', '(']).next().unwrap_or_default().trim_matches('"').to_string()
}

fn classify_cmd(run: &mut Run, c: &RunConfig) -> Result<String, CliError> {
    let field = c.build_field()?;
    let v = run.stage("verdict", "criteria", || classify(&field, &c.budget))?;
    let e = &v.evidence;
    let mut rows = Vec::new();
    let scalar = [
        (0.0, &e.square_dini),
        (11.0, &e.condition_11),
        (122.0, &e.condition_12b),
        (132.0, &e.condition_13b),
        (15.0, &e.condition_15),
    ];
    for (id, ev) in scalar {
        for (k, (t, p)) in ev.levels.iter().zip(&ev.partial_values).enumerate() {
            rows.push(vec![id, k as f64, *t, *p]);
        }
    }
    for (id, ev) in [(121.0, &e.condition_12a), (131.0, &e.condition_13a)] {
        for (k, (t, m)) in ev.levels.iter().zip(&ev.partial_values).enumerate() {
            rows.push(vec![id, k as f64, *t, spectral_norm(m)]);
        }
    }
    run.csv("conditions.csv", &["condition", "level", "t", "partial_value"], rows)?;
    run.put(
        "condition_ids",
        &json!({ "0": "square_dini", "11": "condition_11", "121": "condition_12a (spectral norm)", "122": "condition_12b",
                 "131": "condition_13a (spectral norm)", "132": "condition_13b", "15": "condition_15" }),
    );
    Ok(format!("classify: {:?} via {:?}", v.classification, v.route))
}

fn appendix(run: &mut Run, c: &RunConfig) -> Result<String, CliError> {
    let field = c.build_field()?;
    let b = &c.budget;
    let grid = b.grid(field.dim()).map_err(|e| CliError::Config(format!("[budget] {e}")))?;
    let n = field.dim();
    run.put("m_infinity", &m_infinity(n));
    run.put("jordanizer", &jordanizer(n));
    let sys = ReducedSystem::new(&field, &grid);
    let t1 = horizon(&field, b);
    let m = c.appendix.samples;
    let ts: Vec<f64> = (0..m).map(|k| b.t0 + (t1 - b.t0) * k as f64 / (m - 1) as f64).collect();
    let rows = run.stage("block_reduction", "appendix", || {
        ts.iter()
            .map(|&t| {
                let s1 = sys.s1_at(t)?;
                let r1 = sys.r1_residual_at(t)?;
                let eps = field.modulus().omega_at(Radius::from_log(t));
                let s1n = spectral_norm(&s1);
                Ok(vec![t, eps, s1n, r1, if eps > 0.0 { s1n / eps } else { 0.0 }])
            })
            .collect::<dynreg::Result<Vec<Vec<f64>>>>()
    })?;
    let ratio = rows.iter().map(|r| r[4]).fold(0.0, f64::max);
    run.put("s1_over_modulus_max", &ratio);
    run.csv("appendix.csv", &["t", "modulus", "s1_norm", "r1_residual", "s1_over_modulus"], rows)?;
    Ok(format!("appendix: max |S1|/ω = {ratio:.6}"))
}

fn gs_example(run: &mut Run, e: Example) -> Result<String, CliError> {
    let params = cesari(e);
    let c = run.stage("construction", "gilbarg_serrin", || build_cesari_counterexample(&params))?;
    let rep = run.stage("independence", "gilbarg_serrin", || verify_independence(&c.generator, 1e-4))?;
    run.csv("running_integral.csv", &["t", "integral"], c.running_integral.iter().map(|&(t, v)| vec![t, v]))?;
    run.csv("window_sups.csv", &["window_end", "sup"], c.window_sups.iter().map(|&(t, v)| vec![t, v]))?;
    run.csv("k_trend.csv", &["window_end", "k"], rep.k_trend.iter().map(|&(t, k)| vec![t, k]))?;
    Ok(format!(
        "gs {}: asymptotically constant {}, uniformly stable {}, square-Dini {}",
        example_name(e),
        short(&rep.asym_constant),
        short(&rep.uniformly_stable),
        short(&rep.square_dini.verdict)
    ))
}

fn gs_field(run: &mut Run, c: &RunConfig) -> Result<String, CliError> {
    let field = c.build_field()?;
    let g = field.gs_profile().cloned().ok_or_else(|| CliError::Config("[field] gs needs family = \"gilbarg_serrin\"".into()))?;
    let (gen, residual) = run.stage("scalar_reduction", "gilbarg_serrin", || scalar_reduction(&field))?;
    run.put("scalar_reduction_residual", &residual);
    let rep = run.stage("independence", "gilbarg_serrin", || verify_independence(&gen, 1e-4))?;
    let r: Vec<f64> = (0..=120).map(|k| (-0.5 * k as f64).exp()).collect();
    let mode = run.stage("mode_solution", "gilbarg_serrin", || gs_mode_ode_solution(&g, field.dim(), &r, 1e-10))?;
    run.put("mode_ratio_drift", &mode.ratio_drift());
    run.csv(
        "mode.csv",
        &["r", "t", "v", "rv_prime", "phi", "psi", "scalar_phi", "ratio"],
        (0..mode.r.len()).map(|k| {
            vec![mode.r[k], mode.t[k], mode.v[k], mode.rv_prime[k], mode.phi[k], mode.psi[k], mode.scalar_phi[k], mode.ratio[k]]
        }),
    )?;
    Ok(format!("gs: uniformly stable {}, ratio drift {:.3e}", short(&rep.uniformly_stable), mode.ratio_drift()))
}

fn verify(run: &mut Run, c: &RunConfig, p: PdeOptions) -> Result<String, CliError> {
    let field = c.build_field()?;
    if field.dim() != 2 {
        return Err(CliError::Config(format!("[field] verify needs dim = 2, got {}", field.dim())));
    }
    let opts = SolverOptions { tol: p.tol, max_iter: None };
    let mut solved = None;
    run.stage("pde_solve", "pde", || {
        solve_dirichlet(&field, p.cells, p.boundary, &opts).map(|s| {
            let v = json!({ "cells": s.n_cells, "boundary": s.boundary, "residual_norm": s.residual_norm, "iterations": s.iterations });
            solved = Some(s);
            v
        })
    })?;
    let sol = solved.expect("set on success");
    let radii = dyadic_radii(&sol);
    let dec = run.stage("decomposition", "pde", || spectral_decompose(&sol, &radii, p.nodes))?;
    let lip = run.stage("lipschitz", "pde", || lipschitz_quotient(&sol, &radii, p.nodes))?;
    let grad = run.stage("gradient", "pde", || gradient_at_origin(&sol, &radii, p.nodes))?;
    run.csv(
        "radii.csv",
        &["r", "u0", "v1", "v2", "w_max", "quotient"],
        dec.circles.iter().zip(&lip.quotient).map(|(s, q)| vec![s.r, s.u0, s.v[0], s.v[1], s.w_max, *q]),
    )?;
    Ok(format!(
        "verify: gradient ≈ ({:.6}, {:.6}) {:?}, Lipschitz quotient {:?}",
        grad.estimate[0], grad.estimate[1], grad.verdict, lip.verdict
    ))
}

fn full_report(run: &mut Run, c: &RunConfig) -> Result<String, CliError> {
    let m = moments(run, c)?;
    let none = IntegrateArgs { config: None, example: None, t0: None, t1: None, tol: None };
    let i = integrate(run, Some(c), &none)?;
    let k = classify_cmd(run, c)?;
    let mut lines = vec![m, i, k];
    if let Some(p) = c.pde.clone() {
        lines.push(verify(run, c, p)?);
    }
    Ok(lines.join("; "))
}

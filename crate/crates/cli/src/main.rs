//! jacforge: coverings, stretch maps and prescribed-Jacobian solutions from
//! files.
//!
//! Exit codes: 0 success, 2 input error, 3 mathematical gate violated,
//! 4 tolerance not met, 1 anything else.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use jacforge::boundary::{boundary_report, boundary_samples, BoundaryCorrectedMap};
use jacforge::covering::cover_mask;
use jacforge::domain::{decompose_polygon, Polygon};
use jacforge::field::ScalarField;
use jacforge::map::PlanarMap;
use jacforge::mask::CompactSetMask;
use jacforge::render;
use jacforge::solver::{self, LpConfig, Solution};
use jacforge::stretch::{stretch_estimates, stretch_mask};
use jacforge::verify;
use jacforge::{Error, Point};

use config::{Flags, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "jacforge", version, about = "Planar maps with prescribed Jacobian lower bounds")]
struct Cli {
    /// key=value file; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cover a mask by Lipschitz strips
    Cover(Flags),
    /// Build the stretch map of a mask and report its constants
    Stretch(Flags),
    /// Solve det ∇φ ≥ f for a field
    Solve(Flags),
    /// Full verification report for a stretch map or a solver output
    Verify(Flags),
    /// Figures only
    Render(Flags),
}

fn main() {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("JACFORGE_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: JACFORGE_THREADS must be a positive integer, got {v:?}");
                std::process::exit(2);
            }
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<std::io::Error>().is_some() || e.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_gate() => 3,
        Some(err) if err.is_tolerance() => 4,
        Some(Error::Parse { .. } | Error::InvalidInput(_) | Error::GridMismatch(_) | Error::LevelOverflow { .. }) => 2,
        Some(Error::SelfIntersectingPolygon(_) | Error::DegenerateTriangle | Error::NonConvexQuad) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let (flags, cmd): (&Flags, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Command::Cover(f) => (f, cmd_cover),
        Command::Stretch(f) => (f, cmd_stretch),
        Command::Solve(f) => (f, cmd_solve),
        Command::Verify(f) => (f, cmd_verify),
        Command::Render(f) => (f, cmd_render),
    };
    let cfg = RunConfig::resolve(flags, cli.config.as_deref())?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    cmd(&cfg)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_mask(cfg: &RunConfig) -> Result<CompactSetMask> {
    let p = cfg.mask.as_ref().ok_or_else(|| Error::InvalidInput("--mask is required".into()))?;
    CompactSetMask::parse(&read(p)?).with_context(|| format!("parsing {}", p.display()))
}

fn load_field(cfg: &RunConfig) -> Result<ScalarField> {
    let p = cfg.field.as_ref().ok_or_else(|| Error::InvalidInput("--field is required".into()))?;
    ScalarField::parse_csv(&read(p)?).with_context(|| format!("parsing {}", p.display()))
}

fn write(cfg: &RunConfig, name: &str, contents: &str) -> Result<()> {
    let path = cfg.out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(cfg: &RunConfig, name: &str, value: &T) -> Result<()> {
    write(cfg, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CoverSummary {
    cells: usize,
    measure: f64,
    delta: f64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    delta_n: f64,
    delta_m: f64,
    bound: f64,
    within_bound: bool,
    trivial: bool,
    invariant_violations: Vec<String>,
}

fn cmd_cover(cfg: &RunConfig) -> Result<()> {
    let mask = load_mask(cfg)?;
    let root = mask.measure().sqrt();
    let fam = cover_mask(&mask, cfg.eps.unwrap_or(root))?;
    let (dn, dm) = (fam.delta * fam.n() as f64, fam.delta * fam.m() as f64);
    let summary = CoverSummary {
        cells: mask.len(),
        measure: mask.measure(),
        delta: fam.delta,
        n: fam.n(),
        m: fam.m(),
        delta_n: dn,
        delta_m: dm,
        bound: 2.0 * root,
        within_bound: dn <= 2.0 * root && dm <= 2.0 * root,
        trivial: mask.is_empty(),
        invariant_violations: fam.invariant_violations(),
    };
    write_json(cfg, "strips.json", &fam)?;
    write_json(cfg, "cover_summary.json", &summary)?;
    write(cfg, "strips.svg", &render::strips_svg(&mask, &fam))?;
    println!(
        "N = {}, M = {}, deltaN = {dn:.6}, deltaM = {dm:.6}, 2 sqrt|K| = {:.6}{}",
        fam.n(),
        fam.m(),
        2.0 * root,
        if summary.trivial { " (empty mask)" } else { "" }
    );
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EdgeReport {
    /// Largest distance of an edge sample's image from its own edge.
    edge_normal_max_err: f64,
    /// Largest displacement of an edge sample along its edge.
    edge_tangential_max: f64,
}

fn edge_report(map: &dyn PlanarMap) -> Result<EdgeReport> {
    let (mut normal, mut tangential) = (0.0f64, 0.0f64);
    for s in boundary_samples(1000) {
        let u = Point::new((s.x + 1.0) / 2.0, (s.y + 1.0) / 2.0);
        let q = map.eval(u)?;
        let d = q - u;
        if u.x == 0.0 || u.x == 1.0 {
            normal = normal.max(d.x.abs());
            tangential = tangential.max(d.y.abs());
        } else {
            normal = normal.max(d.y.abs());
            tangential = tangential.max(d.x.abs());
        }
    }
    Ok(EdgeReport { edge_normal_max_err: normal, edge_tangential_max: tangential })
}

/// The map `stretch` and `verify` work with: boundary-corrected by default.
fn stretch_map(cfg: &RunConfig, mask: &CompactSetMask) -> Result<Arc<dyn PlanarMap>> {
    Ok(if cfg.no_boundary {
        Arc::new(stretch_mask(mask, cfg.tau)?)
    } else {
        Arc::new(BoundaryCorrectedMap::build(mask, cfg.tau)?.on_unit_square())
    })
}

fn cmd_stretch(cfg: &RunConfig) -> Result<()> {
    let mask = load_mask(cfg)?;
    let report = verify::jacobian_report(&*stretch_map(cfg, &mask)?, &mask, cfg.grid, cfg.q)?;
    write_json(cfg, "jacobian_report.json", &report)?;
    if cfg.no_boundary {
        let raw = stretch_mask(&mask, cfg.tau)?;
        write_json(cfg, "stretch_report.json", &stretch_estimates(&raw, &mask, cfg.grid))?;
        write_json(cfg, "edge_report.json", &edge_report(&raw)?)?;
    } else {
        let b = BoundaryCorrectedMap::build(&mask, cfg.tau)?;
        write_json(cfg, "boundary_report.json", &boundary_report(&b, &mask, cfg.grid))?;
    }
    let map = stretch_map(cfg, &mask)?;
    write(cfg, "deformed_grid.svg", &render::deformed_grid_svg(&*map, 32, Some(&mask))?)?;
    println!("minDetOnMask = {:.12}, minDetGlobal = {:.6}", report.min_det_on_mask, report.min_det_global);
    Ok(())
}

fn run_solver(cfg: &RunConfig, f: &ScalarField) -> Result<Solution> {
    Ok(match cfg.mode.as_str() {
        "linf" => solver::solve_linf(f)?,
        "lp-small" => {
            let mut lp = LpConfig::new(cfg.p, cfg.q)?;
            lp.grid_n = cfg.grid;
            if let Some(t) = cfg.tol {
                lp.measure_tol = t;
            }
            let (map, trace) = solver::solve_lp_small(f, &lp)?;
            let (cell_fraction, min_margin) = verify::cell_det_check(&*map, f, 1e-9)?;
            let report = solver::SolveReport {
                mode: "lp-small".into(),
                tau0: lp.tau_exec,
                epsilon: 0.0,
                delta: None,
                defect_measure: 0.0,
                iterations: trace.records.len(),
                cell_fraction,
                min_margin,
                moser: None,
            };
            Solution { map, trace, report }
        }
        _ => solver::solve_lp(f, cfg.p, cfg.q, cfg.delta)?,
    })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SolveOutput<'a> {
    report: &'a solver::SolveReport,
    trace: &'a solver::IterationTrace,
    weak_checks: Vec<verify::WeakCheck>,
}

fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    let f = load_field(cfg)?;
    let sol = run_solver(cfg, &f)?;
    let weak_checks = verify::weak_form_checks(&*sol.map, &f, f.n().max(256))?;
    write(cfg, "trace.jsonl", &sol.trace.to_jsonl())?;
    write_json(cfg, "solve_report.json", &SolveOutput { report: &sol.report, trace: &sol.trace, weak_checks })?;
    if cfg.svg && !sol.trace.masks.is_empty() {
        write(cfg, "mask_evolution.svg", &render::mask_evolution_svg(&sol.trace.masks))?;
    }
    println!(
        "{} iterations, cell fraction {:.6}, min margin {:.3e}",
        sol.report.iterations, sol.report.cell_fraction, sol.report.min_margin
    );
    if let Some(tol) = cfg.tol {
        let miss = 1.0 - sol.report.cell_fraction;
        if miss > tol {
            return Err(Error::ToleranceNotMet { achieved: miss, required: tol }.into());
        }
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct VerifyOutput {
    jacobian: verify::JacobianReport,
    pushforward: Option<verify::PushforwardReport>,
    weak_checks: Vec<verify::WeakCheck>,
    seed: u64,
}

fn cmd_verify(cfg: &RunConfig) -> Result<()> {
    let (map, mask, field) = match (&cfg.mask, &cfg.field) {
        (Some(_), None) => {
            let mask = load_mask(cfg)?;
            (stretch_map(cfg, &mask)?, mask, None)
        }
        (None, Some(_)) => {
            let f = load_field(cfg)?;
            let sol = run_solver(cfg, &f)?;
            let mask = solver::superlevel_mask(&f, &ScalarField::constant(f.n(), 1.0)?)?;
            (sol.map, mask, Some(f))
        }
        _ => return Err(Error::InvalidInput("verify needs exactly one of --mask, --field".into()).into()),
    };
    let mut jac = verify::jacobian_report(&*map, &mask, cfg.grid, cfg.q)?;
    let (lo, hi) = verify::bilipschitz_estimate(&*map, 2000, 1.0 / cfg.grid as f64, cfg.seed)?;
    jac.bi_lip_lower = lo;
    jac.bi_lip_upper = hi;
    let weak_checks = match &field {
        Some(f) => verify::weak_form_checks(&*map, f, f.n().max(256))?,
        None => Vec::new(),
    };
    let pushforward = if field.is_none() { Some(verify::pushforward_measure(&*map, &mask)?) } else { None };
    write_json(cfg, "verify_report.json", &VerifyOutput { jacobian: jac, pushforward, weak_checks, seed: cfg.seed })?;
    write(cfg, "det.csv", &verify::det_csv(&*map, cfg.grid)?)?;
    Ok(())
}

fn cmd_render(cfg: &RunConfig) -> Result<()> {
    let mut any = false;
    if cfg.mask.is_some() {
        let mask = load_mask(cfg)?;
        let fam = cover_mask(&mask, cfg.eps.unwrap_or(mask.measure().sqrt()))?;
        write(cfg, "strips.svg", &render::strips_svg(&mask, &fam))?;
        let map = stretch_map(cfg, &mask)?;
        write(cfg, "deformed_grid.svg", &render::deformed_grid_svg(&*map, 32, Some(&mask))?)?;
        any = true;
    }
    if let Some(p) = &cfg.polygon {
        let poly: Polygon = serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
        write(cfg, "decomposition.svg", &render::decomposition_svg(&decompose_polygon(&poly)?))?;
        any = true;
    }
    if cfg.field.is_some() {
        let f = load_field(cfg)?;
        let sol = run_solver(cfg, &f)?;
        write(cfg, "mask_evolution.svg", &render::mask_evolution_svg(&sol.trace.masks))?;
        write(cfg, "solution_grid.svg", &render::deformed_grid_svg(&*sol.map, 32, None)?)?;
        any = true;
    }
    if !any {
        return Err(anyhow!(Error::InvalidInput("render needs --mask, --field or --polygon".into())));
    }
    Ok(())
}

//! Command-line front end for the periodic-orbit search.
//!
//! Subcommands:
//!
//!   find      multistart continuation on an implicit domain; emits
//!             report.json, trace.csv, trajectory.json, and (n = 2)
//!             trajectory.svg
//!   shoot     forward reflection trace from a starting point
//!   inradius  inscribed-ball radius and witness center
//!   verify    re-check a stored trajectory against the reflection law
//!
//! Exit codes are the scripting interface: 0 success, 2 empty interior,
//! 3 search produced no verified orbit, 4 tangential incidence, 5 schema
//! violation in an input or artifact, 1 anything else. Human summaries go
//! to stderr; machine JSON goes only to files.

use std::fs;
use std::path::PathBuf;
use std::process;

use anyhow::{ensure, Context, Result};
use billiards_cli::schema::SchemaViolation;
use billiards_cli::{artifacts, schema, svg};
use billiards_core::billiard::{self, BilliardError};
use billiards_core::continuation::{run_multistart, trace_csv, BestReport, PipelineError, RunConfig};
use billiards_core::extract::{audit_polygon, crosscheck_trajectory, BilliardTrajectory};
use billiards_core::geometry::{Domain, DomainSpec, GeomError};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_EMPTY_INTERIOR: i32 = 2;
const EXIT_SEARCH_FAILED: i32 = 3;
const EXIT_TANGENTIAL: i32 = 4;
const EXIT_SCHEMA: i32 = 5;

/// Largest acceptable reflection-law defect at a bounce of an accepted
/// trajectory (normal flip and tangential slip alike).
const REFLECTION_TOL: f64 = 1e-3;
/// Largest acceptable relative drift when the polygon is replayed through
/// the direct reflection dynamics.
const CROSSCHECK_TOL: f64 = 1e-3;
/// Largest acceptable relative gap between the free period and the length.
const PERIOD_LENGTH_TOL: f64 = 1e-2;
/// The length/inradius ratio may not undercut the bouncing-ball-diameter
/// value 4 (allowing the reporting tolerance).
const RATIO_FLOOR: f64 = 3.99;

#[derive(Parser)]
#[command(
    name = "billiards",
    version,
    about = "Short periodic billiard trajectories in smooth implicit domains"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search for a short periodic trajectory by penalized continuation.
    Find(FindArgs),
    /// Trace straight segments and mirror reflections from a point.
    Shoot(ShootArgs),
    /// Estimate the inscribed-ball radius and its center.
    Inradius(InradiusArgs),
    /// Re-verify a stored trajectory file against the domain.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct FindArgs {
    /// Domain spec: a JSON file path, or the JSON text itself.
    #[arg(long)]
    domain: String,
    /// Output directory for report.json, trace.csv, trajectory.*.
    #[arg(long)]
    out: PathBuf,
    /// Penalty cutoff scale in (0, 1/2); defaults to the domain calibration.
    #[arg(long)]
    d0: Option<f64>,
    /// Floor on per-stage discretization nodes.
    #[arg(long = "N")]
    nodes: Option<usize>,
    /// First penalization strength.
    #[arg(long, default_value_t = 1e-2)]
    eps_start: f64,
    /// Geometric step between continuation stages (> 1).
    #[arg(long, default_value_t = 4.0)]
    eps_ratio: f64,
    /// Final penalization strength.
    #[arg(long, default_value_t = 1e-6)]
    eps_end: f64,
    /// Continuation branches: diameter sweeps first, then random loops.
    #[arg(long, default_value_t = 4)]
    seeds: usize,
    /// Seed for branch generation; a fixed seed fixes the whole report.
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Worker threads for branch-parallel continuation (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ShootArgs {
    /// Domain spec: a JSON file path, or the JSON text itself.
    #[arg(long)]
    domain: String,
    /// Starting point inside the domain, comma-separated coordinates.
    #[arg(long)]
    start: String,
    /// Initial direction, comma-separated (normalized internally).
    #[arg(long)]
    dir: String,
    #[arg(long, default_value_t = 8)]
    max_bounces: usize,
    /// Optional output directory for shoot.json (+ shoot.svg when n = 2).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InradiusArgs {
    /// Domain spec: a JSON file path, or the JSON text itself.
    #[arg(long)]
    domain: String,
    /// Grid points per unit length for the coarse interior scan.
    #[arg(long, default_value_t = 24.0)]
    grid_density: f64,
    /// Optional output directory for inradius.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Domain spec: a JSON file path, or the JSON text itself.
    #[arg(long)]
    domain: String,
    /// Trajectory JSON produced by `find` (or compatible).
    #[arg(long)]
    trajectory: PathBuf,
    /// Optional output directory for verdict.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify(&err)
        }
    };
    process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Find(a) => cmd_find(a),
        Cmd::Shoot(a) => cmd_shoot(a),
        Cmd::Inradius(a) => cmd_inradius(a),
        Cmd::Verify(a) => cmd_verify(a),
    }
}

/// Walk the cause chain, outermost first, and map the first recognized
/// failure to its exit code.
fn classify(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(g) = cause.downcast_ref::<GeomError>() {
            if matches!(g, GeomError::EmptyInterior) {
                return EXIT_EMPTY_INTERIOR;
            }
        }
        if let Some(b) = cause.downcast_ref::<BilliardError>() {
            if matches!(b, BilliardError::TangentialIncidence) {
                return EXIT_TANGENTIAL;
            }
        }
        if cause.downcast_ref::<SchemaViolation>().is_some() {
            return EXIT_SCHEMA;
        }
        if cause.downcast_ref::<PipelineError>().is_some() {
            return EXIT_SEARCH_FAILED;
        }
    }
    1
}

/// Accept either a path to a JSON file or inline JSON (leading '{').
fn load_domain(arg: &str) -> Result<Domain> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading domain spec {arg}"))?
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| SchemaViolation {
        path: "$".into(),
        reason: format!("domain spec is not JSON: {e}"),
    })?;
    schema::validate(&value, schema::DOMAIN)?;
    Ok(Domain::from_json(&text)?)
}

fn parse_point(arg: &str, dim: usize, what: &str) -> Result<Vec<f64>> {
    let coords: Vec<f64> = arg
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {what} \"{arg}\""))?;
    ensure!(
        coords.len() == dim,
        "{what} has {} coordinates, domain dimension is {dim}",
        coords.len()
    );
    Ok(coords)
}

// ---------------------------------------------------------------------------
// find
// ---------------------------------------------------------------------------

fn bounds_pass(best: &BestReport, dim: usize) -> bool {
    let r = &best.residuals;
    best.bounces >= 2
        && best.bounces <= dim + 1
        && best.ratio >= RATIO_FLOOR
        && r.max_normal_flip <= REFLECTION_TOL
        && r.max_tangential_err <= REFLECTION_TOL
        && r.tau_length_rel <= PERIOD_LENGTH_TOL
        && r.crosscheck_displacement_rel <= CROSSCHECK_TOL
        && r.crosscheck_length_rel <= CROSSCHECK_TOL
}

fn cmd_find(a: FindArgs) -> Result<i32> {
    if let Some(jobs) = a.jobs {
        ensure!(jobs >= 1, "--jobs must be at least 1");
        // Ignored when a global pool already exists (only in-process tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    if let Some(d0) = a.d0 {
        ensure!(0.0 < d0 && d0 < 0.5, "--d0 must lie in (0, 1/2)");
    }
    ensure!(a.eps_ratio > 1.0, "--eps-ratio must exceed 1");
    ensure!(
        a.eps_end > 0.0 && a.eps_start >= a.eps_end,
        "need --eps-start >= --eps-end > 0"
    );
    ensure!(a.seeds >= 1, "--seeds must be at least 1");

    let dom = load_domain(&a.domain)?;
    let cfg = RunConfig {
        d0: a.d0,
        eps_start: a.eps_start,
        eps_ratio: a.eps_ratio,
        eps_end: a.eps_end,
        seeds: a.seeds,
        rng_seed: a.rng_seed,
        nodes_floor: a.nodes,
    };
    let out = run_multistart(&dom, &cfg)?;

    let artifact = artifacts::ReportArtifact {
        timestamp: artifacts::timestamp(),
        report: &out.report,
    };
    artifacts::write_json(&a.out, "report.json", &artifact, schema::REPORT)?;
    artifacts::write_text(&a.out, "trace.csv", &trace_csv(&out.report))?;
    if let Some((_, traj)) = &out.best {
        artifacts::write_json(&a.out, "trajectory.json", traj, schema::TRAJECTORY)?;
        if dom.dim == 2 {
            let orbit = svg::Path {
                points: traj.bounce_points.clone(),
                closed: true,
            };
            let picture = svg::render_plane(&dom, &[orbit], &traj.bounce_points);
            artifacts::write_text(&a.out, "trajectory.svg", &picture)?;
        }
    }

    match &out.report.best {
        Some(best) if bounds_pass(best, dom.dim) => {
            eprintln!(
                "orbit: {} bounces, length {:.6}, period {:.6}, length/inradius {:.4}",
                best.bounces, best.length, best.tau, best.ratio
            );
            Ok(0)
        }
        Some(best) => {
            eprintln!(
                "orbit found but out of bounds ({} bounces, ratio {:.4}); see {}",
                best.bounces,
                best.ratio,
                a.out.join("report.json").display()
            );
            Ok(EXIT_SEARCH_FAILED)
        }
        None => {
            eprintln!(
                "no branch produced a verified orbit; see {}",
                a.out.join("report.json").display()
            );
            Ok(EXIT_SEARCH_FAILED)
        }
    }
}

// ---------------------------------------------------------------------------
// shoot
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ShootArtifact<'a> {
    domain: &'a DomainSpec,
    start: &'a [f64],
    dir: &'a [f64],
    max_bounces: usize,
    bounces: &'a [Vec<f64>],
    normals: &'a [Vec<f64>],
    dirs: &'a [Vec<f64>],
    length: f64,
}

fn cmd_shoot(a: ShootArgs) -> Result<i32> {
    let dom = load_domain(&a.domain)?;
    let start = parse_point(&a.start, dom.dim, "--start")?;
    let dir = parse_point(&a.dir, dom.dim, "--dir")?;
    let path = billiard::shoot(&dom, &start, &dir, a.max_bounces)?;
    eprintln!("{} bounces, path length {:.6}", path.bounces.len(), path.length);

    if let Some(out) = &a.out {
        let artifact = ShootArtifact {
            domain: &dom.spec,
            start: &start,
            dir: &dir,
            max_bounces: a.max_bounces,
            bounces: &path.bounces,
            normals: &path.normals,
            dirs: &path.dirs,
            length: path.length,
        };
        artifacts::write_json(out, "shoot.json", &artifact, schema::SHOOT)?;
        if dom.dim == 2 {
            let mut points = vec![start.clone()];
            points.extend(path.bounces.iter().cloned());
            let trace = svg::Path {
                points,
                closed: false,
            };
            let picture = svg::render_plane(&dom, &[trace], &path.bounces);
            artifacts::write_text(out, "shoot.svg", &picture)?;
        }
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// inradius
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct InradiusArtifact<'a> {
    domain: &'a DomainSpec,
    grid_density: f64,
    inradius: f64,
    witness: &'a [f64],
}

fn cmd_inradius(a: InradiusArgs) -> Result<i32> {
    ensure!(a.grid_density > 0.0, "--grid-density must be positive");
    let dom = load_domain(&a.domain)?;
    let (inradius, witness) = dom.inradius(a.grid_density)?;
    let center = witness
        .iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(", ");
    eprintln!("inradius {inradius:.6} at [{center}]");

    if let Some(out) = &a.out {
        let artifact = InradiusArtifact {
            domain: &dom.spec,
            grid_density: a.grid_density,
            inradius,
            witness: &witness,
        };
        artifacts::write_json(out, "inradius.json", &artifact, schema::INRADIUS)?;
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Verdict {
    pass: bool,
    bounces: usize,
    length: f64,
    tau: f64,
    tau_length_rel: f64,
    inradius: f64,
    ratio: f64,
    ratio_bound: f64,
    max_normal_flip: Option<f64>,
    max_tangential_err: Option<f64>,
    min_normal_component: Option<f64>,
    crosscheck_displacement_rel: Option<f64>,
    crosscheck_length_rel: Option<f64>,
    failures: Vec<String>,
}

fn cmd_verify(a: VerifyArgs) -> Result<i32> {
    let dom = load_domain(&a.domain)?;
    let text = fs::read_to_string(&a.trajectory)
        .with_context(|| format!("reading {}", a.trajectory.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| SchemaViolation {
        path: "$".into(),
        reason: format!("trajectory file is not JSON: {e}"),
    })?;
    schema::validate(&value, schema::TRAJECTORY)?;
    let stored: BilliardTrajectory =
        serde_json::from_value(value).map_err(|e| SchemaViolation {
            path: "$".into(),
            reason: e.to_string(),
        })?;
    for (i, p) in stored.bounce_points.iter().enumerate() {
        if p.len() != dom.dim {
            return Err(SchemaViolation {
                path: format!("$.bounce_points[{i}]"),
                reason: format!(
                    "point has {} coordinates, domain dimension is {}",
                    p.len(),
                    dom.dim
                ),
            }
            .into());
        }
    }

    // Recompute everything from the stored points; failures accumulate
    // into the verdict instead of aborting.
    let mut failures = Vec::new();
    let audited = match audit_polygon(&dom, &stored.bounce_points, stored.tau) {
        Ok(t) => Some(t),
        Err(e) => {
            failures.push(format!("polygon audit: {e}"));
            None
        }
    };
    let cross = audited.as_ref().and_then(|t| match crosscheck_trajectory(&dom, t) {
        Ok(c) => Some(c),
        Err(e) => {
            failures.push(format!("shooting crosscheck: {e}"));
            None
        }
    });

    let inradius = dom.inradius_est;
    let bounces = stored.bounce_points.len();
    let length = audited.as_ref().map_or(stored.length, |t| t.length);
    let ratio = length / inradius;
    if bounces > dom.dim + 1 {
        failures.push(format!(
            "{bounces} bounces exceed the dimension bound {}",
            dom.dim + 1
        ));
    }
    if ratio < RATIO_FLOOR {
        failures.push(format!(
            "length/inradius {ratio:.4} is below the floor {RATIO_FLOOR}"
        ));
    }
    if let Some(t) = &audited {
        if t.max_normal_flip > REFLECTION_TOL {
            failures.push(format!(
                "normal flip defect {:.3e} exceeds {REFLECTION_TOL:.0e}",
                t.max_normal_flip
            ));
        }
        if t.max_tangential_err > REFLECTION_TOL {
            failures.push(format!(
                "tangential defect {:.3e} exceeds {REFLECTION_TOL:.0e}",
                t.max_tangential_err
            ));
        }
        if t.tau_length_rel > PERIOD_LENGTH_TOL {
            failures.push(format!(
                "period/length mismatch {:.3e} exceeds {PERIOD_LENGTH_TOL:.0e}",
                t.tau_length_rel
            ));
        }
    }
    if let Some(c) = &cross {
        if c.displacement_rel > CROSSCHECK_TOL {
            failures.push(format!(
                "crosscheck displacement {:.3e} exceeds {CROSSCHECK_TOL:.0e}",
                c.displacement_rel
            ));
        }
        if c.length_rel > CROSSCHECK_TOL {
            failures.push(format!(
                "crosscheck length drift {:.3e} exceeds {CROSSCHECK_TOL:.0e}",
                c.length_rel
            ));
        }
    }

    let pass = failures.is_empty();
    let verdict = Verdict {
        pass,
        bounces,
        length,
        tau: stored.tau,
        tau_length_rel: audited.as_ref().map_or(stored.tau_length_rel, |t| t.tau_length_rel),
        inradius,
        ratio,
        ratio_bound: 2.0 * (dom.dim + 1) as f64,
        max_normal_flip: audited.as_ref().map(|t| t.max_normal_flip),
        max_tangential_err: audited.as_ref().map(|t| t.max_tangential_err),
        min_normal_component: audited.as_ref().map(|t| t.min_normal_component),
        crosscheck_displacement_rel: cross.as_ref().map(|c| c.displacement_rel),
        crosscheck_length_rel: cross.as_ref().map(|c| c.length_rel),
        failures,
    };
    if let Some(out) = &a.out {
        artifacts::write_json(out, "verdict.json", &verdict, schema::VERDICT)?;
    }
    if verdict.pass {
        eprintln!("verified: {bounces} bounces, length {length:.6}, ratio {ratio:.4}");
        Ok(0)
    } else {
        for f in &verdict.failures {
            eprintln!("fail: {f}");
        }
        Ok(1)
    }
}

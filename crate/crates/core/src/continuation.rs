//! Penalization continuation: staged eps descent with a resolution law,
//! seed construction, guard rails, and multistart orchestration.
//!
//! Each branch starts from a cheap closed-loop seed at the largest eps,
//! then repeatedly shrinks eps, resampling the previous critical loop to
//! the stage resolution and re-solving warm. Stages record the period,
//! kinetic integral, residuals, energy spread, and Morse index; guards
//! abort branches whose period collapses toward zero or outruns the
//! kinetic-integral bound. After the last stage the loop is handed to
//! extraction, and distinct branches are merged by kinetic integral.
//!
//! The stage resolution follows the empirical discretization law
//!
//!   energy_stdev ~ C(eps) / N^2,   C(eps) = 10 * (1e-2 / eps)^0.75,
//!
//! solved for the node count that holds the predicted spread at a fixed
//! target, rounded up to a power of two and clamped.

use crate::action::{ActionError, ActionProblem, DiscreteLoop, ENERGY_LEVEL};
use crate::billiard::BilliardError;
use crate::extract::{crosscheck_trajectory, extract_trajectory, BilliardTrajectory, ExtractError};
use crate::geometry::{sphere_directions, Domain, DomainSpec, GeomError};
use crate::penalty::PenaltyConfig;
use crate::solve::{find_critical_point, SolveError, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// eps is clamped so the plateau potential energy never exceeds this,
/// keeping the turning points of the flow well inside the energy level.
pub const MAX_PLATEAU_POTENTIAL: f64 = 0.1;

/// Discretization target: predicted node-energy spread per stage.
pub const TARGET_ENERGY_STDEV: f64 = 2.5e-5;
const RESOLUTION_REF_EPS: f64 = 1e-2;
const RESOLUTION_REF_C: f64 = 10.0;
const RESOLUTION_EXPONENT: f64 = 0.75;

/// Node-count clamp of the resolution law.
pub const MAX_NODES: usize = 20_480;

/// A period below this fraction of the inradius means the loop is
/// collapsing to a point.
pub const TAU_COLLAPSE_FRAC: f64 = 0.1;

/// Every stage must satisfy tau <= slope * kinetic_integral + offset;
/// beyond it the branch is running away instead of converging.
pub const TAU_KI_SLOPE: f64 = 196.0;
pub const TAU_KI_OFFSET: f64 = 1.0;

/// Diameter seeds keep this clearance (plus the turning-layer width) from
/// the walls, and wobble transversally by this fraction of the inradius.
const SEED_MARGIN_FRAC: f64 = 0.05;
const SEED_WOBBLE_FRAC: f64 = 0.01;
const SMOOTH_PASS_CAP: usize = 10_000;

/// Bounce sets closer than this fraction of the perimeter are one orbit.
const MERGE_TOL_REL: f64 = 1e-3;

/// Wall-to-wall span is sampled over this many directions when ranking
/// diameter seeds; two directions count as one diameter when |<a, b>|
/// reaches the separation threshold.
const SPAN_SAMPLES: usize = 64;
const DISTINCT_DOT: f64 = 0.95;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("period collapsed to {tau:.3e} at eps = {eps:.3e}")]
    TauCollapse { eps: f64, tau: f64 },
    #[error("period {tau:.3e} exceeds the kinetic-integral bound {bound:.3e} at eps = {eps:.3e}")]
    TauBlowup { eps: f64, tau: f64, bound: f64 },
    #[error("stage at eps = {eps:.3e} did not converge")]
    StageDiverged {
        eps: f64,
        #[source]
        source: SolveError,
    },
    #[error("domain leaves no room for a diameter seed")]
    SeedInfeasible,
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Billiard(#[from] BilliardError),
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StagePlan {
    pub eps: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    pub d0: f64,
    pub stages: Vec<StagePlan>,
}

fn base_nodes(dim: usize) -> usize {
    if dim >= 3 {
        128
    } else {
        256
    }
}

fn next_pow2(x: usize) -> usize {
    x.max(1).next_power_of_two()
}

/// Node count holding the predicted energy spread at the target.
pub fn stage_nodes(dim: usize, eps: f64) -> usize {
    let c = RESOLUTION_REF_C * (RESOLUTION_REF_EPS / eps).powf(RESOLUTION_EXPONENT);
    let want = (c / TARGET_ENERGY_STDEV).sqrt().ceil() as usize;
    next_pow2(want).clamp(base_nodes(dim), MAX_NODES)
}

/// Geometric eps ladder from a feasibility-clamped start down to exactly
/// `eps_end`, with the per-stage resolution law applied.
pub fn plan_schedule(
    dim: usize,
    d0: f64,
    eps_start: f64,
    eps_ratio: f64,
    eps_end: f64,
) -> Schedule {
    assert!(d0 > 0.0 && eps_ratio > 1.0 && eps_end > 0.0 && eps_start >= eps_end);
    let u_plat = PenaltyConfig::new(d0, eps_start).u_plateau();
    let eff = eps_start.min(MAX_PLATEAU_POTENTIAL / u_plat);
    let mut stages = Vec::new();
    let mut eps = eff;
    while eps > eps_end * (1.0 + 1e-9) {
        stages.push(StagePlan {
            eps,
            nodes: stage_nodes(dim, eps),
        });
        eps /= eps_ratio;
    }
    stages.push(StagePlan {
        eps: eps_end,
        nodes: stage_nodes(dim, eps_end),
    });
    Schedule { d0, stages }
}

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// Speed of the penalized flow on the plateau at the working energy.
fn plateau_speed(d0: f64, eps: f64) -> f64 {
    let u_plat = PenaltyConfig::new(d0, eps).u_plateau();
    (2.0 * (ENERGY_LEVEL - eps * u_plat)).max(0.0).sqrt()
}

/// Some unit vector orthogonal to `dir`: the least-aligned axis,
/// Gram-Schmidt cleaned.
fn orthogonal_unit(dir: &[f64]) -> Vec<f64> {
    let n = dir.len();
    let ax = (0..n)
        .min_by(|&a, &b| dir[a].abs().partial_cmp(&dir[b].abs()).unwrap())
        .unwrap();
    let mut v = vec![0.0; n];
    v[ax] = 1.0;
    let d: f64 = dir.iter().zip(&v).map(|(a, b)| a * b).sum();
    for k in 0..n {
        v[k] -= d * dir[k];
    }
    let len: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / len).collect()
}

/// Triangle wave with unit amplitude and period 1, tri(0) = 0 rising.
fn tri_wave(s: f64) -> f64 {
    (2.0 / std::f64::consts::PI) * (2.0 * std::f64::consts::PI * s).sin().asin()
}

/// Back-and-forth sweep along `dir` through the deepest interior point:
/// a smoothed triangle-wave profile spanning the chord with a wall
/// clearance, plus a small transverse wobble that breaks the degeneracy
/// of the folded path. The period matches plateau speed.
pub fn diameter_seed(
    dom: &Domain,
    dir: &[f64],
    nodes: usize,
    d0: f64,
    eps: f64,
) -> Result<DiscreteLoop, PipelineError> {
    let n = dom.dim;
    let r = dom.inradius_est;
    let neg: Vec<f64> = dir.iter().map(|x| -x).collect();
    let fwd = crate::billiard::shoot(dom, &dom.witness, dir, 1)?.length;
    let bwd = crate::billiard::shoot(dom, &dom.witness, &neg, 1)?.length;
    let margin = (2.0 * eps).sqrt() + SEED_MARGIN_FRAC * r;
    let hi = fwd - margin;
    let lo = -(bwd - margin);
    if !(hi - lo > 0.2 * r) {
        return Err(PipelineError::SeedInfeasible);
    }
    let amp = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);

    // Sampled triangle wave, then cyclic 1-2-1 smoothing sized so the
    // fold corners spread over roughly one turning-layer width.
    let mut offs: Vec<f64> = (0..nodes)
        .map(|i| amp * tri_wave(i as f64 / nodes as f64))
        .collect();
    let layer = ((2.0 * eps).sqrt() / (2.0 * amp)).clamp(0.02, 0.3);
    let passes = (((nodes as f64 * layer / 4.0).powi(2)).ceil() as usize).min(SMOOTH_PASS_CAP);
    let mut tmp = vec![0.0; nodes];
    for _ in 0..passes {
        for i in 0..nodes {
            let p = offs[(i + nodes - 1) % nodes];
            let q = offs[(i + 1) % nodes];
            tmp[i] = 0.25 * p + 0.5 * offs[i] + 0.25 * q;
        }
        std::mem::swap(&mut offs, &mut tmp);
    }

    let w = orthogonal_unit(dir);
    let mut points = Vec::with_capacity(nodes * n);
    for (i, &o) in offs.iter().enumerate() {
        let s = i as f64 / nodes as f64;
        let wob = SEED_WOBBLE_FRAC * r * (2.0 * std::f64::consts::PI * s).sin();
        for k in 0..n {
            points.push(dom.witness[k] + (mid + o) * dir[k] + wob * w[k]);
        }
    }
    let tau = 4.0 * amp / plateau_speed(d0, eps);
    Ok(DiscreteLoop::new(points, tau, n).expect("seed loop is well-formed"))
}

/// Random planar ellipse around the deepest interior point: a cheap
/// closed loop exploring orbits the diameter sweeps miss.
pub fn planar_loop_seed(
    rng: &mut impl Rng,
    dom: &Domain,
    nodes: usize,
    d0: f64,
    eps: f64,
) -> DiscreteLoop {
    let n = dom.dim;
    let r = dom.inradius_est;
    let unit = |v: &mut Vec<f64>| {
        let len: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= len);
    };
    let mut e1: Vec<f64> = loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 0.1 {
            break v;
        }
    };
    unit(&mut e1);
    let mut e2: Vec<f64> = loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d: f64 = v.iter().zip(&e1).map(|(a, b)| a * b).sum();
        for k in 0..n {
            v[k] -= d * e1[k];
        }
        let len: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 0.1 {
            break v;
        }
    };
    unit(&mut e2);
    let a = r * rng.gen_range(0.35..0.75);
    let b = r * rng.gen_range(0.35..0.75);
    let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);

    let mut points = Vec::with_capacity(nodes * n);
    for i in 0..nodes {
        let th = 2.0 * std::f64::consts::PI * i as f64 / nodes as f64 + phase;
        for k in 0..n {
            points.push(dom.witness[k] + a * th.cos() * e1[k] + b * th.sin() * e2[k]);
        }
    }
    let mut lp = DiscreteLoop::new(points, 1.0, n).expect("seed loop is well-formed");
    lp.tau = lp.perimeter() / plateau_speed(d0, eps);
    lp
}

// ---------------------------------------------------------------------------
// Branch continuation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub eps: f64,
    pub nodes: usize,
    pub tau: f64,
    pub kinetic_integral: f64,
    pub grad_norm: f64,
    pub el_max: f64,
    pub energy_mean: f64,
    pub energy_stdev: f64,
    pub morse_index: usize,
}

/// One continuation branch: the stage trace plus either the final loop or
/// the error that stopped it.
pub struct BranchOutcome {
    pub seed: String,
    pub stages: Vec<StageRecord>,
    pub result: Result<DiscreteLoop, PipelineError>,
}

/// Reject stage results whose period collapses or outruns the kinetic
/// bound.
fn stage_guards(eps: f64, tau: f64, ki: f64, inradius: f64) -> Result<(), PipelineError> {
    if tau < TAU_COLLAPSE_FRAC * inradius {
        return Err(PipelineError::TauCollapse { eps, tau });
    }
    let bound = TAU_KI_SLOPE * ki + TAU_KI_OFFSET;
    if tau > bound {
        return Err(PipelineError::TauBlowup { eps, tau, bound });
    }
    Ok(())
}

/// Run the full eps ladder from one seed. The seed is solved cold at the
/// first stage; every later stage is warm-started from its predecessor,
/// resampled to the stage resolution.
pub fn run_branch(dom: &Domain, sched: &Schedule, seed: DiscreteLoop, label: &str) -> BranchOutcome {
    let mut stages = Vec::with_capacity(sched.stages.len());
    let mut lp = seed;
    for (k, stage) in sched.stages.iter().enumerate() {
        if lp.node_count() != stage.nodes {
            lp = lp
                .resample(stage.nodes)
                .expect("resampling to a planned stage size cannot fail");
        }
        let prob = ActionProblem::new(dom, PenaltyConfig::new(sched.d0, stage.eps));
        let opts = SolveOptions {
            warm_iters: if k == 0 { SolveOptions::default().warm_iters } else { 0 },
            ..SolveOptions::default()
        };
        let fail = |e: PipelineError, stages: Vec<StageRecord>| BranchOutcome {
            seed: label.to_string(),
            stages,
            result: Err(e),
        };
        let cp = match find_critical_point(&prob, &lp, &opts) {
            Ok(cp) => cp,
            Err(e) => {
                return fail(
                    PipelineError::StageDiverged {
                        eps: stage.eps,
                        source: e,
                    },
                    stages,
                )
            }
        };
        lp = cp.lp;
        let ki = lp.kinetic_integral();
        if let Err(e) = stage_guards(stage.eps, lp.tau, ki, dom.inradius_est) {
            return fail(e, stages);
        }
        let morse = match prob.morse_index_fixed_tau(&lp) {
            Ok(m) => m,
            Err(e) => return fail(e.into(), stages),
        };
        let energies = match prob.node_energies(&lp) {
            Ok(es) => es,
            Err(e) => return fail(e.into(), stages),
        };
        let mean = energies.iter().sum::<f64>() / energies.len() as f64;
        let var = energies.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / energies.len() as f64;
        stages.push(StageRecord {
            eps: stage.eps,
            nodes: stage.nodes,
            tau: lp.tau,
            kinetic_integral: ki,
            grad_norm: cp.grad_norm,
            el_max: cp.el_max,
            energy_mean: mean,
            energy_stdev: var.sqrt(),
            morse_index: morse,
        });
    }
    BranchOutcome {
        seed: label.to_string(),
        stages,
        result: Ok(lp),
    }
}

// ---------------------------------------------------------------------------
// Multistart
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Penalty cutoff scale; defaults to the domain's suggestion.
    pub d0: Option<f64>,
    pub eps_start: f64,
    pub eps_ratio: f64,
    pub eps_end: f64,
    /// Total number of seeds (diameter sweeps first, then random loops).
    pub seeds: usize,
    pub rng_seed: u64,
    /// Optional floor on per-stage node counts (capped at `MAX_NODES`).
    pub nodes_floor: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d0: None,
            eps_start: 1e-2,
            eps_ratio: 4.0,
            eps_end: 1e-6,
            seeds: 4,
            rng_seed: 0,
            nodes_floor: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchReport {
    pub seed: String,
    /// "ok" or the error that stopped the branch.
    pub status: String,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub grad_norm: f64,
    pub el_max: f64,
    pub energy_stdev: f64,
    pub max_normal_flip: f64,
    pub max_tangential_err: f64,
    pub tau_length_rel: f64,
    pub speed_max_dev: f64,
    pub crosscheck_displacement_rel: f64,
    pub crosscheck_length_rel: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BestReport {
    /// Index into `branches`.
    pub branch: usize,
    pub length: f64,
    pub tau: f64,
    pub bounces: usize,
    /// length / inradius, against the bound 2 * (dim + 1).
    pub ratio: f64,
    pub ratio_bound: f64,
    pub bounce_points: Vec<Vec<f64>>,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub domain: DomainSpec,
    pub d0: f64,
    pub inradius: f64,
    pub schedule: Vec<StagePlan>,
    pub branches: Vec<BranchReport>,
    /// Indices of branches with distinct orbits, best first.
    pub distinct: Vec<usize>,
    pub best: Option<BestReport>,
}

pub struct RunOutput {
    pub report: RunReport,
    /// Final loop and extracted trajectory of the best branch.
    pub best: Option<(DiscreteLoop, BilliardTrajectory)>,
}

/// Deterministic seed list: diameter sweeps over well-spread directions,
/// then rng-driven planar loops.
/// True when `d` is not a sign-flip duplicate of any direction in `set`.
fn distinct_dir(set: &[Vec<f64>], d: &[f64]) -> bool {
    set.iter().all(|c| {
        let dp: f64 = c.iter().zip(d).map(|(a, b)| a * b).sum();
        dp.abs() < DISTINCT_DOT
    })
}

/// Seed directions through the witness, shortest wall-to-wall span first.
///
/// The shortest periodic orbit bounces across a minimal width, and in
/// regions with a nearly circular chamber only the symmetry-axis
/// diameters survive as critical points -- an off-axis seed drifts along
/// an almost flat rotational valley without converging.  Ranking a fixed
/// grid of directions by span finds both: the spans' minimizers sit on
/// exactly those axes.  Directions whose rays fail to reach a wall
/// (skimming a degenerate feature) are skipped; the caller tops up from
/// the generic spread.
fn width_directions(dom: &Domain, want: usize) -> Vec<Vec<f64>> {
    let cands: Vec<Vec<f64>> = if dom.dim == 2 {
        // Half-turn grid containing the coordinate axes exactly.
        (0..SPAN_SAMPLES)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / SPAN_SAMPLES as f64;
                vec![th.cos(), th.sin()]
            })
            .collect()
    } else {
        sphere_directions(dom.dim, SPAN_SAMPLES)
    };
    let mut spans: Vec<(f64, Vec<f64>)> = Vec::new();
    for d in cands {
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        let fwd = crate::billiard::shoot(dom, &dom.witness, &d, 1);
        let bwd = crate::billiard::shoot(dom, &dom.witness, &neg, 1);
        if let (Ok(f), Ok(b)) = (fwd, bwd) {
            spans.push((f.length + b.length, d));
        }
    }
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (_, d) in spans {
        if distinct_dir(&out, &d) {
            out.push(d);
            if out.len() == want {
                break;
            }
        }
    }
    out
}

fn build_seeds(
    dom: &Domain,
    d0: f64,
    nodes: usize,
    eps: f64,
    count: usize,
    rng_seed: u64,
) -> Vec<(String, Result<DiscreteLoop, PipelineError>)> {
    let count = count.max(1);
    let n_diam = count.div_ceil(2).min(6);
    let mut dirs = width_directions(dom, n_diam);
    for d in sphere_directions(dom.dim, 2 * n_diam) {
        if dirs.len() >= n_diam {
            break;
        }
        if distinct_dir(&dirs, &d) {
            dirs.push(d);
        }
    }
    let mut out = Vec::with_capacity(count);
    for (j, dir) in dirs.iter().enumerate() {
        out.push((
            format!("diameter-{j}"),
            diameter_seed(dom, dir, nodes, d0, eps),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    for j in 0..count.saturating_sub(dirs.len()) {
        out.push((
            format!("loop-{j}"),
            Ok(planar_loop_seed(&mut rng, dom, nodes, d0, eps)),
        ));
    }
    out
}

/// Bounce sets that agree pointwise within the merge tolerance are the
/// same orbit.
fn same_orbit(a: &BilliardTrajectory, b: &BilliardTrajectory) -> bool {
    if a.bounce_points.len() != b.bounce_points.len() {
        return false;
    }
    let tol = MERGE_TOL_REL * a.length.max(b.length);
    a.bounce_points.iter().all(|p| {
        b.bounce_points
            .iter()
            .map(|q| dist(p, q))
            .fold(f64::INFINITY, f64::min)
            <= tol
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Run every branch of the multistart, extract billiard trajectories,
/// merge duplicates, and report the best (smallest kinetic integral)
/// orbit with its residuals. `best` is None when no branch survives.
pub fn run_multistart(dom: &Domain, cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let d0 = cfg.d0.unwrap_or(dom.d0_default);
    let mut sched = plan_schedule(dom.dim, d0, cfg.eps_start, cfg.eps_ratio, cfg.eps_end);
    if let Some(floor) = cfg.nodes_floor {
        let floor = floor.min(MAX_NODES);
        for st in &mut sched.stages {
            st.nodes = st.nodes.max(floor);
        }
    }
    let first = sched.stages[0];
    let eps_end = sched.stages.last().unwrap().eps;

    let seeds = build_seeds(dom, d0, first.nodes, first.eps, cfg.seeds, cfg.rng_seed);
    let outcomes: Vec<BranchOutcome> = seeds
        .into_par_iter()
        .map(|(label, seed)| match seed {
            Ok(lp) => run_branch(dom, &sched, lp, &label),
            Err(e) => BranchOutcome {
                seed: label,
                stages: Vec::new(),
                result: Err(e),
            },
        })
        .collect();

    // Extract a trajectory from every surviving branch.
    let mut branches = Vec::with_capacity(outcomes.len());
    let mut candidates: Vec<(usize, DiscreteLoop, BilliardTrajectory)> = Vec::new();
    for (i, oc) in outcomes.into_iter().enumerate() {
        let status = match oc.result {
            Ok(lp) => match extract_trajectory(dom, &lp, eps_end) {
                Ok(traj) => {
                    candidates.push((i, lp, traj));
                    "ok".to_string()
                }
                Err(e) => format!("extraction failed: {e}"),
            },
            Err(e) => format!("failed: {e}"),
        };
        branches.push(BranchReport {
            seed: oc.seed,
            status,
            stages: oc.stages,
        });
    }

    // Smallest kinetic integral first; ties broken by the bounce points so
    // the order never depends on scheduling.
    candidates.sort_by(|a, b| {
        a.1.kinetic_integral()
            .total_cmp(&b.1.kinetic_integral())
            .then_with(|| {
                let fa: Vec<f64> = a.2.bounce_points.iter().flatten().copied().collect();
                let fb: Vec<f64> = b.2.bounce_points.iter().flatten().copied().collect();
                fa.iter()
                    .zip(&fb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let mut distinct: Vec<usize> = Vec::new();
    let mut reps: Vec<&BilliardTrajectory> = Vec::new();
    for (i, _, traj) in &candidates {
        if !reps.iter().any(|r| same_orbit(r, traj)) {
            distinct.push(*i);
            reps.push(traj);
        }
    }

    // The best candidate must also replay cleanly through the direct
    // dynamics; fall through to the next orbit if it does not.
    let mut best = None;
    let mut best_out = None;
    for (i, lp, traj) in &candidates {
        if !distinct.contains(i) {
            continue;
        }
        let cc = match crosscheck_trajectory(dom, traj) {
            Ok(cc) => cc,
            Err(_) => continue,
        };
        let last = branches[*i]
            .stages
            .last()
            .expect("a surviving branch has stage records");
        best = Some(BestReport {
            branch: *i,
            length: traj.length,
            tau: traj.tau,
            bounces: traj.bounce_points.len(),
            ratio: traj.length / dom.inradius_est,
            ratio_bound: 2.0 * (dom.dim as f64 + 1.0),
            bounce_points: traj.bounce_points.clone(),
            residuals: Residuals {
                grad_norm: last.grad_norm,
                el_max: last.el_max,
                energy_stdev: last.energy_stdev,
                max_normal_flip: traj.max_normal_flip,
                max_tangential_err: traj.max_tangential_err,
                tau_length_rel: traj.tau_length_rel,
                speed_max_dev: traj.speed_max_dev,
                crosscheck_displacement_rel: cc.displacement_rel,
                crosscheck_length_rel: cc.length_rel,
            },
        });
        best_out = Some((lp.clone(), traj.clone()));
        break;
    }

    Ok(RunOutput {
        report: RunReport {
            domain: dom.spec.clone(),
            d0,
            inradius: dom.inradius_est,
            schedule: sched.stages,
            branches,
            distinct,
            best,
        },
        best: best_out,
    })
}

/// Per-stage trace of every branch as CSV.
pub fn trace_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "branch,seed,stage,eps,nodes,tau,kinetic_integral,grad_norm,el_max,energy_stdev,morse_index\n",
    );
    for (i, br) in report.branches.iter().enumerate() {
        for (k, st) in br.stages.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                i,
                br.seed,
                k,
                st.eps,
                st.nodes,
                st.tau,
                st.kinetic_integral,
                st.grad_norm,
                st.el_max,
                st.energy_stdev,
                st.morse_index
            ));
        }
    }
    out
}

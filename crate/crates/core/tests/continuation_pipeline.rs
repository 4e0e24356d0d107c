//! End-to-end continuation: the eps ladder on the unit disk against its
//! known bouncing diameter, extraction of the billiard data, multistart
//! determinism, and the minor-axis orbit of the ellipse.

mod common;

use billiards_core::action::{ActionProblem, MORSE_SHIFT_REL};
use billiards_core::continuation::{
    diameter_seed, plan_schedule, planar_loop_seed, run_branch, run_multistart, trace_csv,
    PipelineError, RunConfig,
};
use billiards_core::extract::extract_trajectory;
use billiards_core::penalty::PenaltyConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[test]
fn disk_schedule_matches_the_frozen_ladder() {
    let sched = plan_schedule(2, 0.2, 1e-2, 4.0, 1e-6);
    let eps: Vec<f64> = sched.stages.iter().map(|s| s.eps).collect();
    // Clamped start 0.1 * (1.5 * 0.2)^2 = 9e-3, then /4 per stage, final
    // stage exactly at the requested floor.
    let expect = [
        9e-3,
        2.25e-3,
        5.625e-4,
        1.40625e-4,
        3.515625e-5,
        8.7890625e-6,
        2.197265625e-6,
        1e-6,
    ];
    assert_eq!(eps.len(), expect.len());
    for (a, b) in eps.iter().zip(&expect) {
        assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
    }
    let nodes: Vec<usize> = sched.stages.iter().map(|s| s.nodes).collect();
    assert_eq!(nodes, [1024, 2048, 2048, 4096, 8192, 16384, 16384, 20480]);
}

#[test]
fn disk_continuation_hits_the_golden_windows() {
    let dom = common::disk();
    let sched = plan_schedule(2, 0.2, 1e-2, 4.0, 1e-6);
    let n0 = sched.stages[0].nodes;
    let seed = diameter_seed(&dom, &[1.0, 0.0], n0, 0.2, sched.stages[0].eps).expect("seed");
    let out = run_branch(&dom, &sched, seed, "diameter-x");
    let lp = out.result.expect("branch converges");
    assert_eq!(out.stages.len(), sched.stages.len());

    // The period starts above the orbit length (the smoothed flow pays for
    // the turning layers) and descends to it as eps vanishes.
    let taus: Vec<f64> = out.stages.iter().map(|s| s.tau).collect();
    assert!(
        taus[0] > 4.05 && taus[0] < 4.45,
        "first-stage period {}",
        taus[0]
    );
    let tau_f = *taus.last().unwrap();
    assert!((tau_f - 4.0).abs() <= 1e-4, "final period {tau_f}");
    // Stage periods settle at sqrt(eps) rate.
    for st in &out.stages {
        assert!(
            (st.tau - tau_f).abs() <= 10.0 * st.eps.sqrt(),
            "tau {} at eps {} too far from {tau_f}",
            st.tau,
            st.eps
        );
    }

    // The kinetic integral grows toward length^2 / 4 = 4 from below.
    let kis: Vec<f64> = out.stages.iter().map(|s| s.kinetic_integral).collect();
    for w in kis.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "kinetic integral dipped: {kis:?}");
    }
    assert!(kis[0] > 2.8 && kis[0] < 3.15, "first KI {}", kis[0]);
    let ki_f = *kis.last().unwrap();
    assert!(ki_f > 3.97 && ki_f < 4.005, "final KI {ki_f}");

    // Discretization and optimality residuals under their stage targets.
    let last = out.stages.last().unwrap();
    assert!(last.energy_stdev <= 5e-5, "energy spread {}", last.energy_stdev);
    assert!(last.el_max <= 1e-6, "EL residual {}", last.el_max);
    assert!((last.energy_mean - 0.5).abs() <= 1e-4);

    // A bouncing diameter in the plane has the full index n + 1 = 3. The
    // bound holds at every stage; the exact count is only guaranteed while
    // the softest negative mode (which vanishes with eps) stays resolved
    // above the spectral threshold.
    for st in &out.stages {
        assert!(st.morse_index <= 3, "index {} at eps {}", st.morse_index, st.eps);
    }
    assert_eq!(out.stages[0].morse_index, 3);
    assert!(out.stages.last().unwrap().morse_index >= 2);

    // Extraction: two antipodal bounces on the unit circle, chord length
    // 4, period matching, clean reflection.
    let traj = extract_trajectory(&dom, &lp, 1e-6).expect("extract");
    assert_eq!(traj.bounce_points.len(), 2);
    assert!((traj.length - 4.0).abs() <= 1e-3, "length {}", traj.length);
    for b in &traj.bounce_points {
        let r: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((r - 1.0).abs() <= 1e-7, "bounce off circle: {b:?}");
    }
    let s: Vec<f64> = (0..2)
        .map(|i| traj.bounce_points[0][i] + traj.bounce_points[1][i])
        .collect();
    assert!(s.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-3);
    assert!(traj.tau_length_rel <= 0.01);
    assert!(traj.max_normal_flip <= 1e-3);
    assert!(traj.max_tangential_err <= 1e-3);
    assert!(traj.min_normal_component >= 0.99);
    assert!(traj.speed_max_dev <= 0.02);
}

#[test]
fn morse_index_of_a_coarse_resample_matches_a_dense_eigensolver() {
    // The banded inertia route must agree with a dense factorization on
    // the same matrix, here at a loop size where dense is cheap.
    let dom = common::disk();
    let sched = plan_schedule(2, 0.2, 9e-3, 4.0, 9e-4);
    let n0 = sched.stages[0].nodes;
    let seed = diameter_seed(&dom, &[1.0, 0.0], n0, 0.2, sched.stages[0].eps).expect("seed");
    let out = run_branch(&dom, &sched, seed, "diameter-x");
    let lp = out.result.expect("branch converges");
    let lp32 = lp.resample(32).expect("resample");
    let prob = ActionProblem::new(&dom, PenaltyConfig::new(0.2, sched.stages.last().unwrap().eps));
    let banded = prob.morse_index_fixed_tau(&lp32).expect("banded index");

    let h = prob.hessian_fixed_tau(&lp32).expect("hessian");
    let dense = h.to_dense();
    let shift = MORSE_SHIFT_REL * h.gershgorin_bound();
    let eig = dense.symmetric_eigen();
    let dense_neg = eig.eigenvalues.iter().filter(|&&l| l < -shift).count();
    assert_eq!(banded, dense_neg);
}

#[test]
fn multistart_on_the_disk_is_deterministic_and_finds_the_diameter() {
    let dom = common::disk();
    let cfg = RunConfig {
        seeds: 2,
        rng_seed: 5,
        ..RunConfig::default()
    };
    let one = run_multistart(&dom, &cfg).expect("run");
    let two = run_multistart(&dom, &cfg).expect("run");
    let ja = serde_json::to_string_pretty(&one.report).expect("json");
    let jb = serde_json::to_string_pretty(&two.report).expect("json");
    assert_eq!(ja, jb, "same inputs must produce identical reports");
    assert_eq!(trace_csv(&one.report), trace_csv(&two.report));

    let best = one.report.best.as_ref().expect("a valid orbit");
    assert_eq!(best.bounces, 2);
    assert!((best.length - 4.0).abs() <= 1e-3, "length {}", best.length);
    assert!((best.ratio - 4.0).abs() <= 1e-3, "ratio {}", best.ratio);
    assert!(best.ratio < best.ratio_bound);
    assert!(best.residuals.max_normal_flip <= 1e-3);
    assert!(best.residuals.crosscheck_displacement_rel <= 1e-3);
    assert!(best.residuals.crosscheck_length_rel <= 1e-3);
    assert!(best.residuals.tau_length_rel <= 0.01);

    // The trace has one row per surviving stage.
    let csv = trace_csv(&one.report);
    let rows = csv.lines().count() - 1;
    let stages: usize = one.report.branches.iter().map(|b| b.stages.len()).sum();
    assert_eq!(rows, stages);
}

#[test]
fn multistart_on_the_ellipse_finds_the_minor_axis() {
    let dom = common::ellipse();
    let cfg = RunConfig {
        seeds: 3,
        rng_seed: 11,
        ..RunConfig::default()
    };
    let out = run_multistart(&dom, &cfg).expect("run");
    let best = out.report.best.as_ref().expect("a valid orbit");
    // Shortest orbit: the minor axis, length 4 * (semi-minor 1).
    assert_eq!(best.bounces, 2);
    assert!(
        (best.length - 4.0).abs() <= 0.005 * 4.0,
        "length {}",
        best.length
    );
    for b in &best.bounce_points {
        assert!(b[0].abs() <= 0.05, "bounce away from the minor axis: {b:?}");
    }
    assert!(best.residuals.max_normal_flip <= 1e-3);
    assert!(best.residuals.max_tangential_err <= 1e-3);
    assert!(best.residuals.crosscheck_displacement_rel <= 1e-3);
    assert!(best.residuals.crosscheck_length_rel <= 1e-3);
    // Every surviving stage respects the index bound n + 1.
    for br in &out.report.branches {
        for st in &br.stages {
            assert!(st.morse_index <= 3, "index {} at eps {}", st.morse_index, st.eps);
        }
    }
}

#[test]
fn seeds_are_deterministic_and_inside_the_domain() {
    let dom = common::ellipse();
    let d0 = dom.d0_default;
    let lp = diameter_seed(&dom, &[0.0, 1.0], 256, d0, 3e-3).expect("seed");
    for i in 0..lp.node_count() {
        let sd = dom.signed_dist(lp.node(i)).expect("sd");
        assert!(sd < 0.0, "seed node {i} outside: sd {sd:.3e}");
    }
    assert!(lp.tau.is_finite() && lp.tau > 0.0);

    let mk = |seed: u64| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        planar_loop_seed(&mut rng, &dom, 128, d0, 3e-3)
    };
    let a = mk(9);
    let b = mk(9);
    let c = mk(10);
    assert_eq!(a.state(), b.state(), "same rng seed, same loop");
    assert_ne!(a.state(), c.state(), "different rng seed, different loop");
    for i in 0..a.node_count() {
        let sd = dom.signed_dist(a.node(i)).expect("sd");
        assert!(sd < 0.0, "loop node {i} outside: sd {sd:.3e}");
    }
}

#[test]
fn a_bad_seed_fails_its_branch_without_poisoning_the_run() {
    let dom = common::disk();
    let sched = plan_schedule(2, 0.2, 9e-3, 4.0, 2e-3);
    let n0 = sched.stages[0].nodes;
    // A loop translated clear out of the domain cannot even be evaluated.
    let mut seed = diameter_seed(&dom, &[1.0, 0.0], n0, 0.2, 9e-3).expect("seed");
    let mut pts = Vec::with_capacity(n0 * 2);
    for i in 0..n0 {
        pts.push(seed.node(i)[0] + 5.0);
        pts.push(seed.node(i)[1]);
    }
    seed = billiards_core::action::DiscreteLoop::new(pts, seed.tau, 2).expect("loop");
    let out = run_branch(&dom, &sched, seed, "bad");
    assert!(out.stages.is_empty());
    assert!(matches!(
        out.result,
        Err(PipelineError::StageDiverged { .. })
    ));
}

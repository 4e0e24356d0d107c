//! End-to-end checks of the critical-point solver on the canonical domains:
//! convergence from bouncing-diameter seeds, idempotence, seed rejection,
//! and degeneration when the potential cannot support the energy level.

mod common;

use billiards_core::action::{ActionProblem, DiscreteLoop};
use billiards_core::penalty::PenaltyConfig;
use billiards_core::solve::{find_critical_point, SolveError, SolveOptions};

/// Loop oscillating along one axis: the smooth ancestor of a two-bounce
/// orbit. `axis` selects the oscillation direction, `a` its amplitude, and
/// a small transverse wiggle breaks exact symmetry.
fn diameter_seed(nn: usize, axis: usize, a: f64, tau: f64) -> DiscreteLoop {
    let mut pts = Vec::with_capacity(nn * 2);
    for i in 0..nn {
        let th = 2.0 * std::f64::consts::PI * i as f64 / nn as f64;
        let main = a * th.sin();
        let wiggle = 0.01 * th.cos();
        let (x, y) = if axis == 0 { (main, wiggle) } else { (wiggle, main) };
        pts.push(x);
        pts.push(y);
    }
    DiscreteLoop::new(pts, tau, 2).expect("valid seed")
}

#[test]
fn converges_to_bouncing_diameter_in_disk() {
    let dom = common::disk();
    let pen = PenaltyConfig::new(0.2, 9e-3);
    let prob = ActionProblem::new(&dom, pen);
    let nn = 128;
    let seed = diameter_seed(nn, 0, 0.82, 3.7);
    let opts = SolveOptions::default();
    let cp = find_critical_point(&prob, &seed, &opts).expect("solver converges");
    assert!(cp.grad_norm <= opts.tol_per_node * nn as f64);
    assert!(cp.el_max <= 5e-7, "polish left el_max = {:.3e}", cp.el_max);
    assert!(
        (3.0..4.6).contains(&cp.lp.tau),
        "period {} outside the bouncing-diameter window",
        cp.lp.tau
    );
    // The orbit flattens onto the diameter: transverse coordinates vanish.
    let max_y = (0..nn)
        .map(|i| cp.lp.node(i)[1].abs())
        .fold(0.0, f64::max);
    assert!(max_y < 1e-4, "transverse coordinate {max_y:.3e} did not collapse");
    // All nodes stay strictly inside.
    for i in 0..nn {
        assert!(dom.contains(cp.lp.node(i)));
    }
}

#[test]
fn converged_state_is_a_fixed_point() {
    let dom = common::disk();
    let prob = ActionProblem::new(&dom, PenaltyConfig::new(0.2, 9e-3));
    let seed = diameter_seed(96, 0, 0.82, 3.7);
    let opts = SolveOptions::default();
    let cp = find_critical_point(&prob, &seed, &opts).expect("first solve");
    let again = find_critical_point(&prob, &cp.lp, &opts).expect("re-solve");
    assert_eq!(again.newton_iters, 0, "converged seed must return untouched");
    assert_eq!(again.lp.points(), cp.lp.points());
    assert_eq!(again.lp.tau, cp.lp.tau);
}

#[test]
fn rejects_seed_outside_domain() {
    let dom = common::disk();
    let prob = ActionProblem::new(&dom, PenaltyConfig::new(0.2, 9e-3));
    let seed = diameter_seed(32, 0, 1.5, 4.0); // amplitude exceeds the radius
    let err = find_critical_point(&prob, &seed, &SolveOptions::default()).unwrap_err();
    assert!(matches!(err, SolveError::BadSeed), "got {err:?}");
}

#[test]
fn degenerates_when_potential_exceeds_energy_level() {
    // eps * U_plateau > E leaves the period equation without a root, so the
    // solver must drive tau down and report the degeneration rather than
    // fabricate a loop.
    let dom = common::disk();
    let prob = ActionProblem::new(&dom, PenaltyConfig::new(0.2, 6e-2));
    let nn = 64;
    let mut pts = Vec::with_capacity(nn * 2);
    for i in 0..nn {
        let th = 2.0 * std::f64::consts::PI * i as f64 / nn as f64;
        pts.push(0.5 * th.cos());
        pts.push(0.5 * th.sin());
    }
    let seed = DiscreteLoop::new(pts, 4.0, 2).expect("seed");
    let err = find_critical_point(&prob, &seed, &SolveOptions::default()).unwrap_err();
    assert!(
        matches!(
            err,
            SolveError::DegenerateTau | SolveError::NoConvergence { .. }
        ),
        "got {err:?}"
    );
}

#[test]
fn converges_to_minor_axis_in_ellipse() {
    let dom = common::ellipse();
    let pen = PenaltyConfig::new(0.125, 3.5e-3);
    let prob = ActionProblem::new(&dom, pen);
    let nn = 128;
    let seed = diameter_seed(nn, 1, 0.86, 3.9);
    let opts = SolveOptions::default();
    let cp = find_critical_point(&prob, &seed, &opts).expect("solver converges");
    assert!(cp.grad_norm <= opts.tol_per_node * nn as f64);
    assert!(
        (3.2..4.4).contains(&cp.lp.tau),
        "period {} outside the minor-axis window",
        cp.lp.tau
    );
    let max_x = (0..nn)
        .map(|i| cp.lp.node(i)[0].abs())
        .fold(0.0, f64::max);
    assert!(max_x < 0.02, "orbit drifted off the minor axis: {max_x:.3e}");
}

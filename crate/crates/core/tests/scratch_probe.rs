//! Temporary diagnostics for the dumbbell first stage. Not part of the suite.

use billiards_core::action::ActionProblem;
use billiards_core::continuation::{diameter_seed, plan_schedule};
use billiards_core::geometry::Domain;
use billiards_core::penalty::PenaltyConfig;
use billiards_core::solve::{find_critical_point, SolveOptions};

#[test]
#[ignore]
fn dumbbell_first_stage() {
    let dom = Domain::from_json(
        r#"{"dim":2,"shape":"dumbbell","params":{"centers":[[-1.4,0.0],[1.4,0.0]],"radii":[1.0,1.0],"neck_radius":0.2}}"#,
    )
    .unwrap();
    let d0 = dom.d0_default;
    let sched = plan_schedule(dom.dim, d0, 1e-2, 4.0, 1e-6);
    let st = &sched.stages[0];
    println!(
        "d0 {:.4}  stage0 eps {:.4e} nodes {}  (stages {})",
        d0,
        st.eps,
        st.nodes,
        sched.stages.len()
    );

    for dir in [[0.0, 1.0]] {
        let seed = match diameter_seed(&dom, &dir, st.nodes, d0, st.eps) {
            Ok(s) => s,
            Err(e) => {
                println!("dir {dir:?}: seed failed: {e}");
                continue;
            }
        };
        println!(
            "dir {dir:?}: seed tau {:.4} nodes {}",
            seed.tau,
            seed.node_count()
        );
        let pen = PenaltyConfig::new(d0, st.eps);
        let prob = ActionProblem::new(&dom, pen);
        let t0 = std::time::Instant::now();
        match find_critical_point(&prob, &seed, &SolveOptions { max_newton: 2000, ..SolveOptions::default() }) {
            Ok(cp) => println!(
                "  OK tau {:.4} |g| {:.3e} el {:.3e} warm {} newton {}  [{:.1}s]",
                cp.lp.tau,
                cp.grad_norm,
                cp.el_max,
                cp.warm_iters,
                cp.newton_iters,
                t0.elapsed().as_secs_f64()
            ),
            Err(e) => println!("  FAILED: {e:?}  [{:.1}s]", t0.elapsed().as_secs_f64()),
        }
    }
}

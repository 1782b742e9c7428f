use asyncdgd_core::analysis::{envelope_check, fixed_point};
use asyncdgd_core::asynchrony::{delay_metrics, gen_synchronous, Schedule};
use asyncdgd_core::engine::{run_concurrent, run_synchronous, simulate, RuntimeOptions, TraceOptions};
use asyncdgd_core::mixing::{lazy_transform, metropolis_weights, Graph};
use asyncdgd_core::operators::{contraction_factor, max_stepsize, AlgorithmKind, AlgorithmSpec};
use asyncdgd_core::problem::{synthetic, BlockVector};

fn atc_spec() -> (AlgorithmSpec, Graph) {
    let g = Graph::random_connected(6, 8, 3).unwrap();
    let w = lazy_transform(&metropolis_weights(&g).unwrap()).unwrap();
    let p = synthetic::random_quadratic_problem(6, 3, 6, false, 3).unwrap();
    let alpha = 0.9 * max_stepsize(AlgorithmKind::DgdAtc, &p, &w);
    (AlgorithmSpec::new(AlgorithmKind::DgdAtc, p, w, alpha).unwrap(), g)
}

#[test]
fn runtime_schedule_survives_text_round_trip() {
    let (spec, _) = atc_spec();
    let x0 = BlockVector::zeros(6, 3);
    let trace = run_concurrent(&spec, &x0, &RuntimeOptions::with_iterations(800)).unwrap();
    let text = trace.schedule.as_ref().unwrap().to_text();
    let parsed = Schedule::parse(&text).unwrap();
    let replay = simulate(&spec, &parsed, &x0, &TraceOptions::default()).unwrap();
    assert_eq!(replay.final_x, trace.final_x);
}

#[test]
fn synchronous_rounds_match_simulated_synchronous_schedule() {
    let (spec, g) = atc_spec();
    let xs = fixed_point(&spec, 1e-14, 1_000_000).unwrap().x_star;
    let x0 = BlockVector::new(6, 3, (0..18).map(|v| v as f64 / 7.0).collect()).unwrap();
    let rounds = 30;
    let sched = gen_synchronous(&g, rounds * 6).unwrap();
    let sim = simulate(&spec, &sched, &x0, &TraceOptions { stride: 6, x_star: Some(xs.clone()) }).unwrap();
    let sync = run_synchronous(&spec, rounds, &x0, &TraceOptions { stride: 1, x_star: Some(xs) }).unwrap();
    assert_eq!(sim.final_x, sync.final_x);
    // one contraction per round
    let rho = contraction_factor(&spec).factor;
    let d = sync.distances.unwrap();
    for r in 1..d.len() {
        assert!(d[r] <= rho * d[r - 1] + 1e-12, "round {r}");
    }
    let report = envelope_check(&sim, rho, &delay_metrics(&sched)).unwrap();
    assert!(report.period_holds && report.adaptive_holds && report.adaptive_dominates);
}

use std::f64::consts::TAU;
use std::sync::OnceLock;

use proptest::prelude::*;

use hjb_planner::oracle::{integrate, reverse_start, Goal, Schedule, Simulator};
use hjb_planner::scene::{FootprintSampler, ObstacleMotion};
use hjb_planner::tracer::{interpolate, trace, validate_trajectory, TracerParams};
use hjb_planner::*;

struct Fixture {
    scene: Scene,
    car: CarParams,
    vf: ValueFunction,
}

/// One small solve around a static disk, shared by the properties below.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let car = CarParams::reference();
        let disk = ObstacleMotion::StaticDisk { center: [0.0, 0.3], radius: 0.2 };
        let scene = Scene::new(Domain::UNIT_SQUARE, 3.0, vec![disk.into()]).unwrap();
        let g = Grid4::with_cfl(Domain::UNIT_SQUARE, 24, 24, 24, 3.0, &car, 0.9).unwrap();
        let params = SolverParams {
            stride: Some(4),
            ..Default::default()
        };
        let solver = Solver::new(g, car, Configuration::new(0.4, -0.4, 0.0), &params).unwrap();
        let (vf, _) = solver.solve(&scene).unwrap();
        Fixture { scene, car, vf }
    })
}

fn control() -> impl Strategy<Value = ControlPair> {
    (0usize..7).prop_map(|i| ControlPair::ALL[i])
}

#[test]
fn stored_values_are_bounded_and_target_pinned() {
    let f = fixture();
    let m = f.vf.sentinel;
    let t = f.vf.target_node;
    for (n, s) in f.vf.times.iter().zip(&f.vf.slices) {
        assert!(s.iter().all(|v| (0.0..=m).contains(v)), "slice {n}");
        assert_eq!(s[f.vf.grid.linear(t.i, t.j, t.k)], 0.0);
    }
    f.vf.check_invariants().unwrap();
}

#[test]
fn values_do_not_grow_with_more_time_to_go() {
    // With more time before the horizon, more paths reach the target.
    let f = fixture();
    let first = &f.vf.slices[0];
    let last = &f.vf.slices[f.vf.slices.len() - 1];
    let mut worse = 0;
    for (a, b) in first.iter().zip(last) {
        if *b < f.vf.sentinel && a > b {
            worse += 1;
        }
    }
    assert_eq!(worse, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_stays_within_value_range(
        x in -1.0..1.0f64, y in -1.0..1.0f64, th in 0.0..TAU, t in 0.0..3.0f64,
    ) {
        let f = fixture();
        let u = interpolate(&f.vf, x, y, th, t).unwrap();
        prop_assert!(u >= 0.0 && u <= f64::from(f.vf.sentinel));
    }

    #[test]
    fn traced_controls_are_admissible(x in -0.8..0.8f64, y in -0.8..-0.1f64, th in 0.0..TAU) {
        let f = fixture();
        let start = Configuration::new(x, y, th);
        if let Ok(tr) = trace(&f.vf, &start, &f.scene, &f.car, &TracerParams::defaults_for(&f.vf)) {
            for s in &tr.samples {
                prop_assert!(s.control.index().is_some());
                prop_assert!(!(s.control.v == 0 && s.control.w != 0));
            }
            let sampler = FootprintSampler::for_grid(&f.car, &f.vf.grid);
            let rep = validate_trajectory(&tr, &f.scene, &f.car, &sampler, 4);
            prop_assert!(rep.first_violation.map_or(true, |v| v.kind != tracer::ViolationKind::InadmissibleControl));
        }
    }

    #[test]
    fn schedule_reversal_round_trips(
        segs in proptest::collection::vec((control(), 0.0..0.5f64), 1..5),
        x in -0.5..0.5f64, y in -0.5..0.5f64, th in 0.0..TAU,
    ) {
        let car = CarParams::reference();
        let sched = Schedule::new(segs).unwrap();
        let target = Configuration::new(x, y, th);
        let start = reverse_start(&target, &sched, &car, 1e-3);
        let back = integrate(&start, &sched, &car, 1e-3);
        prop_assert!(back.distance(&target) < 1e-8);
        prop_assert!(kinematics::angle_diff(back.theta, target.theta).abs() < 1e-8);
    }

    #[test]
    fn oracle_never_beats_nothing_and_respects_known_schedules(
        first in control(), d1 in 0.1..0.4f64, second in control(), d2 in 0.1..0.4f64,
    ) {
        prop_assume!(first != second && first.index() != Some(0) && second.index() != Some(0));
        let car = CarParams::reference();
        let scene = Scene::empty(Domain::UNIT_SQUARE, 3.0);
        let target = Configuration::new(0.0, 0.0, 0.0);
        let sched = Schedule::new(vec![(first, d1), (second, d2)]).unwrap();
        let start = reverse_start(&target, &sched, &car, 1e-3);
        prop_assume!(Domain::UNIT_SQUARE.contains(start.x, start.y));
        let goal = Goal { target, position_tolerance: 0.05, angle_tolerance: 0.2 };
        let sim = Simulator::new(&scene, car, goal, FootprintSampler::new(&car, 0.05), 0.005).unwrap();
        let shot = sim.shoot(&start, 2, &[d1, d2, 0.2]);
        let best = shot.best.unwrap();
        prop_assert!(best <= d1 + d2 + 1e-9);
        prop_assert!(best >= 0.0);
    }
}

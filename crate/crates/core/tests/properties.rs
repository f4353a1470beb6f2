mod common;

use lqpursuit::io::{parse_spec, spec_to_json, to_json_bytes};
use lqpursuit::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn value_flow_stays_symmetric(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, p) = common::solvable_game(&mut rng, n);
        for k in 0..=10 {
            let t = spec.t0 + spec.horizon() * k as f64 / 10.0;
            let m = p.eval(t).unwrap();
            prop_assert!((&m - m.transpose()).amax() <= 1e-10 * (1.0 + m.amax()));
        }
    }

    #[test]
    fn payoff_forms_agree(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, p) = common::solvable_game(&mut rng, n);
        let u_p = common::random_signal(&mut rng, spec.b.ncols(), spec.t0, spec.tf, 3, 2.0);
        let u_e = common::random_signal(&mut rng, spec.c.ncols(), spec.t0, spec.tf, 3, 2.0);
        let step = Tolerances::default().step(spec.horizon());
        let traj = simulate(
            &spec, &p, &[], &PursuerStrategy::Input(u_p), &EvaderStrategy::Input(u_e), step,
        ).unwrap();
        let (direct, square) = payoff_two_ways(&traj, &spec, &p).unwrap();
        prop_assert!((direct - square).abs() <= 1e-5 * (1.0 + direct.abs()));
    }

    #[test]
    fn optimal_schedules_are_admissible(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, p) = common::solvable_game(&mut rng, n);
        let opts = ScheduleOptions::new(&spec, &Tolerances::default());
        let Ok(s) = optimal_schedule(&spec, &p, &opts) else { return Ok(()); };
        prop_assert_eq!(s.n, s.instants.len());
        prop_assert!(s.instants.windows(2).all(|w| w[0] < w[1]));
        let adm = check_admissibility(&spec, &p, &s.instants, &opts).unwrap();
        prop_assert!(adm.pass);
    }

    #[test]
    fn no_estimation_error_without_deviation(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, p) = common::solvable_game(&mut rng, n);
        let instants = common::random_instants(&mut rng, &spec, 3);
        let step = Tolerances::default().step(spec.horizon());
        let traj = simulate(
            &spec, &p, &instants,
            &PursuerStrategy::certainty_equivalent(), &EvaderStrategy::equilibrium(), step,
        ).unwrap();
        prop_assert!(traj.max_error_norm() <= 1e-9 * (1.0 + spec.x0.amax()));
    }

    #[test]
    fn spec_json_round_trips(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_game(&mut rng, n);
        let text = String::from_utf8(to_json_bytes(&spec_to_json(&spec)).unwrap()).unwrap();
        let back = parse_spec(&text).unwrap();
        prop_assert_eq!(back, spec);
    }
}

#[test]
fn shorter_schedules_are_never_admissible() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut specs = Vec::new();
    while specs.len() < 5 {
        let (spec, p) = common::solvable_game(&mut rng, 2 + specs.len() % 2);
        let opts = ScheduleOptions::new(&spec, &Tolerances::default());
        if let Ok(s) = optimal_schedule(&spec, &p, &opts) {
            if s.n >= 2 {
                specs.push((spec, p, opts, s.n));
            }
        }
    }
    for (spec, p, opts, n) in &specs {
        for _ in 0..200 {
            let mut instants = common::random_instants(&mut rng, spec, n - 1);
            while instants.len() < n - 1 {
                instants = common::random_instants(&mut rng, spec, n - 1);
            }
            let adm = check_admissibility(spec, p, &instants, opts).unwrap();
            assert!(
                !adm.pass,
                "{instants:?} passed with fewer than {n} instants"
            );
        }
    }
}

#[test]
fn escape_is_not_reported_above_the_floor_past_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seen = 0;
    while seen < 10 {
        let (spec, p) = common::solvable_game(&mut rng, 2);
        let opts = ScheduleOptions::new(&spec, &Tolerances::default());
        let full = schedule::pi_escape(&spec, &p, spec.tf, spec.t0, &opts).unwrap();
        let Some(te) = full.t_escape else { continue };
        if te - spec.t0 < 1e-3 {
            continue;
        }
        seen += 1;
        let above = schedule::pi_escape(&spec, &p, spec.tf, te + 1e-4, &opts).unwrap();
        assert!(!above.found, "escape at {te} reported with floor above it");
        let below = schedule::pi_escape(&spec, &p, spec.tf, te - 1e-4, &opts).unwrap();
        assert!((below.t_escape.unwrap() - te).abs() <= 1e-6);
    }
}

#[test]
fn flow_is_finite_just_below_any_terminal_time() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..40 {
        let (spec, p) = common::solvable_game(&mut rng, 2 + i % 2);
        let opts = ScheduleOptions::new(&spec, &Tolerances::default());
        let t1 = rng.random_range(spec.t0 + 1e-3..=spec.tf);
        let r = schedule::pi_escape(&spec, &p, t1, t1 - 1e-4, &opts).unwrap();
        assert!(!r.found, "escape within 1e-4 below {t1}");
    }
}

mod common;

use nash_seek::seeker::SeekerMode;
use nash_seek::sim::{run, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short(t_end: f64) -> SimConfig {
    SimConfig {
        t_end,
        log_every: 50,
        ..SimConfig::default()
    }
}

fn fuzz_bound(mode: SeekerMode, seed: u64, trials: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let n = rng.gen_range(2..=4);
        let orders: Vec<usize> = (0..n)
            .map(|_| {
                if mode == SeekerMode::FirstOrder {
                    1
                } else {
                    rng.gen_range(1..=3)
                }
            })
            .collect();
        let thetas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.49)).collect();
        let mut sc = common::random_scenario(&mut rng, n, &orders, &thetas, mode);
        for x in sc.x0.iter_mut() {
            *x *= rng.gen_range(1.0..20.0);
        }
        let (traj, s) = run(&sc, &short(8.0)).unwrap();
        assert!(!s.bound_violated, "trial {trial}: {s:?}");
        for (i, (u, b)) in s.max_abs_u.iter().zip(&s.certified_bounds).enumerate() {
            let b = b.expect("saturated mode certifies a bound");
            assert!(
                *u <= b * (1.0 + 1e-12),
                "trial {trial} player {i}: {u} > {b}"
            );
        }
        assert!(s.c_monotone, "trial {trial}");
        for w in traj.c_log.windows(2) {
            assert!(w[1].iter().zip(w[0].iter()).all(|(a, b)| a >= b));
        }
    }
}

#[test]
fn saturated_bound_holds_under_fuzz() {
    fuzz_bound(SeekerMode::SaturatedDirected, 11, 100);
}

#[test]
fn alternate_form_bound_holds_under_fuzz() {
    fuzz_bound(SeekerMode::AlternateForm, 12, 30);
}

#[test]
fn first_order_bound_holds_under_fuzz() {
    fuzz_bound(SeekerMode::FirstOrder, 13, 30);
}

#[test]
fn reruns_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sc = common::random_scenario(
        &mut rng,
        4,
        &[3, 2, 1, 3],
        &[0.3, 0.4, 0.2, 0.45],
        SeekerMode::SaturatedDirected,
    );
    let a = run(&sc, &short(20.0)).unwrap();
    let b = run(&sc, &short(20.0)).unwrap();
    assert_eq!(a, b);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.1.final_y), bits(&b.1.final_y));
}

#[test]
fn step_halving_on_smooth_dynamics() {
    // Without saturation the right-hand side is smooth.
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let sc = common::random_scenario(
        &mut rng,
        3,
        &[2, 2, 2],
        &[0.3, 0.3, 0.3],
        SeekerMode::Unsaturated,
    );
    let coarse = run(&sc, &short(2.0)).unwrap().1;
    let fine = run(
        &sc,
        &SimConfig {
            step_size: 5e-4,
            log_every: 100,
            ..short(2.0)
        },
    )
    .unwrap()
    .1;
    let diff = coarse
        .final_y
        .iter()
        .zip(&fine.final_y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-10, "{diff}");
}

#[test]
fn unsaturated_mode_has_no_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let sc = common::random_scenario(&mut rng, 2, &[2, 3], &[0.3, 0.3], SeekerMode::Unsaturated);
    let (_, s) = run(&sc, &short(1.0)).unwrap();
    assert!(s.certified_bounds.iter().all(Option::is_none));
    assert!(!s.bound_violated);
}

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nash_seek::dynamics::{CanonicalForm, PlayerSpec};
use nash_seek::game::QuadraticGame;
use nash_seek::graph::{random_strongly_connected, Digraph};
use nash_seek::seeker::SeekerMode;
use nash_seek::sim::Scenario;
use rand::Rng;

/// `R = M^T M / n + I/2 + (K - K^T)/2`, so the symmetric part has smallest
/// eigenvalue at least 1/2.
pub fn random_monotone_game<R: Rng>(n: usize, rng: &mut R) -> QuadraticGame<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let k = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let r =
        m.transpose() * &m / n as f64 + DMatrix::identity(n, n) * 0.5 + (&k - k.transpose()) * 0.5;
    let offset = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    QuadraticGame::new(r, offset).unwrap()
}

pub fn random_state<R: Rng>(order: usize, rng: &mut R, spread: f64) -> DVector<f64> {
    DVector::from_fn(order, |k, _| {
        if k == 0 {
            rng.gen_range(-spread..=spread)
        } else {
            rng.gen_range(-1.0..=1.0)
        }
    })
}

/// Random strongly connected scenario with `c0 = 1`.
pub fn random_scenario<R: Rng>(
    rng: &mut R,
    n: usize,
    orders: &[usize],
    thetas: &[f64],
    mode: SeekerMode,
) -> Scenario<f64, QuadraticGame<f64>> {
    let game = random_monotone_game(n, rng);
    let graph: Digraph<f64> = random_strongly_connected(n, 0.3, rng).unwrap();
    let players: Vec<_> = orders
        .iter()
        .zip(thetas)
        .map(|(&m, &theta)| {
            PlayerSpec::new(m, theta, 1.0, 1.0, CanonicalForm::Standard, false).unwrap()
        })
        .collect();
    let x0 = orders.iter().map(|&m| random_state(m, rng, 2.0)).collect();
    let z0 = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0));
    let nash = game.solve_nash_closed_form().unwrap();
    Scenario {
        game,
        graph,
        players,
        mode,
        x0,
        z0,
        c0: DMatrix::from_element(n, n, 1.0),
        nash: Some(nash),
        allow_disconnected: false,
    }
}

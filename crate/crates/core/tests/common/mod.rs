#![allow(dead_code)]

use lqpursuit::riccati::{solve_value_riccati, RiccatiSolution, StepControl};
use lqpursuit::{GameSpec, InputSignal};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

fn psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let l = uniform(rng, n, n, 1.0);
    let m = &l * l.transpose() * scale;
    (&m + m.transpose()) * 0.5
}

/// Random `n`-state game with a strong pursuer and an evader whose
/// strength makes escapes of the deviation flow common but not certain.
pub fn random_game(rng: &mut ChaCha8Rng, n: usize) -> GameSpec {
    let ne = rng.random_range(1..=n.min(2));
    let b = DMatrix::identity(n, n) + uniform(rng, n, n, 0.3);
    GameSpec {
        a: uniform(rng, n, n, 0.5),
        b,
        c: uniform(rng, n, ne, 1.0),
        q: psd(rng, n, 0.2),
        q_f: psd(rng, n, 1.0) + DMatrix::identity(n, n) * 0.1,
        r_p: DMatrix::identity(n, n) * rng.random_range(0.1..0.3),
        r_e: DMatrix::identity(ne, ne) * rng.random_range(0.3..1.5),
        t0: 0.0,
        tf: rng.random_range(1.0..3.0),
        x0: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
    }
}

/// A random game whose value flow is finite on the horizon, with its
/// solution.
pub fn solvable_game(rng: &mut ChaCha8Rng, n: usize) -> (GameSpec, RiccatiSolution) {
    loop {
        let spec = random_game(rng, n);
        if let Ok(p) = solve_value_riccati(&spec, &StepControl::for_spec(&spec)) {
            return (spec, p);
        }
    }
}

/// Piecewise-constant signal with up to `max_breaks` random breakpoints
/// inside `[lo, hi]`.
pub fn random_signal(
    rng: &mut ChaCha8Rng,
    dim: usize,
    lo: f64,
    hi: f64,
    max_breaks: usize,
    scale: f64,
) -> InputSignal {
    let k = rng.random_range(0..=max_breaks);
    let mut breaks: Vec<f64> = (0..k).map(|_| rng.random_range(lo..hi)).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let values = (0..=breaks.len())
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-scale..scale)))
        .collect();
    InputSignal::piecewise(breaks, values).expect("sorted breaks")
}

/// Sorted distinct instants strictly inside `(t0, tf)`.
pub fn random_instants(rng: &mut ChaCha8Rng, spec: &GameSpec, count: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..count)
        .map(|_| rng.random_range(spec.t0..spec.tf))
        .filter(|&t| t > spec.t0)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

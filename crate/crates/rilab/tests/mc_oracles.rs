//! Monte Carlo oracles for the potential solver, built from raw walk
//! simulation only (no equilibrium solve, no sampler machinery), so they
//! validate the linear-algebra route independently.
//!
//! Killing walks at a finite radius biases both oracles in a known,
//! certified direction: a walk that leaves the radius-R ball can still
//! come back and hit the target, with probability at most
//! `|K| g((R - r) e_1) / g(0)` from anywhere on the exit sphere. Each
//! assertion therefore checks the solver value against a bracket of the
//! estimate widened by that correction plus three standard errors.

use rayon::prelude::*;
use rilab::green::{GreenTable, DEFAULT_TOL};
use rilab::lattice::{linf_norm, FiniteSet, Point};
use rilab::potential::Equilibrium;
use rilab::rng::{stream, Stream};

use rand::Rng;

const KILL_RADIUS: i64 = 100;

fn step(rng: &mut Stream, pos: &mut [i64]) {
    let draw = rng.random_range(0..2 * pos.len() as u32);
    let axis = (draw / 2) as usize;
    if draw % 2 == 0 {
        pos[axis] += 1;
    } else {
        pos[axis] -= 1;
    }
}

/// True when a walk from `start` enters `target` (at any time >= 1) before
/// leaving the kill ball.
fn hits_before_escape(target: &FiniteSet, start: &Point, seed: u64, index: u64) -> bool {
    let mut rng = stream(seed, 7, index);
    let mut pos = start.clone();
    loop {
        step(&mut rng, &mut pos);
        if target.contains(&pos) {
            return true;
        }
        if linf_norm(&pos) >= KILL_RADIUS {
            return false;
        }
    }
}

/// Worst-case probability of hitting `target` (radius `r`) after leaving
/// the kill ball.
fn escape_correction(green: &mut GreenTable, target_len: usize, r: i64) -> f64 {
    let g0 = green.origin().unwrap();
    let far = green.value(&[KILL_RADIUS - r, 0, 0]).unwrap();
    target_len as f64 * far / g0
}

#[test]
fn capacity_matches_escape_frequency() {
    let mut green = GreenTable::new(3, DEFAULT_TOL).unwrap();
    let target = FiniteSet::cube(3, 1).unwrap();
    let solver_cap = Equilibrium::compute(&mut green, &target)
        .unwrap()
        .capacity();

    // Capacity is the total escape mass: sum over the set of the
    // probability of never coming back.
    let walks_per_site = 4000u64;
    let mut mc_cap = 0.0;
    let mut variance = 0.0;
    for (site_idx, start) in target.points().iter().enumerate() {
        let returns: u64 = (0..walks_per_site)
            .into_par_iter()
            .filter(|&w| hits_before_escape(&target, start, 500 + site_idx as u64, w))
            .count() as u64;
        let p_escape = 1.0 - returns as f64 / walks_per_site as f64;
        mc_cap += p_escape;
        variance += p_escape * (1.0 - p_escape) / walks_per_site as f64;
    }
    let sigma = variance.sqrt();
    // The estimate overshoots: walks that leave the kill ball are counted
    // as escaped even though a few would have returned.
    let correction = target.len() as f64 * escape_correction(&mut green, target.len(), 1);
    assert!(
        solver_cap <= mc_cap + 3.0 * sigma,
        "solver capacity {solver_cap} above the Monte Carlo ceiling {mc_cap} (sigma {sigma})"
    );
    assert!(
        solver_cap >= mc_cap - correction - 3.0 * sigma,
        "solver capacity {solver_cap} below the Monte Carlo floor: \
         estimate {mc_cap}, kill correction {correction}, sigma {sigma}"
    );
}

#[test]
fn hitting_probability_matches_walk_frequency() {
    let mut green = GreenTable::new(3, DEFAULT_TOL).unwrap();
    let target = FiniteSet::cube(3, 1).unwrap();
    let equilibrium = Equilibrium::compute(&mut green, &target).unwrap();

    for (case, start) in [vec![5i64, 0, 0], vec![3, 3, 2], vec![8, 1, 0]]
        .into_iter()
        .enumerate()
    {
        let solver_hit = equilibrium.hitting_probability(&mut green, &start).unwrap();
        let walks = 12_000u64;
        let hits: u64 = (0..walks)
            .into_par_iter()
            .filter(|&w| hits_before_escape(&target, &start, 900 + case as u64, w))
            .count() as u64;
        let p = hits as f64 / walks as f64;
        let sigma = (p * (1.0 - p) / walks as f64).sqrt();
        let correction = escape_correction(&mut green, target.len(), 1);
        // Killing can only lose hits, so the estimate is a lower bound up
        // to the certified correction.
        assert!(
            solver_hit >= p - 3.0 * sigma,
            "start {start:?}: solver {solver_hit} under the Monte Carlo floor {p} (sigma {sigma})"
        );
        assert!(
            solver_hit <= p + correction + 3.0 * sigma,
            "start {start:?}: solver {solver_hit} over ceiling {p} + {correction} (sigma {sigma})"
        );
    }
}

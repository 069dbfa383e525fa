//! Seeded synthetic families for estimator studies.

use std::f64::consts::PI;

use rand::Rng;

use crate::family::{random_of, ImportanceDistribution, MdpFamily};
use crate::{seed, Result};

/// A family with known scores and importance masses.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub family: MdpFamily,
    pub scores: Vec<f64>,
    pub dist: ImportanceDistribution,
}

/// `m` context vectors drawn uniformly from the unit cube in `dims`
/// dimensions, scores that vary smoothly with the context plus a small
/// per-point perturbation, and random importance masses.
pub fn smooth_instance(rng_seed: u64, m: usize, dims: usize) -> Result<SyntheticInstance> {
    let mut rng = seed::rng(seed::derive(rng_seed, "synthetic/taus"));
    let taus: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
        .collect();
    let names = (0..dims).map(|d| format!("x{d}")).collect();
    let family = MdpFamily::explicit("synthetic", names, taus)?;

    let mut rng = seed::rng(seed::derive(rng_seed, "synthetic/scores"));
    let freq: Vec<f64> = (0..dims).map(|_| rng.random_range(0.5..2.0)).collect();
    let phase: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let scores = family
        .members()
        .iter()
        .map(|p| {
            let wave: f64 = p
                .tau
                .iter()
                .zip(&freq)
                .zip(&phase)
                .map(|((x, f), ph)| (2.0 * PI * f * x + ph).sin())
                .sum();
            1.0 + 0.4 * wave / dims as f64 + 0.02 * rng.random_range(-1.0..1.0)
        })
        .collect();
    let dist = random_of(m, seed::derive(rng_seed, "synthetic/mass"));
    Ok(SyntheticInstance { family, scores, dist })
}

/// Independent uniform scores in `[0, 2)` on a one-dimensional family.
pub fn random_instance(rng_seed: u64, m: usize) -> Result<SyntheticInstance> {
    let mut rng = seed::rng(seed::derive(rng_seed, "synthetic/random"));
    let scores = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
    let family = MdpFamily::explicit("synthetic", vec!["x0".into()], (0..m).map(|i| vec![i as f64]).collect())?;
    let dist = random_of(m, seed::derive(rng_seed, "synthetic/mass"));
    Ok(SyntheticInstance { family, scores, dist })
}

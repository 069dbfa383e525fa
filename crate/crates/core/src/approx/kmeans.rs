//! Seeded k-means with k-means++ seeding and Lloyd iterations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iterations: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iterations: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// k-means++: first centre uniform, later ones drawn proportional to the
/// squared distance to the nearest chosen centre.
fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && u < acc {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| (0..n).rev().find(|&i| d2[i] > 0.0).expect("positive total"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen
}

pub fn kmeans(points: &[Vec<f64>], k: usize, config: &KMeansConfig, rng_seed: u64) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidPlan(format!("k = {k} outside [1, {n}]")));
    }
    let dim = points[0].len();
    let mut rng = seed::rng(rng_seed);
    let mut centroids: Vec<Vec<f64>> = plus_plus(points, k, &mut rng)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut reseeded = false;
        let mut taken: Vec<usize> = Vec::new();
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|i| !taken.contains(i))
                .map(|i| (i, squared_distance(&points[i], &centroids[assignments[i]])))
                .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = far {
                centroids[j] = points[i].clone();
                taken.push(i);
                reseeded = true;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignments && !reseeded {
            converged = true;
            break;
        }
        assignments = next;
    }

    Ok(KMeansResult {
        centroids,
        assignments,
        iterations,
        converged,
    })
}

/// Column-wise standardization to zero mean and unit population std.
/// Zero-variance columns are dropped; their indices are returned.
pub fn standardize(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = rows.len() as f64;
    let dim = rows.first().map_or(0, Vec::len);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut stats = Vec::new();
    for c in 0..dim {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            kept.push(c);
            stats.push((mean, var.sqrt()));
        } else {
            dropped.push(c);
        }
    }
    let out = rows
        .iter()
        .map(|r| kept.iter().zip(&stats).map(|(&c, (m, s))| (r[c] - m) / s).collect())
        .collect();
    (out, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i % 8) as f64, (i / 8) as f64 * 1.5]).collect()
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        for n in 1..=64 {
            let pts = grid(n);
            let r = kmeans(&pts, n, &KMeansConfig::default(), n as u64).unwrap();
            assert!(r.converged);
            let mut a = r.assignments.clone();
            a.sort_unstable();
            a.dedup();
            assert_eq!(a.len(), n);
            for (i, &j) in r.assignments.iter().enumerate() {
                assert_eq!(r.centroids[j], pts[i]);
            }
        }
    }

    #[test]
    fn two_blobs() {
        let pts = vec![vec![0.0], vec![0.1], vec![0.2], vec![10.0], vec![10.1]];
        let r = kmeans(&pts, 2, &KMeansConfig::default(), 3).unwrap();
        assert_eq!(r.assignments[0], r.assignments[2]);
        assert_eq!(r.assignments[3], r.assignments[4]);
        assert_ne!(r.assignments[0], r.assignments[3]);
    }

    #[test]
    fn deterministic() {
        let pts = grid(40);
        let a = kmeans(&pts, 7, &KMeansConfig::default(), 11).unwrap();
        let b = kmeans(&pts, 7, &KMeansConfig::default(), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn standardize_drops_constant_columns() {
        let (z, dropped) = standardize(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(dropped, vec![1]);
        assert_eq!(z, vec![vec![-1.0], vec![1.0]]);
    }

    #[test]
    fn ties_go_to_lower_cluster() {
        assert_eq!(nearest(&[0.0], &[vec![-1.0], vec![1.0]]), 0);
    }
}

//! Hand-built graphs with known spectra.

use rand::Rng;
use sue::graph::{AffinityGraph, SparseMatrix};

use super::rng;

pub fn cycle(n: usize) -> AffinityGraph {
    let rows = (0..n).map(|i| {
        let mut r = vec![((i + n - 1) % n, 1.0), ((i + 1) % n, 1.0)];
        r.sort_by_key(|p| p.0);
        r
    });
    AffinityGraph::from_weights(SparseMatrix::from_rows(n, rows.collect())).unwrap()
}

pub fn complete(n: usize) -> AffinityGraph {
    let rows = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| (j, 1.0)).collect()).collect();
    AffinityGraph::from_weights(SparseMatrix::from_rows(n, rows)).unwrap()
}


/// Uniform points in the unit square joined within `radius`, weighted
/// `exp(−d²/radius²)`. Panics if the draw is disconnected.
pub fn random_geometric(n: usize, radius: f64, seed: u64) -> AffinityGraph {
    let mut r = rng(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (r.gen(), r.gen())).collect();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let d2 = (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
                    (d2 <= radius * radius).then(|| (j, (-d2 / (radius * radius)).exp()))
                })
                .collect()
        })
        .collect();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &(j, _) in &rows[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    assert!(seen.iter().all(|&s| s), "random geometric graph is disconnected");
    AffinityGraph::from_weights(SparseMatrix::from_rows(n, rows)).unwrap()
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use super::ProfilingError;
use crate::seed;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            max_iter: 300,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    /// k × d, one centroid per row.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }
}

pub(crate) fn sq_dist_row(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|d| (x[(i, d)] - c[(j, d)]).powi(2)).sum()
}

fn assign(x: &DMatrix<f64>, c: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..x.nrows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for j in 0..c.nrows() {
                let d = sq_dist_row(x, i, c, j);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

/// Lloyd iterations from the given initial centroids. Clusters that empty
/// out are re-seeded with the point farthest from its centroid.
pub fn lloyd(x: &DMatrix<f64>, init: DMatrix<f64>, cfg: &LloydConfig) -> KMeansResult {
    let (n, d) = x.shape();
    let k = init.nrows();
    let mut centroids = init;
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (mut assignment, mut dist) = assign(x, &centroids);
        // Re-seed empty clusters before measuring.
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[assignment[i]] -= 1;
                counts[j] = 1;
                assignment[i] = j;
                dist[i] = 0.0;
                centroids.set_row(j, &x.row(i));
            }
        }
        trace.push(dist.iter().sum());
        iterations += 1;

        let mut next = DMatrix::zeros(k, d);
        for (i, &a) in assignment.iter().enumerate() {
            for c in 0..d {
                next[(a, c)] += x[(i, c)];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for c in 0..d {
                    next[(j, c)] /= counts[j] as f64;
                }
            } else {
                next.set_row(j, &centroids.row(j));
            }
        }
        let shift = (0..k)
            .map(|j| sq_dist_row(&next, j, &centroids, j).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < cfg.tol || iterations >= cfg.max_iter {
            break;
        }
    }
    let (assignment, dist) = assign(x, &centroids);
    let inertia: f64 = dist.iter().sum();
    trace.push(inertia);
    KMeansResult {
        assignment,
        centroids,
        inertia,
        inertia_trace: trace,
        iterations,
    }
}

/// k-means++ seeding.
pub fn kmeans_pp_init(x: &DMatrix<f64>, k: usize, rng: &mut seed::Rng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist_row(x, i, x, chosen[0])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist_row(x, i, x, next));
        }
    }
    let mut c = DMatrix::zeros(k, x.ncols());
    for (j, &i) in chosen.iter().enumerate() {
        c.set_row(j, &x.row(i));
    }
    c
}

/// k-means with k-means++ seeding, deterministic given `seed`.
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64, cfg: &LloydConfig) -> Result<KMeansResult, ProfilingError> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(ProfilingError::KTooLarge { k, n });
    }
    let mut rng = seed::rng(seed);
    let init = kmeans_pp_init(x, k, &mut rng);
    Ok(lloyd(x, init, cfg))
}

/// Mean of the selected rows.
pub(crate) fn mean_row(x: &DMatrix<f64>, rows: &[usize]) -> DVector<f64> {
    let mut m = DVector::zeros(x.ncols());
    for &i in rows {
        m += x.row(i).transpose();
    }
    m / rows.len().max(1) as f64
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use super::anderson::{anderson_darling_normal, MIN_POINTS};
use super::kmeans::{lloyd, mean_row, LloydConfig};
use super::ProfilingError;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmeansConfig {
    pub alpha: f64,
    /// Upper bound on k; `None` means N/2.
    pub k_max: Option<usize>,
    /// Recorded with the grouping. The split search itself has no random
    /// steps, so results depend on the data alone.
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GmeansConfig {
    fn default() -> Self {
        GmeansConfig {
            alpha: 0.0001,
            k_max: None,
            seed: 0,
            max_iter: 300,
            tol: 1e-8,
        }
    }
}

impl GmeansConfig {
    pub fn validate(&self) -> Result<(), ProfilingError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) || super::anderson::critical_value(self.alpha).is_none() {
            return Err(ProfilingError::InvalidAlpha(self.alpha));
        }
        if self.k_max == Some(0) {
            return Err(ProfilingError::KTooLarge { k: 0, n: 0 });
        }
        Ok(())
    }

    fn lloyd(&self) -> LloydConfig {
        LloydConfig {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmeansResult {
    pub assignment: Vec<usize>,
    pub centroids: DMatrix<f64>,
}

impl GmeansResult {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }
}

fn subset(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Try to split one cluster. Returns the two child centroids when the
/// projected data fail the normality test.
fn try_split(x: &DMatrix<f64>, cfg: &GmeansConfig) -> Result<Option<DMatrix<f64>>, ProfilingError> {
    let n = x.nrows();
    let all: Vec<usize> = (0..n).collect();
    let c = mean_row(x, &all);
    let mut cov = DMatrix::zeros(x.ncols(), x.ncols());
    for i in 0..n {
        let r = x.row(i).transpose() - &c;
        cov += &r * r.transpose();
    }
    cov /= (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let (top, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b });
    if lambda <= 0.0 {
        return Ok(None);
    }
    let m = eig.eigenvectors.column(top) * (2.0 * lambda / std::f64::consts::PI).sqrt();
    let mut init = DMatrix::zeros(2, x.ncols());
    init.set_row(0, &(&c + &m).transpose());
    init.set_row(1, &(&c - &m).transpose());
    let two = lloyd(x, init, &cfg.lloyd());
    let v = two.centroids.row(0) - two.centroids.row(1);
    let vv = v.norm_squared();
    if vv <= 0.0 {
        return Ok(None);
    }
    let proj: Vec<f64> = (0..n).map(|i| x.row(i).dot(&v) / vv).collect();
    let test = anderson_darling_normal(&proj, cfg.alpha)?;
    Ok(test.reject.then_some(two.centroids))
}

/// G-means: grow k from 1, splitting clusters whose projection onto the
/// 2-means axis is not Gaussian, then polish globally with Lloyd.
pub fn gmeans(x: &DMatrix<f64>, cfg: &GmeansConfig) -> Result<GmeansResult, ProfilingError> {
    cfg.validate()?;
    let n = x.nrows();
    if n < 2 {
        return Err(ProfilingError::TooFewPoints { n, min: 2 });
    }
    let k_max = cfg.k_max.unwrap_or(n / 2).clamp(1, n);
    let all: Vec<usize> = (0..n).collect();
    let mut centers = DMatrix::from_row_slice(1, x.ncols(), mean_row(x, &all).as_slice());
    loop {
        let fit = lloyd(x, centers.clone(), &cfg.lloyd());
        let k = fit.k();
        let mut next: Vec<Vec<f64>> = Vec::new();
        let mut split_any = false;
        for j in 0..k {
            let rows: Vec<usize> = (0..n).filter(|&i| fit.assignment[i] == j).collect();
            let remaining = k - j - 1;
            let own: Vec<f64> = fit.centroids.row(j).iter().copied().collect();
            if rows.len() < MIN_POINTS || next.len() + 2 + remaining > k_max {
                next.push(own);
                continue;
            }
            match try_split(&subset(x, &rows), cfg)? {
                Some(children) => {
                    split_any = true;
                    for r in 0..2 {
                        next.push(children.row(r).iter().copied().collect());
                    }
                }
                None => next.push(own),
            }
        }
        if !split_any {
            return Ok(compact(fit.assignment, &fit.centroids));
        }
        let d = x.ncols();
        centers = DMatrix::from_fn(next.len(), d, |i, j| next[i][j]);
    }
}

/// Drop empty clusters and relabel by first appearance in row order.
fn compact(assignment: Vec<usize>, centroids: &DMatrix<f64>) -> GmeansResult {
    let mut map = vec![usize::MAX; centroids.nrows()];
    let mut order = Vec::new();
    let assignment = assignment
        .into_iter()
        .map(|a| {
            if map[a] == usize::MAX {
                map[a] = order.len();
                order.push(a);
            }
            map[a]
        })
        .collect();
    let centroids = DMatrix::from_fn(order.len(), centroids.ncols(), |i, j| centroids[(order[i], j)]);
    GmeansResult { assignment, centroids }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiling::{adjusted_rand_index, same_partition};
    use crate::seed;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = seed::rng(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut x = DMatrix::zeros(centers.len() * per, 2);
        let mut truth = Vec::new();
        for (b, c) in centers.iter().enumerate() {
            for p in 0..per {
                x[(b * per + p, 0)] = c[0] + normal.sample(&mut rng);
                x[(b * per + p, 1)] = c[1] + normal.sample(&mut rng);
                truth.push(b);
            }
        }
        (x, truth)
    }

    #[test]
    fn single_blob_stays_whole() {
        let mut ones = 0;
        for s in 0..20 {
            let (x, _) = blobs(&[[0.0, 0.0]], 300, 500 + s);
            if gmeans(&x, &GmeansConfig::default()).unwrap().k() == 1 {
                ones += 1;
            }
        }
        assert!(ones >= 18, "k=1 in {ones}/20");
    }

    #[test]
    fn three_blobs_found() {
        for s in 0..10 {
            let (x, truth) = blobs(&[[0.0, 0.0], [12.0, 0.0], [0.0, 12.0]], 60, 900 + s);
            let g = gmeans(&x, &GmeansConfig::default()).unwrap();
            assert_eq!(g.k(), 3, "seed {s}");
            assert_eq!(adjusted_rand_index(&g.assignment, &truth), 1.0);
        }
    }

    #[test]
    fn cap_of_one() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 5.0, 5.0]);
        let cfg = GmeansConfig {
            k_max: Some(1),
            ..Default::default()
        };
        assert_eq!(gmeans(&x, &cfg).unwrap().k(), 1);
        // Default cap N/2 = 1 as well.
        assert_eq!(gmeans(&x, &GmeansConfig::default()).unwrap().k(), 1);
    }

    #[test]
    fn cap_respected() {
        let (x, _) = blobs(&[[0.0, 0.0], [12.0, 0.0], [0.0, 12.0], [12.0, 12.0]], 30, 3);
        let cfg = GmeansConfig {
            k_max: Some(2),
            ..Default::default()
        };
        let g = gmeans(&x, &cfg).unwrap();
        assert!(g.k() <= 2);
    }

    #[test]
    fn labels_dense_by_first_appearance() {
        let (x, _) = blobs(&[[0.0, 0.0], [12.0, 0.0], [0.0, 12.0]], 20, 11);
        let g = gmeans(&x, &GmeansConfig::default()).unwrap();
        let mut seen = 0;
        for &a in &g.assignment {
            assert!(a <= seen);
            if a == seen {
                seen += 1;
            }
        }
        assert_eq!(seen, g.k());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn row_permutation_preserves_partition(seed in 0u64..1000, spread in 4.0f64..15.0) {
            let (x, _) = blobs(&[[0.0, 0.0], [spread, 0.0], [0.0, spread]], 15, seed);
            let n = x.nrows();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut seed::rng(seed ^ 0xabc));
            let xp = DMatrix::from_fn(n, 2, |i, j| x[(perm[i], j)]);
            let a = gmeans(&x, &GmeansConfig::default()).unwrap();
            let b = gmeans(&xp, &GmeansConfig::default()).unwrap();
            let b_back: Vec<usize> = {
                let mut v = vec![0; n];
                for (i, &p) in perm.iter().enumerate() {
                    v[p] = b.assignment[i];
                }
                v
            };
            prop_assert!(same_partition(&a.assignment, &b_back));
        }

        #[test]
        fn never_empty_and_capped(seed in 0u64..1000, n in 2usize..60, cap in 1usize..8) {
            let mut rng = seed::rng(seed);
            let normal = Normal::new(0.0, 3.0).unwrap();
            let x = DMatrix::from_fn(n, 3, |_, _| normal.sample(&mut rng));
            let cfg = GmeansConfig { k_max: Some(cap), ..Default::default() };
            let g = gmeans(&x, &cfg).unwrap();
            prop_assert!(g.k() >= 1 && g.k() <= cap);
            let mut sizes = vec![0; g.k()];
            for &a in &g.assignment { sizes[a] += 1; }
            prop_assert!(sizes.iter().all(|&s| s > 0));
            prop_assert_eq!(gmeans(&x, &cfg).unwrap(), g);
        }
    }
}

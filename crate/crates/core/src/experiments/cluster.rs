use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, AUX_STREAM};

const DEGREE_FLOOR: f64 = 1e-12;
const RESTARTS: usize = 10;
const MAX_LLOYD: usize = 300;
const KMEANS_SEED: u64 = 0x5eed;

/// Rows of the `k` eigenvectors of the normalized Laplacian with smallest
/// eigenvalues, each row scaled to unit length.
///
/// The adjacency is `W = (P + Pᵀ)/2` with `P[i, j] = Σ_k max(A[i, kM + j], 0)`
/// and a zero diagonal.
pub fn spectral_embedding(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    if m == 0 || !a.ncols().is_multiple_of(m) {
        return Err(Error::Dimension(format!("influence matrix {}x{} is not M x MK", m, a.ncols())));
    }
    if k < 2 || k > m {
        return Err(Error::Parameter(format!("cluster count must lie in [2, M = {m}], got {k}")));
    }
    let blocks = a.ncols() / m;
    let mut p = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                p[(i, j)] = (0..blocks).map(|b| a[(i, b * m + j)].max(0.0)).sum();
            }
        }
    }
    let w = (&p + p.transpose()) * 0.5;
    let inv_sqrt: Vec<f64> = w.row_iter().map(|r| 1.0 / r.sum().max(DEGREE_FLOOR).sqrt()).collect();
    let lap = DMatrix::from_fn(m, m, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
    });
    let eig = lap.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]).then(x.cmp(&y)));
    let mut emb = DMatrix::from_fn(m, k, |i, c| eig.eigenvectors[(i, order[c])]);
    for mut row in emb.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    Ok(emb)
}

fn dist2(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (points.row(i) - centers.row(c)).norm_squared()
}

/// Lloyd's algorithm with k-means++ seeding and `restarts` seeded restarts;
/// the restart with the lowest inertia wins (earliest on ties). Each point
/// is assigned to the nearest centroid, the lowest index on ties.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k = {k} must lie in [1, {n}]")));
    }
    let mut rng = stream(seed, AUX_STREAM);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        // k-means++ seeding.
        let mut centers = DMatrix::zeros(k, points.ncols());
        let first = rng.random_range(0..n);
        centers.row_mut(0).copy_from(&points.row(first));
        let mut d: Vec<f64> = (0..n).map(|i| dist2(points, i, &centers, 0)).collect();
        for c in 1..k {
            let total: f64 = d.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &di) in d.iter().enumerate() {
                    if target < di {
                        chosen = i;
                        break;
                    }
                    target -= di;
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            centers.row_mut(c).copy_from(&points.row(pick));
            for (i, di) in d.iter_mut().enumerate() {
                *di = di.min(dist2(points, i, &centers, c));
            }
        }
        let mut labels = vec![usize::MAX; n];
        for _ in 0..MAX_LLOYD {
            let mut changed = false;
            for (i, label) in labels.iter_mut().enumerate() {
                let mut best_c = 0;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let dc = dist2(points, i, &centers, c);
                    if dc < best_d {
                        best_d = dc;
                        best_c = c;
                    }
                }
                if *label != best_c {
                    *label = best_c;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            for c in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                let mut mean = points.row(members[0]).clone_owned() * 0.0;
                for &i in &members {
                    mean += points.row(i);
                }
                centers.row_mut(c).copy_from(&(mean / members.len() as f64));
            }
        }
        let inertia: f64 = (0..n).map(|i| dist2(points, i, &centers, labels[i])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    Ok(canonical_labels(&best.expect("at least one restart").1))
}

/// Renames labels in order of first appearance.
fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Spectral clustering of the network encoded by the positive entries of `A`.
pub fn spectral_cluster(a: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    let emb = spectral_embedding(a, k)?;
    kmeans(&emb, k, RESTARTS, KMEANS_SEED)
}

//! Euclidean projection onto the feasible set 𝒜.
//!
//! A row is feasible when its positive part has ℓ₁ norm at most `a_max` and
//! its negative part at most `a_min`. The two constraints involve disjoint
//! coordinates once signs are fixed, and projection never flips a sign, so
//! each part is projected onto its own ℓ₁ ball.

use nalgebra::DMatrix;

/// Projection of a nonnegative vector onto `{x ≥ 0 : Σx ≤ radius}`.
pub fn project_nonneg_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - radius) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

pub fn project_feasible(a: &DMatrix<f64>, a_max: f64, a_min: f64) -> DMatrix<f64> {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        let row: Vec<f64> = a.row(i).iter().copied().collect();
        let pos: Vec<f64> = row.iter().map(|v| v.max(0.0)).collect();
        let neg: Vec<f64> = row.iter().map(|v| (-v).max(0.0)).collect();
        let pos = project_nonneg_l1_ball(&pos, a_max.max(0.0));
        let neg = project_nonneg_l1_ball(&neg, a_min.max(0.0));
        for j in 0..a.ncols() {
            out[(i, j)] = pos[j] - neg[j];
        }
    }
    out
}

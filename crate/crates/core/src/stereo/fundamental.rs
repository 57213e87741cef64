use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::PointMatch;
use crate::{Error, Result};

/// Scales `f` to unit Frobenius norm with its largest-magnitude entry positive.
pub fn canonicalize_fundamental(f: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = f.norm();
    if norm == 0.0 {
        return *f;
    }
    let mut g = f / norm;
    let largest = g.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if largest < 0.0 {
        g = -g;
    }
    g
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizing_transform(points: impl Iterator<Item = (f64, f64)> + Clone) -> Result<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points.map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    if !(mean_dist > 1e-12) {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn collinear(points: impl Iterator<Item = (f64, f64)> + Clone) -> bool {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (cx, cy) = (sx / n, sy / n);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        a += (x - cx) * (x - cx);
        b += (x - cx) * (y - cy);
        c += (y - cy) * (y - cy);
    }
    let tr = a + c;
    let smallest = 0.5 * (tr - ((a - c).powi(2) + 4.0 * b * b).sqrt());
    smallest <= 1e-12 * tr.max(1e-300)
}

/// Normalized eight-point estimate of `F` with `p_leftᵀ F p_right = 0`.
pub fn estimate_fundamental(matches: &[PointMatch]) -> Result<Matrix3<f64>> {
    if matches.len() < 8 {
        return Err(Error::InsufficientData(format!("fundamental matrix needs 8 matches, got {}", matches.len())));
    }
    let left = matches.iter().map(|m| m.0);
    let right = matches.iter().map(|m| m.1);
    if collinear(left.clone()) || collinear(right.clone()) {
        return Err(Error::Degenerate("matched points are collinear".into()));
    }
    let tl = normalizing_transform(left)?;
    let tr = normalizing_transform(right)?;

    let rows = matches.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, &((x, y), (xr, yr))) in matches.iter().enumerate() {
        let p = tl * Vector3::new(x, y, 1.0);
        let q = tr * Vector3::new(xr, yr, 1.0);
        for r in 0..3 {
            for c in 0..3 {
                a[(i, 3 * r + c)] = p[r] * q[c];
            }
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD of the design matrix failed".into()))?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    if svd.singular_values[order[7]] <= 1e-10 * largest {
        return Err(Error::Degenerate("design matrix has rank below 8".into()));
    }
    let null = v_t.row(order[8]);
    let f_hat = Matrix3::from_fn(|r, c| null[3 * r + c]);

    let mut fs = f_hat.svd(true, true);
    let (imin, _) = fs.singular_values.argmin();
    fs.singular_values[imin] = 0.0;
    let f_hat = fs.recompose().map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(canonicalize_fundamental(&(tl.transpose() * f_hat * tr)))
}

/// First-order geometric distance of a match to the epipolar constraint, pixels.
pub fn sampson_distance(f: &Matrix3<f64>, m: &PointMatch) -> f64 {
    let p = Vector3::new(m.0 .0, m.0 .1, 1.0);
    let q = Vector3::new(m.1 .0, m.1 .1, 1.0);
    let fq = f * q;
    let ftp = f.transpose() * p;
    let e = p.dot(&fq);
    let denom = fq[0] * fq[0] + fq[1] * fq[1] + ftp[0] * ftp[0] + ftp[1] * ftp[1];
    if denom <= 0.0 {
        return if e == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (e * e / denom).sqrt()
}

fn inliers_of(f: &Matrix3<f64>, matches: &[PointMatch], tol: f64) -> Vec<usize> {
    (0..matches.len()).filter(|&i| sampson_distance(f, &matches[i]) <= tol).collect()
}

/// RANSAC over random 8-point samples. Returns the refit `F` and the indices
/// of the matches within `tol` of it.
pub fn estimate_fundamental_ransac(matches: &[PointMatch], iters: usize, tol: f64, seed: u64) -> Result<(Matrix3<f64>, Vec<usize>)> {
    if matches.len() < 8 {
        return Err(Error::InsufficientData(format!("fundamental matrix needs 8 matches, got {}", matches.len())));
    }
    if iters == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("RANSAC needs iters >= 1 and tol > 0 (got {iters}, {tol})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<usize>> = (0..iters).map(|_| sample(&mut rng, matches.len(), 8).into_vec()).collect();
    let scored: Vec<Option<(usize, Matrix3<f64>)>> = samples
        .par_iter()
        .map(|idx| {
            let subset: Vec<PointMatch> = idx.iter().map(|&i| matches[i]).collect();
            let f = estimate_fundamental(&subset).ok()?;
            Some((inliers_of(&f, matches, tol).len(), f))
        })
        .collect();
    let mut best: Option<(usize, Matrix3<f64>)> = None;
    for (count, f) in scored.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| count > b.0) {
            best = Some((count, f));
        }
    }
    let (count, f_sample) = best.ok_or_else(|| Error::Degenerate("every RANSAC sample was degenerate".into()))?;
    if count < 8 {
        return Err(Error::Degenerate(format!("best RANSAC model has only {count} inliers")));
    }
    let support: Vec<PointMatch> = inliers_of(&f_sample, matches, tol).into_iter().map(|i| matches[i]).collect();
    let f = match estimate_fundamental(&support) {
        Ok(refit) if inliers_of(&refit, matches, tol).len() >= 8 => refit,
        _ => f_sample,
    };
    let inliers = inliers_of(&f, matches, tol);
    Ok((f, inliers))
}

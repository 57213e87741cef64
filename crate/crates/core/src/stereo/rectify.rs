use nalgebra::{Matrix3, Vector3};

use super::PointMatch;
use crate::{Error, Result};

/// Applies `h` to `(x, y)` and dehomogenizes. `None` when the point maps
/// (nearly) to infinity.
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> Option<(f64, f64)> {
    let p = h * Vector3::new(x, y, 1.0);
    if p[2].abs() < 1e-9 {
        return None;
    }
    Some((p[0] / p[2], p[1] / p[2]))
}

fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let (imin, _) = svd.singular_values.argmin();
    v_t.row(imin).transpose()
}

fn check_epipole(e: &Vector3<f64>, width: usize, height: usize) -> Result<()> {
    if e[2].abs() <= 1e-12 * e.norm() {
        return Ok(());
    }
    let (x, y) = (e[0] / e[2], e[1] / e[2]);
    if x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64 {
        return Err(Error::EpipoleInsideImage { x, y });
    }
    Ok(())
}

/// Homography sending the epipole `e` to the point at infinity on the x-axis:
/// centre the image, rotate the epipole onto the x-axis, then apply the
/// perspective map that moves it to infinity.
pub fn epipole_to_infinity(e: &Vector3<f64>, width: usize, height: usize) -> Matrix3<f64> {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let t = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
    let mut et = t * e;
    // keep the rotation small: a negative x component would turn the image upside down
    if et[0] < 0.0 {
        et = -et;
    }
    let r = et[0].hypot(et[1]);
    let (c, s) = if r > 0.0 { (et[0] / r, et[1] / r) } else { (1.0, 0.0) };
    let rot = Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0);
    let g = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -et[2] / r, 0.0, 1.0);
    g * rot * t
}

/// Rectifying pair `(H_l, H_r)` for `p_leftᵀ F p_right = 0`. `H_r` sends the
/// right epipole to infinity; `H_l` is the compatible left transform whose
/// free affine part minimizes the summed squared x-disparity over `inliers`.
pub fn rectify_homographies(f: &Matrix3<f64>, image_size: (usize, usize), inliers: &[PointMatch]) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    if inliers.len() < 8 {
        return Err(Error::InsufficientData(format!("rectification needs 8 inliers, got {}", inliers.len())));
    }
    let (width, height) = image_size;
    let e_right = null_vector(f).normalize();
    let e_left = null_vector(&f.transpose()).normalize();
    check_epipole(&e_right, width, height)?;
    check_epipole(&e_left, width, height)?;

    let h_r = epipole_to_infinity(&e_right, width, height);
    let mut m = e_right.cross_matrix() * f.transpose() + e_right * e_right.transpose();
    if m.determinant().abs() < 1e-10 {
        m = e_right.cross_matrix() * f.transpose() + e_right * Vector3::new(1.0, 1.0, 1.0).transpose();
    }
    let h0 = h_r * m;

    // least squares for x_r ≈ a·x + b·y + c over the pre-rectified inliers
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for &((xl, yl), (xr, yr)) in inliers {
        let (Some(pl), Some(pr)) = (apply_homography(&h0, xl, yl), apply_homography(&h_r, xr, yr)) else {
            continue;
        };
        let row = Vector3::new(pl.0, pl.1, 1.0);
        ata += row * row.transpose();
        atb += row * pr.0;
    }
    let abc = ata
        .try_inverse()
        .map(|inv| inv * atb)
        .ok_or_else(|| Error::Degenerate("inliers do not constrain the left rectifying transform".into()))?;
    let h_a = Matrix3::new(abc[0], abc[1], abc[2], 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    let h_l = h_a * h0;
    for h in [&h_l, &h_r] {
        if !(h.determinant().abs() > 1e-12) || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("rectifying homography is singular".into()));
        }
    }
    Ok((h_l, h_r))
}

use crate::media::Frame;
use crate::plane::{gradients, pyramid, Plane};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracked,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackResult {
    pub x: f64,
    pub y: f64,
    pub status: TrackStatus,
}

impl TrackResult {
    pub fn is_tracked(&self) -> bool {
        self.status == TrackStatus::Tracked
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    pub levels: usize,
    /// Odd side length of the integration window.
    pub window: usize,
    pub max_iterations: usize,
    /// Per-level convergence threshold on the update, pixels.
    pub epsilon: f64,
    /// Minimum eigenvalue of the gradient matrix, as a multiple of `window²`.
    pub min_eigen_factor: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self { levels: super::DEFAULT_PYRAMID_LEVELS, window: super::DEFAULT_WINDOW, max_iterations: 20, epsilon: 0.01, min_eigen_factor: 1e-4 }
    }
}

struct Level {
    prev: Plane,
    next: Plane,
    gx: Plane,
    gy: Plane,
}

fn window_inside(x: f64, y: f64, half: f64, width: usize, height: usize) -> bool {
    x - half >= 0.0 && y - half >= 0.0 && x + half <= (width - 1) as f64 && y + half <= (height - 1) as f64
}

/// Tracks `points` from `prev` to `next` with pyramidal Lucas-Kanade.
pub fn lk_track(prev: &Frame, next: &Frame, points: &[(f64, f64)], levels: usize, window: usize) -> Result<Vec<TrackResult>> {
    lk_track_with(prev, next, points, &LkParams { levels, window, ..LkParams::default() })
}

pub fn lk_track_with(prev: &Frame, next: &Frame, points: &[(f64, f64)], params: &LkParams) -> Result<Vec<TrackResult>> {
    if prev.dims() != next.dims() {
        return Err(Error::DimensionMismatch(format!("prev {:?} vs next {:?}", prev.dims(), next.dims())));
    }
    if params.levels < 1 {
        return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
    }
    if params.window < 5 || params.window % 2 == 0 {
        return Err(Error::InvalidArgument(format!("window {} must be odd and >= 5", params.window)));
    }
    let p0 = Plane::from_gray(prev)?;
    let p1 = Plane::from_gray(next)?;
    let prev_pyr = pyramid(&p0, params.levels, params.window / 2 + 1);
    let next_pyr = pyramid(&p1, prev_pyr.len(), 1);
    let levels: Vec<Level> = prev_pyr
        .into_iter()
        .zip(next_pyr)
        .map(|(prev, next)| {
            let (gx, gy) = gradients(&prev);
            Level { prev, next, gx, gy }
        })
        .collect();
    Ok(points.iter().map(|&(x, y)| track_point(&levels, x, y, params)).collect())
}

fn track_point(levels: &[Level], x: f64, y: f64, params: &LkParams) -> TrackResult {
    let half = (params.window / 2) as i32;
    let (w, h) = (levels[0].prev.width, levels[0].prev.height);
    let lost = TrackResult { x, y, status: TrackStatus::Lost };
    if !window_inside(x, y, half as f64, w, h) {
        return lost;
    }
    let min_eig = params.min_eigen_factor * (params.window * params.window) as f64;
    let n = params.window * params.window;
    let mut guess = (0.0f64, 0.0f64);
    let mut ix = Vec::with_capacity(n);
    let mut iy = Vec::with_capacity(n);
    let mut iv = Vec::with_capacity(n);

    for (li, level) in levels.iter().enumerate().rev() {
        let scale = (1u32 << li) as f64;
        let (px, py) = (x / scale, y / scale);
        ix.clear();
        iy.clear();
        iv.clear();
        let (mut gxx, mut gxy, mut gyy) = (0.0f64, 0.0f64, 0.0f64);
        for dy in -half..=half {
            for dx in -half..=half {
                let sx = (px + dx as f64) as f32;
                let sy = (py + dy as f64) as f32;
                let a = level.gx.sample(sx, sy) as f64;
                let b = level.gy.sample(sx, sy) as f64;
                gxx += a * a;
                gxy += a * b;
                gyy += b * b;
                ix.push(a);
                iy.push(b);
                iv.push(level.prev.sample(sx, sy) as f64);
            }
        }
        let tr = gxx + gyy;
        let det = gxx * gyy - gxy * gxy;
        let smallest = 0.5 * (tr - ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt());
        if smallest < min_eig || det <= f64::EPSILON {
            if li == 0 {
                return lost;
            }
            guess = (2.0 * guess.0, 2.0 * guess.1);
            continue;
        }

        let mut flow = (0.0f64, 0.0f64);
        for _ in 0..params.max_iterations {
            let (mut bx, mut by) = (0.0f64, 0.0f64);
            let mut k = 0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let sx = (px + dx as f64 + guess.0 + flow.0) as f32;
                    let sy = (py + dy as f64 + guess.1 + flow.1) as f32;
                    let diff = iv[k] - level.next.sample(sx, sy) as f64;
                    bx += diff * ix[k];
                    by += diff * iy[k];
                    k += 1;
                }
            }
            let ex = (gyy * bx - gxy * by) / det;
            let ey = (gxx * by - gxy * bx) / det;
            flow.0 += ex;
            flow.1 += ey;
            if (ex * ex + ey * ey).sqrt() < params.epsilon {
                break;
            }
        }
        guess = if li > 0 {
            (2.0 * (guess.0 + flow.0), 2.0 * (guess.1 + flow.1))
        } else {
            (guess.0 + flow.0, guess.1 + flow.1)
        };
    }

    let (nx, ny) = (x + guess.0, y + guess.1);
    if !(nx.is_finite() && ny.is_finite()) || nx < 0.0 || ny < 0.0 || nx > (w - 1) as f64 || ny > (h - 1) as f64 {
        return TrackResult { x: nx, y: ny, status: TrackStatus::Lost };
    }
    TrackResult { x: nx, y: ny, status: TrackStatus::Tracked }
}

//! Trajectory overlays on video frames.

use crate::media::{Clip, Frame};
use crate::roi::Roi;
use crate::tracking::Trajectory;
use crate::{Error, Result};

pub const ROI_COLOR: [u8; 3] = [0, 255, 0];

/// Integer line rasterization from `(x0, y0)` to `(x1, y1)`, both ends included.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Colour of trajectory `index`, never dark.
pub fn track_color(index: usize) -> [u8; 3] {
    let mut z = (index as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    [(z & 0xff) as u8 | 0x40, ((z >> 8) & 0xff) as u8 | 0x40, ((z >> 16) & 0xff) as u8 | 0x40]
}

/// Segments of a trajectory as `(frame, start, end)`: segment `i` joins
/// points `i` and `i+1` and is drawn on the frame of point `i+1`.
pub fn segments(traj: &Trajectory) -> Vec<(usize, (i64, i64), (i64, i64))> {
    let px = |p: &[f64]| (p[0].round() as i64, p[1].round() as i64);
    traj.points.windows(2).enumerate().map(|(i, w)| (traj.start_frame + i + 1, px(&w[0]), px(&w[1]))).collect()
}

fn to_rgb(frame: &Frame) -> Frame {
    if frame.channels == 3 {
        return frame.clone();
    }
    let data = frame.data.iter().flat_map(|&v| [v, v, v]).collect();
    Frame { width: frame.width, height: frame.height, channels: 3, data }
}

fn put(frame: &mut Frame, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < frame.width && (y as usize) < frame.height {
        let i = 3 * (y as usize * frame.width + x as usize);
        frame.data[i..i + 3].copy_from_slice(&color);
    }
}

fn draw_rect(frame: &mut Frame, r: &Roi) {
    let (x0, y0) = (r.x as i64, r.y as i64);
    let (x1, y1) = (x0 + r.w as i64 - 1, y0 + r.h as i64 - 1);
    for (a, b) in [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))] {
        for (x, y) in bresenham(a.0, a.1, b.0, b.1) {
            put(frame, x, y, ROI_COLOR);
        }
    }
}

/// RGB copies of the clip's frames with region boxes and trajectory
/// segments drawn over them; every other pixel keeps its source value.
pub fn plot_overlay(clip: &Clip, trajectories: &[Trajectory], rois: Option<&[Vec<Roi>]>) -> Result<Vec<Frame>> {
    if let Some(t) = trajectories.iter().find(|t| t.end_frame() >= clip.len()) {
        return Err(Error::InvalidArgument(format!("trajectory ends on frame {} but clip {} has {} frames", t.end_frame(), clip.clip_id, clip.len())));
    }
    if let Some(r) = rois {
        if r.len() != clip.len() {
            return Err(Error::DimensionMismatch(format!("{} region lists for {} frames", r.len(), clip.len())));
        }
    }
    let mut out: Vec<Frame> = clip.frames.iter().map(to_rgb).collect();
    if let Some(rois) = rois {
        for (frame, boxes) in out.iter_mut().zip(rois) {
            boxes.iter().for_each(|r| draw_rect(frame, r));
        }
    }
    for (i, traj) in trajectories.iter().enumerate() {
        let color = track_color(i);
        for (t, a, b) in segments(traj) {
            for (x, y) in bresenham(a.0, a.1, b.0, b.1) {
                put(&mut out[t], x, y, color);
            }
        }
    }
    Ok(out)
}

//! FAST-9 corners, 128-d gradient-orientation patch descriptors and reciprocal
//! nearest-neighbour matching with a distance-ratio test.

use crate::media::Frame;
use crate::{Error, Result};

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
pub const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

pub const DEFAULT_FAST_THRESHOLD: u8 = 20;
pub const DEFAULT_ARC: usize = 9;
pub const DEFAULT_PATCH: usize = 16;
pub const DEFAULT_MATCH_RATIO: f64 = 0.8;
pub const DESCRIPTOR_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

/// Longest run of `true` on the circular sequence.
fn longest_circular_run(flags: &[bool; 16]) -> usize {
    if flags.iter().all(|&f| f) {
        return 16;
    }
    let mut best = 0;
    let mut run = 0;
    for i in 0..32 {
        if flags[i % 16] {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best.min(16)
}

/// Segment-test score of a pixel, or `None` if it is not a corner.
fn segment_test(frame: &Frame, x: usize, y: usize, threshold: i32, arc: usize) -> Option<f64> {
    let c = frame.pixel(x, y) as i32;
    let mut brighter = [false; 16];
    let mut darker = [false; 16];
    let (mut bright_sum, mut dark_sum) = (0i32, 0i32);
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let p = frame.pixel((x as isize + dx) as usize, (y as isize + dy) as usize) as i32;
        if p > c + threshold {
            brighter[k] = true;
            bright_sum += p - c - threshold;
        } else if p < c - threshold {
            darker[k] = true;
            dark_sum += c - p - threshold;
        }
    }
    let bright = longest_circular_run(&brighter) >= arc;
    let dark = longest_circular_run(&darker) >= arc;
    match (bright, dark) {
        (false, false) => None,
        (true, false) => Some(bright_sum as f64),
        (false, true) => Some(dark_sum as f64),
        (true, true) => Some(bright_sum.max(dark_sum) as f64),
    }
}

/// FAST segment-test corners with 3×3 non-maximum suppression on score.
///
/// Ties between neighbouring corners keep the one first in raster order.
/// Results are in raster order.
pub fn detect_fast(gray: &Frame, threshold: u8, arc: usize) -> Result<Vec<Corner>> {
    if gray.channels != 1 {
        return Err(Error::InvalidArgument("FAST needs a grayscale frame".into()));
    }
    if gray.width < 7 || gray.height < 7 {
        return Err(Error::FrameTooSmall { width: gray.width, height: gray.height, min: 7 });
    }
    if threshold == 0 || arc == 0 || arc > 16 {
        return Err(Error::InvalidArgument(format!("threshold must be > 0 and arc in 1..=16 (got {threshold}, {arc})")));
    }
    let (w, h) = (gray.width, gray.height);
    let mut scores = vec![0.0f64; w * h];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            if let Some(s) = segment_test(gray, x, y, threshold as i32, arc) {
                // a zero-exceedance corner still counts; keep it distinguishable from "none"
                scores[y * w + x] = s + 1e-9;
            }
        }
    }
    let mut out = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let s = scores[y * w + x];
            if s == 0.0 {
                continue;
            }
            let mut keep = true;
            'nb: for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if (nx, ny) == (x, y) {
                        continue;
                    }
                    let t = scores[ny * w + nx];
                    let earlier = (ny, nx) < (y, x);
                    if t > s || (t == s && earlier) {
                        keep = false;
                        break 'nb;
                    }
                }
            }
            if keep {
                out.push(Corner { x, y, score: s - 1e-9 });
            }
        }
    }
    Ok(out)
}

/// Non-negative 128-d descriptor; unit L2 norm unless the patch has no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDescriptor {
    pub values: Vec<f64>,
}

impl PatchDescriptor {
    pub fn distance(&self, other: &PatchDescriptor) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// True if a `patch`-sized window around `(x, y)` plus a one-pixel gradient
/// margin lies inside a `width`×`height` frame.
pub fn patch_fits(width: usize, height: usize, x: f64, y: f64, patch: usize) -> bool {
    let (cx, cy) = (x.round(), y.round());
    let half = (patch / 2) as f64;
    cx - half - 1.0 >= 0.0
        && cy - half - 1.0 >= 0.0
        && cx - half + patch as f64 <= width as f64 - 1.0
        && cy - half + patch as f64 <= height as f64 - 1.0
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Gradient-orientation histogram descriptor of the `patch`×`patch` window
/// centred on `(x, y)` (rounded to the pixel grid). The window is split into
/// 4×4 cells with 8 orientation bins each.
pub fn describe_patch(gray: &Frame, x: f64, y: f64, patch: usize) -> Result<PatchDescriptor> {
    if gray.channels != 1 {
        return Err(Error::InvalidArgument("descriptor needs a grayscale frame".into()));
    }
    if patch < 4 || patch % 4 != 0 {
        return Err(Error::InvalidArgument(format!("patch size {patch} must be a positive multiple of 4")));
    }
    if !patch_fits(gray.width, gray.height, x, y, patch) {
        return Err(Error::WindowOutsideFrame { x, y });
    }
    let x0 = x.round() as isize - (patch / 2) as isize;
    let y0 = y.round() as isize - (patch / 2) as isize;
    let cell = patch / 4;
    let px = |xx: isize, yy: isize| gray.pixel(xx as usize, yy as usize) as f64;
    let mut values = vec![0.0; DESCRIPTOR_LEN];
    for dy in 0..patch as isize {
        for dx in 0..patch as isize {
            let (xx, yy) = (x0 + dx, y0 + dy);
            let gx = 0.5 * (px(xx + 1, yy) - px(xx - 1, yy));
            let gy = 0.5 * (px(xx, yy + 1) - px(xx, yy - 1));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(2.0 * std::f64::consts::PI);
            let bin = ((angle / (2.0 * std::f64::consts::PI) * 8.0) as usize).min(7);
            let c = (dy as usize / cell) * 4 + dx as usize / cell;
            values[c * 8 + bin] += mag;
        }
    }
    normalize(&mut values);
    values.iter_mut().for_each(|v| *v = v.min(0.2));
    normalize(&mut values);
    Ok(PatchDescriptor { values })
}

fn nearest_two(query: &PatchDescriptor, set: &[PatchDescriptor]) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
    for (j, cand) in set.iter().enumerate() {
        let d = query.distance(cand);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = j;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1, d2)
}

fn passes_ratio(d1: f64, d2: f64, set_len: usize, ratio: f64) -> bool {
    set_len == 1 || d1 < ratio * d2
}

/// Mutually nearest pairs `(index_a, index_b)` that pass the nearest /
/// second-nearest ratio test in both directions, sorted by `index_a`.
pub fn match_reciprocal(a: &[PatchDescriptor], b: &[PatchDescriptor], ratio: f64) -> Result<Vec<(usize, usize)>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio {ratio} outside (0, 1]")));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    let backward: Vec<(usize, f64, f64)> = b.iter().map(|q| nearest_two(q, a)).collect();
    let mut out = Vec::new();
    for (i, q) in a.iter().enumerate() {
        let (j, d1, d2) = nearest_two(q, b);
        if !passes_ratio(d1, d2, b.len(), ratio) {
            continue;
        }
        let (back, e1, e2) = backward[j];
        if back == i && passes_ratio(e1, e2, a.len(), ratio) {
            out.push((i, j));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_from_fn(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Frame {
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(f(x, y));
            }
        }
        Frame::gray(w, h, data).unwrap()
    }

    /// Exhaustive segment test: try every start position and direction.
    fn segment_oracle(f: &Frame, x: usize, y: usize, t: i32, arc: usize) -> bool {
        let c = f.pixel(x, y) as i32;
        let ring: Vec<i32> = CIRCLE
            .iter()
            .map(|&(dx, dy)| f.pixel((x as isize + dx) as usize, (y as isize + dy) as usize) as i32)
            .collect();
        for start in 0..16 {
            let all_b = (0..arc).all(|k| ring[(start + k) % 16] > c + t);
            let all_d = (0..arc).all(|k| ring[(start + k) % 16] < c - t);
            if all_b || all_d {
                return true;
            }
        }
        false
    }

    fn noise_frame(seed: u64, w: usize, h: usize) -> Frame {
        frame_from_fn(w, h, |x, y| {
            let mut z = seed ^ ((x as u64) << 32 | y as u64);
            z = z.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            z ^= z >> 29;
            z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            (40 + (z >> 56) % 160) as u8
        })
    }

    #[test]
    fn uniform_frame_has_no_corners() {
        assert!(detect_fast(&Frame::filled(20, 20, 77), 20, 9).unwrap().is_empty());
    }

    #[test]
    fn bright_dot_is_a_corner() {
        let f = frame_from_fn(15, 15, |x, y| if (x, y) == (7, 7) { 250 } else { 10 });
        assert!(segment_oracle(&f, 7, 7, 20, 9));
        let corners = detect_fast(&f, 20, 9).unwrap();
        assert_eq!(corners.len(), 1);
        assert_eq!((corners[0].x, corners[0].y), (7, 7));
        assert_eq!(corners[0].score, 16.0 * (240.0 - 20.0));
    }

    #[test]
    fn straight_edge_midpoint_is_not_a_corner() {
        let f = frame_from_fn(30, 30, |x, _| if x < 15 { 20 } else { 220 });
        for x in 13..17 {
            assert!(!segment_oracle(&f, x, 15, 20, 9));
        }
        assert!(detect_fast(&f, 20, 9).unwrap().is_empty());
    }

    #[test]
    fn corner_detection_matches_segment_oracle_before_suppression() {
        let f = noise_frame(3, 24, 24);
        let corners = detect_fast(&f, 20, 9).unwrap();
        for c in &corners {
            assert!(segment_oracle(&f, c.x, c.y, 20, 9));
        }
        // every suppressed oracle corner has an oracle-corner neighbour
        let kept: Vec<(usize, usize)> = corners.iter().map(|c| (c.x, c.y)).collect();
        for y in 3..21 {
            for x in 3..21 {
                if segment_oracle(&f, x, y, 20, 9) && !kept.contains(&(x, y)) {
                    let neighbour = (y - 1..=y + 1)
                        .flat_map(|ny| (x - 1..=x + 1).map(move |nx| (nx, ny)))
                        .filter(|&(nx, ny)| (3..21).contains(&nx) && (3..21).contains(&ny) && (nx, ny) != (x, y))
                        .any(|(nx, ny)| segment_oracle(&f, nx, ny, 20, 9));
                    assert!(neighbour, "({x},{y})");
                }
            }
        }
        // kept corners are never adjacent
        for a in &kept {
            assert!(kept.iter().all(|b| a == b || a.0.abs_diff(b.0) > 1 || a.1.abs_diff(b.1) > 1));
        }
    }

    #[test]
    fn tiny_frame_is_rejected() {
        assert!(matches!(detect_fast(&Frame::filled(6, 10, 0), 20, 9), Err(Error::FrameTooSmall { .. })));
    }

    #[test]
    fn brightness_shift_keeps_corners() {
        let f = frame_from_fn(32, 32, |x, y| {
            let v = ((x * 7 + y * 13) % 23) as u8 * 6;
            v + 20
        });
        let shifted = Frame::gray(32, 32, f.data.iter().map(|&v| v + 30).collect()).unwrap();
        let a = detect_fast(&f, 15, 9).unwrap();
        let b = detect_fast(&shifted, 15, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_patch_gives_zero_descriptor() {
        let d = describe_patch(&Frame::filled(32, 32, 90), 16.0, 16.0, 16).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
        assert_eq!(d.values.len(), DESCRIPTOR_LEN);
    }

    #[test]
    fn descriptor_ignores_brightness_offset() {
        let f = noise_frame(9, 32, 32);
        let brighter = Frame::gray(32, 32, f.data.iter().map(|&v| v.saturating_add(50)).collect()).unwrap();
        assert!(f.data.iter().all(|&v| v <= 205));
        let a = describe_patch(&f, 15.0, 14.0, 16).unwrap();
        let b = describe_patch(&brighter, 15.0, 14.0, 16).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(a.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn identical_patches_at_different_places() {
        let tile = noise_frame(5, 20, 20);
        let f = frame_from_fn(60, 30, |x, y| tile.pixel(x % 20, y % 20));
        let a = describe_patch(&f, 10.0, 10.0, 16).unwrap();
        let b = describe_patch(&f, 30.0, 10.0, 16).unwrap();
        assert_eq!(a.distance(&b), 0.0);
    }

    #[test]
    fn window_outside_frame_errors() {
        let f = Frame::filled(32, 32, 0);
        assert!(describe_patch(&f, 8.0, 16.0, 16).is_err());
        assert!(describe_patch(&f, 9.0, 16.0, 16).is_ok());
        assert!(describe_patch(&f, 24.0, 16.0, 16).is_err());
        assert!(describe_patch(&f, 23.0, 16.0, 16).is_ok());
    }

    fn desc(v: &[f64]) -> PatchDescriptor {
        PatchDescriptor { values: v.to_vec() }
    }

    #[test]
    fn identical_sets_pair_identically() {
        let set: Vec<_> = (0..5).map(|i| desc(&[i as f64, (i * i) as f64, 1.0])).collect();
        assert_eq!(match_reciprocal(&set, &set, 0.8).unwrap(), (0..5).map(|i| (i, i)).collect::<Vec<_>>());
        assert!(match_reciprocal(&[], &set, 0.8).unwrap().is_empty());
    }

    #[test]
    fn non_reciprocal_pair_excluded() {
        // a0's nearest in b is b0, but b0's nearest in a is a1
        let a = vec![desc(&[0.0, 0.0]), desc(&[2.9, 0.0]), desc(&[-50.0, 0.0])];
        let b = vec![desc(&[3.0, 0.0]), desc(&[40.0, 0.0])];
        let table: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| x.distance(y)).collect()).collect();
        assert!(table[0][0] < table[0][1]);
        assert!(table[1][0] < table[0][0]);
        let pairs = match_reciprocal(&a, &b, 1.0).unwrap();
        assert!(!pairs.contains(&(0, 0)));
        assert!(pairs.contains(&(1, 0)));
    }

    fn arb_set() -> impl Strategy<Value = Vec<PatchDescriptor>> {
        proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 0..8)
            .prop_map(|vs| vs.into_iter().map(|values| PatchDescriptor { values }).collect())
    }

    proptest! {
        #[test]
        fn matching_is_symmetric(a in arb_set(), b in arb_set(), ratio in 0.3f64..1.0) {
            let ab = match_reciprocal(&a, &b, ratio).unwrap();
            let mut ba: Vec<(usize, usize)> = match_reciprocal(&b, &a, ratio).unwrap().into_iter().map(|(j, i)| (i, j)).collect();
            ba.sort();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn matched_pairs_are_row_and_column_minima(a in arb_set(), b in arb_set()) {
            for (i, j) in match_reciprocal(&a, &b, 1.0).unwrap() {
                let d = a[i].distance(&b[j]);
                prop_assert!(b.iter().all(|y| a[i].distance(y) >= d));
                prop_assert!(a.iter().all(|x| x.distance(&b[j]) >= d));
            }
        }
    }
}


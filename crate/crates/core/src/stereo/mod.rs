//! Epipolar geometry between the two cameras, self-calibrated rectification
//! and disparity augmentation of matched trajectories.
//!
//! Convention: `p_leftᵀ F p_right = 0` for corresponding homogeneous points.

mod fundamental;
mod rectify;

use std::fmt::Write as _;

use nalgebra::Matrix3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use fundamental::{canonicalize_fundamental, estimate_fundamental, estimate_fundamental_ransac, sampson_distance};
pub use rectify::{apply_homography, epipole_to_infinity, rectify_homographies};

use crate::keypoints::{describe_patch, detect_fast, match_reciprocal, patch_fits, DEFAULT_ARC, DEFAULT_FAST_THRESHOLD, DEFAULT_MATCH_RATIO, DEFAULT_PATCH};
use crate::media::{Camera, Clip, Frame};
use crate::tracking::Trajectory;
use crate::{Error, Result};

/// `(left point, right point)` in pixels.
pub type PointMatch = ((f64, f64), (f64, f64));

#[derive(Debug, Clone, PartialEq)]
pub struct StereoCalibration {
    pub f: Matrix3<f64>,
    pub h_left: Matrix3<f64>,
    pub h_right: Matrix3<f64>,
    /// Trajectory pairs rectified within the row tolerance.
    pub score: usize,
    /// Mean row residual of those pairs, pixels.
    pub mean_y_residual: f64,
}

impl StereoCalibration {
    /// Calibration from known homographies, unscored.
    pub fn from_homographies(f: Matrix3<f64>, h_left: Matrix3<f64>, h_right: Matrix3<f64>) -> Self {
        Self { f, h_left, h_right, score: 0, mean_y_residual: 0.0 }
    }
}

/// Left and right trajectories of the same physical point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub left: Trajectory,
    pub right: Trajectory,
}

impl TrajectoryPair {
    pub fn new(left: Trajectory, right: Trajectory) -> Result<Self> {
        if left.points.len() != right.points.len() || left.start_frame != right.start_frame {
            return Err(Error::InvalidArgument(format!(
                "paired trajectories differ: start {} vs {}, {} vs {} points",
                left.start_frame,
                right.start_frame,
                left.points.len(),
                right.points.len()
            )));
        }
        Ok(Self { left, right })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    /// Number of candidate frames.
    pub m: usize,
    pub y_tol: f64,
    pub ransac_iters: usize,
    pub ransac_tol: f64,
    pub seed: u64,
    pub match_ratio: f64,
    pub fast_threshold: u8,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            m: 10,
            y_tol: 1.5,
            ransac_iters: 500,
            ransac_tol: 1.0,
            seed: 0,
            match_ratio: DEFAULT_MATCH_RATIO,
            fast_threshold: DEFAULT_FAST_THRESHOLD,
        }
    }
}

fn gray(frame: &Frame) -> Result<Frame> {
    crate::media::to_grayscale(frame)
}

fn described_corners(frame: &Frame, threshold: u8) -> Result<(Vec<(f64, f64)>, Vec<crate::keypoints::PatchDescriptor>)> {
    let mut pts = Vec::new();
    let mut descs = Vec::new();
    for c in detect_fast(frame, threshold, DEFAULT_ARC)? {
        let (x, y) = (c.x as f64, c.y as f64);
        if patch_fits(frame.width, frame.height, x, y, DEFAULT_PATCH) {
            descs.push(describe_patch(frame, x, y, DEFAULT_PATCH)?);
            pts.push((x, y));
        }
    }
    Ok((pts, descs))
}

/// Reciprocal descriptor matches between FAST corners of a stereo frame pair.
pub fn frame_matches(left: &Frame, right: &Frame, threshold: u8, ratio: f64) -> Result<Vec<PointMatch>> {
    let (lp, ld) = described_corners(&gray(left)?, threshold)?;
    let (rp, rd) = described_corners(&gray(right)?, threshold)?;
    Ok(match_reciprocal(&ld, &rd, ratio)?.into_iter().map(|(i, j)| (lp[i], rp[j])).collect())
}

/// Pairs left and right trajectories that start on the same frame by
/// reciprocal matching of descriptors taken at their starting points.
/// Trajectories whose starting patch leaves the frame are never paired.
pub fn match_trajectories(left_clip: &Clip, left: &[Trajectory], right_clip: &Clip, right: &[Trajectory], ratio: f64) -> Result<Vec<TrajectoryPair>> {
    let lg = left_clip.to_grayscale()?;
    let rg = right_clip.to_grayscale()?;
    let describe = |clip: &Clip, trajs: &[Trajectory]| -> Result<Vec<Option<crate::keypoints::PatchDescriptor>>> {
        trajs
            .iter()
            .map(|t| {
                let frame = clip.frames.get(t.start_frame).ok_or_else(|| {
                    Error::InvalidArgument(format!("trajectory starts at frame {} beyond clip {}", t.start_frame, clip.clip_id))
                })?;
                let (x, y) = (t.points[0][0], t.points[0][1]);
                if !patch_fits(frame.width, frame.height, x, y, DEFAULT_PATCH) {
                    return Ok(None);
                }
                describe_patch(frame, x, y, DEFAULT_PATCH).map(Some)
            })
            .collect()
    };
    let ld = describe(&lg, left)?;
    let rd = describe(&rg, right)?;

    let mut keys: Vec<(usize, usize)> = left.iter().map(|t| (t.start_frame, t.points.len())).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut pairs = Vec::new();
    for key in keys {
        let group = |trajs: &[Trajectory], descs: &[Option<crate::keypoints::PatchDescriptor>]| {
            let mut idx = Vec::new();
            let mut ds = Vec::new();
            for (i, (t, d)) in trajs.iter().zip(descs).enumerate() {
                if let (true, Some(d)) = ((t.start_frame, t.points.len()) == key, d) {
                    idx.push(i);
                    ds.push(d.clone());
                }
            }
            (idx, ds)
        };
        let (li, lds) = group(left, &ld);
        let (ri, rds) = group(right, &rd);
        for (a, b) in match_reciprocal(&lds, &rds, ratio)? {
            pairs.push(TrajectoryPair::new(left[li[a]].clone(), right[ri[b]].clone())?);
        }
    }
    Ok(pairs)
}

/// Mean `|v − v′|` of a pair after rectification; `None` if a point maps to infinity.
pub fn pair_row_residual(pair: &TrajectoryPair, h_left: &Matrix3<f64>, h_right: &Matrix3<f64>) -> Option<f64> {
    let mut total = 0.0;
    for (p, q) in pair.left.points.iter().zip(&pair.right.points) {
        let (_, v) = apply_homography(h_left, p[0], p[1])?;
        let (_, vr) = apply_homography(h_right, q[0], q[1])?;
        total += (v - vr).abs();
    }
    Some(total / pair.left.points.len() as f64)
}

/// Number of pairs with mean row residual within `y_tol`, and the mean
/// residual over those pairs (infinite when none qualify).
pub fn score_calibration(pairs: &[TrajectoryPair], h_left: &Matrix3<f64>, h_right: &Matrix3<f64>, y_tol: f64) -> (usize, f64) {
    let good: Vec<f64> = pairs.iter().filter_map(|p| pair_row_residual(p, h_left, h_right)).filter(|&r| r <= y_tol).collect();
    if good.is_empty() {
        return (0, f64::INFINITY);
    }
    (good.len(), good.iter().sum::<f64>() / good.len() as f64)
}

/// Index of the winning candidate: highest score, then smaller mean residual,
/// then lower frame index.
pub fn pick_best(candidates: &[(usize, StereoCalibration)]) -> Option<usize> {
    (0..candidates.len()).min_by(|&i, &j| {
        let (fa, a) = &candidates[i];
        let (fb, b) = &candidates[j];
        b.score.cmp(&a.score).then(a.mean_y_residual.total_cmp(&b.mean_y_residual)).then(fa.cmp(fb))
    })
}

/// Calibration candidate from a single stereo frame.
pub fn calibrate_frame(left: &Frame, right: &Frame, pairs: &[TrajectoryPair], params: &CalibrationParams, seed: u64) -> Result<StereoCalibration> {
    let matches = frame_matches(left, right, params.fast_threshold, params.match_ratio)?;
    let (f, inliers) = estimate_fundamental_ransac(&matches, params.ransac_iters, params.ransac_tol, seed)?;
    let inlier_matches: Vec<PointMatch> = inliers.iter().map(|&i| matches[i]).collect();
    let (h_left, h_right) = rectify_homographies(&f, (left.width, left.height), &inlier_matches)?;
    let (score, mean_y_residual) = score_calibration(pairs, &h_left, &h_right, params.y_tol);
    Ok(StereoCalibration { f, h_left, h_right, score, mean_y_residual })
}

/// Frames considered by [`select_best_calibration`], in draw order.
pub fn candidate_frames(frames: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, frames, m.min(frames)).into_vec()
}

/// Calibrates on `m` random frames and keeps the candidate that rectifies the
/// most trajectory pairs.
pub fn select_best_calibration(left: &Clip, right: &Clip, pairs: &[TrajectoryPair], params: &CalibrationParams) -> Result<StereoCalibration> {
    if params.m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no trajectory pairs to score calibrations".into()));
    }
    if left.len() != right.len() || left.width() != right.width() || left.height() != right.height() {
        return Err(Error::DimensionMismatch("left and right clips differ in size or length".into()));
    }
    let frames = candidate_frames(left.len(), params.m, params.seed);
    let results: Vec<(usize, Result<StereoCalibration>)> = frames
        .par_iter()
        .map(|&t| (t, calibrate_frame(&left.frames[t], &right.frames[t], pairs, params, params.seed ^ (t as u64).wrapping_mul(0x9E37_79B9))))
        .collect();
    let mut candidates = Vec::new();
    let mut last_err = None;
    for (t, r) in results {
        match r {
            Ok(c) => candidates.push((t, c)),
            Err(e) => {
                log::debug!("calibration candidate frame {t} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    match pick_best(&candidates) {
        Some(i) => Ok(candidates.swap_remove(i).1),
        None => Err(Error::Degenerate(format!(
            "all {} calibration candidates failed{}",
            frames.len(),
            last_err.map(|e| format!(" (last: {e})")).unwrap_or_default()
        ))),
    }
}

/// Left trajectory in rectified coordinates with the horizontal disparity
/// `u − u′` appended to every point.
pub fn augment_disparity(pair: &TrajectoryPair, cal: &StereoCalibration) -> Result<Trajectory> {
    let mut points = Vec::with_capacity(pair.left.points.len());
    for (i, (p, q)) in pair.left.points.iter().zip(&pair.right.points).enumerate() {
        let far = || Error::Degenerate(format!("trajectory point {i} maps to infinity under rectification"));
        let (u, v) = apply_homography(&cal.h_left, p[0], p[1]).ok_or_else(far)?;
        let (ur, _) = apply_homography(&cal.h_right, q[0], q[1]).ok_or_else(far)?;
        points.push(vec![u, v, u - ur]);
    }
    Trajectory::new(pair.left.clip_id.clone(), Camera::Left, pair.left.start_frame, points)
}

/// Three rows each of `F`, `H_l`, `H_r`, then `score=` and `residual=` lines.
pub fn format_calibration(cal: &StereoCalibration) -> String {
    let mut out = String::new();
    for m in [&cal.f, &cal.h_left, &cal.h_right] {
        for r in 0..3 {
            writeln!(out, "{} {} {}", m[(r, 0)], m[(r, 1)], m[(r, 2)]).unwrap();
        }
    }
    writeln!(out, "score={}", cal.score).unwrap();
    writeln!(out, "residual={}", cal.mean_y_residual).unwrap();
    out
}

pub fn parse_calibration(text: &str) -> Result<StereoCalibration> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() != 11 {
        return Err(Error::Parse(format!("calibration needs 11 non-empty lines, found {}", lines.len())));
    }
    let mut mats = [Matrix3::zeros(); 3];
    for (k, m) in mats.iter_mut().enumerate() {
        for r in 0..3 {
            let vals: Vec<f64> = lines[3 * k + r]
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Parse(format!("calibration line {}: {e}", 3 * k + r + 1)))?;
            if vals.len() != 3 {
                return Err(Error::Parse(format!("calibration line {} needs 3 values", 3 * k + r + 1)));
            }
            for c in 0..3 {
                m[(r, c)] = vals[c];
            }
        }
    }
    let field = |line: &str, key: &str| -> Result<String> {
        line.strip_prefix(key).map(str::to_owned).ok_or_else(|| Error::Parse(format!("expected `{key}...`, got `{line}`")))
    };
    let score = field(lines[9], "score=")?.parse().map_err(|e| Error::Parse(format!("score: {e}")))?;
    let mean_y_residual = field(lines[10], "residual=")?.parse().map_err(|e| Error::Parse(format!("residual: {e}")))?;
    Ok(StereoCalibration { f: mats[0], h_left: mats[1], h_right: mats[2], score, mean_y_residual })
}

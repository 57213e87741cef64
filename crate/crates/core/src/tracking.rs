//! Fixed-length point trajectories.
//!
//! All three extractors share one streaming loop over the frames: active tracks
//! are extended from frame `t-1` to `t`, tracks that reach `l+1` points are
//! emitted, and FAST corners inside the frame's regions of interest seed new
//! tracks. Only the extension step differs:
//!
//! * interest points: match descriptors against the next frame's corners
//!   within a Manhattan radius;
//! * Lucas-Kanade: sparse pyramidal flow at subpixel positions;
//! * Farneback: dense flow sampled at the current subpixel position.

use std::fmt::Write as _;

use crate::flowfields::{farneback_flow_with, farneback_sequence, lk_track_with, FarnebackParams, FlowField, LkParams};
use crate::keypoints::{describe_patch, detect_fast, patch_fits, PatchDescriptor, DEFAULT_ARC, DEFAULT_FAST_THRESHOLD, DEFAULT_PATCH};
use crate::media::{Camera, Clip, Frame};
use crate::roi::Roi;
use crate::{Error, Result};

/// Ordered positions of one tracked point over `l+1` consecutive frames.
/// Each point has `dim` coordinates: `(x, y)` or `(x, y, disparity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub clip_id: String,
    pub camera: Camera,
    pub start_frame: usize,
    pub points: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(clip_id: impl Into<String>, camera: Camera, start_frame: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!("trajectory needs at least 2 points, got {}", points.len())));
        }
        let dim = points[0].len();
        if !(dim == 2 || dim == 3) || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("trajectory points must all have 2 or all have 3 coordinates".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite trajectory coordinate".into()));
        }
        Ok(Self { clip_id: clip_id.into(), camera, start_frame, points })
    }

    /// Number of steps `l`; the trajectory holds `l+1` points.
    pub fn length(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn end_frame(&self) -> usize {
        self.start_frame + self.length()
    }

    fn xy(&self, i: usize) -> (f64, f64) {
        (self.points[i][0], self.points[i][1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    InterestPoint,
    LucasKanade,
    Farneback,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::InterestPoint => "ip",
            Algorithm::LucasKanade => "lk",
            Algorithm::Farneback => "fb",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ip" => Ok(Algorithm::InterestPoint),
            "lk" => Ok(Algorithm::LucasKanade),
            "fb" => Ok(Algorithm::Farneback),
            other => Err(Error::Parse(format!("unknown tracking algorithm `{other}` (expected ip, lk or fb)"))),
        }
    }
}

pub const DEFAULT_LENGTH_2D: usize = 21;
pub const DEFAULT_LENGTH_DISPARITY: usize = 19;
pub const DEFAULT_LAMBDA1: f64 = 20.0;
pub const DEFAULT_STATIC_EPS: f64 = 2.0;
pub const DEFAULT_JUMP_EPS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingParams {
    /// Trajectory length `l` in steps.
    pub length: usize,
    /// Manhattan search radius for interest-point matching.
    pub lambda1: f64,
    pub fast_threshold: u8,
    pub patch: usize,
    /// Flow-based seeds closer than this to an active track are skipped.
    pub min_seed_distance: f64,
    pub static_eps: f64,
    pub jump_eps: f64,
    pub lk: LkParams,
    pub fb: FarnebackParams,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self {
            length: DEFAULT_LENGTH_2D,
            lambda1: DEFAULT_LAMBDA1,
            fast_threshold: DEFAULT_FAST_THRESHOLD,
            patch: DEFAULT_PATCH,
            min_seed_distance: 2.0,
            static_eps: DEFAULT_STATIC_EPS,
            jump_eps: DEFAULT_JUMP_EPS,
            lk: LkParams::default(),
            fb: FarnebackParams::default(),
        }
    }
}

struct Track {
    start: usize,
    points: Vec<(f64, f64)>,
    descriptor: Option<PatchDescriptor>,
}

/// One region list per frame that covers the whole image.
pub fn full_frame_rois(clip: &Clip) -> Vec<Vec<Roi>> {
    vec![vec![Roi { x: 0, y: 0, w: clip.width(), h: clip.height() }]; clip.len()]
}

fn in_rois(rois: &[Roi], x: f64, y: f64) -> bool {
    rois.iter().any(|r| r.contains(x, y))
}

fn check_inputs(clip: &Clip, rois: &[Vec<Roi>], params: &TrackingParams) -> Result<bool> {
    if params.length < 2 {
        return Err(Error::InvalidArgument(format!("trajectory length {} must be at least 2", params.length)));
    }
    if !(params.lambda1 >= 1.0) {
        return Err(Error::InvalidArgument(format!("lambda1 {} must be at least 1", params.lambda1)));
    }
    if rois.len() != clip.len() {
        return Err(Error::DimensionMismatch(format!("{} region lists for {} frames", rois.len(), clip.len())));
    }
    if params.length + 1 > clip.len() {
        log::warn!("clip {} has {} frames, too short for trajectories of length {}", clip.clip_id, clip.len(), params.length);
        return Ok(false);
    }
    Ok(true)
}

fn finish(clip: &Clip, done: Vec<Track>, params: &TrackingParams) -> Vec<Trajectory> {
    let trajs = done
        .into_iter()
        .map(|t| Trajectory {
            clip_id: clip.clip_id.clone(),
            camera: clip.camera,
            start_frame: t.start,
            points: t.points.into_iter().map(|(x, y)| vec![x, y]).collect(),
        })
        .collect();
    prune_with(trajs, params.static_eps, params.jump_eps)
}

/// Moves tracks holding `l+1` points from `active` to `done`.
fn harvest(active: &mut Vec<Track>, done: &mut Vec<Track>, length: usize) {
    let (full, rest): (Vec<Track>, Vec<Track>) = active.drain(..).partition(|t| t.points.len() == length + 1);
    done.extend(full);
    *active = rest;
}

/// Interest-point trajectories: FAST corners linked frame to frame by
/// descriptor distance. Positions stay on the integer pixel grid.
pub fn extract_ip(clip: &Clip, rois: &[Vec<Roi>], params: &TrackingParams) -> Result<Vec<Trajectory>> {
    if !check_inputs(clip, rois, params)? {
        return Ok(Vec::new());
    }
    let gray = clip.to_grayscale()?;
    let (w, h) = (clip.width(), clip.height());
    let mut active: Vec<Track> = Vec::new();
    let mut done = Vec::new();
    for (t, frame) in gray.frames.iter().enumerate() {
        let mut corners = Vec::new();
        for c in detect_fast(frame, params.fast_threshold, DEFAULT_ARC)? {
            let (x, y) = (c.x as f64, c.y as f64);
            if patch_fits(w, h, x, y, params.patch) {
                corners.push(((x, y), describe_patch(frame, x, y, params.patch)?));
            }
        }
        let mut consumed = vec![false; corners.len()];
        if t > 0 {
            // every (track, corner) candidate, best descriptor distance first
            let mut candidates = Vec::new();
            for (ti, track) in active.iter().enumerate() {
                let (px, py) = *track.points.last().unwrap();
                let desc = track.descriptor.as_ref().unwrap();
                for (ci, ((cx, cy), cd)) in corners.iter().enumerate() {
                    if (cx - px).abs() + (cy - py).abs() <= params.lambda1 {
                        candidates.push((desc.distance(cd), ti, ci));
                    }
                }
            }
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut extended = vec![false; active.len()];
            for (_, ti, ci) in candidates {
                if extended[ti] || consumed[ci] {
                    continue;
                }
                extended[ti] = true;
                consumed[ci] = true;
                active[ti].points.push(corners[ci].0);
                active[ti].descriptor = Some(corners[ci].1.clone());
            }
            active = active.into_iter().zip(extended).filter_map(|(tr, e)| e.then_some(tr)).collect();
            harvest(&mut active, &mut done, params.length);
        }
        if t + params.length < gray.len() {
            for (ci, ((x, y), d)) in corners.into_iter().enumerate() {
                if !consumed[ci] && in_rois(&rois[t], x, y) {
                    active.push(Track { start: t, points: vec![(x, y)], descriptor: Some(d) });
                }
            }
        }
    }
    Ok(finish(clip, done, params))
}

fn seed_flow_tracks(frame: &Frame, t: usize, rois: &[Roi], active: &mut Vec<Track>, params: &TrackingParams) -> Result<()> {
    let existing: Vec<(f64, f64)> = active.iter().map(|tr| *tr.points.last().unwrap()).collect();
    let min_d2 = params.min_seed_distance * params.min_seed_distance;
    for c in detect_fast(frame, params.fast_threshold, DEFAULT_ARC)? {
        let (x, y) = (c.x as f64, c.y as f64);
        if !in_rois(rois, x, y) {
            continue;
        }
        if existing.iter().any(|&(ex, ey)| (ex - x).powi(2) + (ey - y).powi(2) < min_d2) {
            continue;
        }
        active.push(Track { start: t, points: vec![(x, y)], descriptor: None });
    }
    Ok(())
}

/// Shared loop of the flow-based extractors. `step(t, prev, next, points)`
/// moves every active point from frame `t-1` to frame `t`, returning `None`
/// for lost points.
fn extract_flow(
    clip: &Clip,
    rois: &[Vec<Roi>],
    params: &TrackingParams,
    mut step: impl FnMut(usize, &Frame, &Frame, &[(f64, f64)]) -> Result<Vec<Option<(f64, f64)>>>,
) -> Result<Vec<Trajectory>> {
    if !check_inputs(clip, rois, params)? {
        return Ok(Vec::new());
    }
    let gray = clip.to_grayscale()?;
    let mut active: Vec<Track> = Vec::new();
    let mut done = Vec::new();
    for t in 0..gray.len() {
        if t > 0 && !active.is_empty() {
            let current: Vec<(f64, f64)> = active.iter().map(|tr| *tr.points.last().unwrap()).collect();
            let moved = step(t, &gray.frames[t - 1], &gray.frames[t], &current)?;
            active = active
                .into_iter()
                .zip(moved)
                .filter_map(|(mut tr, m)| {
                    tr.points.push(m?);
                    Some(tr)
                })
                .collect();
            harvest(&mut active, &mut done, params.length);
        }
        if t + params.length < gray.len() {
            seed_flow_tracks(&gray.frames[t], t, &rois[t], &mut active, params)?;
        }
    }
    Ok(finish(clip, done, params))
}

/// Lucas-Kanade trajectories at subpixel accuracy.
pub fn extract_lk(clip: &Clip, rois: &[Vec<Roi>], params: &TrackingParams) -> Result<Vec<Trajectory>> {
    extract_flow(clip, rois, params, |_, prev, next, pts| {
        Ok(lk_track_with(prev, next, pts, &params.lk)?
            .into_iter()
            .map(|r| r.is_tracked().then_some((r.x, r.y)))
            .collect())
    })
}

fn advect(field: &FlowField, pts: &[(f64, f64)]) -> Vec<Option<(f64, f64)>> {
    let (w, h) = ((field.width - 1) as f64, (field.height - 1) as f64);
    pts.iter()
        .map(|&(x, y)| {
            let (u, v) = field.sample(x, y).ok()?;
            let (nx, ny) = (x + u, y + v);
            (nx >= 0.0 && ny >= 0.0 && nx <= w && ny <= h).then_some((nx, ny))
        })
        .collect()
}

/// Farneback trajectories: each point is advected by the dense flow field.
pub fn extract_fb(clip: &Clip, rois: &[Vec<Roi>], params: &TrackingParams) -> Result<Vec<Trajectory>> {
    extract_flow(clip, rois, params, |_, prev, next, pts| Ok(advect(&farneback_flow_with(prev, next, &params.fb)?, pts)))
}

/// Dense flow from every frame to the next, computed in parallel.
pub fn farneback_fields(clip: &Clip, params: &FarnebackParams) -> Result<Vec<FlowField>> {
    farneback_sequence(&clip.to_grayscale()?.frames, params)
}

/// [`extract_fb`] on precomputed fields, `fields[t]` mapping frame `t` to `t+1`.
/// Lets several trajectory lengths share one flow computation.
pub fn extract_fb_with_fields(clip: &Clip, rois: &[Vec<Roi>], params: &TrackingParams, fields: &[FlowField]) -> Result<Vec<Trajectory>> {
    if fields.len() + 1 != clip.len() {
        return Err(Error::DimensionMismatch(format!("{} flow fields for {} frames", fields.len(), clip.len())));
    }
    if fields.iter().any(|f| f.width != clip.width() || f.height != clip.height()) {
        return Err(Error::DimensionMismatch("flow field size differs from the clip".into()));
    }
    extract_flow(clip, rois, params, |t, _, _, pts| Ok(advect(&fields[t - 1], pts)))
}

pub fn extract(algo: Algorithm, clip: &Clip, rois: &[Vec<Roi>], params: &TrackingParams) -> Result<Vec<Trajectory>> {
    match algo {
        Algorithm::InterestPoint => extract_ip(clip, rois, params),
        Algorithm::LucasKanade => extract_lk(clip, rois, params),
        Algorithm::Farneback => extract_fb(clip, rois, params),
    }
}

pub fn prune(trajectories: Vec<Trajectory>) -> Vec<Trajectory> {
    prune_with(trajectories, DEFAULT_STATIC_EPS, DEFAULT_JUMP_EPS)
}

/// Drops near-static trajectories (no point ever more than `static_eps` from
/// the start) and trajectories with a single step longer than `jump_eps`.
/// Only the image coordinates are considered.
pub fn prune_with(trajectories: Vec<Trajectory>, static_eps: f64, jump_eps: f64) -> Vec<Trajectory> {
    trajectories
        .into_iter()
        .filter(|tr| {
            let (x0, y0) = tr.xy(0);
            let excursion = (0..tr.points.len()).map(|i| {
                let (x, y) = tr.xy(i);
                (x - x0).hypot(y - y0)
            });
            let moved = excursion.fold(0.0, f64::max) >= static_eps;
            let smooth = (1..tr.points.len()).all(|i| {
                let (a, b) = (tr.xy(i - 1), tr.xy(i));
                (b.0 - a.0).hypot(b.1 - a.1) <= jump_eps
            });
            moved && smooth
        })
        .collect()
}

/// One trajectory per line: `clip_id camera start_frame n x0 y0 [d0] x1 y1 [d1] ...`.
pub fn format_trajectories(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for tr in trajectories {
        write!(out, "{} {} {} {}", tr.clip_id, tr.camera, tr.start_frame, tr.dim()).unwrap();
        for v in tr.points.iter().flatten() {
            write!(out, " {v:.6}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse(format!("trajectory line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(err("expected clip_id camera start_frame n ..."));
        }
        let camera: Camera = fields[1].parse().map_err(|_| err("bad camera"))?;
        let start: usize = fields[2].parse().map_err(|_| err("bad start frame"))?;
        let n: usize = fields[3].parse().map_err(|_| err("bad dimension"))?;
        if n != 2 && n != 3 {
            return Err(err("dimension must be 2 or 3"));
        }
        let values = fields[4..].iter().map(|s| s.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| err("bad coordinate"))?;
        if values.len() % n != 0 {
            return Err(err("coordinate count is not a multiple of n"));
        }
        let points = values.chunks(n).map(<[f64]>::to_vec).collect();
        out.push(Trajectory::new(fields[0], camera, start, points).map_err(|e| err(&e.to_string()))?);
    }
    Ok(out)
}

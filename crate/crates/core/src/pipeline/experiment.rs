//! End-to-end runs: video → regions → trajectories (optionally disparity
//! augmented) → shape descriptors → per-fold codebook and Fisher vectors →
//! linear SVM, evaluated leave-one-actor-out.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{CameraSet, PipelineConfig, Stacking};
use crate::classify::{leave_one_actor_out_by, predict, train, ConfusionMatrix, LabeledVideo};
use crate::encoding::{fisher_vector, fit_gmm, FisherCodebook, Standardizer};
use crate::flowfields::FlowField;
use crate::media::Clip;
use crate::roi::{detect_rois, Roi};
use crate::shape::{describe, normalize_magnitude, MAX_ORDER};
use crate::stereo::{augment_disparity, match_trajectories, select_best_calibration, StereoCalibration};
use crate::tracking::{extract, extract_fb_with_fields, farneback_fields, Algorithm, TrackingParams, Trajectory};
use crate::{Error, Result};

/// A labelled stereo video. `right` is needed only for disparity runs or
/// right-camera streams.
#[derive(Debug, Clone)]
pub struct Video {
    pub clip_id: String,
    pub label: String,
    pub actor: String,
    pub left: Clip,
    pub right: Option<Clip>,
}

/// Trajectories of one video, one list per stream fed to the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTracks {
    pub clip_id: String,
    pub label: String,
    pub actor: String,
    pub streams: Vec<Vec<Trajectory>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoDescriptors {
    pub clip_id: String,
    pub label: String,
    pub actor: String,
    pub streams: Vec<Vec<Vec<f64>>>,
}

/// A clip with everything that does not depend on the trajectory length.
struct Prepared<'a> {
    clip: &'a Clip,
    rois: Vec<Vec<Roi>>,
    fields: Option<Vec<FlowField>>,
}

impl<'a> Prepared<'a> {
    fn new(clip: &'a Clip, cfg: &PipelineConfig) -> Result<Self> {
        let gray = clip.to_grayscale()?;
        let rois = detect_rois(&gray, cfg.roi_params())?;
        let fields = match cfg.algo {
            Algorithm::Farneback => Some(farneback_fields(clip, &cfg.tracking_params().fb)?),
            _ => None,
        };
        Ok(Self { clip, rois, fields })
    }

    fn trajectories(&self, algo: Algorithm, params: &TrackingParams) -> Result<Vec<Trajectory>> {
        match &self.fields {
            Some(fields) => extract_fb_with_fields(self.clip, &self.rois, params, fields),
            None => extract(algo, self.clip, &self.rois, params),
        }
    }
}

fn right_clip(video: &Video) -> Result<&Clip> {
    video.right.as_ref().ok_or_else(|| Error::InvalidArgument(format!("video {} has no right clip", video.clip_id)))
}

/// Calibrates the video's rig from its own trajectory pairs and returns the
/// disparity-augmented left trajectories. A failed calibration leaves the
/// video without trajectories.
pub fn disparity_trajectories(left_clip: &Clip, left: &[Trajectory], right_clip: &Clip, right: &[Trajectory], cfg: &PipelineConfig) -> Result<(Option<StereoCalibration>, Vec<Trajectory>)> {
    let pairs = match_trajectories(left_clip, left, right_clip, right, cfg.match_ratio)?;
    if pairs.is_empty() {
        log::warn!("{}: no trajectory pairs", left_clip.clip_id);
        return Ok((None, Vec::new()));
    }
    let cal = match select_best_calibration(left_clip, right_clip, &pairs, &cfg.calibration_params()) {
        Ok(cal) => cal,
        Err(e) if e.is_numeric() => {
            log::warn!("{}: calibration failed: {e}", left_clip.clip_id);
            return Ok((None, Vec::new()));
        }
        Err(e) => return Err(e),
    };
    let augmented = pairs.iter().filter_map(|p| augment_disparity(p, &cal).ok()).collect();
    Ok((Some(cal), augmented))
}

/// Trajectories of `video` for each length in `lengths`. Regions and dense
/// flow are computed once and shared by all lengths.
pub fn track_video_lengths(video: &Video, cfg: &PipelineConfig, lengths: &[usize]) -> Result<Vec<VideoTracks>> {
    let needs_right = cfg.use_disparity || cfg.cameras != CameraSet::Left;
    let needs_left = cfg.use_disparity || cfg.cameras != CameraSet::Right;
    let left = needs_left.then(|| Prepared::new(&video.left, cfg)).transpose()?;
    let right = if needs_right { Some(Prepared::new(right_clip(video)?, cfg)?) } else { None };
    lengths
        .iter()
        .map(|&length| {
            let params = TrackingParams { length, ..cfg.tracking_params() };
            let run = |p: &Option<Prepared>| p.as_ref().map(|p| p.trajectories(cfg.algo, &params)).transpose();
            let (lt, rt) = (run(&left)?, run(&right)?);
            let streams = if cfg.use_disparity {
                let (l, r) = (lt.unwrap_or_default(), rt.unwrap_or_default());
                vec![disparity_trajectories(&video.left, &l, right_clip(video)?, &r, cfg)?.1]
            } else {
                [lt, rt].into_iter().flatten().collect()
            };
            Ok(VideoTracks { clip_id: video.clip_id.clone(), label: video.label.clone(), actor: video.actor.clone(), streams })
        })
        .collect()
}

pub fn track_video(video: &Video, cfg: &PipelineConfig) -> Result<VideoTracks> {
    Ok(track_video_lengths(video, cfg, &[cfg.length])?.remove(0))
}

/// Descriptors of order `order` for every trajectory of every stream.
pub fn describe_video(tracks: &VideoTracks, order: usize, normalize: bool) -> Result<VideoDescriptors> {
    let streams = tracks
        .streams
        .iter()
        .map(|trajs| {
            trajs
                .iter()
                .map(|t| {
                    let mut d = describe(t, order)?;
                    if normalize {
                        normalize_magnitude(&mut d);
                    }
                    Ok(d.values)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(VideoDescriptors { clip_id: tracks.clip_id.clone(), label: tracks.label.clone(), actor: tracks.actor.clone(), streams })
}

/// Codebook fitted on a training partition, with its optional standardizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub standardizer: Option<Standardizer>,
    pub codebook: FisherCodebook,
}

impl Encoder {
    /// Fits on `descriptors`, keeping at most `cfg.max_descriptors` of them
    /// (drawn with `seed`).
    pub fn fit(descriptors: &[&[f64]], cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        if descriptors.len() < cfg.k {
            return Err(Error::InsufficientData(format!("{} training descriptors for {} components", descriptors.len(), cfg.k)));
        }
        let mut chosen: Vec<usize> = if cfg.max_descriptors > 0 && descriptors.len() > cfg.max_descriptors.max(cfg.k) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample(&mut rng, descriptors.len(), cfg.max_descriptors.max(cfg.k)).into_vec()
        } else {
            (0..descriptors.len()).collect()
        };
        chosen.sort_unstable();
        let data: Vec<Vec<f64>> = chosen.iter().map(|&i| descriptors[i].to_vec()).collect();
        let standardizer = cfg.standardize.then(|| Standardizer::fit(&data)).transpose()?;
        let data = match &standardizer {
            Some(s) => data.iter().map(|x| s.apply(x)).collect(),
            None => data,
        };
        let codebook = fit_gmm(&data, cfg.k, seed, cfg.gmm_iters)?;
        Ok(Self { standardizer, codebook })
    }

    pub fn encode(&self, set: &[Vec<f64>]) -> Result<Vec<f64>> {
        match &self.standardizer {
            Some(s) => fisher_vector(&set.iter().map(|x| s.apply(x)).collect::<Vec<_>>(), &self.codebook),
            None => fisher_vector(set, &self.codebook),
        }
    }
}

/// Descriptor groups that get their own codebook: all streams pooled, or one
/// group per stream.
fn groups(video: &VideoDescriptors, stacking: Stacking) -> Vec<Vec<&Vec<f64>>> {
    match stacking {
        Stacking::Pool => vec![video.streams.iter().flatten().collect()],
        Stacking::Concat => video.streams.iter().map(|s| s.iter().collect()).collect(),
    }
}

fn fold_seed(seed: u64, test: &[usize]) -> u64 {
    seed ^ (test.first().copied().unwrap_or(0) as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits encoders on the `train` videos and returns every video's Fisher vector.
pub fn fold_encodings(videos: &[VideoDescriptors], train_idx: &[usize], cfg: &PipelineConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    let grouped: Vec<Vec<Vec<&Vec<f64>>>> = videos.iter().map(|v| groups(v, cfg.stacking)).collect();
    let n_groups = grouped.first().map_or(0, Vec::len);
    if grouped.iter().any(|g| g.len() != n_groups) {
        return Err(Error::DimensionMismatch("videos carry different numbers of streams".into()));
    }
    let encoders: Vec<Encoder> = (0..n_groups)
        .map(|g| {
            let training: Vec<&[f64]> = train_idx.iter().flat_map(|&i| grouped[i][g].iter().map(|d| d.as_slice())).collect();
            Encoder::fit(&training, cfg, seed.wrapping_add(g as u64))
        })
        .collect::<Result<_>>()?;
    grouped
        .par_iter()
        .map(|video| {
            let mut fv = Vec::new();
            for (enc, set) in encoders.iter().zip(video) {
                let owned: Vec<Vec<f64>> = set.iter().map(|d| d.to_vec()).collect();
                fv.extend(enc.encode(&owned)?);
            }
            Ok(fv)
        })
        .collect()
}

/// Leave-one-actor-out confusion matrix; every fold fits its own codebooks
/// and SVM on the training actors only.
pub fn evaluate(videos: &[VideoDescriptors], cfg: &PipelineConfig) -> Result<ConfusionMatrix> {
    cfg.validate()?;
    let labels: Vec<String> = videos.iter().map(|v| v.label.clone()).collect();
    let actors: Vec<String> = videos.iter().map(|v| v.actor.clone()).collect();
    leave_one_actor_out_by(&labels, &actors, |train_idx, test| {
        let fvs = fold_encodings(videos, train_idx, cfg, fold_seed(cfg.seed, test))?;
        let examples: Vec<LabeledVideo> = train_idx
            .iter()
            .map(|&i| LabeledVideo { clip_id: videos[i].clip_id.clone(), label: videos[i].label.clone(), actor: videos[i].actor.clone(), fv: fvs[i].clone() })
            .collect();
        let model = train(&examples, &cfg.svm_params())?;
        test.iter().map(|&i| predict(&model, &fvs[i])).collect()
    })
}

/// Trajectories for every video at the configured length, in parallel.
pub fn track_all(videos: &[Video], cfg: &PipelineConfig) -> Result<Vec<VideoTracks>> {
    cfg.validate()?;
    videos.par_iter().map(|v| track_video(v, cfg)).collect()
}

/// Full run at the configured `(length, order)`.
pub fn run_experiment(videos: &[Video], cfg: &PipelineConfig) -> Result<ConfusionMatrix> {
    let tracks = track_all(videos, cfg)?;
    let descriptors = tracks.iter().map(|t| describe_video(t, cfg.order, cfg.normalize)).collect::<Result<Vec<_>>>()?;
    evaluate(&descriptors, cfg)
}

/// One cell of a length × order sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub length: usize,
    pub order: usize,
    pub accuracy: f64,
}

/// Accuracy for every `(length, order)` pair; trajectories are extracted once
/// per length. Cells with `order > length` are skipped.
pub fn sweep(videos: &[Video], cfg: &PipelineConfig, lengths: &[usize], orders: &[usize]) -> Result<Vec<SweepCell>> {
    if lengths.is_empty() || orders.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one length and one order".into()));
    }
    if let Some(r) = orders.iter().find(|&&r| r == 0 || r > MAX_ORDER) {
        return Err(Error::InvalidArgument(format!("descriptor order {r} outside 1..={MAX_ORDER}")));
    }
    for &length in lengths {
        PipelineConfig { length, order: 1, ..cfg.clone() }.validate()?;
    }
    let per_video: Vec<Vec<VideoTracks>> = videos.par_iter().map(|v| track_video_lengths(v, cfg, lengths)).collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for (li, &length) in lengths.iter().enumerate() {
        for &order in orders {
            if order > length {
                continue;
            }
            let cell_cfg = PipelineConfig { length, order, ..cfg.clone() };
            let descriptors = per_video.iter().map(|t| describe_video(&t[li], order, cfg.normalize)).collect::<Result<Vec<_>>>()?;
            let cm = evaluate(&descriptors, &cell_cfg)?;
            let accuracy = crate::classify::accuracy(&cm)?;
            log::info!("sweep l={length} r={order}: accuracy {accuracy:.4}");
            cells.push(SweepCell { length, order, accuracy });
        }
    }
    Ok(cells)
}

/// Grid CSV: one row per length, one column per order.
pub fn format_sweep(cells: &[SweepCell]) -> String {
    let mut lengths: Vec<usize> = cells.iter().map(|c| c.length).collect();
    let mut orders: Vec<usize> = cells.iter().map(|c| c.order).collect();
    lengths.sort_unstable();
    lengths.dedup();
    orders.sort_unstable();
    orders.dedup();
    let mut out = String::from("length");
    for r in &orders {
        out.push_str(&format!(",D{r}"));
    }
    out.push('\n');
    for l in &lengths {
        out.push_str(&l.to_string());
        for r in &orders {
            match cells.iter().find(|c| c.length == *l && c.order == *r) {
                Some(c) => out.push_str(&format!(",{:.6}", c.accuracy)),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_sweep(text: &str) -> Result<Vec<SweepCell>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty sweep file".into()))?;
    let orders: Vec<usize> = header
        .split(',')
        .skip(1)
        .map(|h| h.trim().strip_prefix('D').and_then(|r| r.parse().ok()).ok_or_else(|| Error::Parse(format!("bad sweep column `{h}`"))))
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != orders.len() + 1 {
            return Err(Error::Parse(format!("sweep row `{line}` has {} fields", f.len())));
        }
        let length = f[0].trim().parse().map_err(|_| Error::Parse(format!("bad length `{}`", f[0])))?;
        for (r, v) in orders.iter().zip(&f[1..]) {
            if v.trim().is_empty() {
                continue;
            }
            let accuracy = v.trim().parse().map_err(|_| Error::Parse(format!("bad accuracy `{v}`")))?;
            cells.push(SweepCell { length, order: *r, accuracy });
        }
    }
    Ok(cells)
}

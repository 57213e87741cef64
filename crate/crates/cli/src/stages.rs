//! One function per subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use trailblaze::classify::{accuracy, format_model, parse_model, predict, train as train_svm, ConfusionMatrix, LabeledVideo};
use trailblaze::encoding::{fisher_vector, format_codebook, parse_codebook};
use trailblaze::media::{load_clip, synth_stereo, write_clip, Camera, Clip, SceneSpec};
use trailblaze::pipeline::{
    format_encodings, format_manifest, format_rois, format_sweep, parse_encodings, parse_manifest, parse_rois, plot_overlay, render_video,
    run_experiment, sweep as sweep_grid, CameraSet, DatasetSpec, Encoder, ManifestEntry, PipelineConfig, Video,
};
use trailblaze::roi::{detect_rois, Roi};
use trailblaze::shape::{describe as describe_traj, format_descriptors, normalize_magnitude, parse_descriptors, DescriptorRecord};
use trailblaze::stereo::{augment_disparity, format_calibration, match_trajectories, parse_calibration, select_best_calibration, TrajectoryPair};
use trailblaze::tracking::{extract as extract_trajs, format_trajectories, parse_trajectories, Trajectory};

use crate::fsio::{load_dataset, read_text, render_dataset, write_atomic, write_dir_atomic, write_pair};
use crate::{input_error, DatasetName, Source};

/// Both clips of a stereo video with their trajectory files.
#[derive(Args)]
pub struct PairInputs {
    #[arg(long, value_name = "DIR")]
    left: PathBuf,
    #[arg(long, value_name = "DIR")]
    right: PathBuf,
    #[arg(long, value_name = "FILE")]
    left_trajectories: PathBuf,
    #[arg(long, value_name = "FILE")]
    right_trajectories: PathBuf,
}

fn dataset_spec(name: DatasetName, seed: u64) -> DatasetSpec {
    match name {
        DatasetName::Recognition => DatasetSpec::recognition(seed),
        DatasetName::DepthPair => DatasetSpec::depth_pair(seed),
    }
}

fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    Ok(parse_trajectories(&read_text(path)?).with_context(|| path.display().to_string())?)
}

fn clip_rois(cfg: &PipelineConfig, clip: &Clip, rois: Option<&Path>) -> Result<Vec<Vec<Roi>>> {
    match rois {
        Some(path) => Ok(parse_rois(&read_text(path)?, clip.len()).with_context(|| path.display().to_string())?),
        None => Ok(detect_rois(&clip.to_grayscale()?, cfg.roi_params())?),
    }
}

pub fn synth(cfg: &PipelineConfig, scene: Option<&Path>, dataset: Option<DatasetName>, out: &Path) -> Result<()> {
    match (scene, dataset) {
        (Some(path), _) => {
            let spec: SceneSpec = read_text(path)?.parse().with_context(|| path.display().to_string())?;
            let (left, right, _) = synth_stereo(&spec)?;
            write_dir_atomic(out, |dir| write_pair(dir, &left, &right))
        }
        (None, Some(name)) => {
            let spec = dataset_spec(name, cfg.seed);
            let videos = spec.videos()?;
            write_dir_atomic(out, |dir| {
                for v in &videos {
                    let (left, right) = render_video(v)?;
                    write_pair(&dir.join(&v.clip_id), &left, &right)?;
                }
                let entries: Vec<ManifestEntry> =
                    videos.iter().map(|v| ManifestEntry { clip_id: v.clip_id.clone(), label: v.label.clone(), actor: v.actor.clone() }).collect();
                std::fs::write(dir.join("manifest.txt"), format_manifest(&entries))?;
                Ok(())
            })
        }
        (None, None) => Err(input_error("synth needs --scene or --dataset")),
    }
}

pub fn roi(cfg: &PipelineConfig, clip: &Path, out: &Path) -> Result<()> {
    let clip = load_clip(clip)?;
    let rois = detect_rois(&clip.to_grayscale()?, cfg.roi_params())?;
    write_atomic(out, format_rois(&rois))
}

pub fn extract(cfg: &PipelineConfig, clip: &Path, rois: Option<&Path>, out: &Path) -> Result<()> {
    let clip = load_clip(clip)?;
    let rois = clip_rois(cfg, &clip, rois)?;
    let trajs = extract_trajs(cfg.algo, &clip, &rois, &cfg.tracking_params())?;
    log::info!("{}: {} trajectories", clip.clip_id, trajs.len());
    write_atomic(out, format_trajectories(&trajs))
}

fn pairs(cfg: &PipelineConfig, inputs: &PairInputs) -> Result<(Clip, Clip, Vec<TrajectoryPair>)> {
    let mut left = load_clip(&inputs.left)?;
    let mut right = load_clip(&inputs.right)?;
    left.camera = Camera::Left;
    right.camera = Camera::Right;
    let lt = load_trajectories(&inputs.left_trajectories)?;
    let rt = load_trajectories(&inputs.right_trajectories)?;
    let pairs = match_trajectories(&left, &lt, &right, &rt, cfg.match_ratio)?;
    if pairs.is_empty() {
        return Err(input_error("no left and right trajectories could be matched"));
    }
    Ok((left, right, pairs))
}

pub fn calibrate(cfg: &PipelineConfig, inputs: &PairInputs, out: &Path) -> Result<()> {
    let (left, right, pairs) = pairs(cfg, inputs)?;
    let cal = select_best_calibration(&left, &right, &pairs, &cfg.calibration_params())?;
    write_atomic(out, format_calibration(&cal))
}

pub fn augment(cfg: &PipelineConfig, inputs: &PairInputs, calibration: &Path, out: &Path) -> Result<()> {
    let cal = parse_calibration(&read_text(calibration)?).with_context(|| calibration.display().to_string())?;
    let (_, _, pairs) = pairs(cfg, inputs)?;
    let mut augmented = Vec::with_capacity(pairs.len());
    for p in &pairs {
        match augment_disparity(p, &cal) {
            Ok(t) => augmented.push(t),
            Err(e) => log::warn!("dropping pair starting at frame {}: {e}", p.left.start_frame),
        }
    }
    write_atomic(out, format_trajectories(&augmented))
}

pub fn describe(cfg: &PipelineConfig, trajectories: &Path, label: &str, out: &Path) -> Result<()> {
    if label.is_empty() || label.contains(char::is_whitespace) {
        return Err(input_error(format!("label `{label}` must be a single non-empty word")));
    }
    let records = load_trajectories(trajectories)?
        .iter()
        .map(|t| {
            let mut descriptor = describe_traj(t, cfg.order)?;
            if cfg.normalize {
                normalize_magnitude(&mut descriptor);
            }
            Ok(DescriptorRecord { clip_id: t.clip_id.clone(), label: label.to_string(), descriptor })
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic(out, format_descriptors(&records))
}

pub fn encode(
    cfg: &PipelineConfig,
    manifest: &Path,
    descriptor_files: &[PathBuf],
    codebook: Option<&Path>,
    codebook_out: Option<&Path>,
    exclude_actor: Option<&str>,
    out: &Path,
) -> Result<()> {
    if cfg.standardize {
        return Err(input_error("standardize is only available in run and sweep"));
    }
    let entries = parse_manifest(&read_text(manifest)?)?;
    let mut sets: BTreeMap<&str, Vec<Vec<f64>>> = entries.iter().map(|e| (e.clip_id.as_str(), Vec::new())).collect();
    for path in descriptor_files {
        for rec in parse_descriptors(&read_text(path)?).with_context(|| path.display().to_string())? {
            let entry = entries
                .iter()
                .find(|e| e.clip_id == rec.clip_id)
                .ok_or_else(|| input_error(format!("{}: clip `{}` is not in the manifest", path.display(), rec.clip_id)))?;
            if entry.label != rec.label {
                return Err(input_error(format!("clip `{}` is labelled `{}` in the manifest but `{}` in {}", rec.clip_id, entry.label, rec.label, path.display())));
            }
            sets.get_mut(entry.clip_id.as_str()).expect("every manifest clip has a set").push(rec.descriptor.values);
        }
    }
    let cb = match codebook {
        Some(path) => parse_codebook(&read_text(path)?).with_context(|| path.display().to_string())?,
        None => {
            let training: Vec<&[f64]> = entries
                .iter()
                .filter(|e| Some(e.actor.as_str()) != exclude_actor)
                .flat_map(|e| sets[e.clip_id.as_str()].iter().map(Vec::as_slice))
                .collect();
            Encoder::fit(&training, cfg, cfg.seed)?.codebook
        }
    };
    let videos = entries
        .iter()
        .map(|e| {
            let fv = fisher_vector(&sets[e.clip_id.as_str()], &cb)?;
            Ok(LabeledVideo { clip_id: e.clip_id.clone(), label: e.label.clone(), actor: e.actor.clone(), fv })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = codebook_out {
        write_atomic(path, format_codebook(&cb))?;
    }
    write_atomic(out, format_encodings(&videos))
}

pub fn train(cfg: &PipelineConfig, encodings: &Path, exclude_actor: Option<&str>, out: &Path) -> Result<()> {
    let examples: Vec<LabeledVideo> = parse_encodings(&read_text(encodings)?)?.into_iter().filter(|v| Some(v.actor.as_str()) != exclude_actor).collect();
    let model = train_svm(&examples, &cfg.svm_params())?;
    write_atomic(out, format_model(&model))
}

pub fn eval(encodings: &Path, model: Option<&Path>, actor: Option<&str>, out: &Path) -> Result<()> {
    let model = match model {
        Some(path) if path.is_file() => parse_model(&read_text(path)?).with_context(|| path.display().to_string())?,
        _ => return Err(input_error("missing model")),
    };
    let videos: Vec<LabeledVideo> = parse_encodings(&read_text(encodings)?)?.into_iter().filter(|v| actor.is_none_or(|a| v.actor == a)).collect();
    if videos.is_empty() {
        return Err(input_error("no videos to evaluate"));
    }
    let mut labels = model.labels.clone();
    for v in &videos {
        if !labels.contains(&v.label) {
            labels.push(v.label.clone());
        }
    }
    labels.sort();
    let mut cm = ConfusionMatrix::new(labels);
    for v in &videos {
        cm.record(&v.label, &predict(&model, &v.fv)?)?;
    }
    println!("accuracy={:.6}", accuracy(&cm)?);
    write_atomic(out, cm.to_csv())
}

pub fn plot(clip: &Path, trajectories: &Path, rois: Option<&Path>, out: &Path) -> Result<()> {
    let clip = load_clip(clip)?;
    let trajs = load_trajectories(trajectories)?;
    let rois = rois.map(|p| parse_rois(&read_text(p)?, clip.len()).with_context(|| p.display().to_string())).transpose()?;
    let frames = plot_overlay(&clip, &trajs, rois.as_deref())?;
    let overlay = Clip::new(clip.clip_id.clone(), clip.camera, clip.frame_rate, frames)?;
    write_dir_atomic(out, |dir| Ok(write_clip(&overlay, dir)?))
}

fn videos(cfg: &PipelineConfig, source: &Source) -> Result<Vec<Video>> {
    match (&source.data, source.dataset) {
        (Some(dir), _) => load_dataset(dir, cfg.use_disparity || cfg.cameras != CameraSet::Left),
        (None, Some(name)) => render_dataset(&dataset_spec(name, cfg.seed)),
        (None, None) => Err(input_error("need --data or --dataset")),
    }
}

pub fn run(cfg: &PipelineConfig, source: &Source, out: &Path, config_out: Option<&Path>) -> Result<()> {
    let videos = videos(cfg, source)?;
    let cm = run_experiment(&videos, cfg)?;
    println!("accuracy={:.6}", accuracy(&cm)?);
    if let Some(path) = config_out {
        write_atomic(path, cfg.to_string())?;
    }
    write_atomic(out, cm.to_csv())
}

/// `a:b` or `a:b:step` (inclusive), or a comma-separated list.
pub fn parse_list(text: &str) -> Result<Vec<usize>> {
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| input_error(format!("bad number `{s}` in `{text}`")));
    let out: Vec<usize> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let (a, b, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1),
            [a, b, s] => (num(a)?, num(b)?, num(s)?),
            _ => return Err(input_error(format!("bad range `{text}`"))),
        };
        if step == 0 || a > b {
            return Err(input_error(format!("empty range `{text}`")));
        }
        (a..=b).step_by(step).collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    if out.is_empty() {
        return Err(input_error(format!("empty list `{text}`")));
    }
    Ok(out)
}

pub fn sweep(cfg: &PipelineConfig, source: &Source, lengths: &str, orders: &str, out: &Path) -> Result<()> {
    let (lengths, orders) = (parse_list(lengths)?, parse_list(orders)?);
    let videos = videos(cfg, source)?;
    let cells = sweep_grid(&videos, cfg, &lengths, &orders)?;
    write_atomic(out, format_sweep(&cells))
}

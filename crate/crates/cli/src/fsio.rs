//! Atomic output and dataset directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use trailblaze::media::{load_clip, write_clip, Clip};
use trailblaze::pipeline::{parse_manifest, render_video, DatasetSpec, Video};

use crate::input_error;

fn sibling(path: &Path, tag: &str) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.{tag}{}", std::process::id()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).with_context(|| format!("creating {}", p.display())),
        _ => Ok(()),
    }
}

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    let tmp = sibling(path, "tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))
}

/// Fills a temporary sibling directory with `fill`, then swaps it in for `dir`.
pub fn write_dir_atomic(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    ensure_parent(dir)?;
    let tmp = sibling(dir, "tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    let old = sibling(dir, "old");
    let replaced = dir.exists();
    if replaced {
        fs::rename(dir, &old).with_context(|| format!("moving aside {}", dir.display()))?;
    }
    fs::rename(&tmp, dir).with_context(|| format!("renaming {} to {}", tmp.display(), dir.display()))?;
    if replaced {
        fs::remove_dir_all(&old)?;
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))
}

/// Writes both cameras of a clip pair under `dir/left` and `dir/right`.
pub fn write_pair(dir: &Path, left: &Clip, right: &Clip) -> Result<()> {
    write_clip(left, &dir.join("left"))?;
    write_clip(right, &dir.join("right"))?;
    Ok(())
}

/// Loads the videos listed in `dir/manifest.txt`; each lives in
/// `dir/<clip_id>/left` with an optional `right` sibling.
pub fn load_dataset(dir: &Path, need_right: bool) -> Result<Vec<Video>> {
    let entries = parse_manifest(&read_text(&dir.join("manifest.txt"))?)?;
    entries
        .par_iter()
        .map(|e| {
            let base = dir.join(&e.clip_id);
            let left = load_clip(&base.join("left"))?;
            let right_dir = base.join("right");
            let right = if need_right || right_dir.is_dir() { Some(load_clip(&right_dir)?) } else { None };
            Ok(Video { clip_id: e.clip_id.clone(), label: e.label.clone(), actor: e.actor.clone(), left, right })
        })
        .collect()
}

/// Renders a synthetic dataset in memory.
pub fn render_dataset(spec: &DatasetSpec) -> Result<Vec<Video>> {
    spec.videos()?
        .par_iter()
        .map(|v| {
            let (left, right) = render_video(v)?;
            Ok(Video { clip_id: v.clip_id.clone(), label: v.label.clone(), actor: v.actor.clone(), left, right: Some(right) })
        })
        .collect()
}

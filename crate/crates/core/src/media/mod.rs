//! Frames, clips and their on-disk representation.
//!
//! A clip directory holds one binary PGM (P5) or PPM (P6) file per frame, named
//! `frame_000000.pgm`, `frame_000001.pgm`, ... and read back in lexicographic
//! filename order.

mod pnm;
mod synth;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use pnm::{read_pnm, write_pnm};
pub use synth::{
    synth_stereo, GroundTruth, ObjectPath, ObjectSpec, ObjectTruth, PanelSpec, PinholeCamera,
    SceneSpec, StereoRig, WallSpec,
};

use crate::{Error, Result};

/// Row-major 8-bit image with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("empty frame {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedChannels(channels));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "frame data has {} bytes, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, data)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, channels: 1, data: vec![value; width * height] }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }
}

/// BT.601 luma, rounded half-up. Single-channel frames are returned unchanged.
pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    match frame.channels {
        1 => Ok(frame.clone()),
        3 => {
            let data = frame
                .data
                .chunks_exact(3)
                .map(|px| {
                    let weighted = 299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32;
                    ((weighted + 500) / 1000) as u8
                })
                .collect();
            Frame::gray(frame.width, frame.height, data)
        }
        c => Err(Error::UnsupportedChannels(c)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Camera {
    Left,
    Right,
}

impl fmt::Display for Camera {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Camera::Left => "left",
            Camera::Right => "right",
        })
    }
}

impl FromStr for Camera {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" | "l" => Ok(Camera::Left),
            "right" | "r" => Ok(Camera::Right),
            other => Err(Error::Parse(format!("unknown camera `{other}`"))),
        }
    }
}

/// An ordered run of equally sized frames from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub frames: Vec<Frame>,
    pub frame_rate: f64,
    pub clip_id: String,
    pub camera: Camera,
}

pub const DEFAULT_FRAME_RATE: f64 = 30.0;

impl Clip {
    pub fn new(clip_id: impl Into<String>, camera: Camera, frame_rate: f64, frames: Vec<Frame>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "a clip needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let dims = frames[0].dims();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != dims) {
            return Err(Error::InconsistentDimensions {
                path: format!("frame {i}").into(),
                expected: dims,
                got: f.dims(),
            });
        }
        if !(frame_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("frame rate must be positive, got {frame_rate}")));
        }
        Ok(Self { frames, frame_rate, clip_id: clip_id.into(), camera })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    /// Grayscale copy of every frame.
    pub fn to_grayscale(&self) -> Result<Clip> {
        let frames = self.frames.iter().map(to_grayscale).collect::<Result<Vec<_>>>()?;
        Ok(Clip { frames, ..self.clone() })
    }
}

fn frame_file_name(index: usize, channels: usize) -> String {
    let ext = if channels == 3 { "ppm" } else { "pgm" };
    format!("frame_{index:06}.{ext}")
}

/// Loads every `.pgm`/`.ppm` file of `dir` in lexicographic order.
///
/// The clip id is the directory name; a directory named `left` or `right` sets
/// the camera and takes its clip id from the parent directory instead.
pub fn load_clip(dir: &Path) -> Result<Clip> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_frame = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"));
        if is_frame && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }

    let mut frames = Vec::with_capacity(files.len());
    for path in &files {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let frame = read_pnm(&bytes).map_err(|reason| Error::MalformedFrame { path: path.clone(), reason })?;
        if let Some(first) = frames.first() {
            let first: &Frame = first;
            if first.dims() != frame.dims() {
                return Err(Error::InconsistentDimensions {
                    path: path.clone(),
                    expected: first.dims(),
                    got: frame.dims(),
                });
            }
        }
        frames.push(frame);
    }
    if frames.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: a clip needs at least 2 frames, found 1",
            dir.display()
        )));
    }

    let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let dir_name = name(dir);
    let (camera, clip_id) = match dir_name.parse::<Camera>() {
        Ok(cam) => (cam, dir.parent().map(name).filter(|n| !n.is_empty()).unwrap_or(dir_name)),
        Err(_) => (Camera::Left, dir_name),
    };
    Clip::new(clip_id, camera, DEFAULT_FRAME_RATE, frames)
}

/// Writes `frame_NNNNNN.pgm` (or `.ppm` for colour) files into `dir`, creating it if needed.
pub fn write_clip(clip: &Clip, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in clip.frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i, frame.channels));
        std::fs::write(&path, write_pnm(frame)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weighted_sum_oracle(r: u8, g: u8, b: u8) -> u8 {
        let exact = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
        (exact + 0.5).floor() as u8
    }

    #[test]
    fn grayscale_matches_weighted_sum() {
        let cases = [(255, 255, 255), (0, 0, 0), (255, 0, 0), (12, 200, 77), (1, 2, 3)];
        for (r, g, b) in cases {
            let f = Frame::new(1, 1, 3, vec![r, g, b]).unwrap();
            let gray = to_grayscale(&f).unwrap();
            assert_eq!(gray.data[0], weighted_sum_oracle(r, g, b), "({r},{g},{b})");
        }
        let red = Frame::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&red).unwrap().data, vec![76]);
    }

    #[test]
    fn grayscale_passes_single_channel_through() {
        let f = Frame::gray(2, 1, vec![7, 9]).unwrap();
        assert_eq!(to_grayscale(&f).unwrap(), f);
    }

    #[test]
    fn unsupported_channels_rejected() {
        let f = Frame { width: 1, height: 1, channels: 2, data: vec![0, 0] };
        assert!(matches!(to_grayscale(&f), Err(Error::UnsupportedChannels(2))));
    }

    #[test]
    fn load_clip_reads_in_order_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3u8 {
            let f = Frame::filled(64, 48, i * 10);
            std::fs::write(dir.path().join(frame_file_name(i as usize, 1)), write_pnm(&f)).unwrap();
        }
        let clip = load_clip(dir.path()).unwrap();
        assert_eq!(clip.len(), 3);
        assert_eq!(clip.width(), 64);
        assert_eq!(clip.frames[2].data[0], 20);

        let bad = Frame::filled(32, 24, 0);
        std::fs::write(dir.path().join("frame_000003.pgm"), write_pnm(&bad)).unwrap();
        match load_clip(dir.path()) {
            Err(Error::InconsistentDimensions { path, .. }) => {
                assert!(path.ends_with("frame_000003.pgm"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_missing_directories_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_clip(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no frames"));
        assert!(matches!(load_clip(&dir.path().join("nope")), Err(Error::Io { .. })));
    }

    #[test]
    fn malformed_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("frame_000000.pgm"), b"P5\n4 4\n255\n").unwrap();
        std::fs::write(dir.path().join("frame_000001.pgm"), b"P5\n4 4\n255\n").unwrap();
        let err = load_clip(dir.path()).unwrap_err();
        assert!(matches!(err, Error::MalformedFrame { .. }));
        assert!(err.to_string().contains("frame_000000.pgm"));
    }

    #[test]
    fn camera_directory_sets_camera_and_id() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("walk01").join("right");
        let clip = Clip::new("x", Camera::Left, 30.0, vec![Frame::filled(8, 8, 1), Frame::filled(8, 8, 2)]).unwrap();
        write_clip(&clip, &dir).unwrap();
        let back = load_clip(&dir).unwrap();
        assert_eq!(back.camera, Camera::Right);
        assert_eq!(back.clip_id, "walk01");
        assert_eq!(back.frames, clip.frames);
    }
}

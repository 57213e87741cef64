//! Synthetic activity datasets: every video is a stereo scene with a single
//! textured object whose centre follows a class-specific path. Actors differ
//! by speed, phase, size and position; repetitions add a little more jitter
//! and fresh textures and sensor noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::media::{synth_stereo, Clip, ObjectPath, ObjectSpec, PanelSpec, SceneSpec, WallSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Activity {
    HorizontalLine,
    VerticalOscillation,
    Circle,
    Zigzag,
    Spiral,
    DepthLine,
    /// Moves towards the cameras along a slanted axis.
    Approach,
    /// Same left-image path as [`Activity::Approach`], moving away.
    Recede,
}

impl Activity {
    pub const ALL: [Activity; 8] = [
        Activity::HorizontalLine,
        Activity::VerticalOscillation,
        Activity::Circle,
        Activity::Zigzag,
        Activity::Spiral,
        Activity::DepthLine,
        Activity::Approach,
        Activity::Recede,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activity::HorizontalLine => "horizontal_line",
            Activity::VerticalOscillation => "vertical_oscillation",
            Activity::Circle => "circle",
            Activity::Zigzag => "zigzag",
            Activity::Spiral => "spiral",
            Activity::DepthLine => "depth_line",
            Activity::Approach => "approach",
            Activity::Recede => "recede",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activity::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| Error::Parse(format!("unknown activity `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub classes: Vec<Activity>,
    pub actors: usize,
    pub repetitions: usize,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub focal: f64,
    pub baseline: f64,
    pub vergence: f64,
    pub noise_sigma: f64,
    /// Projected object side in pixels at the reference depth.
    pub object_px: f64,
    pub seed: u64,
}

/// Depth at which path sizes are laid out.
const REFERENCE_DEPTH: f64 = 3.0;

impl DatasetSpec {
    /// Six 2D-distinguishable activities, 8 actors, 4 repetitions, 64×48, 40 frames.
    pub fn recognition(seed: u64) -> Self {
        Self {
            classes: Activity::ALL[..6].to_vec(),
            actors: 8,
            repetitions: 4,
            width: 64,
            height: 48,
            frames: 40,
            focal: 60.0,
            baseline: 0.5,
            vergence: 0.0,
            noise_sigma: 2.0,
            object_px: 14.0,
            seed,
        }
    }

    /// Approach against recede: identical left clips, opposite depth motion.
    pub fn depth_pair(seed: u64) -> Self {
        Self { classes: vec![Activity::Approach, Activity::Recede], width: 96, height: 72, focal: 90.0, baseline: 0.8, object_px: 28.0, ..Self::recognition(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 || self.actors < 2 || self.repetitions < 1 {
            return Err(Error::InvalidArgument("a dataset needs >= 2 classes, >= 2 actors and >= 1 repetition".into()));
        }
        if self.width < 16 || self.height < 16 || self.frames < 2 {
            return Err(Error::InvalidArgument("dataset frames must be at least 16x16 and clips at least 2 frames".into()));
        }
        if !(self.focal > 0.0 && self.baseline > 0.0 && self.object_px > 0.0) {
            return Err(Error::InvalidArgument("focal, baseline and object size must be positive".into()));
        }
        Ok(())
    }
}

/// One video of a dataset and the scene that renders it.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSpec {
    pub clip_id: String,
    pub label: String,
    pub actor: String,
    pub scene: SceneSpec,
}

/// Per-video motion style.
#[derive(Debug, Clone, Copy)]
struct Style {
    speed: f64,
    phase: f64,
    size: f64,
    dx: f64,
    dy: f64,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(17)
}

fn style(seed: u64, actor: usize, rep: usize) -> Style {
    let mut ra = ChaCha8Rng::seed_from_u64(mix(seed, actor as u64 + 1, 0));
    let mut rr = ChaCha8Rng::seed_from_u64(mix(seed, actor as u64 + 1, rep as u64 + 1));
    Style {
        speed: ra.random_range(0.85..1.15) * rr.random_range(0.95..1.05),
        phase: ra.random_range(0.0..2.0 * PI) + rr.random_range(-0.3..0.3),
        size: ra.random_range(0.9..1.1),
        dx: ra.random_range(-3.0..3.0) + rr.random_range(-1.5..1.5),
        dy: ra.random_range(-2.0..2.0) + rr.random_range(-1.0..1.0),
    }
}

impl DatasetSpec {
    /// Pixel offsets from the image centre at the reference depth, in world units.
    fn world(&self, px: f64) -> f64 {
        px * REFERENCE_DEPTH / self.focal
    }

    fn path(&self, class: Activity, s: &Style) -> ObjectPath {
        let z = REFERENCE_DEPTH;
        let w = |px: f64| self.world(px);
        let (cx, cy) = (w(s.dx), w(s.dy));
        let n = self.frames as f64;
        match class {
            Activity::HorizontalLine => {
                let v = 0.75 * s.speed;
                ObjectPath::Line { start: [cx - w(v * n / 2.0), cy, z], velocity: [w(v), 0.0, 0.0] }
            }
            Activity::VerticalOscillation => ObjectPath::Sine {
                start: [cx, cy, z],
                velocity: [0.0; 3],
                amplitude: [0.0, w(7.0), 0.0],
                period: 12.0 / s.speed,
                phase: s.phase,
            },
            Activity::Circle => ObjectPath::Circle { center: [cx, cy, z], radius: w(7.0), period: 20.0 / s.speed, phase: s.phase },
            Activity::Zigzag => {
                let v = 0.5 * s.speed;
                ObjectPath::Zigzag {
                    start: [cx - w(v * n / 2.0), cy, z],
                    velocity: [w(v), 0.0, 0.0],
                    amplitude: [0.0, w(5.0), 0.0],
                    period: 12.0 / s.speed,
                    phase: s.phase,
                }
            }
            Activity::Spiral => ObjectPath::Spiral {
                center: [cx, cy, z],
                radius: w(1.0),
                radius_rate: w(0.3 * s.speed),
                period: 14.0 / s.speed,
                phase: s.phase,
            },
            Activity::DepthLine => {
                let (z0, z1) = (4.5, 4.5 - 2.6 * s.speed.min(1.1));
                let vz = (z1 - z0) / (n - 1.0);
                let vx = w(0.3 * s.speed) * z1 / z;
                let x0 = cx * z1 / z + self.baseline / 2.0 - vx * (n - 1.0) / 2.0;
                ObjectPath::Line { start: [x0, cy * z1 / z, z0], velocity: [vx, 0.0, vz] }
            }
            Activity::Approach | Activity::Recede => {
                let (u, v) = ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0);
                let (du, dv) = (0.3 * s.speed, 0.45 * s.speed);
                let (near, far) = (2.5, 5.0);
                let (z0, z1) = if class == Activity::Approach { (far, near) } else { (near, far) };
                let shift = self.focal * self.baseline * (1.0 / near + 1.0 / far) / 4.0;
                ObjectPath::Screen { u0: u + shift + s.dx - du * n / 2.0, v0: v + s.dy - dv * n / 2.0, du, dv, z0, z1 }
            }
        }
    }

    /// Scene for one (class, actor, repetition). Textures, noise and static
    /// geometry depend only on the actor and repetition.
    pub fn scene(&self, class: Activity, actor: usize, rep: usize) -> SceneSpec {
        let s = style(self.seed, actor, rep);
        let base = mix(self.seed, actor as u64 + 1, rep as u64 + 1);
        let px = self.object_px * s.size;
        let mut object = ObjectSpec::new(self.path(class, &s), self.world(px), base ^ 0x0b1e);
        object.texels = 4;
        if matches!(class, Activity::Approach | Activity::Recede) {
            object.apparent = Some(px);
        }
        let (hw, hh) = (self.world(self.width as f64 / 2.0), self.world(self.height as f64 / 2.0));
        let panel = |sx: f64, sy: f64, depth: f64, tex: u64| PanelSpec {
            center: [sx * hw * depth / REFERENCE_DEPTH, sy * hh * depth / REFERENCE_DEPTH, depth],
            width: 0.7 * hw * depth / REFERENCE_DEPTH,
            height: 0.6 * hh * depth / REFERENCE_DEPTH,
            texel: None,
            texture: base ^ tex,
        };
        SceneSpec {
            focal: self.focal,
            baseline: self.baseline,
            width: self.width,
            height: self.height,
            frames: self.frames,
            noise_sigma: self.noise_sigma,
            seed: base,
            frame_rate: crate::media::DEFAULT_FRAME_RATE,
            vergence: self.vergence,
            wall: Some(WallSpec { depth: 8.0, texel: None, texture: base ^ 0x3a11 }),
            panels: vec![panel(-0.85, -0.8, 6.0, 0x9a01), panel(0.8, 0.85, 6.5, 0x9a02)],
            objects: vec![object],
        }
    }

    /// All videos, ordered by class, actor, repetition.
    pub fn videos(&self) -> Result<Vec<VideoSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        for &class in &self.classes {
            for actor in 0..self.actors {
                for rep in 0..self.repetitions {
                    out.push(VideoSpec {
                        clip_id: format!("{class}-a{actor}-r{rep}"),
                        label: class.name().to_string(),
                        actor: format!("a{actor}"),
                        scene: self.scene(class, actor, rep),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Renders the left and right clips of a video, tagged with its id.
pub fn render_video(video: &VideoSpec) -> Result<(Clip, Clip)> {
    let (mut left, mut right, _) = synth_stereo(&video.scene)?;
    left.clip_id = video.clip_id.clone();
    right.clip_id = video.clip_id.clone();
    Ok((left, right))
}

/// One manifest row: `clip_id label actor`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub label: String,
    pub actor: String,
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries.iter().map(|e| format!("{} {} {}\n", e.clip_id, e.label, e.actor)).collect()
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("manifest line {}: expected `clip_id label actor`", lineno + 1)));
        }
        out.push(ManifestEntry { clip_id: f[0].into(), label: f[1].into(), actor: f[2].into() });
    }
    if out.is_empty() {
        return Err(Error::Parse("manifest lists no videos".into()));
    }
    Ok(out)
}

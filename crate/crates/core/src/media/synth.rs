//! Synthetic stereo scenes with exact geometry.
//!
//! The world frame is the left camera frame before vergence: the left camera sits
//! at the origin, the right camera at `(baseline, 0, 0)`, both looking down +Z.
//! A non-zero vergence turns each camera by half the angle towards the other.
//! Moving objects and static panels are fronto-parallel textured rectangles; an
//! optional textured wall closes the scene.
//!
//! Scene files are `key=value` lines (`#` starts a comment):
//!
//! ```text
//! focal=60          # pixels
//! baseline=0.5      # world units
//! width=64
//! height=48
//! frames=40
//! noise_sigma=2
//! seed=7
//! frame_rate=30
//! vergence=0        # degrees, total angle between optical axes
//! wall=12;texture=3                   # depth[;texel=<world>][;texture=<seed>]
//! panel=-1,0.5,8,1.5,1.2;texture=4    # cx,cy,cz,width,height[;texel=..][;texture=..]
//! object=line:0,0,3,0.01,0,0;size=0.5;texture=9
//! ```
//!
//! Object path kinds (positions in world units, time in frames):
//!
//! * `static:x,y,z`
//! * `line:x,y,z,vx,vy,vz`
//! * `sine:x,y,z,vx,vy,vz,ax,ay,az,period,phase` (line plus sinusoid)
//! * `zigzag:x,y,z,vx,vy,vz,ax,ay,az,period,phase` (line plus triangle wave)
//! * `circle:cx,cy,cz,radius,period,phase` (in the X-Y plane)
//! * `spiral:cx,cy,cz,r0,r_rate,period,phase`
//! * `screen:u0,v0,du,dv,z0,z1` (left-image centre moves linearly in pixels
//!   while its left-camera depth goes linearly from `z0` to `z1`)
//!
//! Object options: `size=<world>` side length, `apparent=<px>` to keep the
//! projected side constant regardless of depth, `texture=<seed>`, `texels=<n>`.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Camera, Clip, Frame};
use crate::stereo::canonicalize_fundamental;
use crate::{Error, Result};

const SUPERSAMPLE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectPath {
    Static { center: [f64; 3] },
    Line { start: [f64; 3], velocity: [f64; 3] },
    Sine { start: [f64; 3], velocity: [f64; 3], amplitude: [f64; 3], period: f64, phase: f64 },
    Zigzag { start: [f64; 3], velocity: [f64; 3], amplitude: [f64; 3], period: f64, phase: f64 },
    Circle { center: [f64; 3], radius: f64, period: f64, phase: f64 },
    Spiral { center: [f64; 3], radius: f64, radius_rate: f64, period: f64, phase: f64 },
    Screen { u0: f64, v0: f64, du: f64, dv: f64, z0: f64, z1: f64 },
}

fn add_scaled(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s]
}

fn triangle_wave(x: f64) -> f64 {
    // period 2π, range [-1, 1], matches sin at its extrema
    let u = (x / (2.0 * PI) + 0.25).rem_euclid(1.0);
    if u < 0.5 {
        4.0 * u - 1.0
    } else {
        3.0 - 4.0 * u
    }
}

impl ObjectPath {
    /// World-space centre at time `t` (frames).
    pub fn center(&self, t: f64, rig: &StereoRig, frames: usize) -> Vector3<f64> {
        let p = match *self {
            ObjectPath::Static { center } => center,
            ObjectPath::Line { start, velocity } => add_scaled(start, velocity, t),
            ObjectPath::Sine { start, velocity, amplitude, period, phase } => {
                let base = add_scaled(start, velocity, t);
                add_scaled(base, amplitude, (2.0 * PI * t / period + phase).sin())
            }
            ObjectPath::Zigzag { start, velocity, amplitude, period, phase } => {
                let base = add_scaled(start, velocity, t);
                add_scaled(base, amplitude, triangle_wave(2.0 * PI * t / period + phase))
            }
            ObjectPath::Circle { center, radius, period, phase } => {
                let a = 2.0 * PI * t / period + phase;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin(), center[2]]
            }
            ObjectPath::Spiral { center, radius, radius_rate, period, phase } => {
                let a = 2.0 * PI * t / period + phase;
                let r = radius + radius_rate * t;
                [center[0] + r * a.cos(), center[1] + r * a.sin(), center[2]]
            }
            ObjectPath::Screen { u0, v0, du, dv, z0, z1 } => {
                let span = (frames.max(2) - 1) as f64;
                let depth = z0 + (z1 - z0) * t / span;
                let c = rig.left.backproject(u0 + du * t, v0 + dv * t, depth);
                [c.x, c.y, c.z]
            }
        };
        Vector3::new(p[0], p[1], p[2])
    }

    fn kind(&self) -> &'static str {
        match self {
            ObjectPath::Static { .. } => "static",
            ObjectPath::Line { .. } => "line",
            ObjectPath::Sine { .. } => "sine",
            ObjectPath::Zigzag { .. } => "zigzag",
            ObjectPath::Circle { .. } => "circle",
            ObjectPath::Spiral { .. } => "spiral",
            ObjectPath::Screen { .. } => "screen",
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            ObjectPath::Static { center } => center.to_vec(),
            ObjectPath::Line { start, velocity } => [start, velocity].concat(),
            ObjectPath::Sine { start, velocity, amplitude, period, phase }
            | ObjectPath::Zigzag { start, velocity, amplitude, period, phase } => {
                let mut v = [start, velocity, amplitude].concat();
                v.extend([period, phase]);
                v
            }
            ObjectPath::Circle { center, radius, period, phase } => {
                let mut v = center.to_vec();
                v.extend([radius, period, phase]);
                v
            }
            ObjectPath::Spiral { center, radius, radius_rate, period, phase } => {
                let mut v = center.to_vec();
                v.extend([radius, radius_rate, period, phase]);
                v
            }
            ObjectPath::Screen { u0, v0, du, dv, z0, z1 } => vec![u0, v0, du, dv, z0, z1],
        }
    }

    fn from_parts(kind: &str, p: &[f64]) -> Result<Self> {
        let need = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(Error::Parse(format!("path `{kind}` takes {n} parameters, got {}", p.len())))
            }
        };
        let v3 = |i: usize| [p[i], p[i + 1], p[i + 2]];
        Ok(match kind {
            "static" => {
                need(3)?;
                ObjectPath::Static { center: v3(0) }
            }
            "line" => {
                need(6)?;
                ObjectPath::Line { start: v3(0), velocity: v3(3) }
            }
            "sine" | "zigzag" => {
                need(11)?;
                let (start, velocity, amplitude, period, phase) = (v3(0), v3(3), v3(6), p[9], p[10]);
                if period == 0.0 {
                    return Err(Error::Parse("period must be non-zero".into()));
                }
                if kind == "sine" {
                    ObjectPath::Sine { start, velocity, amplitude, period, phase }
                } else {
                    ObjectPath::Zigzag { start, velocity, amplitude, period, phase }
                }
            }
            "circle" => {
                need(6)?;
                ObjectPath::Circle { center: v3(0), radius: p[3], period: p[4], phase: p[5] }
            }
            "spiral" => {
                need(7)?;
                ObjectPath::Spiral { center: v3(0), radius: p[3], radius_rate: p[4], period: p[5], phase: p[6] }
            }
            "screen" => {
                need(6)?;
                ObjectPath::Screen { u0: p[0], v0: p[1], du: p[2], dv: p[3], z0: p[4], z1: p[5] }
            }
            other => return Err(Error::Parse(format!("unknown path kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub path: ObjectPath,
    /// Side length in world units.
    pub size: f64,
    /// When set, the side is rescaled every frame so the projection spans this many pixels.
    pub apparent: Option<f64>,
    pub texture: u64,
    pub texels: usize,
}

impl ObjectSpec {
    pub fn new(path: ObjectPath, size: f64, texture: u64) -> Self {
        Self { path, size, apparent: None, texture, texels: 6 }
    }

    fn side_at(&self, depth: f64, focal: f64) -> f64 {
        self.apparent.map_or(self.size, |px| px * depth / focal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub center: [f64; 3],
    pub width: f64,
    pub height: f64,
    pub texel: Option<f64>,
    pub texture: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallSpec {
    pub depth: f64,
    pub texel: Option<f64>,
    pub texture: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub focal: f64,
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub frame_rate: f64,
    /// Total angle between the two optical axes, degrees.
    pub vergence: f64,
    pub wall: Option<WallSpec>,
    pub panels: Vec<PanelSpec>,
    pub objects: Vec<ObjectSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            focal: 500.0,
            baseline: 0.3,
            width: 640,
            height: 480,
            frames: 40,
            noise_sigma: 2.0,
            seed: 0,
            frame_rate: super::DEFAULT_FRAME_RATE,
            vergence: 0.0,
            wall: Some(WallSpec { depth: 20.0, texel: None, texture: 1 }),
            panels: Vec::new(),
            objects: Vec::new(),
        }
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}`"))))
        .collect()
}

fn split_options(value: &str) -> (&str, Vec<(&str, &str)>) {
    let mut parts = value.split(';');
    let head = parts.next().unwrap_or("").trim();
    let opts = parts
        .filter_map(|p| p.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();
    (head, opts)
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
}

impl FromStr for SceneSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut spec = SceneSpec { wall: None, ..SceneSpec::default() };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "focal" => spec.focal = parse_num(key, value)?,
                "baseline" => spec.baseline = parse_num(key, value)?,
                "width" => spec.width = parse_num(key, value)?,
                "height" => spec.height = parse_num(key, value)?,
                "frames" => spec.frames = parse_num(key, value)?,
                "noise_sigma" => spec.noise_sigma = parse_num(key, value)?,
                "seed" => spec.seed = parse_num(key, value)?,
                "frame_rate" => spec.frame_rate = parse_num(key, value)?,
                "vergence" => spec.vergence = parse_num(key, value)?,
                "wall" => {
                    let (head, opts) = split_options(value);
                    let mut wall = WallSpec { depth: parse_num(key, head)?, texel: None, texture: 1 };
                    for (k, v) in opts {
                        match k {
                            "texel" => wall.texel = Some(parse_num(k, v)?),
                            "texture" => wall.texture = parse_num(k, v)?,
                            _ => return Err(Error::Parse(format!("unknown wall option `{k}`"))),
                        }
                    }
                    spec.wall = Some(wall);
                }
                "panel" => {
                    let (head, opts) = split_options(value);
                    let p = parse_floats(head)?;
                    if p.len() != 5 {
                        return Err(Error::Parse(format!("panel takes 5 numbers, got {}", p.len())));
                    }
                    let mut panel =
                        PanelSpec { center: [p[0], p[1], p[2]], width: p[3], height: p[4], texel: None, texture: 0 };
                    for (k, v) in opts {
                        match k {
                            "texel" => panel.texel = Some(parse_num(k, v)?),
                            "texture" => panel.texture = parse_num(k, v)?,
                            _ => return Err(Error::Parse(format!("unknown panel option `{k}`"))),
                        }
                    }
                    spec.panels.push(panel);
                }
                "object" => {
                    let (head, opts) = split_options(value);
                    let (kind, params) = head
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("object `{head}` lacks `kind:params`")))?;
                    let path = ObjectPath::from_parts(kind.trim(), &parse_floats(params)?)?;
                    let mut obj = ObjectSpec::new(path, 0.5, spec.objects.len() as u64 + 100);
                    for (k, v) in opts {
                        match k {
                            "size" => obj.size = parse_num(k, v)?,
                            "apparent" => obj.apparent = Some(parse_num(k, v)?),
                            "texture" => obj.texture = parse_num(k, v)?,
                            "texels" => obj.texels = parse_num(k, v)?,
                            _ => return Err(Error::Parse(format!("unknown object option `{k}`"))),
                        }
                    }
                    spec.objects.push(obj);
                }
                other => return Err(Error::Parse(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for SceneSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "focal={}", self.focal)?;
        writeln!(f, "baseline={}", self.baseline)?;
        writeln!(f, "width={}", self.width)?;
        writeln!(f, "height={}", self.height)?;
        writeln!(f, "frames={}", self.frames)?;
        writeln!(f, "noise_sigma={}", self.noise_sigma)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "frame_rate={}", self.frame_rate)?;
        writeln!(f, "vergence={}", self.vergence)?;
        if let Some(w) = &self.wall {
            write!(f, "wall={};texture={}", w.depth, w.texture)?;
            if let Some(t) = w.texel {
                write!(f, ";texel={t}")?;
            }
            writeln!(f)?;
        }
        for p in &self.panels {
            let c = p.center;
            write!(f, "panel={},{},{},{},{};texture={}", c[0], c[1], c[2], p.width, p.height, p.texture)?;
            if let Some(t) = p.texel {
                write!(f, ";texel={t}")?;
            }
            writeln!(f)?;
        }
        for o in &self.objects {
            let mut params = String::new();
            for (i, v) in o.path.params().iter().enumerate() {
                if i > 0 {
                    params.push(',');
                }
                write!(params, "{v}")?;
            }
            write!(f, "object={}:{};size={};texture={};texels={}", o.path.kind(), params, o.size, o.texture, o.texels)?;
            if let Some(a) = o.apparent {
                write!(f, ";apparent={a}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Pinhole camera with square pixels and principal point at the image centre.
#[derive(Debug, Clone, PartialEq)]
pub struct PinholeCamera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl PinholeCamera {
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (p - self.center)
    }

    /// Pixel coordinates (pixel centres are integers), or `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        let c = self.to_camera(p);
        (c.z > 0.0).then(|| (self.focal * c.x / c.z + self.cx, self.focal * c.y / c.z + self.cy))
    }

    /// World-space viewing direction through pixel `(u, v)`, with unit camera-frame depth.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let d = Vector3::new((u - self.cx) / self.focal, (v - self.cy) / self.focal, 1.0);
        self.rotation.transpose() * d
    }

    /// World point seen at pixel `(u, v)` at camera-frame depth `depth`.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        self.center + self.ray(u, v) * depth
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.focal, 0.0, self.cx, 0.0, self.focal, self.cy, 0.0, 0.0, 1.0)
    }
}

fn rotation_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoRig {
    pub left: PinholeCamera,
    pub right: PinholeCamera,
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(focal: f64, baseline: f64, width: usize, height: usize, vergence_deg: f64) -> Self {
        let half = vergence_deg.to_radians() / 2.0;
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        // camera-to-world rotations turn each optical axis towards the other camera
        let left = PinholeCamera { focal, cx, cy, rotation: rotation_y(half).transpose(), center: Vector3::zeros() };
        let right = PinholeCamera {
            focal,
            cx,
            cy,
            rotation: rotation_y(-half).transpose(),
            center: Vector3::new(baseline, 0.0, 0.0),
        };
        Self { left, right, baseline }
    }

    pub fn from_spec(spec: &SceneSpec) -> Self {
        Self::new(spec.focal, spec.baseline, spec.width, spec.height, spec.vergence)
    }

    /// Exact fundamental matrix with `p_leftᵀ F p_right = 0`, unit Frobenius norm.
    pub fn fundamental(&self) -> Matrix3<f64> {
        let r = self.left.rotation * self.right.rotation.transpose();
        let t = self.left.rotation * (self.right.center - self.left.center);
        let e = t.cross_matrix() * r;
        let kl = self.left.intrinsics().try_inverse().expect("intrinsics invertible");
        let kr = self.right.intrinsics().try_inverse().expect("intrinsics invertible");
        canonicalize_fundamental(&(kl.transpose() * e * kr))
    }

    pub fn is_parallel(&self) -> bool {
        self.left.rotation == Matrix3::identity() && self.right.rotation == Matrix3::identity()
    }
}

/// Per-frame geometry of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTruth {
    pub centers: Vec<Vector3<f64>>,
    pub left: Vec<(f64, f64)>,
    pub right: Vec<(f64, f64)>,
    /// `u_left − u_right` of the projected centre.
    pub disparity: Vec<f64>,
    /// Projected side length in the left image, pixels.
    pub apparent_size: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub rig: StereoRig,
    pub fundamental: Matrix3<f64>,
    pub objects: Vec<ObjectTruth>,
}

impl GroundTruth {
    /// Left-image motion of object `obj` between frames `t` and `t + 1`.
    pub fn flow(&self, obj: usize, t: usize) -> (f64, f64) {
        let o = &self.objects[obj];
        (o.left[t + 1].0 - o.left[t].0, o.left[t + 1].1 - o.left[t].1)
    }

    /// Rectifying homographies when the rig is already rectified.
    pub fn rectification(&self) -> Option<(Matrix3<f64>, Matrix3<f64>)> {
        self.rig.is_parallel().then(|| (Matrix3::identity(), Matrix3::identity()))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn texel_value(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((ix as u64).wrapping_mul(0x1_0000_0001) ^ splitmix(iy as u64)));
    let noise = (h >> 11) as f64 / (1u64 << 53) as f64;
    let checker = (ix.div_euclid(2) + iy.div_euclid(2)).rem_euclid(2) as f64;
    40.0 + 70.0 * checker + 140.0 * noise
}

struct Surface {
    z: f64,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    /// Texture grid origin.
    ox: f64,
    oy: f64,
    texel: f64,
    texture: u64,
}

impl Surface {
    fn shade(&self, x: f64, y: f64) -> Option<f64> {
        if x < self.x0 || x >= self.x1 || y < self.y0 || y >= self.y1 {
            return None;
        }
        let ix = ((x - self.ox) / self.texel).floor() as i64;
        let iy = ((y - self.oy) / self.texel).floor() as i64;
        Some(texel_value(self.texture, ix, iy))
    }
}

/// Nearest hit among `surfaces` along ray `d` from `origin`; the first surface wins ties.
fn nearest(origin: &Vector3<f64>, d: &Vector3<f64>, surfaces: &[Surface], mut best: Option<(f64, f64)>) -> Option<(f64, f64)> {
    if d.z <= 0.0 {
        return best;
    }
    for surf in surfaces {
        let tau = (surf.z - origin.z) / d.z;
        if tau <= 0.0 || best.is_some_and(|(bt, _)| bt <= tau) {
            continue;
        }
        if let Some(val) = surf.shade(origin.x + tau * d.x, origin.y + tau * d.y) {
            best = Some((tau, val));
        }
    }
    best
}

/// Per-camera rays and static-scene hits for every subsample, so that only
/// pixels near a moving object need tracing on each frame.
struct Backdrop {
    rays: Vec<Vector3<f64>>,
    hits: Vec<Option<(f64, f64)>>,
    pixels: Vec<f64>,
}

const SAMPLES: usize = SUPERSAMPLE * SUPERSAMPLE;

impl Backdrop {
    fn new(cam: &PinholeCamera, statics: &[Surface], width: usize, height: usize) -> Self {
        let s = SUPERSAMPLE as f64;
        let mut rays = Vec::with_capacity(width * height * SAMPLES);
        for y in 0..height {
            for x in 0..width {
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        rays.push(cam.ray(x as f64 + (sx as f64 + 0.5) / s - 0.5, y as f64 + (sy as f64 + 0.5) / s - 0.5));
                    }
                }
            }
        }
        let hits: Vec<_> = rays.iter().map(|d| nearest(&cam.center, d, statics, None)).collect();
        let pixels = hits.chunks(SAMPLES).map(|c| Self::average(c.iter().copied())).collect();
        Self { rays, hits, pixels }
    }

    fn average(hits: impl Iterator<Item = Option<(f64, f64)>>) -> f64 {
        let mut acc = 0.0;
        for h in hits {
            acc += h.map_or(128.0, |(_, v)| v);
        }
        acc / SAMPLES as f64
    }

    /// Renders `objects` in front of the backdrop; objects win ties with the backdrop.
    fn render(&self, cam: &PinholeCamera, objects: &[Surface], width: usize, height: usize) -> Vec<f64> {
        let mut out = self.pixels.clone();
        let mut touched = vec![false; width * height];
        for o in objects {
            let corners = [(o.x0, o.y0), (o.x1, o.y0), (o.x0, o.y1), (o.x1, o.y1)].map(|(x, y)| cam.project(&Vector3::new(x, y, o.z)));
            let (x0, x1, y0, y1) = if corners.iter().all(Option::is_some) {
                let c = corners.map(Option::unwrap);
                let (umin, umax) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
                let (vmin, vmax) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
                let clamp = |v: f64, n: usize| v.clamp(0.0, n as f64) as usize;
                (clamp((umin - 1.0).floor(), width), clamp((umax + 2.0).ceil(), width), clamp((vmin - 1.0).floor(), height), clamp((vmax + 2.0).ceil(), height))
            } else {
                (0, width, 0, height)
            };
            for y in y0..y1 {
                touched[y * width + x0..y * width + x1].iter_mut().for_each(|t| *t = true);
            }
        }
        for (i, _) in touched.iter().enumerate().filter(|(_, &t)| t) {
            let range = i * SAMPLES..(i + 1) * SAMPLES;
            let hits = self.rays[range.clone()].iter().zip(&self.hits[range]).map(|(d, &back)| match nearest(&cam.center, d, objects, None) {
                Some(front) if back.is_none_or(|(bt, _)| front.0 <= bt) => Some(front),
                _ => back,
            });
            out[i] = Self::average(hits);
        }
        out
    }
}

fn quantize(values: &[f64], sigma: f64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
    values
        .iter()
        .map(|&v| {
            let noisy = v + normal.as_ref().map_or(0.0, |n| n.sample(&mut rng));
            noisy.round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return Err(Error::InvalidArgument(format!("focal must be positive, got {}", self.focal)));
        }
        if !(self.baseline > 0.0) {
            return Err(Error::InvalidArgument(format!("baseline must be positive, got {}", self.baseline)));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::InvalidArgument("image size must be at least 1x1".into()));
        }
        if self.frames < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 frames, got {}", self.frames)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise_sigma must be non-negative".into()));
        }
        if self.objects.iter().any(|o| o.texels == 0) {
            return Err(Error::InvalidArgument("texels must be at least 1".into()));
        }
        Ok(())
    }
}

/// Renders the left and right clips of `spec` with their exact geometry.
/// Output is a pure function of `spec`.
pub fn synth_stereo(spec: &SceneSpec) -> Result<(Clip, Clip, GroundTruth)> {
    spec.validate()?;
    let rig = StereoRig::from_spec(spec);
    let (w, h) = (spec.width as f64, spec.height as f64);

    let mut objects = Vec::with_capacity(spec.objects.len());
    for (i, obj) in spec.objects.iter().enumerate() {
        let mut truth = ObjectTruth {
            centers: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            disparity: Vec::new(),
            apparent_size: Vec::new(),
        };
        let mut ever_visible = false;
        for t in 0..spec.frames {
            let c = obj.path.center(t as f64, &rig, spec.frames);
            let (zl, zr) = (rig.left.to_camera(&c).z, rig.right.to_camera(&c).z);
            if !(zl > 0.0 && zr > 0.0 && c.z > 0.0) {
                return Err(Error::InvalidArgument(format!("object {i} is not in front of both cameras at frame {t}")));
            }
            let pl = rig.left.project(&c).expect("positive depth");
            let pr = rig.right.project(&c).expect("positive depth");
            ever_visible |= pl.0 >= -0.5 && pl.0 < w - 0.5 && pl.1 >= -0.5 && pl.1 < h - 0.5;
            truth.apparent_size.push(rig.left.focal * obj.side_at(c.z, spec.focal) / zl);
            truth.centers.push(c);
            truth.disparity.push(pl.0 - pr.0);
            truth.left.push(pl);
            truth.right.push(pr);
        }
        if !ever_visible {
            return Err(Error::InvalidArgument(format!("object {i} projects outside the image in every frame")));
        }
        objects.push(truth);
    }

    let mut statics = Vec::new();
    for p in &spec.panels {
        let texel = p.texel.unwrap_or(3.0 * p.center[2] / spec.focal);
        statics.push(Surface {
            z: p.center[2],
            x0: p.center[0] - p.width / 2.0,
            y0: p.center[1] - p.height / 2.0,
            x1: p.center[0] + p.width / 2.0,
            y1: p.center[1] + p.height / 2.0,
            ox: p.center[0] - p.width / 2.0,
            oy: p.center[1] - p.height / 2.0,
            texel,
            texture: p.texture,
        });
    }
    if let Some(wall) = &spec.wall {
        let texel = wall.texel.unwrap_or(3.0 * wall.depth / spec.focal);
        statics.push(Surface {
            z: wall.depth,
            x0: f64::NEG_INFINITY,
            y0: f64::NEG_INFINITY,
            x1: f64::INFINITY,
            y1: f64::INFINITY,
            ox: 0.0,
            oy: 0.0,
            texel,
            texture: wall.texture,
        });
    }

    let backdrops = [&rig.left, &rig.right].map(|cam| Backdrop::new(cam, &statics, spec.width, spec.height));
    let render_frame = |cam: &PinholeCamera, camera_tag: u64, t: usize| -> Frame {
        let surfaces: Vec<Surface> = spec
            .objects
            .iter()
            .zip(&objects)
            .map(|(obj, truth)| {
                let c = truth.centers[t];
                let side = obj.side_at(c.z, spec.focal);
                let texel = side / obj.texels as f64;
                Surface {
                    z: c.z,
                    x0: c.x - side / 2.0,
                    y0: c.y - side / 2.0,
                    x1: c.x + side / 2.0,
                    y1: c.y + side / 2.0,
                    ox: c.x - side / 2.0,
                    oy: c.y - side / 2.0,
                    texel,
                    texture: obj.texture,
                }
            })
            .collect();
        let values = backdrops[camera_tag as usize - 1].render(cam, &surfaces, spec.width, spec.height);
        let noise_seed = splitmix(spec.seed ^ splitmix(camera_tag.wrapping_mul(1_000_003) + t as u64));
        Frame { width: spec.width, height: spec.height, channels: 1, data: quantize(&values, spec.noise_sigma, noise_seed) }
    };

    let jobs: Vec<(usize, usize)> = (0..2).flat_map(|c| (0..spec.frames).map(move |t| (c, t))).collect();
    let mut rendered: Vec<Frame> = jobs
        .par_iter()
        .map(|&(c, t)| if c == 0 { render_frame(&rig.left, 1, t) } else { render_frame(&rig.right, 2, t) })
        .collect();
    let right_frames = rendered.split_off(spec.frames);
    let clip_id = format!("scene{}", spec.seed);
    let left = Clip::new(clip_id.clone(), Camera::Left, spec.frame_rate, rendered)?;
    let right = Clip::new(clip_id, Camera::Right, spec.frame_rate, right_frames)?;
    let fundamental = rig.fundamental();
    Ok((left, right, GroundTruth { rig, fundamental, objects }))
}

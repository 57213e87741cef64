use std::fmt;
use std::str::FromStr;

use crate::classify::SvmParams;
use crate::flowfields::{FarnebackParams, LkParams, DEFAULT_PYRAMID_LEVELS, DEFAULT_WINDOW};
use crate::keypoints::{DEFAULT_FAST_THRESHOLD, DEFAULT_MATCH_RATIO, DEFAULT_PATCH};
use crate::roi::RoiParams;
use crate::shape::{DEFAULT_ORDER_2D, MAX_ORDER};
use crate::stereo::CalibrationParams;
use crate::tracking::{Algorithm, TrackingParams, DEFAULT_JUMP_EPS, DEFAULT_LAMBDA1, DEFAULT_LENGTH_2D, DEFAULT_STATIC_EPS};
use crate::{Error, Result};

/// Which camera streams feed the 2D pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraSet {
    Left,
    Right,
    Both,
}

/// How two camera streams are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stacking {
    /// Descriptors of both cameras share one codebook and one Fisher vector.
    Pool,
    /// One codebook and Fisher vector per camera, concatenated.
    Concat,
}

impl fmt::Display for CameraSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CameraSet::Left => "left",
            CameraSet::Right => "right",
            CameraSet::Both => "both",
        })
    }
}

impl FromStr for CameraSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(CameraSet::Left),
            "right" => Ok(CameraSet::Right),
            "both" => Ok(CameraSet::Both),
            other => Err(Error::Parse(format!("unknown camera set `{other}` (left, right, both)"))),
        }
    }
}

impl fmt::Display for Stacking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stacking::Pool => "pool",
            Stacking::Concat => "concat",
        })
    }
}

impl FromStr for Stacking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pool" => Ok(Stacking::Pool),
            "concat" => Ok(Stacking::Concat),
            other => Err(Error::Parse(format!("unknown stacking `{other}` (pool, concat)"))),
        }
    }
}

/// Every knob of an end-to-end run, stored as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub algo: Algorithm,
    /// Trajectory length `l`.
    pub length: usize,
    /// Descriptor order `r`.
    pub order: usize,
    pub use_disparity: bool,
    /// Gaussian components.
    pub k: usize,
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub gmm_iters: usize,
    /// Cap on descriptors used to fit each codebook (0 keeps all).
    pub max_descriptors: usize,
    pub normalize: bool,
    pub standardize: bool,
    pub cameras: CameraSet,
    pub stacking: Stacking,
    pub fast_threshold: u8,
    pub match_ratio: f64,
    pub lambda1: f64,
    pub pyr_levels: usize,
    pub flow_window: usize,
    pub fb_iterations: usize,
    pub calib_m: usize,
    pub y_tol: f64,
    pub ransac_iters: usize,
    pub ransac_tol: f64,
    pub roi_warmup: usize,
    pub roi_proximity: usize,
    pub morph_radius: usize,
    pub static_eps: f64,
    pub jump_eps: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let cal = CalibrationParams::default();
        let roi = RoiParams::default();
        Self {
            algo: Algorithm::Farneback,
            length: DEFAULT_LENGTH_2D,
            order: DEFAULT_ORDER_2D,
            use_disparity: false,
            k: crate::encoding::DEFAULT_K,
            c: 1.0,
            epochs: 50,
            seed: 0,
            gmm_iters: crate::encoding::DEFAULT_MAX_ITERS,
            max_descriptors: 20_000,
            normalize: false,
            standardize: false,
            cameras: CameraSet::Left,
            stacking: Stacking::Pool,
            fast_threshold: DEFAULT_FAST_THRESHOLD,
            match_ratio: DEFAULT_MATCH_RATIO,
            lambda1: DEFAULT_LAMBDA1,
            pyr_levels: DEFAULT_PYRAMID_LEVELS,
            flow_window: DEFAULT_WINDOW,
            fb_iterations: FarnebackParams::default().iterations,
            calib_m: cal.m,
            y_tol: cal.y_tol,
            ransac_iters: cal.ransac_iters,
            ransac_tol: cal.ransac_tol,
            roi_warmup: roi.warmup,
            roi_proximity: roi.proximity,
            morph_radius: roi.morph_radius,
            static_eps: DEFAULT_STATIC_EPS,
            jump_eps: DEFAULT_JUMP_EPS,
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(invalid(format!("length {} must be at least 2", self.length)));
        }
        if self.order == 0 || self.order > MAX_ORDER.min(self.length) {
            return Err(invalid(format!("order {} outside 1..={}", self.order, MAX_ORDER.min(self.length))));
        }
        if self.k == 0 {
            return Err(invalid("k must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) || self.epochs == 0 {
            return Err(invalid(format!("SVM needs C > 0 and epochs >= 1 (got {}, {})", self.c, self.epochs)));
        }
        if self.gmm_iters == 0 {
            return Err(invalid("gmm_iters must be at least 1".into()));
        }
        if self.fast_threshold == 0 {
            return Err(invalid("fast_threshold must be positive".into()));
        }
        if !(self.match_ratio > 0.0 && self.match_ratio <= 1.0) {
            return Err(invalid(format!("match_ratio {} outside (0, 1]", self.match_ratio)));
        }
        if !(self.lambda1 >= 1.0) {
            return Err(invalid(format!("lambda1 {} must be at least 1", self.lambda1)));
        }
        if self.pyr_levels == 0 || self.flow_window < 5 || self.flow_window % 2 == 0 || self.fb_iterations == 0 {
            return Err(invalid("flow needs >= 1 pyramid level, an odd window >= 5 and >= 1 iteration".into()));
        }
        if self.calib_m == 0 || self.ransac_iters == 0 || !(self.y_tol > 0.0) || !(self.ransac_tol > 0.0) {
            return Err(invalid("calibration needs m, ransac_iters, y_tol and ransac_tol all positive".into()));
        }
        if self.morph_radius == 0 {
            return Err(invalid("morph_radius must be at least 1".into()));
        }
        if !(self.static_eps >= 0.0) || !(self.jump_eps > 0.0) {
            return Err(invalid("static_eps must be >= 0 and jump_eps > 0".into()));
        }
        if self.use_disparity && self.cameras != CameraSet::Left {
            return Err(invalid("disparity runs use left-camera trajectories; set cameras=left".into()));
        }
        Ok(())
    }

    pub fn tracking_params(&self) -> TrackingParams {
        let lk = LkParams { levels: self.pyr_levels, window: self.flow_window, ..LkParams::default() };
        let fb = FarnebackParams { levels: self.pyr_levels, window: self.flow_window, iterations: self.fb_iterations, ..FarnebackParams::default() };
        TrackingParams {
            length: self.length,
            lambda1: self.lambda1,
            fast_threshold: self.fast_threshold,
            patch: DEFAULT_PATCH,
            static_eps: self.static_eps,
            jump_eps: self.jump_eps,
            lk,
            fb,
            ..TrackingParams::default()
        }
    }

    pub fn roi_params(&self) -> RoiParams {
        RoiParams { morph_radius: self.morph_radius, proximity: self.roi_proximity, warmup: self.roi_warmup, ..RoiParams::default() }
    }

    pub fn calibration_params(&self) -> CalibrationParams {
        CalibrationParams {
            m: self.calib_m,
            y_tol: self.y_tol,
            ransac_iters: self.ransac_iters,
            ransac_tol: self.ransac_tol,
            seed: self.seed,
            match_ratio: self.match_ratio,
            fast_threshold: self.fast_threshold,
        }
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams { c: self.c, epochs: self.epochs, seed: self.seed }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Parse(format!("bad boolean `{v}` for `{key}`"))),
            }
        }
        match key {
            "algo" => self.algo = value.parse()?,
            "length" => self.length = num(key, value)?,
            "order" => self.order = num(key, value)?,
            "use_disparity" => self.use_disparity = flag(key, value)?,
            "k" => self.k = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "gmm_iters" => self.gmm_iters = num(key, value)?,
            "max_descriptors" => self.max_descriptors = num(key, value)?,
            "normalize" => self.normalize = flag(key, value)?,
            "standardize" => self.standardize = flag(key, value)?,
            "cameras" => self.cameras = value.parse()?,
            "stacking" => self.stacking = value.parse()?,
            "fast_threshold" => self.fast_threshold = num(key, value)?,
            "match_ratio" => self.match_ratio = num(key, value)?,
            "lambda1" => self.lambda1 = num(key, value)?,
            "pyr_levels" => self.pyr_levels = num(key, value)?,
            "flow_window" => self.flow_window = num(key, value)?,
            "fb_iterations" => self.fb_iterations = num(key, value)?,
            "calib_m" => self.calib_m = num(key, value)?,
            "y_tol" => self.y_tol = num(key, value)?,
            "ransac_iters" => self.ransac_iters = num(key, value)?,
            "ransac_tol" => self.ransac_tol = num(key, value)?,
            "roi_warmup" => self.roi_warmup = num(key, value)?,
            "roi_proximity" => self.roi_proximity = num(key, value)?,
            "morph_radius" => self.morph_radius = num(key, value)?,
            "static_eps" => self.static_eps = num(key, value)?,
            "jump_eps" => self.jump_eps = num(key, value)?,
            other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "algo={}", self.algo)?;
        writeln!(f, "length={}", self.length)?;
        writeln!(f, "order={}", self.order)?;
        writeln!(f, "use_disparity={}", self.use_disparity)?;
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "c={}", self.c)?;
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "gmm_iters={}", self.gmm_iters)?;
        writeln!(f, "max_descriptors={}", self.max_descriptors)?;
        writeln!(f, "normalize={}", self.normalize)?;
        writeln!(f, "standardize={}", self.standardize)?;
        writeln!(f, "cameras={}", self.cameras)?;
        writeln!(f, "stacking={}", self.stacking)?;
        writeln!(f, "fast_threshold={}", self.fast_threshold)?;
        writeln!(f, "match_ratio={}", self.match_ratio)?;
        writeln!(f, "lambda1={}", self.lambda1)?;
        writeln!(f, "pyr_levels={}", self.pyr_levels)?;
        writeln!(f, "flow_window={}", self.flow_window)?;
        writeln!(f, "fb_iterations={}", self.fb_iterations)?;
        writeln!(f, "calib_m={}", self.calib_m)?;
        writeln!(f, "y_tol={}", self.y_tol)?;
        writeln!(f, "ransac_iters={}", self.ransac_iters)?;
        writeln!(f, "ransac_tol={}", self.ransac_tol)?;
        writeln!(f, "roi_warmup={}", self.roi_warmup)?;
        writeln!(f, "roi_proximity={}", self.roi_proximity)?;
        writeln!(f, "morph_radius={}", self.morph_radius)?;
        writeln!(f, "static_eps={}", self.static_eps)?;
        writeln!(f, "jump_eps={}", self.jump_eps)
    }
}

impl FromStr for PipelineConfig {
    type Err = Error;

    /// Missing keys keep their defaults; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

//! Single-channel floating point rasters and the filtering primitives shared by
//! the flow estimators and descriptors. Borders are handled by edge replication.

use crate::media::Frame;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    /// Converts a single-channel frame.
    pub fn from_gray(frame: &Frame) -> Result<Self> {
        if frame.channels != 1 {
            return Err(Error::InvalidArgument(format!(
                "expected a grayscale frame, got {} channels",
                frame.channels
            )));
        }
        Ok(Self {
            width: frame.width,
            height: frame.height,
            data: frame.data.iter().map(|&v| v as f32).collect(),
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel lookup with replicated borders.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear interpolation with replicated borders.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let xc = x.clamp(0.0, (self.width - 1) as f32);
        let yc = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = xc - x0 as f32;
        let ay = yc - y0 as f32;
        let top = self.at(x0, y0) * (1.0 - ax) + self.at(x1, y0) * ax;
        let bottom = self.at(x0, y1) * (1.0 - ax) + self.at(x1, y1) * ax;
        top * (1.0 - ay) + bottom * ay
    }

    pub fn same_size(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Correlates rows and then columns with the given 1-D kernels (centred, odd length).
pub fn separable_filter(src: &Plane, kx: &[f32], ky: &[f32]) -> Plane {
    let (w, h) = (src.width, src.height);
    let rx = kx.len() / 2;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = Plane::new(w, h);
    let mut padded = vec![0.0f32; w + 2 * rx];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[(i as isize - rx as isize).clamp(0, w as isize - 1) as usize];
        }
        for (x, out) in tmp.data[y * w..(y + 1) * w].iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, v) in kx.iter().zip(&padded[x..x + kx.len()]) {
                acc += k * v;
            }
            *out = acc;
        }
    }
    let mut out = Plane::new(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (i, &k) in ky.iter().enumerate() {
            let sy = (y as isize + i as isize - ry).clamp(0, h as isize - 1) as usize;
            for (d, v) in dst.iter_mut().zip(&tmp.data[sy * w..(sy + 1) * w]) {
                *d += k * v;
            }
        }
    }
    out
}

/// Mean over a `size`×`size` window (odd size), replicated borders.
pub fn box_filter(src: &Plane, size: usize) -> Plane {
    let k = vec![1.0 / size as f32; size];
    separable_filter(src, &k, &k)
}

const BINOMIAL5: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// 5×5 binomial (Gaussian) smoothing followed by dropping every other row and column.
pub fn pyr_down(src: &Plane) -> Plane {
    let blurred = separable_filter(src, &BINOMIAL5, &BINOMIAL5);
    let w = src.width.div_ceil(2);
    let h = src.height.div_ceil(2);
    Plane::from_fn(w, h, |x, y| blurred.at(2 * x, 2 * y))
}

/// Gaussian pyramid, finest level first. Stops early once a level would drop
/// below `min_side` pixels on either axis.
pub fn pyramid(src: &Plane, levels: usize, min_side: usize) -> Vec<Plane> {
    let mut out = vec![src.clone()];
    while out.len() < levels {
        let last = out.last().unwrap();
        if last.width.div_ceil(2) < min_side || last.height.div_ceil(2) < min_side {
            break;
        }
        let next = pyr_down(last);
        out.push(next);
    }
    out
}

/// Central-difference gradients, replicated borders.
pub fn gradients(src: &Plane) -> (Plane, Plane) {
    let gx = Plane::from_fn(src.width, src.height, |x, y| {
        0.5 * (src.at_clamped(x as isize + 1, y as isize) - src.at_clamped(x as isize - 1, y as isize))
    });
    let gy = Plane::from_fn(src.width, src.height, |x, y| {
        0.5 * (src.at_clamped(x as isize, y as isize + 1) - src.at_clamped(x as isize, y as isize - 1))
    });
    (gx, gy)
}

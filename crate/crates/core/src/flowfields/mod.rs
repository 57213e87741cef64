//! Optical flow: sparse pyramidal Lucas-Kanade and dense Farneback
//! polynomial-expansion flow.

mod farneback;
mod lk;

pub use farneback::{farneback_flow, farneback_flow_with, farneback_sequence, FarnebackParams};
pub use lk::{lk_track, lk_track_with, LkParams, TrackResult, TrackStatus};

use crate::{Error, Result};

pub const DEFAULT_PYRAMID_LEVELS: usize = 3;
pub const DEFAULT_WINDOW: usize = 15;

/// Dense per-pixel displacement field.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, u: vec![0.0; width * height], v: vec![0.0; width * height] }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self { width, height, u: vec![u; width * height], v: vec![v; width * height] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Bilinear displacement at a subpixel position inside the field.
    pub fn sample(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return Err(Error::OutOfBounds { x, y });
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (ax, ay) = (x - x0 as f64, y - y0 as f64);
        let lerp = |c: &[f32]| {
            let g = |xx: usize, yy: usize| c[yy * self.width + xx] as f64;
            let top = g(x0, y0) * (1.0 - ax) + g(x1, y0) * ax;
            let bottom = g(x0, y1) * (1.0 - ax) + g(x1, y1) * ax;
            top * (1.0 - ay) + bottom * ay
        };
        Ok((lerp(&self.u), lerp(&self.v)))
    }
}

/// Free-function form of [`FlowField::sample`].
pub fn sample_flow(field: &FlowField, x: f64, y: f64) -> Result<(f64, f64)> {
    field.sample(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> FlowField {
        let mut f = FlowField::zeros(5, 4);
        for y in 0..4 {
            for x in 0..5 {
                f.u[y * 5 + x] = x as f32 * 1.5;
                f.v[y * 5 + x] = y as f32 - 2.0 * x as f32;
            }
        }
        f
    }

    #[test]
    fn integer_positions_return_cells() {
        let f = ramp();
        for y in 0..4 {
            for x in 0..5 {
                let (u, v) = f.sample(x as f64, y as f64).unwrap();
                assert_eq!((u as f32, v as f32), f.at(x, y));
            }
        }
    }

    #[test]
    fn midpoint_is_mean_of_neighbours() {
        let f = ramp();
        let (u, v) = f.sample(2.5, 1.0).unwrap();
        let (a, b) = (f.at(2, 1), f.at(3, 1));
        assert!((u - (a.0 + b.0) as f64 / 2.0).abs() < 1e-12);
        assert!((v - (a.1 + b.1) as f64 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_field_is_constant_everywhere() {
        let f = FlowField::constant(6, 6, 0.75, -2.0);
        for &(x, y) in &[(0.0, 0.0), (1.3, 4.9), (5.0, 5.0), (2.25, 0.5)] {
            assert_eq!(f.sample(x, y).unwrap(), (0.75, -2.0));
        }
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let f = FlowField::zeros(4, 4);
        assert!(sample_flow(&f, 3.5, 1.0).is_err());
        assert!(sample_flow(&f, -0.1, 1.0).is_err());
        assert!(sample_flow(&f, 3.0, 3.0).is_ok());
    }
}

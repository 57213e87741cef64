//! Dense two-frame motion from quadratic polynomial expansion.
//!
//! Each pixel neighbourhood is approximated as `f(p) ≈ pᵀAp + bᵀp + c` by
//! Gaussian-weighted least squares. A translation `d` turns `b` into `b − 2Ad`,
//! so the displacement follows from the coefficient difference, averaged over
//! a window and refined iteratively on a coarse-to-fine pyramid.

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use super::FlowField;
use crate::media::Frame;
use crate::plane::{box_filter, pyramid, separable_filter, Plane};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarnebackParams {
    pub levels: usize,
    /// Side of the averaging window.
    pub window: usize,
    pub iterations: usize,
    /// Side of the polynomial expansion neighbourhood.
    pub poly_size: usize,
    pub poly_sigma: f64,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        Self { levels: super::DEFAULT_PYRAMID_LEVELS, window: super::DEFAULT_WINDOW, iterations: 3, poly_size: 7, poly_sigma: 1.5 }
    }
}

/// Expansion coefficients per pixel: `b = (bx, by)`, `A = [[axx, axy], [axy, ayy]]`.
struct Expansion {
    bx: Plane,
    by: Plane,
    axx: Plane,
    ayy: Plane,
    axy: Plane,
}

fn expand(img: &Plane, size: usize, sigma: f64) -> Expansion {
    let r = (size / 2) as i32;
    let g: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let k0: Vec<f32> = g.iter().map(|&v| v as f32).collect();
    let k1: Vec<f32> = g.iter().zip(-r..=r).map(|(&v, i)| (v * i as f64) as f32).collect();
    let k2: Vec<f32> = g.iter().zip(-r..=r).map(|(&v, i)| (v * (i * i) as f64) as f32).collect();

    // basis order: 1, x, y, x², y², xy
    let powers = [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)];
    let mut gram = SMatrix::<f64, 6, 6>::zeros();
    for dy in -r..=r {
        for dx in -r..=r {
            let w = g[(dx + r) as usize] * g[(dy + r) as usize];
            let basis = SVector::<f64, 6>::from_iterator(powers.iter().map(|&(a, c)| (dx as f64).powi(a) * (dy as f64).powi(c)));
            gram += basis * basis.transpose() * w;
        }
    }
    let inv = gram.try_inverse().expect("polynomial basis gram matrix is positive definite");

    let kern = |p: i32| match p {
        0 => &k0,
        1 => &k1,
        _ => &k2,
    };
    let moments: Vec<Plane> = powers.iter().map(|&(a, c)| separable_filter(img, kern(a), kern(c))).collect();
    let n = img.data.len();
    let mut coeffs: [Vec<f32>; 6] = std::array::from_fn(|_| vec![0.0; n]);
    for i in 0..n {
        let m = SVector::<f64, 6>::from_iterator(moments.iter().map(|p| p.data[i] as f64));
        let r = inv * m;
        for (c, out) in coeffs.iter_mut().enumerate() {
            out[i] = r[c] as f32;
        }
    }
    let [_, bx, by, axx, ayy, axy2] = coeffs;
    let plane = |data: Vec<f32>| Plane { width: img.width, height: img.height, data };
    Expansion {
        bx: plane(bx),
        by: plane(by),
        axx: plane(axx),
        ayy: plane(ayy),
        axy: plane(axy2.into_iter().map(|v| 0.5 * v).collect()),
    }
}

/// One refinement: rebuild the normal equations around the current flow,
/// average them over the window and solve per pixel.
fn refine(e1: &Expansion, e2: &Expansion, flow: &mut FlowField, window: usize) {
    let (w, h) = (flow.width, flow.height);
    let mut g11 = Plane::new(w, h);
    let mut g12 = Plane::new(w, h);
    let mut g22 = Plane::new(w, h);
    let mut h1 = Plane::new(w, h);
    let mut h2 = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (du, dv) = (flow.u[i], flow.v[i]);
            let (sx, sy) = (x as f32 + du, y as f32 + dv);
            let a11 = 0.5 * (e1.axx.data[i] + e2.axx.sample(sx, sy));
            let a12 = 0.5 * (e1.axy.data[i] + e2.axy.sample(sx, sy));
            let a22 = 0.5 * (e1.ayy.data[i] + e2.ayy.sample(sx, sy));
            let db1 = -0.5 * (e2.bx.sample(sx, sy) - e1.bx.data[i]) + a11 * du + a12 * dv;
            let db2 = -0.5 * (e2.by.sample(sx, sy) - e1.by.data[i]) + a12 * du + a22 * dv;
            g11.data[i] = a11 * a11 + a12 * a12;
            g12.data[i] = a12 * (a11 + a22);
            g22.data[i] = a12 * a12 + a22 * a22;
            h1.data[i] = a11 * db1 + a12 * db2;
            h2.data[i] = a12 * db1 + a22 * db2;
        }
    }
    let [g11, g12, g22, h1, h2] = [g11, g12, g22, h1, h2].map(|p| box_filter(&p, window));
    for i in 0..w * h {
        let (a, b, c) = (g11.data[i] as f64, g12.data[i] as f64, g22.data[i] as f64);
        let det = a * c - b * b;
        if det.abs() < 1e-12 {
            continue;
        }
        let (r1, r2) = (h1.data[i] as f64, h2.data[i] as f64);
        flow.u[i] = ((c * r1 - b * r2) / det) as f32;
        flow.v[i] = ((a * r2 - b * r1) / det) as f32;
    }
}

pub fn farneback_flow(prev: &Frame, next: &Frame, levels: usize, window: usize, iterations: usize) -> Result<FlowField> {
    farneback_flow_with(prev, next, &FarnebackParams { levels, window, iterations, ..FarnebackParams::default() })
}

fn check(params: &FarnebackParams) -> Result<()> {
    if params.levels < 1 || params.window < 1 || params.window % 2 == 0 || params.poly_size < 5 || params.poly_size % 2 == 0 {
        return Err(Error::InvalidArgument(format!("bad Farneback parameters {params:?}")));
    }
    Ok(())
}

/// Expansions of every pyramid level of one frame, finest first.
fn expand_pyramid(frame: &Frame, params: &FarnebackParams) -> Result<Vec<Expansion>> {
    let p = Plane::from_gray(frame)?;
    Ok(pyramid(&p, params.levels, params.poly_size).iter().map(|l| expand(l, params.poly_size, params.poly_sigma)).collect())
}

fn flow_between(e0: &[Expansion], e1: &[Expansion], params: &FarnebackParams) -> FlowField {
    let mut flow: Option<FlowField> = None;
    for (x0, x1) in e0.iter().zip(e1).rev() {
        let (w, h) = (x0.bx.width, x0.bx.height);
        let mut current = match flow.take() {
            None => FlowField::zeros(w, h),
            Some(coarse) => upsample(&coarse, w, h),
        };
        for _ in 0..params.iterations {
            refine(x0, x1, &mut current, params.window);
        }
        flow = Some(current);
    }
    flow.expect("at least one pyramid level")
}

/// Dense flow from `prev` to `next`: `next(p + flow(p)) ≈ prev(p)`.
pub fn farneback_flow_with(prev: &Frame, next: &Frame, params: &FarnebackParams) -> Result<FlowField> {
    if prev.dims() != next.dims() {
        return Err(Error::DimensionMismatch(format!("prev {:?} vs next {:?}", prev.dims(), next.dims())));
    }
    check(params)?;
    Ok(flow_between(&expand_pyramid(prev, params)?, &expand_pyramid(next, params)?, params))
}

/// Flow between every pair of consecutive frames; each frame is expanded once.
pub fn farneback_sequence(frames: &[Frame], params: &FarnebackParams) -> Result<Vec<FlowField>> {
    check(params)?;
    if let Some(f) = frames.iter().find(|f| f.dims() != frames[0].dims()) {
        return Err(Error::DimensionMismatch(format!("frame {:?} vs {:?}", f.dims(), frames[0].dims())));
    }
    let expansions: Vec<Vec<Expansion>> = frames.par_iter().map(|f| expand_pyramid(f, params)).collect::<Result<_>>()?;
    Ok(expansions.par_windows(2).map(|w| flow_between(&w[0], &w[1], params)).collect())
}

fn upsample(coarse: &FlowField, width: usize, height: usize) -> FlowField {
    let u = Plane { width: coarse.width, height: coarse.height, data: coarse.u.clone() };
    let v = Plane { width: coarse.width, height: coarse.height, data: coarse.v.clone() };
    let mut out = FlowField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let (cx, cy) = (x as f32 * 0.5, y as f32 * 0.5);
            out.u[y * width + x] = 2.0 * u.sample(cx, cy);
            out.v[y * width + x] = 2.0 * v.sample(cx, cy);
        }
    }
    out
}

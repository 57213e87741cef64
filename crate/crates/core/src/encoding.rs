//! Diagonal Gaussian mixtures fitted by EM, and improved Fisher vectors.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_K: usize = 64;
pub const DEFAULT_MAX_ITERS: usize = 100;
/// Stop once the log-likelihood gains less than this per point.
pub const DEFAULT_TOLERANCE: f64 = 1e-3;

const CHUNK: usize = 512;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherCodebook {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl FisherCodebook {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::InvalidArgument(format!("codebook needs K >= 1 matching rows, got {k}/{}/{}", means.len(), variances.len())));
        }
        let n = means[0].len();
        if n == 0 || means.iter().chain(&variances).any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("codebook rows must share one positive dimension".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 || weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument("codebook weights must be a probability vector".into()));
        }
        if variances.iter().flatten().any(|&v| !(v >= VARIANCE_FLOOR) || !v.is_finite()) || means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("codebook variances must be finite and >= {VARIANCE_FLOOR}")));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Length of the Fisher vectors this codebook produces.
    pub fn fisher_dim(&self) -> usize {
        2 * self.k() * self.dim()
    }

    /// Posterior responsibilities of every component for `x`; returns `log p(x)`.
    pub fn responsibilities(&self, x: &[f64], gamma: &mut [f64]) -> f64 {
        Density::new(self).responsibilities(x, gamma)
    }

    /// Mean log-likelihood of a descriptor set.
    pub fn mean_log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        let density = Density::new(self);
        let mut gamma = vec![0.0; self.k()];
        data.iter().map(|x| density.responsibilities(x, &mut gamma)).sum::<f64>() / data.len() as f64
    }
}

/// Inverse variances and log-normalizers of a codebook.
struct Density<'a> {
    means: &'a [Vec<f64>],
    inv: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl<'a> Density<'a> {
    fn new(cb: &'a FisherCodebook) -> Self {
        let n = cb.dim() as f64;
        let inv = cb.variances.iter().map(|v| v.iter().map(|s| 1.0 / s).collect()).collect();
        let bias = (0..cb.k())
            .map(|k| cb.weights[k].ln() - 0.5 * (cb.variances[k].iter().map(|v| v.ln()).sum::<f64>() + n * LN_2PI))
            .collect();
        Self { means: &cb.means, inv, bias }
    }

    /// Per-component `log π_k + log N(x; μ_k, σ²_k)`.
    fn joint_log(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let (mu, inv) = (&self.means[k], &self.inv[k]);
            let mut acc = [0.0; 4];
            let split = x.len() / 4 * 4;
            for d in (0..split).step_by(4) {
                for j in 0..4 {
                    let diff = x[d + j] - mu[d + j];
                    acc[j] += diff * diff * inv[d + j];
                }
            }
            for d in split..x.len() {
                let diff = x[d] - mu[d];
                acc[0] += diff * diff * inv[d];
            }
            *o = self.bias[k] - 0.5 * ((acc[0] + acc[1]) + (acc[2] + acc[3]));
        }
    }

    fn responsibilities(&self, x: &[f64], gamma: &mut [f64]) -> f64 {
        self.joint_log(x, gamma);
        let max = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for g in gamma.iter_mut() {
            *g = (*g - max).exp();
            sum += *g;
        }
        gamma.iter_mut().for_each(|g| *g /= sum);
        max + sum.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self { k: DEFAULT_K, seed: 0, max_iters: DEFAULT_MAX_ITERS, tolerance: DEFAULT_TOLERANCE }
    }
}

/// Result of an EM run with its per-iteration log-likelihood trace.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub codebook: FisherCodebook,
    /// Total log-likelihood before each M-step, plus the final value.
    pub log_likelihood: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter().position(|&d| {
                acc += d;
                acc > target
            })
            .unwrap_or(data.len() - 1)
        } else {
            rng.random_range(0..data.len())
        };
        centers.push(data[idx].clone());
        let c = centers.last().unwrap();
        d2.iter_mut().zip(data).for_each(|(d, x)| *d = d.min(sq_dist(x, c)));
    }
    centers
}

/// Sufficient statistics of one chunk of points.
struct Stats {
    nk: Vec<f64>,
    sx: Vec<Vec<f64>>,
    ll: f64,
}

impl Stats {
    fn zeros(k: usize, n: usize) -> Self {
        Self { nk: vec![0.0; k], sx: vec![vec![0.0; n]; k], ll: 0.0 }
    }

    fn add(&mut self, other: &Stats) {
        for k in 0..self.nk.len() {
            self.nk[k] += other.nk[k];
            for d in 0..self.sx[k].len() {
                self.sx[k][d] += other.sx[k][d];
            }
        }
        self.ll += other.ll;
    }

    fn accumulate(&mut self, x: &[f64], gamma: &[f64]) {
        for (k, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.nk[k] += g;
            for (s, v) in self.sx[k].iter_mut().zip(x) {
                *s += g * v;
            }
        }
    }
}

/// Chunked E-step; chunk results are summed in a fixed order so the outcome
/// does not depend on the thread count. Responsibilities land in `gamma`, `k` per point.
fn e_step(cb: &FisherCodebook, data: &[Vec<f64>], gamma: &mut [f64]) -> Stats {
    let (k, n) = (cb.k(), cb.dim());
    let density = Density::new(cb);
    let parts: Vec<Stats> = data
        .par_chunks(CHUNK)
        .zip(gamma.par_chunks_mut(CHUNK * k))
        .map(|(chunk, gs)| {
            let mut s = Stats::zeros(k, n);
            for (x, g) in chunk.iter().zip(gs.chunks_mut(k)) {
                s.ll += density.responsibilities(x, g);
                s.accumulate(x, g);
            }
            s
        })
        .collect();
    let mut total = Stats::zeros(k, n);
    for p in &parts {
        total.add(p);
    }
    total
}

/// Maximization step around responsibility-weighted means; components that
/// lost all their points keep their previous parameters.
fn m_step(prev: &FisherCodebook, data: &[Vec<f64>], gamma: &[f64], s: &Stats) -> FisherCodebook {
    let (k, n) = (prev.k(), prev.dim());
    let total: f64 = s.nk.iter().sum();
    let mut means = prev.means.clone();
    for c in 0..k {
        if s.nk[c] > 1e-10 {
            means[c] = s.sx[c].iter().map(|v| v / s.nk[c]).collect();
        }
    }
    // second pass for numerically stable variances
    let parts: Vec<Vec<Vec<f64>>> = data
        .par_chunks(CHUNK)
        .zip(gamma.par_chunks(CHUNK * k))
        .map(|(chunk, gs)| {
            let mut acc = vec![vec![0.0; n]; k];
            for (x, gamma) in chunk.iter().zip(gs.chunks(k)) {
                for c in 0..k {
                    let g = gamma[c];
                    if g == 0.0 {
                        continue;
                    }
                    for ((a, v), m) in acc[c].iter_mut().zip(x).zip(&means[c]) {
                        *a += g * (v - m) * (v - m);
                    }
                }
            }
            acc
        })
        .collect();
    let mut sq = vec![vec![0.0; n]; k];
    for p in &parts {
        for c in 0..k {
            for d in 0..n {
                sq[c][d] += p[c][d];
            }
        }
    }
    let mut variances = prev.variances.clone();
    for c in 0..k {
        if s.nk[c] > 1e-10 {
            variances[c] = sq[c].iter().map(|v| (v / s.nk[c]).max(VARIANCE_FLOOR)).collect();
        }
    }
    let mut weights: Vec<f64> = s.nk.iter().map(|&v| (v / total).max(1e-300)).collect();
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    FisherCodebook { weights, means, variances }
}

fn initial_codebook(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> FisherCodebook {
    let n = data[0].len();
    let centers = kmeans_pp(data, k, rng);
    let mut count = vec![0usize; k];
    let mut sum = vec![vec![0.0; n]; k];
    let mut assign = Vec::with_capacity(data.len());
    for x in data {
        let c = (0..k).min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b]))).unwrap();
        assign.push(c);
        count[c] += 1;
        sum[c].iter_mut().zip(x).for_each(|(s, v)| *s += v);
    }
    let global_mean: Vec<f64> = (0..n).map(|d| data.iter().map(|x| x[d]).sum::<f64>() / data.len() as f64).collect();
    let global_var: Vec<f64> = (0..n)
        .map(|d| (data.iter().map(|x| (x[d] - global_mean[d]).powi(2)).sum::<f64>() / data.len() as f64).max(VARIANCE_FLOOR))
        .collect();
    let means: Vec<Vec<f64>> = (0..k).map(|c| if count[c] > 0 { sum[c].iter().map(|s| s / count[c] as f64).collect() } else { centers[c].clone() }).collect();
    let mut sq = vec![vec![0.0; n]; k];
    for (x, &c) in data.iter().zip(&assign) {
        for d in 0..n {
            sq[c][d] += (x[d] - means[c][d]).powi(2);
        }
    }
    let variances = (0..k)
        .map(|c| if count[c] > 1 { sq[c].iter().map(|v| (v / count[c] as f64).max(VARIANCE_FLOOR)).collect() } else { global_var.clone() })
        .collect();
    let raw: Vec<f64> = count.iter().map(|&c| c.max(1) as f64).collect();
    let total: f64 = raw.iter().sum();
    FisherCodebook { weights: raw.iter().map(|c| c / total).collect(), means, variances }
}

pub fn fit_gmm(descriptors: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<FisherCodebook> {
    Ok(fit_gmm_traced(descriptors, &GmmParams { k, seed, max_iters, ..GmmParams::default() })?.codebook)
}

/// EM for a `k`-component diagonal mixture, initialised by k-means++ seeding
/// followed by one hard assignment.
pub fn fit_gmm_traced(data: &[Vec<f64>], params: &GmmParams) -> Result<GmmFit> {
    let k = params.k;
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if data.len() < k {
        return Err(Error::InsufficientData(format!("{} descriptors for K = {k}", data.len())));
    }
    let n = data[0].len();
    if n == 0 || data.iter().any(|x| x.len() != n) {
        return Err(Error::DimensionMismatch("descriptors must share one positive dimension".into()));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite descriptor value".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut cb = initial_codebook(data, k, &mut rng);
    let mut trace = Vec::new();
    let threshold = params.tolerance * data.len() as f64;
    let mut gamma = vec![0.0; data.len() * k];
    for iter in 0..=params.max_iters {
        let stats = e_step(&cb, data, &mut gamma);
        if !stats.ll.is_finite() {
            return Err(Error::Numeric("log-likelihood is not finite".into()));
        }
        let converged = trace.last().is_some_and(|&prev: &f64| stats.ll - prev < threshold);
        trace.push(stats.ll);
        if converged || iter == params.max_iters {
            break;
        }
        cb = m_step(&cb, data, &gamma, &stats);
    }
    Ok(GmmFit { codebook: cb, log_likelihood: trace })
}

/// Fisher vector before power and L2 normalization: for each component the
/// mean block followed by the variance block.
pub fn fisher_vector_raw(set: &[Vec<f64>], cb: &FisherCodebook) -> Result<Vec<f64>> {
    let (k, n) = (cb.k(), cb.dim());
    if let Some(x) = set.iter().find(|x| x.len() != n) {
        return Err(Error::DimensionMismatch(format!("descriptor of length {} for a codebook of dimension {n}", x.len())));
    }
    let mut fv = vec![0.0; 2 * k * n];
    if set.is_empty() {
        return Ok(fv);
    }
    let sigma: Vec<Vec<f64>> = cb.variances.iter().map(|v| v.iter().map(|s| s.sqrt()).collect()).collect();
    let density = Density::new(cb);
    let mut gamma = vec![0.0; k];
    for x in set {
        density.responsibilities(x, &mut gamma);
        for c in 0..k {
            let g = gamma[c];
            if g == 0.0 {
                continue;
            }
            let base = 2 * c * n;
            for d in 0..n {
                let z = (x[d] - cb.means[c][d]) / sigma[c][d];
                fv[base + d] += g * z;
                fv[base + n + d] += g * (z * z - 1.0);
            }
        }
    }
    let t = set.len() as f64;
    for c in 0..k {
        let (sm, sv) = (1.0 / (t * cb.weights[c].sqrt()), 1.0 / (t * (2.0 * cb.weights[c]).sqrt()));
        let base = 2 * c * n;
        fv[base..base + n].iter_mut().for_each(|v| *v *= sm);
        fv[base + n..base + 2 * n].iter_mut().for_each(|v| *v *= sv);
    }
    Ok(fv)
}

/// Signed square root of every entry, then unit L2 norm (zero stays zero).
pub fn normalize_fisher(fv: &mut [f64]) {
    fv.iter_mut().for_each(|v| *v = v.signum() * v.abs().sqrt());
    let norm = fv.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        fv.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Improved Fisher vector of a descriptor set.
pub fn fisher_vector(set: &[Vec<f64>], cb: &FisherCodebook) -> Result<Vec<f64>> {
    let mut fv = fisher_vector_raw(set, cb)?;
    normalize_fisher(&mut fv);
    Ok(fv)
}

/// Per-dimension standardization fitted on training descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InsufficientData("cannot standardize an empty set".into()));
        }
        let n = data[0].len();
        let t = data.len() as f64;
        let mean: Vec<f64> = (0..n).map(|d| data.iter().map(|x| x[d]).sum::<f64>() / t).collect();
        let scale = (0..n)
            .map(|d| {
                let sd = (data.iter().map(|x| (x[d] - mean[d]).powi(2)).sum::<f64>() / t).sqrt();
                if sd > 1e-12 { 1.0 / sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) * s).collect()
    }
}

/// Header `K N`, a line of weights, `K` mean rows, then `K` variance rows.
pub fn format_codebook(cb: &FisherCodebook) -> String {
    let mut out = format!("{} {}\n", cb.k(), cb.dim());
    let row = |out: &mut String, vals: &[f64]| {
        let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    };
    row(&mut out, &cb.weights);
    cb.means.iter().for_each(|m| row(&mut out, m));
    cb.variances.iter().for_each(|v| row(&mut out, v));
    out
}

pub fn parse_codebook(text: &str) -> Result<FisherCodebook> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let parse_row = |line: Option<&str>, what: &str| -> Result<Vec<f64>> {
        let line = line.ok_or_else(|| Error::Parse(format!("codebook truncated before {what}")))?;
        line.split_whitespace().map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("codebook {what}: {e}")))).collect()
    };
    let header = parse_row(lines.next(), "header")?;
    if header.len() != 2 || header.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
        return Err(Error::Parse("codebook header must be `K N`".into()));
    }
    let (k, n) = (header[0] as usize, header[1] as usize);
    let weights = parse_row(lines.next(), "weights")?;
    let means = (0..k).map(|_| parse_row(lines.next(), "means")).collect::<Result<Vec<_>>>()?;
    let variances = (0..k).map(|_| parse_row(lines.next(), "variances")).collect::<Result<Vec<_>>>()?;
    if lines.next().is_some() {
        return Err(Error::Parse("trailing lines after codebook".into()));
    }
    if weights.len() != k || means.iter().chain(&variances).any(|r| r.len() != n) {
        return Err(Error::Parse(format!("codebook rows do not match header {k} {n}")));
    }
    FisherCodebook::new(weights, means, variances).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        (0..400)
            .map(|i| {
                let c = if i % 2 == 0 { 0.0 } else { 10.0 };
                vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]
            })
            .collect()
    }

    fn random_set(seed: u64, t: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t).map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
    }

    #[test]
    fn single_component_is_closed_form() {
        let data = random_set(1, 57, 3);
        let cb = fit_gmm(&data, 1, 0, 100).unwrap();
        let t = data.len() as f64;
        for d in 0..3 {
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / t;
            let var = data.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / t;
            assert!((cb.means[0][d] - mean).abs() < 1e-12);
            assert!((cb.variances[0][d] - var).abs() < 1e-12);
        }
        assert_eq!(cb.weights, vec![1.0]);
    }

    #[test]
    fn two_blobs_are_recovered() {
        let cb = fit_gmm(&blobs(2), 2, 5, 100).unwrap();
        let mut order: Vec<usize> = (0..2).collect();
        order.sort_by(|&a, &b| cb.means[a][0].total_cmp(&cb.means[b][0]));
        for (c, centre) in order.into_iter().zip([0.0, 10.0]) {
            assert!(cb.means[c].iter().all(|m| (m - centre).abs() < 0.1));
            assert!((cb.weights[c] - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let data = random_set(3, 120, 4);
        let cb = fit_gmm(&data, 3, 1, 20).unwrap();
        let mut g = vec![0.0; 3];
        for x in &data {
            cb.responsibilities(x, &mut g);
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn log_likelihood_never_decreases() {
        for seed in 0..5 {
            let data = random_set(10 + seed, 300, 3);
            let fit = fit_gmm_traced(&data, &GmmParams { k: 4, seed, max_iters: 60, tolerance: 0.0 }).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", fit.log_likelihood);
            }
        }
    }

    #[test]
    fn fitting_is_reproducible() {
        let data = random_set(4, 2000, 5);
        let a = fit_gmm(&data, 6, 9, 30).unwrap();
        let b = fit_gmm(&data, 6, 9, 30).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fit_preconditions() {
        assert!(fit_gmm(&random_set(5, 3, 2), 4, 0, 10).is_err());
        assert!(fit_gmm(&[vec![f64::NAN, 1.0], vec![0.0, 1.0]], 1, 0, 10).is_err());
        assert!(fit_gmm(&[vec![1.0], vec![1.0, 2.0]], 1, 0, 10).is_err());
    }

    #[test]
    fn variances_respect_the_floor() {
        let data = vec![vec![1.0, 2.0]; 20];
        let cb = fit_gmm(&data, 2, 0, 10).unwrap();
        assert!(cb.variances.iter().flatten().all(|&v| v >= VARIANCE_FLOOR));
        assert!((cb.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn points_at_the_mean_give_zero_mean_block() {
        let cb = FisherCodebook::new(vec![1.0], vec![vec![1.0, -2.0]], vec![vec![0.5, 2.0]]).unwrap();
        let fv = fisher_vector_raw(&vec![vec![1.0, -2.0]; 7], &cb).unwrap();
        assert_eq!(&fv[..2], &[0.0, 0.0]);
    }

    #[test]
    fn normalized_vectors_have_unit_norm() {
        let data = random_set(6, 200, 3);
        let cb = fit_gmm(&data, 4, 2, 30).unwrap();
        let fv = fisher_vector(&data[..40], &cb).unwrap();
        assert_eq!(fv.len(), cb.fisher_dim());
        assert!((fv.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
        assert!(fisher_vector(&[], &cb).unwrap().iter().all(|&v| v == 0.0));
        assert!(fisher_vector(&[vec![1.0]], &cb).is_err());
    }

    #[test]
    fn duplication_and_order_do_not_matter() {
        let data = random_set(7, 150, 2);
        let cb = fit_gmm(&data, 3, 3, 30).unwrap();
        let set = &data[..30];
        let base = fisher_vector(set, &cb).unwrap();
        let doubled: Vec<Vec<f64>> = set.iter().chain(set).cloned().collect();
        let mut reversed = set.to_vec();
        reversed.reverse();
        for other in [fisher_vector(&doubled, &cb).unwrap(), fisher_vector(&reversed, &cb).unwrap()] {
            assert!(base.iter().zip(&other).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn codebook_round_trip() {
        let cb = fit_gmm(&random_set(8, 100, 3), 3, 1, 20).unwrap();
        assert_eq!(parse_codebook(&format_codebook(&cb)).unwrap(), cb);
        assert!(parse_codebook("2 3\n1 0\n").is_err());
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let data = random_set(9, 100, 3);
        let s = Standardizer::fit(&data).unwrap();
        let z: Vec<Vec<f64>> = data.iter().map(|x| s.apply(x)).collect();
        for d in 0..3 {
            let m = z.iter().map(|x| x[d]).sum::<f64>() / 100.0;
            let v = z.iter().map(|x| (x[d] - m).powi(2)).sum::<f64>() / 100.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn power_l2_normalization(v in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
            let mut f = v.clone();
            normalize_fisher(&mut f);
            let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
            for (a, b) in v.iter().zip(&f) {
                prop_assert!(a.signum() == b.signum() || *a == 0.0);
            }
        }
    }
}

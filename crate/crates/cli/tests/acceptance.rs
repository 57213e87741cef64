//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::fs;
use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trailblaze::classify::accuracy;
use trailblaze::encoding::{fisher_vector_raw, fit_gmm_traced, FisherCodebook, GmmParams};
use trailblaze::flowfields::{farneback_flow_with, lk_track_with, FarnebackParams, LkParams};
use trailblaze::keypoints::{detect_fast, DEFAULT_ARC, DEFAULT_FAST_THRESHOLD};
use trailblaze::media::{synth_stereo, Frame, ObjectPath, ObjectSpec, PanelSpec, SceneSpec, WallSpec};
use trailblaze::pipeline::{parse_sweep, render_video, run_experiment, CameraSet, DatasetSpec, PipelineConfig, Video};
use trailblaze::roi::detect_rois;
use trailblaze::shape::{describe, descriptor_dim};
use trailblaze::stereo::{
    apply_homography, estimate_fundamental_ransac, frame_matches, match_trajectories, sampson_distance, select_best_calibration, CalibrationParams,
    PointMatch,
};
use trailblaze::tracking::{extract, Algorithm, Trajectory, TrackingParams};

fn report(id: usize, pass: bool, detail: &str) {
    let line = format!("criterion {id}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    // Bypasses the test harness capture so every verdict reaches the log.
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
}

fn render(spec: &DatasetSpec) -> Vec<Video> {
    spec.videos()
        .unwrap()
        .iter()
        .map(|v| {
            let (left, right) = render_video(v).unwrap();
            Video { clip_id: v.clip_id.clone(), label: v.label.clone(), actor: v.actor.clone(), left, right: Some(right) }
        })
        .collect()
}

fn recognition_config() -> PipelineConfig {
    PipelineConfig { algo: Algorithm::Farneback, length: 21, order: 2, k: 16, seed: 0, ..PipelineConfig::default() }
}

/// Confusion-matrix CSV of the recognition run, computed once per process.
fn recognition_csv() -> &'static String {
    static CSV: OnceLock<String> = OnceLock::new();
    CSV.get_or_init(|| {
        let cfg = recognition_config();
        let videos = render(&DatasetSpec::recognition(cfg.seed));
        run_experiment(&videos, &cfg).unwrap().to_csv()
    })
}

fn csv_accuracy(csv: &str) -> f64 {
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let (mut hit, mut total) = (0.0, 0.0);
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row[1..].iter().enumerate() {
            let v: f64 = cell.parse().unwrap();
            total += v;
            if i == j {
                hit += v;
            }
        }
    }
    hit / total
}

#[test]
fn criterion_1_recognition_accuracy() {
    let csv = recognition_csv();
    let spec = DatasetSpec::recognition(0);
    let videos = spec.videos().unwrap();
    let acc = csv_accuracy(csv);
    let pass = videos.len() == 192 && spec.classes.len() == 6 && acc >= 0.90;
    report(1, pass, &format!("videos={} leave-one-actor-out accuracy={acc:.4} (>= 0.90)", videos.len()));
    assert!(pass);
}

#[test]
fn criterion_2_disparity_benefit() {
    let spec = DatasetSpec::depth_pair(0);
    let videos = render(&spec);
    let base = PipelineConfig {
        algo: Algorithm::Farneback,
        cameras: CameraSet::Left,
        length: 19,
        order: 3,
        k: 4,
        standardize: true,
        seed: 0,
        ..PipelineConfig::default()
    };
    let flat = accuracy(&run_experiment(&videos, &base).unwrap()).unwrap();
    let depth = accuracy(&run_experiment(&videos, &PipelineConfig { use_disparity: true, ..base.clone() }).unwrap()).unwrap();
    let pass = flat <= 0.65 && depth >= 0.90;
    report(2, pass, &format!("2D accuracy={flat:.4} (<= 0.65), disparity accuracy={depth:.4} (>= 0.90)"));
    assert!(pass);
}

fn converging_scene() -> SceneSpec {
    let mut objects = vec![
        ObjectSpec::new(ObjectPath::Line { start: [-0.8, -0.3, 3.5], velocity: [0.012, 0.0, 0.0] }, 0.8, 11),
        ObjectSpec::new(ObjectPath::Circle { center: [0.4, 0.3, 4.0], radius: 0.4, period: 90.0, phase: 0.0 }, 0.8, 12),
        ObjectSpec::new(ObjectPath::Line { start: [0.6, -0.5, 3.0], velocity: [-0.006, 0.01, 0.0] }, 0.7, 13),
    ];
    objects.iter_mut().for_each(|o| o.texels = 8);
    SceneSpec {
        focal: 110.0,
        baseline: 0.5,
        width: 128,
        height: 96,
        frames: 40,
        noise_sigma: 1.0,
        seed: 7,
        vergence: 4.0,
        wall: Some(WallSpec { depth: 8.0, texel: None, texture: 21 }),
        panels: vec![
            PanelSpec { center: [-1.2, 0.9, 5.0], width: 1.2, height: 0.8, texel: None, texture: 31 },
            PanelSpec { center: [1.4, -0.9, 6.0], width: 1.4, height: 1.0, texel: None, texture: 32 },
        ],
        objects,
        ..SceneSpec::default()
    }
}

#[test]
fn criterion_3_rectification_quality() {
    let spec = converging_scene();
    let (left, right, truth) = synth_stereo(&spec).unwrap();
    let cfg = PipelineConfig::default();
    let params = TrackingParams { length: 15, ..cfg.tracking_params() };
    let track = |clip| {
        let rois = detect_rois(&trailblaze::media::Clip::to_grayscale(clip).unwrap(), cfg.roi_params()).unwrap();
        extract(Algorithm::Farneback, clip, &rois, &params).unwrap()
    };
    let (lt, rt) = (track(&left), track(&right));
    let pairs = match_trajectories(&left, &lt, &right, &rt, cfg.match_ratio).unwrap();
    let cal = select_best_calibration(&left, &right, &pairs, &CalibrationParams { m: 10, ..CalibrationParams::default() }).unwrap();
    let (mut within, mut total) = (0usize, 0usize);
    for pair in &pairs {
        for (p, q) in pair.left.points.iter().zip(&pair.right.points) {
            let (_, v) = apply_homography(&cal.h_left, p[0], p[1]).unwrap();
            let (_, vr) = apply_homography(&cal.h_right, q[0], q[1]).unwrap();
            total += 1;
            within += usize::from((v - vr).abs() <= 1.0);
        }
    }
    let fraction = within as f64 / total.max(1) as f64;

    let inliers: Vec<PointMatch> =
        frame_matches(&left.frames[20], &right.frames[20], DEFAULT_FAST_THRESHOLD, cfg.match_ratio).unwrap().into_iter().filter(|m| sampson_distance(&truth.fundamental, m) < 1.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let outliers = (inliers.len() as f64 * 0.3 / 0.7).round() as usize;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut matches = inliers.clone();
    for _ in 0..outliers {
        matches.push(((rng.random_range(0.0..w), rng.random_range(0.0..h)), (rng.random_range(0.0..w), rng.random_range(0.0..h))));
    }
    let (f, kept) = estimate_fundamental_ransac(&matches, 500, 1.0, 1).unwrap();
    let rms = (kept.iter().map(|&i| sampson_distance(&f, &matches[i]).powi(2)).sum::<f64>() / kept.len() as f64).sqrt();

    let pass = pairs.len() >= 10 && fraction >= 0.95 && rms < 0.5;
    report(
        3,
        pass,
        &format!(
            "pairs={} points within 1px={fraction:.4} (>= 0.95); matches={} outliers={outliers} RANSAC inliers={} Sampson RMS={rms:.3} (< 0.5)",
            pairs.len(),
            matches.len(),
            kept.len()
        ),
    );
    assert!(pass);
}

/// Iterated forward differences, one coordinate at a time.
fn difference_oracle(points: &[Vec<f64>], r: usize) -> Vec<f64> {
    let n = points[0].len();
    let mut per_coord: Vec<Vec<f64>> = (0..n).map(|c| points.iter().map(|p| p[c]).collect()).collect();
    let mut out = Vec::new();
    for _ in 0..r {
        for seq in per_coord.iter_mut() {
            let mut next = Vec::with_capacity(seq.len() - 1);
            for i in 0..seq.len() - 1 {
                next.push(seq[i + 1] - seq[i]);
            }
            *seq = next;
        }
        for i in 0..per_coord[0].len() {
            for seq in &per_coord {
                out.push(seq[i]);
            }
        }
    }
    out
}

#[test]
fn criterion_4_descriptor_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=3);
        let l = rng.random_range(9..=27);
        let r = rng.random_range(1..=7);
        let points: Vec<Vec<f64>> = (0..=l).map(|_| (0..n).map(|_| rng.random_range(-100.0..100.0)).collect()).collect();
        let traj = Trajectory::new("t", trailblaze::media::Camera::Left, 0, points.clone()).unwrap();
        let d = describe(&traj, r).unwrap();
        let closed_form = n * (r * (l + 1) - r * (r + 1) / 2);
        if d.values != difference_oracle(&points, r) || d.values.len() != closed_form || descriptor_dim(n, l, r) != closed_form {
            failures += 1;
        }
    }
    report(4, failures == 0, &format!("1000 random trajectories, mismatches={failures}"));
    assert_eq!(failures, 0);
}

/// Smooth value noise: random lattice values blended with a quintic fade.
struct Texture {
    spacing: f64,
    side: usize,
    values: Vec<f64>,
}

impl Texture {
    fn new(seed: u64) -> Self {
        let side = 80;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { spacing: 3.0, side, values: (0..side * side).map(|_| rng.random_range(0.0..255.0)).collect() }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (gx, gy) = (x / self.spacing + 8.0, y / self.spacing + 8.0);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let (fx, fy) = (fade(gx - ix as f64), fade(gy - iy as f64));
        let v = |a: usize, b: usize| self.values[b * self.side + a];
        let top = v(ix, iy) * (1.0 - fx) + v(ix + 1, iy) * fx;
        let bottom = v(ix, iy + 1) * (1.0 - fx) + v(ix + 1, iy + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    fn frame(&self, size: usize, dx: f64, dy: f64) -> Frame {
        let data = (0..size * size).map(|i| self.at((i % size) as f64 - dx, (i / size) as f64 - dy).round().clamp(0.0, 255.0) as u8).collect();
        Frame::new(size, size, 1, data).unwrap()
    }
}

/// Mean of the smallest 90% of the errors.
fn trimmed_mean(mut errors: Vec<f64>) -> f64 {
    errors.sort_by(f64::total_cmp);
    let keep = (errors.len() as f64 * 0.9).ceil() as usize;
    errors[..keep].iter().sum::<f64>() / keep as f64
}

#[test]
fn criterion_5_flow_accuracy() {
    let size = 128;
    let margin = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = (0.0f64, 0.0f64);
    let mut pass = true;
    for i in 0..20 {
        let texture = Texture::new(100 + i);
        let magnitude = 8.0 * (i + 1) as f64 / 20.0;
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let (dx, dy) = (magnitude * angle.cos(), magnitude * angle.sin());
        let (f0, f1) = (texture.frame(size, 0.0, 0.0), texture.frame(size, dx, dy));
        let corners: Vec<(f64, f64)> = detect_fast(&f0, DEFAULT_FAST_THRESHOLD, DEFAULT_ARC)
            .unwrap()
            .into_iter()
            .filter(|c| (margin..size - margin).contains(&c.x) && (margin..size - margin).contains(&c.y))
            .map(|c| (c.x as f64, c.y as f64))
            .collect();
        assert!(corners.len() >= 20, "texture {i}: {} corners", corners.len());
        let lk: Vec<f64> = lk_track_with(&f0, &f1, &corners, &LkParams::default())
            .unwrap()
            .iter()
            .zip(&corners)
            .map(|(t, &(x, y))| if t.is_tracked() { (t.x - x - dx).hypot(t.y - y - dy) } else { f64::INFINITY })
            .collect();
        let field = farneback_flow_with(&f0, &f1, &FarnebackParams::default()).unwrap();
        let fb: Vec<f64> = corners
            .iter()
            .map(|&(x, y)| {
                let (u, v) = field.sample(x, y).unwrap();
                (u - dx).hypot(v - dy)
            })
            .collect();
        let (e_lk, e_fb) = (trimmed_mean(lk), trimmed_mean(fb));
        worst = (worst.0.max(e_lk), worst.1.max(e_fb));
        pass &= e_lk <= 0.25 && e_fb <= 0.25;
    }
    report(5, pass, &format!("20 textures, shifts up to 8px; worst mean EPE over best 90% of corners: LK={:.4} FB={:.4} (<= 0.25)", worst.0, worst.1));
    assert!(pass);
}

fn log_density(cb: &FisherCodebook, x: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..cb.k())
        .map(|c| {
            let mut s = cb.weights[c].ln();
            for (d, &xd) in x.iter().enumerate() {
                let var = cb.variances[c][d];
                s -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (xd - cb.means[c][d]).powi(2) / var);
            }
            s
        })
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

fn mean_log_density(cb: &FisherCodebook, set: &[Vec<f64>]) -> f64 {
    set.iter().map(|x| log_density(cb, x)).sum::<f64>() / set.len() as f64
}

#[test]
fn criterion_6_fisher_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst, mut monotone) = (0.0f64, true);
    for instance in 0..10 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=4);
        let t = rng.random_range(10..=50);
        let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let mut draw = |count: usize| -> Vec<Vec<f64>> {
            (0..count).map(|i| centers[i % k].iter().map(|c| c + rng.random_range(-1.5..1.5)).collect()).collect()
        };
        let train = draw(200);
        let set = draw(t);
        let fit = fit_gmm_traced(&train, &GmmParams { k, seed: instance, max_iters: 60, tolerance: 0.0 }).unwrap();
        monotone &= fit.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs());
        let cb = fit.codebook;
        let fv = fisher_vector_raw(&set, &cb).unwrap();
        for c in 0..k {
            for d in 0..n {
                let (mu, sigma) = (cb.means[c][d], cb.variances[c][d].sqrt());
                let hm = 1e-5 * sigma;
                let mut plus = cb.clone();
                let mut minus = cb.clone();
                plus.means[c][d] = mu + hm;
                minus.means[c][d] = mu - hm;
                let g_mu = (mean_log_density(&plus, &set) - mean_log_density(&minus, &set)) / (2.0 * hm);
                let hs = 1e-5 * sigma;
                let mut plus = cb.clone();
                let mut minus = cb.clone();
                plus.variances[c][d] = (sigma + hs).powi(2);
                minus.variances[c][d] = (sigma - hs).powi(2);
                let g_sigma = (mean_log_density(&plus, &set) - mean_log_density(&minus, &set)) / (2.0 * hs);
                let expected_mu = g_mu * sigma / cb.weights[c].sqrt();
                let expected_sigma = g_sigma * sigma / (2.0 * cb.weights[c]).sqrt();
                for (got, want) in [(fv[2 * c * n + d], expected_mu), (fv[2 * c * n + n + d], expected_sigma)] {
                    worst = worst.max((got - want).abs() / got.abs().max(want.abs()).max(1e-3));
                }
            }
        }
    }
    let pass = worst <= 1e-4 && monotone;
    report(6, pass, &format!("10 instances, worst relative error={worst:.2e} (<= 1e-4), EM monotone={monotone}"));
    assert!(pass);
}

fn cli() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trailblaze"));
    cmd.env_remove("TRAILBLAZE_THREADS").env("RUST_LOG", "error");
    cmd
}

#[test]
fn criterion_7_length_order_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep.csv");
    let run = cli()
        .args(["sweep", "--dataset", "recognition", "--seed", "0", "--algo", "fb", "--k", "16", "--lengths", "9:27:2", "--orders", "1:5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let cells = parse_sweep(&fs::read_to_string(&out).unwrap()).unwrap();
    let lengths: Vec<usize> = (9..=27).step_by(2).collect();
    let complete = cells.len() == 50 && lengths.iter().all(|&l| (1..=5).all(|r| cells.iter().any(|c| c.length == l && c.order == r)));
    let worst = cells.iter().min_by(|a, b| a.accuracy.total_cmp(&b.accuracy)).unwrap();
    let pass = complete && worst.accuracy >= 0.70;
    report(7, pass, &format!("{} cells, lowest accuracy={:.4} at l={} r={} (>= 0.70)", cells.len(), worst.accuracy, worst.length, worst.order));
    assert!(pass);
}

#[test]
fn criterion_8_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("confusion.csv");
    let run = cli()
        .args(["run", "--dataset", "recognition", "--seed", "0", "--algo", "fb", "--length", "21", "--order", "2", "--k", "16", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let repeated = fs::read(&out).unwrap();
    let pass = repeated == recognition_csv().as_bytes();
    report(8, pass, &format!("repeated run confusion CSV byte-identical={pass} ({} bytes)", repeated.len()));
    assert!(pass);
}

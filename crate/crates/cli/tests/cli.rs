use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trailblaze::media::{load_clip, write_clip, ObjectPath, ObjectSpec, SceneSpec, WallSpec};
use trailblaze::pipeline::{format_manifest, render_video, Activity, DatasetSpec, ManifestEntry};
use trailblaze::tracking::parse_trajectories;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trailblaze"));
    cmd.env_remove("TRAILBLAZE_THREADS").env("RUST_LOG", "error");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn one_object_scene() -> SceneSpec {
    SceneSpec {
        focal: 60.0,
        baseline: 0.4,
        width: 64,
        height: 48,
        frames: 30,
        noise_sigma: 1.0,
        seed: 4,
        wall: Some(WallSpec { depth: 8.0, texel: None, texture: 9 }),
        objects: vec![ObjectSpec::new(ObjectPath::Line { start: [-0.4, 0.0, 3.0], velocity: [0.04, 0.0, 0.0] }, 0.7, 5)],
        ..SceneSpec::default()
    }
}

fn synth_scene(dir: &Path) -> PathBuf {
    let scene = dir.join("scene.txt");
    fs::write(&scene, one_object_scene().to_string()).unwrap();
    let out = dir.join("clip");
    ok(&["synth", "--scene", s(&scene), "--out", s(&out)]);
    out
}

/// Two classes, two actors, two repetitions, written as a dataset directory.
fn small_dataset(dir: &Path) -> PathBuf {
    let spec = DatasetSpec { classes: vec![Activity::HorizontalLine, Activity::VerticalOscillation], actors: 2, repetitions: 2, frames: 24, ..DatasetSpec::recognition(3) };
    let root = dir.join("data");
    let mut entries = Vec::new();
    for v in spec.videos().unwrap() {
        let (l, r) = render_video(&v).unwrap();
        write_clip(&l, &root.join(&v.clip_id).join("left")).unwrap();
        write_clip(&r, &root.join(&v.clip_id).join("right")).unwrap();
        entries.push(ManifestEntry { clip_id: v.clip_id, label: v.label, actor: v.actor });
    }
    fs::write(root.join("manifest.txt"), format_manifest(&entries)).unwrap();
    root
}

fn no_temp_files(dir: &Path) {
    for e in fs::read_dir(dir).unwrap() {
        let name = e.unwrap().file_name().to_string_lossy().into_owned();
        assert!(!name.starts_with('.'), "leftover {name}");
    }
}

#[test]
fn synth_then_extract_gives_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let clip = synth_scene(tmp.path());
    let left = load_clip(&clip.join("left")).unwrap();
    assert_eq!((left.width(), left.height(), left.len()), (64, 48, 30));
    let traj = tmp.path().join("t.txt");
    ok(&["extract", "--algo", "fb", "--length", "9", "--clip", s(&clip.join("left")), "--out", s(&traj)]);
    let trajs = parse_trajectories(&fs::read_to_string(&traj).unwrap()).unwrap();
    assert!(!trajs.is_empty());
    assert!(trajs.iter().all(|t| t.length() == 9 && t.clip_id == "clip"));
    no_temp_files(tmp.path());
}

#[test]
fn eval_without_a_model_reports_missing_model() {
    let tmp = tempfile::tempdir().unwrap();
    let enc = tmp.path().join("enc.txt");
    fs::write(&enc, "a x a0 0.5 0.5\n").unwrap();
    let out = run(&["eval", "--encodings", s(&enc), "--out", s(&tmp.path().join("cm.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().find(|l| l.starts_with("error ")).expect("reason line");
    assert_eq!(line, "error stage=eval code=2 reason=missing model");
    let out = run(&["eval", "--encodings", s(&enc), "--model", s(&tmp.path().join("absent.txt")), "--out", s(&tmp.path().join("cm.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reason=missing model"));
    assert!(!tmp.path().join("cm.csv").exists());
}

#[test]
fn input_errors_exit_with_2_on_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["extract", "--clip", s(&tmp.path().join("nope")), "--out", s(&tmp.path().join("t.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().filter(|l| l.starts_with("error stage=extract code=2 reason=")).count(), 1);

    let out = run(&["extract", "--clip", "x", "--out", "y", "--order", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["roi", "--clip", "x", "--out", "y"]).env("TRAILBLAZE_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("TRAILBLAZE_THREADS"));
}

#[test]
fn roi_plot_and_describe_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let clip = synth_scene(tmp.path()).join("left");
    let rois = tmp.path().join("rois.txt");
    let traj = tmp.path().join("t.txt");
    let desc = tmp.path().join("d.txt");
    let plot = tmp.path().join("plot");
    ok(&["roi", "--clip", s(&clip), "--out", s(&rois)]);
    assert!(fs::read_to_string(&rois).unwrap().starts_with("# frames 30"));
    ok(&["extract", "--algo", "lk", "--length", "8", "--clip", s(&clip), "--rois", s(&rois), "--out", s(&traj)]);
    ok(&["describe", "--order", "2", "--trajectories", s(&traj), "--label", "line", "--out", s(&desc)]);
    let n_traj = fs::read_to_string(&traj).unwrap().lines().count();
    let text = fs::read_to_string(&desc).unwrap();
    assert_eq!(text.lines().count(), n_traj);
    assert!(text.lines().all(|l| l.split_whitespace().nth(1) == Some("line")));
    ok(&["plot", "--clip", s(&clip), "--trajectories", s(&traj), "--rois", s(&rois), "--out", s(&plot)]);
    let frames = load_clip(&plot).unwrap();
    assert_eq!((frames.len(), frames.frames[0].channels), (30, 3));
    // rerunning replaces the output directory
    ok(&["plot", "--clip", s(&clip), "--trajectories", s(&traj), "--out", s(&plot)]);
    assert_eq!(load_clip(&plot).unwrap().len(), 30);
    no_temp_files(tmp.path());
}

#[test]
fn stereo_stages_produce_disparity_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SceneSpec { width: 96, height: 72, frames: 14, vergence: 4.0, ..one_object_scene() };
    let scene = tmp.path().join("scene.txt");
    fs::write(&scene, spec.to_string()).unwrap();
    let clip = tmp.path().join("clip");
    ok(&["synth", "--scene", s(&scene), "--out", s(&clip)]);
    let (lt, rt) = (tmp.path().join("l.txt"), tmp.path().join("r.txt"));
    for (cam, out) in [("left", &lt), ("right", &rt)] {
        let rois = tmp.path().join(format!("{cam}.rois"));
        let full: String = "# frames 14\n".to_string() + &(0..14).map(|t| format!("{t} 0 0 96 72\n")).collect::<String>();
        fs::write(&rois, full).unwrap();
        ok(&["extract", "--algo", "lk", "--length", "6", "--clip", s(&clip.join(cam)), "--rois", s(&rois), "--out", s(out)]);
    }
    let (lc, rc) = (clip.join("left"), clip.join("right"));
    let pair = ["--left", s(&lc), "--right", s(&rc), "--left-trajectories", s(&lt), "--right-trajectories", s(&rt)];
    let cal = tmp.path().join("cal.txt");
    let mut args = vec!["calibrate", "--m", "4"];
    args.extend(pair);
    args.extend(["--out", s(&cal)]);
    ok(&args);
    let cal_text = fs::read_to_string(&cal).unwrap();
    assert!(cal_text.contains("score="));
    let dat = tmp.path().join("dat.txt");
    let mut args = vec!["augment", "--calibration", s(&cal)];
    args.extend(pair);
    args.extend(["--out", s(&dat)]);
    ok(&args);
    let trajs = parse_trajectories(&fs::read_to_string(&dat).unwrap()).unwrap();
    assert!(!trajs.is_empty());
    assert!(trajs.iter().all(|t| t.dim() == 3));
}

fn staged_pipeline(data: &Path, work: &Path) -> String {
    fs::create_dir_all(work).unwrap();
    let manifest = fs::read_to_string(data.join("manifest.txt")).unwrap();
    let mut desc_files = Vec::new();
    for line in manifest.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let traj = work.join(format!("{}.traj", f[0]));
        let desc = work.join(format!("{}.desc", f[0]));
        ok(&["extract", "--length", "9", "--clip", s(&data.join(f[0]).join("left")), "--out", s(&traj)]);
        ok(&["describe", "--order", "2", "--trajectories", s(&traj), "--label", f[1], "--out", s(&desc)]);
        desc_files.push(desc);
    }
    let (enc, cb, model, cm) = (work.join("enc.txt"), work.join("cb.txt"), work.join("model.txt"), work.join("cm.csv"));
    let mut args = vec!["encode", "--k", "2", "--seed", "5", "--manifest"];
    let m = data.join("manifest.txt");
    args.push(s(&m));
    args.push("--descriptors");
    args.extend(desc_files.iter().map(|p| s(p)));
    args.extend(["--codebook-out", s(&cb), "--exclude-actor", "a1", "--out", s(&enc)]);
    ok(&args);
    ok(&["train", "--seed", "5", "--encodings", s(&enc), "--exclude-actor", "a1", "--out", s(&model)]);
    let out = ok(&["eval", "--encodings", s(&enc), "--model", s(&model), "--actor", "a1", "--out", s(&cm)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("accuracy="));
    let cb_text = fs::read_to_string(&cb).unwrap();
    assert!(cb_text.starts_with("2 "));
    fs::read_to_string(&cm).unwrap()
}

#[test]
fn staged_and_end_to_end_runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path());
    let a = staged_pipeline(&data, &tmp.path().join("w1"));
    let b = staged_pipeline(&data, &tmp.path().join("w2"));
    assert_eq!(a, b);
    assert!(a.starts_with("actual\\predicted,horizontal_line,vertical_oscillation\n"));
    let lines: Vec<&str> = a.lines().collect();
    let count: u64 = lines[1..].iter().flat_map(|l| l.split(',').skip(1)).map(|v| v.parse::<u64>().unwrap()).sum();
    assert_eq!(count, 4);

    let cfg = tmp.path().join("cfg.txt");
    fs::write(&cfg, "length=9\norder=2\nk=2\nseed=5\n").unwrap();
    let (r1, r2, used) = (tmp.path().join("r1.csv"), tmp.path().join("r2.csv"), tmp.path().join("used.txt"));
    ok(&["run", "--config", s(&cfg), "--data", s(&data), "--out", s(&r1), "--config-out", s(&used)]);
    let out = bin().args(["run", "--config", s(&cfg), "--data", s(&data), "--out", s(&r2)]).env("TRAILBLAZE_THREADS", "1").output().unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    let used = fs::read_to_string(&used).unwrap();
    assert!(used.contains("length=9\n") && used.contains("k=2\n"));
}

#[test]
fn sweep_writes_a_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path());
    let out = tmp.path().join("sweep.csv");
    ok(&["sweep", "--data", s(&data), "--k", "2", "--lengths", "8,10", "--orders", "1:2", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("8,") && rows[2].starts_with("10,"));
    for v in rows[1..].iter().flat_map(|r| r.split(',').skip(1)) {
        let acc: f64 = v.parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

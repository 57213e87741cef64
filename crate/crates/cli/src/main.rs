//! `trailblaze`: every pipeline stage as a subcommand, plus `run` and `sweep`.

mod fsio;
mod stages;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use trailblaze::pipeline::PipelineConfig;

#[derive(Parser)]
#[command(name = "trailblaze", version, about = "Stereo trajectory activity recognition, one stage at a time")]
struct Cli {
    /// `key=value` configuration file; stage flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    knobs: Knobs,
    #[command(subcommand)]
    command: Command,
}

/// Per-flag overrides of configuration keys.
#[derive(Args, Default)]
struct Knobs {
    #[arg(long, global = true, value_name = "ip|lk|fb")]
    algo: Option<String>,
    #[arg(long, global = true)]
    length: Option<String>,
    #[arg(long, global = true)]
    order: Option<String>,
    #[arg(long, global = true)]
    use_disparity: bool,
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    c: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    gmm_iters: Option<String>,
    #[arg(long, global = true)]
    max_descriptors: Option<String>,
    #[arg(long, global = true)]
    normalize: bool,
    #[arg(long, global = true)]
    standardize: bool,
    #[arg(long, global = true, value_name = "left|right|both")]
    cameras: Option<String>,
    #[arg(long, global = true, value_name = "pool|concat")]
    stacking: Option<String>,
    #[arg(long, global = true)]
    fast_threshold: Option<String>,
    #[arg(long, global = true)]
    match_ratio: Option<String>,
    #[arg(long, global = true)]
    lambda1: Option<String>,
    #[arg(long, global = true)]
    pyr_levels: Option<String>,
    #[arg(long, global = true)]
    flow_window: Option<String>,
    #[arg(long, global = true)]
    fb_iterations: Option<String>,
    /// Candidate calibration frames.
    #[arg(long, global = true)]
    m: Option<String>,
    #[arg(long, global = true)]
    y_tol: Option<String>,
    #[arg(long, global = true)]
    roi_proximity: Option<String>,
}

impl Knobs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |key: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((key, v.clone()));
            }
        };
        put("algo", &self.algo);
        put("length", &self.length);
        put("order", &self.order);
        put("k", &self.k);
        put("c", &self.c);
        put("epochs", &self.epochs);
        put("seed", &self.seed);
        put("gmm_iters", &self.gmm_iters);
        put("max_descriptors", &self.max_descriptors);
        put("cameras", &self.cameras);
        put("stacking", &self.stacking);
        put("fast_threshold", &self.fast_threshold);
        put("match_ratio", &self.match_ratio);
        put("lambda1", &self.lambda1);
        put("pyr_levels", &self.pyr_levels);
        put("flow_window", &self.flow_window);
        put("fb_iterations", &self.fb_iterations);
        put("calib_m", &self.m);
        put("y_tol", &self.y_tol);
        put("roi_proximity", &self.roi_proximity);
        for (key, on) in [("use_disparity", self.use_disparity), ("normalize", self.normalize), ("standardize", self.standardize)] {
            if on {
                out.push((key, "true".into()));
            }
        }
        out
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DatasetName {
    /// Six 2D-separable activities.
    Recognition,
    /// Approach against recede.
    DepthPair,
}

/// Where `run` and `sweep` get their videos.
#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Directory with `manifest.txt` and one `<clip_id>/{left,right}` pair per video.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Render a built-in synthetic dataset with the configured seed.
    #[arg(long, value_enum)]
    dataset: Option<DatasetName>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene file or a built-in dataset.
    Synth {
        #[arg(long, value_name = "FILE", conflicts_with = "dataset")]
        scene: Option<PathBuf>,
        #[arg(long, value_enum)]
        dataset: Option<DatasetName>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Detect active regions of a clip.
    Roi {
        #[arg(long, value_name = "DIR")]
        clip: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Extract fixed-length trajectories from a clip.
    Extract {
        #[arg(long, value_name = "DIR")]
        clip: PathBuf,
        /// Region file from `roi`; detected on the fly when absent.
        #[arg(long, value_name = "FILE")]
        rois: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Self-calibrate a stereo pair from its trajectories.
    Calibrate {
        #[command(flatten)]
        pair: stages::PairInputs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Disparity-augment matched left trajectories.
    Augment {
        #[command(flatten)]
        pair: stages::PairInputs,
        #[arg(long, value_name = "FILE")]
        calibration: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Shape descriptors of a trajectory file.
    Describe {
        #[arg(long, value_name = "FILE")]
        trajectories: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Fit a codebook and write one Fisher vector per manifest video.
    Encode {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long = "descriptors", value_name = "FILE", required = true, num_args = 1..)]
        descriptors: Vec<PathBuf>,
        /// Encode with an existing codebook instead of fitting one.
        #[arg(long, value_name = "FILE")]
        codebook: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        codebook_out: Option<PathBuf>,
        /// Leave this actor's videos out of codebook fitting.
        #[arg(long)]
        exclude_actor: Option<String>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train one-vs-rest linear SVMs.
    Train {
        #[arg(long, value_name = "FILE")]
        encodings: PathBuf,
        #[arg(long)]
        exclude_actor: Option<String>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Confusion matrix of a trained model.
    Eval {
        #[arg(long, value_name = "FILE")]
        encodings: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Evaluate only this actor's videos.
        #[arg(long)]
        actor: Option<String>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Draw trajectories and regions over a clip.
    Plot {
        #[arg(long, value_name = "DIR")]
        clip: PathBuf,
        #[arg(long, value_name = "FILE")]
        trajectories: PathBuf,
        #[arg(long, value_name = "FILE")]
        rois: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Leave-one-actor-out evaluation of a whole dataset.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write the resolved configuration.
        #[arg(long, value_name = "FILE")]
        config_out: Option<PathBuf>,
    },
    /// Accuracy grid over trajectory lengths and descriptor orders.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Lengths as `a:b:step` or a comma list.
        #[arg(long, default_value = "9:27:2")]
        lengths: String,
        #[arg(long, default_value = "1:5")]
        orders: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Roi { .. } => "roi",
            Command::Extract { .. } => "extract",
            Command::Calibrate { .. } => "calibrate",
            Command::Augment { .. } => "augment",
            Command::Describe { .. } => "describe",
            Command::Encode { .. } => "encode",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Plot { .. } => "plot",
            Command::Run { .. } => "run",
            Command::Sweep { .. } => "sweep",
        }
    }
}

/// Failure caused by the caller's inputs rather than by the library.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// 3 for numeric failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err.chain().any(|c| c.downcast_ref::<trailblaze::Error>().is_some_and(trailblaze::Error::is_numeric));
    if numeric { 3 } else { 2 }
}

fn reason(err: &anyhow::Error) -> String {
    format!("{err:#}").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => fsio::read_text(path)?.parse::<PipelineConfig>()?,
        None => PipelineConfig::default(),
    };
    for (key, value) in cli.knobs.pairs() {
        cfg.set(key, &value)?;
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| input_error(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("TRAILBLAZE_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| input_error(format!("TRAILBLAZE_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(input_error("TRAILBLAZE_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = resolve_config(&cli)?;
    cfg.validate()?;
    match cli.command {
        Command::Synth { scene, dataset, out } => stages::synth(&cfg, scene.as_deref(), dataset, &out),
        Command::Roi { clip, out } => stages::roi(&cfg, &clip, &out),
        Command::Extract { clip, rois, out } => stages::extract(&cfg, &clip, rois.as_deref(), &out),
        Command::Calibrate { pair, out } => stages::calibrate(&cfg, &pair, &out),
        Command::Augment { pair, calibration, out } => stages::augment(&cfg, &pair, &calibration, &out),
        Command::Describe { trajectories, label, out } => stages::describe(&cfg, &trajectories, &label, &out),
        Command::Encode { manifest, descriptors, codebook, codebook_out, exclude_actor, out } => {
            stages::encode(&cfg, &manifest, &descriptors, codebook.as_deref(), codebook_out.as_deref(), exclude_actor.as_deref(), &out)
        }
        Command::Train { encodings, exclude_actor, out } => stages::train(&cfg, &encodings, exclude_actor.as_deref(), &out),
        Command::Eval { encodings, model, actor, out } => stages::eval(&encodings, model.as_deref(), actor.as_deref(), &out),
        Command::Plot { clip, trajectories, rois, out } => stages::plot(&clip, &trajectories, rois.as_deref(), &out),
        Command::Run { source, out, config_out } => stages::run(&cfg, &source, &out, config_out.as_deref()),
        Command::Sweep { source, lengths, orders, out } => stages::sweep(&cfg, &source, &lengths, &orders, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stage = cli.command.name();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error stage={stage} code={code} reason={}", reason(&err));
            ExitCode::from(code)
        }
    }
}

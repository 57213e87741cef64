//! Configuration, stage file formats, synthetic activity datasets,
//! end-to-end experiments and overlays.

mod config;
mod dataset;
mod experiment;
mod formats;
mod overlay;

pub use config::{CameraSet, PipelineConfig, Stacking};
pub use dataset::{format_manifest, parse_manifest, render_video, Activity, DatasetSpec, ManifestEntry, VideoSpec};
pub use experiment::{
    describe_video, disparity_trajectories, evaluate, fold_encodings, format_sweep, parse_sweep, run_experiment, sweep, track_all, track_video,
    track_video_lengths, Encoder, SweepCell, Video, VideoDescriptors, VideoTracks,
};
pub use formats::{format_encodings, format_rois, parse_encodings, parse_rois};
pub use overlay::{bresenham, plot_overlay, segments, track_color, ROI_COLOR};

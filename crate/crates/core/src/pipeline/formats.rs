//! Text files exchanged between pipeline stages.

use std::fmt::Write as _;

use crate::classify::LabeledVideo;
use crate::roi::Roi;
use crate::{Error, Result};

/// One line per region: `frame x y w h`. Frames without regions have no lines.
pub fn format_rois(rois: &[Vec<Roi>]) -> String {
    let mut out = format!("# frames {}\n", rois.len());
    for (t, boxes) in rois.iter().enumerate() {
        for r in boxes {
            writeln!(out, "{t} {} {} {} {}", r.x, r.y, r.w, r.h).unwrap();
        }
    }
    out
}

/// Parses a region file for a clip of `frames` frames.
pub fn parse_rois(text: &str, frames: usize) -> Result<Vec<Vec<Roi>>> {
    let mut out = vec![Vec::new(); frames];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse(format!("region line {}: {msg}", lineno + 1));
        let v: Vec<usize> = line.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| err("expected integers"))?;
        let [t, x, y, w, h] = v[..] else {
            return Err(err("expected `frame x y w h`"));
        };
        if w == 0 || h == 0 {
            return Err(err("empty region"));
        }
        out.get_mut(t).ok_or_else(|| err(&format!("frame {t} beyond the clip's {frames} frames")))?.push(Roi { x, y, w, h });
    }
    Ok(out)
}

/// One line per video: `clip_id label actor v0 v1 ...`.
pub fn format_encodings(videos: &[LabeledVideo]) -> String {
    let mut out = String::new();
    for v in videos {
        write!(out, "{} {} {}", v.clip_id, v.label, v.actor).unwrap();
        for x in &v.fv {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_encodings(text: &str) -> Result<Vec<LabeledVideo>> {
    let mut out: Vec<LabeledVideo> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 4 {
            return Err(Error::Parse(format!("encoding line {}: expected clip_id label actor values...", lineno + 1)));
        }
        let fv = f[3..].iter().map(|s| s.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|e| Error::Parse(format!("encoding line {}: {e}", lineno + 1)))?;
        if out.first().is_some_and(|v| v.fv.len() != fv.len()) {
            return Err(Error::Parse(format!("encoding line {}: {} values, expected {}", lineno + 1, fv.len(), out[0].fv.len())));
        }
        out.push(LabeledVideo { clip_id: f[0].into(), label: f[1].into(), actor: f[2].into(), fv });
    }
    Ok(out)
}

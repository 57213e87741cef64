//! Active-region detection: per-pixel mixture-of-Gaussians background model,
//! morphological opening, 8-connected components, and merging of nearby
//! bounding boxes into rectangular regions of interest.

use crate::media::{Clip, Frame};
use crate::{Error, Result};

/// Binary foreground mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// 0/255 grayscale rendering, for debugging output.
    pub fn to_frame(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().map(|&v| if v { 255 } else { 0 }).collect(),
        }
    }
}

/// Axis-aligned box, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64 && y >= self.y as f64 && x < (self.x + self.w) as f64 && y < (self.y + self.h) as f64
    }

    fn right(&self) -> usize {
        self.x + self.w
    }

    fn bottom(&self) -> usize {
        self.y + self.h
    }

    /// Pixels strictly between the two boxes along the wider-separated axis; 0 when
    /// they touch or overlap.
    pub fn gap(&self, other: &Roi) -> usize {
        let gx = other.x.saturating_sub(self.right()).max(self.x.saturating_sub(other.right()));
        let gy = other.y.saturating_sub(self.bottom()).max(self.y.saturating_sub(other.bottom()));
        gx.max(gy)
    }

    pub fn union(&self, other: &Roi) -> Roi {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        Roi { x, y, w: self.right().max(other.right()) - x, h: self.bottom().max(other.bottom()) - y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundParams {
    pub components: usize,
    pub learning_rate: f64,
    /// Match threshold in standard deviations.
    pub match_sigma: f64,
    /// Cumulative weight of the components that model background.
    pub background_ratio: f64,
    pub initial_variance: f64,
    pub min_variance: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self {
            components: 3,
            learning_rate: 0.02,
            match_sigma: 2.5,
            background_ratio: 0.7,
            initial_variance: 225.0,
            min_variance: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Gaussian {
    weight: f64,
    mean: f64,
    variance: f64,
}

/// Per-pixel mixture of Gaussians over intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub width: usize,
    pub height: usize,
    pub params: BackgroundParams,
    mixtures: Vec<Gaussian>,
}

impl BackgroundModel {
    /// Seeds every pixel's dominant component from `frame`.
    pub fn from_frame(frame: &Frame, params: BackgroundParams) -> Result<Self> {
        if frame.channels != 1 {
            return Err(Error::InvalidArgument("background model needs a grayscale frame".into()));
        }
        if params.components == 0 || !(params.learning_rate > 0.0 && params.learning_rate < 1.0) {
            return Err(Error::InvalidArgument("need >= 1 component and learning rate in (0, 1)".into()));
        }
        let k = params.components;
        let mut mixtures = Vec::with_capacity(frame.data.len() * k);
        for &v in &frame.data {
            mixtures.push(Gaussian { weight: 1.0, mean: v as f64, variance: params.initial_variance });
            for _ in 1..k {
                mixtures.push(Gaussian { weight: 0.0, mean: 0.0, variance: params.initial_variance });
            }
        }
        Ok(Self { width: frame.width, height: frame.height, params, mixtures })
    }

    /// `(weight, mean, variance)` of each component at a pixel.
    pub fn components_at(&self, x: usize, y: usize) -> Vec<(f64, f64, f64)> {
        let k = self.params.components;
        let i = (y * self.width + x) * k;
        self.mixtures[i..i + k].iter().map(|g| (g.weight, g.mean, g.variance)).collect()
    }

    /// Classifies every pixel of `frame` and folds it into the model.
    pub fn update_and_subtract(&mut self, frame: &Frame) -> Result<BinaryMask> {
        if frame.width != self.width || frame.height != self.height || frame.channels != 1 {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{}x{} vs model {}x{}",
                frame.width, frame.height, frame.channels, self.width, self.height
            )));
        }
        let p = self.params;
        let k = p.components;
        let mut mask = BinaryMask::new(self.width, self.height);
        for (i, &v) in frame.data.iter().enumerate() {
            let mix = &mut self.mixtures[i * k..(i + 1) * k];
            let x = v as f64;
            // most reliable components first
            mix.sort_by(|a, b| {
                let ra = a.weight / a.variance.sqrt();
                let rb = b.weight / b.variance.sqrt();
                rb.total_cmp(&ra)
            });
            let mut background_count = k;
            let mut acc = 0.0;
            for (j, g) in mix.iter().enumerate() {
                acc += g.weight;
                if acc > p.background_ratio {
                    background_count = j + 1;
                    break;
                }
            }
            let matched = mix
                .iter()
                .position(|g| g.weight > 0.0 && (x - g.mean).abs() <= p.match_sigma * g.variance.sqrt());
            match matched {
                Some(j) => {
                    for (c, g) in mix.iter_mut().enumerate() {
                        let hit = if c == j { 1.0 } else { 0.0 };
                        g.weight = (1.0 - p.learning_rate) * g.weight + p.learning_rate * hit;
                    }
                    let g = &mut mix[j];
                    let diff = x - g.mean;
                    g.mean += p.learning_rate * diff;
                    g.variance = ((1.0 - p.learning_rate) * g.variance + p.learning_rate * diff * diff).max(p.min_variance);
                    mask.data[i] = j >= background_count;
                }
                None => {
                    let weakest = mix
                        .iter()
                        .enumerate()
                        .min_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
                        .map(|(j, _)| j)
                        .expect("at least one component");
                    mix[weakest] = Gaussian { weight: p.learning_rate, mean: x, variance: p.initial_variance };
                    mask.data[i] = true;
                }
            }
            let total: f64 = mix.iter().map(|g| g.weight).sum();
            for g in mix.iter_mut() {
                g.weight /= total;
            }
        }
        Ok(mask)
    }
}

/// Free-function form of [`BackgroundModel::update_and_subtract`].
pub fn update_and_subtract(mut model: BackgroundModel, frame: &Frame) -> Result<(BackgroundModel, BinaryMask)> {
    let mask = model.update_and_subtract(frame)?;
    Ok((model, mask))
}

fn line_filter(src: &BinaryMask, radius: usize, horizontal: bool, erode: bool) -> BinaryMask {
    let mut out = BinaryMask::new(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let (c, len) = if horizontal { (x, src.width) } else { (y, src.height) };
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(len - 1);
            let mut it = (lo..=hi).map(|i| if horizontal { src.get(i, y) } else { src.get(x, i) });
            let v = if erode { it.all(|b| b) } else { it.any(|b| b) };
            out.set(x, y, v);
        }
    }
    out
}

/// Opening (erosion then dilation) with a `(2r+1)`-square element; pixels
/// outside the frame are ignored.
pub fn morph_clean(mask: &BinaryMask, radius: usize) -> Result<BinaryMask> {
    if radius < 1 {
        return Err(Error::InvalidArgument("morphology radius must be >= 1".into()));
    }
    let eroded = line_filter(&line_filter(mask, radius, true, true), radius, false, true);
    Ok(line_filter(&line_filter(&eroded, radius, true, false), radius, false, false))
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Bounding boxes of 8-connected foreground components, in raster order of
/// each component's first pixel.
pub fn component_boxes(mask: &BinaryMask) -> Vec<Roi> {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![usize::MAX; w * h];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != usize::MAX {
            continue;
        }
        let id = boxes.len();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask.data[j] && labels[j] == usize::MAX {
                        labels[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        boxes.push(Roi { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 });
    }
    boxes
}

/// Merges boxes that overlap or lie within `proximity` pixels of each other,
/// repeating on the merged boxes until no such pair remains. Sorted by `(x, y)`.
pub fn merge_boxes(mut boxes: Vec<Roi>, proximity: usize) -> Vec<Roi> {
    loop {
        let n = boxes.len();
        let mut sets = DisjointSet::new(n);
        let mut merged_any = false;
        for i in 0..n {
            for j in i + 1..n {
                if boxes[i].gap(&boxes[j]) <= proximity {
                    sets.union(i, j);
                    merged_any = true;
                }
            }
        }
        let mut groups: Vec<Option<Roi>> = vec![None; n];
        for (i, b) in boxes.iter().enumerate() {
            let r = sets.find(i);
            groups[r] = Some(groups[r].map_or(*b, |g| g.union(b)));
        }
        boxes = groups.into_iter().flatten().collect();
        if !merged_any {
            boxes.sort();
            return boxes;
        }
    }
}

/// Regions of interest of a cleaned foreground mask.
pub fn extract_regions(mask: &BinaryMask, proximity: usize) -> Vec<Roi> {
    merge_boxes(component_boxes(mask), proximity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiParams {
    pub background: BackgroundParams,
    pub morph_radius: usize,
    pub proximity: usize,
    /// Frames that only train the model.
    pub warmup: usize,
}

impl Default for RoiParams {
    fn default() -> Self {
        Self { background: BackgroundParams::default(), morph_radius: 1, proximity: 10, warmup: 10 }
    }
}

/// Streaming region detector over the frames of one clip.
#[derive(Debug, Clone)]
pub struct RoiDetector {
    params: RoiParams,
    model: Option<BackgroundModel>,
    seen: usize,
}

impl RoiDetector {
    pub fn new(params: RoiParams) -> Self {
        Self { params, model: None, seen: 0 }
    }

    pub fn process(&mut self, frame: &Frame) -> Result<Vec<Roi>> {
        let model = match &mut self.model {
            Some(m) => m,
            None => self.model.insert(BackgroundModel::from_frame(frame, self.params.background)?),
        };
        let mask = model.update_and_subtract(frame)?;
        self.seen += 1;
        if self.seen <= self.params.warmup {
            return Ok(Vec::new());
        }
        let clean = morph_clean(&mask, self.params.morph_radius)?;
        Ok(extract_regions(&clean, self.params.proximity))
    }
}

/// Regions of every frame of a grayscale clip.
pub fn detect_rois(clip: &Clip, params: RoiParams) -> Result<Vec<Vec<Roi>>> {
    let mut det = RoiDetector::new(params);
    clip.frames.iter().map(|f| det.process(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(width: usize, height: usize, on: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        for &(x, y) in on {
            m.set(x, y, true);
        }
        m
    }

    fn fill_rect(m: &mut BinaryMask, r: Roi) {
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                m.set(x, y, true);
            }
        }
    }

    /// Straight 2-D min filter then max filter over in-bounds pixels.
    fn opening_oracle(m: &BinaryMask, r: usize) -> BinaryMask {
        let window = |src: &BinaryMask, x: usize, y: usize, all: bool| {
            let mut vals = Vec::new();
            for yy in y.saturating_sub(r)..=(y + r).min(src.height - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(src.width - 1) {
                    vals.push(src.get(xx, yy));
                }
            }
            if all {
                vals.iter().all(|&v| v)
            } else {
                vals.iter().any(|&v| v)
            }
        };
        let mut eroded = BinaryMask::new(m.width, m.height);
        for y in 0..m.height {
            for x in 0..m.width {
                eroded.set(x, y, window(m, x, y, true));
            }
        }
        let mut out = BinaryMask::new(m.width, m.height);
        for y in 0..m.height {
            for x in 0..m.width {
                out.set(x, y, window(&eroded, x, y, false));
            }
        }
        out
    }

    /// Pairwise proximity graph over boxes, components by repeated relabelling.
    fn union_find_oracle(boxes: &[Roi], proximity: usize) -> Vec<Roi> {
        let mut label: Vec<usize> = (0..boxes.len()).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..boxes.len() {
                for j in 0..boxes.len() {
                    if boxes[i].gap(&boxes[j]) <= proximity && label[j] > label[i] {
                        label[j] = label[i];
                        changed = true;
                    }
                }
            }
        }
        let mut out: Vec<Roi> = Vec::new();
        let mut labels: Vec<usize> = label.clone();
        labels.sort();
        labels.dedup();
        for l in labels {
            let members: Vec<&Roi> = boxes.iter().zip(&label).filter(|(_, &k)| k == l).map(|(b, _)| b).collect();
            out.push(members.iter().skip(1).fold(*members[0], |acc, b| acc.union(b)));
        }
        out.sort();
        out
    }

    #[test]
    fn constant_clip_converges_to_empty_mask() {
        let frame = Frame::filled(16, 12, 90);
        let mut model = BackgroundModel::from_frame(&frame, BackgroundParams::default()).unwrap();
        for _ in 0..20 {
            model.update_and_subtract(&frame).unwrap();
        }
        assert_eq!(model.update_and_subtract(&frame).unwrap().count(), 0);
        for y in 0..12 {
            for x in 0..16 {
                let w: f64 = model.components_at(x, y).iter().map(|c| c.0).sum();
                assert!((w - 1.0).abs() < 1e-6);
                assert!(model.components_at(x, y).iter().all(|c| c.2 > 0.0));
            }
        }
    }

    #[test]
    fn jumping_pixel_is_foreground() {
        let dark = Frame::filled(8, 8, 0);
        let mut model = BackgroundModel::from_frame(&dark, BackgroundParams::default()).unwrap();
        for _ in 0..20 {
            model.update_and_subtract(&dark).unwrap();
        }
        let mut jump = dark.clone();
        jump.data[3 * 8 + 5] = 255;
        let mask = model.update_and_subtract(&jump).unwrap();
        assert!(mask.get(5, 3));
        assert_eq!(mask.count(), 1);
    }

    #[test]
    fn pixel_within_threshold_is_background() {
        let base = Frame::filled(4, 4, 100);
        let mut model = BackgroundModel::from_frame(&base, BackgroundParams::default()).unwrap();
        for _ in 0..30 {
            model.update_and_subtract(&base).unwrap();
        }
        let (_, mean, var) = model.components_at(1, 1)[0];
        let near = (mean + 2.4 * var.sqrt()).floor() as u8;
        let mut f = base.clone();
        f.data[5] = near;
        assert!(!model.update_and_subtract(&f).unwrap().get(1, 1));
    }

    #[test]
    fn model_rejects_size_mismatch() {
        let mut model = BackgroundModel::from_frame(&Frame::filled(4, 4, 0), BackgroundParams::default()).unwrap();
        assert!(matches!(model.update_and_subtract(&Frame::filled(5, 4, 0)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn opening_removes_specks_and_keeps_blocks() {
        let speck = mask_from(9, 9, &[(4, 4)]);
        assert_eq!(morph_clean(&speck, 1).unwrap().count(), 0);

        let mut block = BinaryMask::new(30, 30);
        fill_rect(&mut block, Roi { x: 5, y: 5, w: 20, h: 20 });
        assert_eq!(morph_clean(&block, 1).unwrap(), block);
        assert!(morph_clean(&block, 0).is_err());
    }

    #[test]
    fn region_examples() {
        assert!(extract_regions(&BinaryMask::new(10, 10), 10).is_empty());

        let mut m = BinaryMask::new(40, 40);
        fill_rect(&mut m, Roi { x: 0, y: 0, w: 10, h: 10 });
        fill_rect(&mut m, Roi { x: 5, y: 5, w: 10, h: 10 });
        assert_eq!(extract_regions(&m, 0), vec![Roi { x: 0, y: 0, w: 15, h: 15 }]);
    }

    #[test]
    fn chained_boxes_merge() {
        // A near B, B near C, A far from C
        let mut m = BinaryMask::new(80, 20);
        fill_rect(&mut m, Roi { x: 0, y: 0, w: 5, h: 5 });
        fill_rect(&mut m, Roi { x: 12, y: 0, w: 5, h: 5 });
        fill_rect(&mut m, Roi { x: 24, y: 0, w: 5, h: 5 });
        let a = Roi { x: 0, y: 0, w: 5, h: 5 };
        let c = Roi { x: 24, y: 0, w: 5, h: 5 };
        assert!(a.gap(&c) > 10);
        let boxes = component_boxes(&m);
        assert_eq!(extract_regions(&m, 10), union_find_oracle(&boxes, 10));
        assert_eq!(extract_regions(&m, 10), vec![Roi { x: 0, y: 0, w: 29, h: 5 }]);
        assert_eq!(extract_regions(&m, 5).len(), 3);
    }

    #[test]
    fn warmup_frames_emit_nothing() {
        let mut det = RoiDetector::new(RoiParams::default());
        let mut f = Frame::filled(32, 32, 50);
        for _ in 0..10 {
            assert!(det.process(&f).unwrap().is_empty());
        }
        for y in 10..20 {
            for x in 10..20 {
                f.data[y * 32 + x] = 220;
            }
        }
        let rois = det.process(&f).unwrap();
        assert_eq!(rois, vec![Roi { x: 10, y: 10, w: 10, h: 10 }]);
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (4usize..24, 4usize..24).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::bool::weighted(0.3), w * h)
                .prop_map(move |data| BinaryMask { width: w, height: h, data })
        })
    }

    proptest! {
        #[test]
        fn opening_matches_bruteforce(m in arb_mask(), r in 1usize..3) {
            prop_assert_eq!(morph_clean(&m, r).unwrap(), opening_oracle(&m, r));
        }

        #[test]
        fn regions_partition_foreground(m in arb_mask(), prox in 0usize..4) {
            let rois = extract_regions(&m, prox);
            for y in 0..m.height {
                for x in 0..m.width {
                    let n = rois.iter().filter(|r| r.contains(x as f64, y as f64)).count();
                    if m.get(x, y) {
                        prop_assert_eq!(n, 1);
                    }
                }
            }
            for r in &rois {
                let has_fg = (r.y..r.y + r.h).any(|y| (r.x..r.x + r.w).any(|x| m.get(x, y)));
                prop_assert!(has_fg);
                prop_assert!(r.x + r.w <= m.width && r.y + r.h <= m.height);
            }
            if prox == 0 {
                for (i, a) in rois.iter().enumerate() {
                    for b in &rois[i + 1..] {
                        let overlap = a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
                        prop_assert!(!overlap);
                    }
                }
            }
        }

        #[test]
        fn regions_ignore_discovery_order(m in arb_mask(), prox in 0usize..6, rot in 0usize..50) {
            let mut boxes = component_boxes(&m);
            let expected = merge_boxes(boxes.clone(), prox);
            if !boxes.is_empty() {
                let k = rot % boxes.len();
                boxes.rotate_left(k);
                boxes.reverse();
            }
            prop_assert_eq!(merge_boxes(boxes, prox), expected);
        }
    }
}

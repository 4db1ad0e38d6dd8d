//! Anchor generation and the two assigners.
//!
//! Both assigners score anchors after cover-snapping them to the image frame,
//! so every measure sees the same integer boxes that the mask lookups use.
//! Distances and the centre-inside test use the unsnapped anchor centres.

use std::cmp::Ordering;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, FloatBox};
use crate::gmaiou::GroundTruth;
use crate::measure::{Measure, Proximity};

/// One pyramid level of an anchor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub stride: u32,
    /// Anchor side lengths in pixels for a square anchor.
    pub scales: Vec<f64>,
    /// Width over height.
    pub aspect_ratios: Vec<f64>,
}

impl LevelSpec {
    pub fn anchors_per_location(&self) -> usize {
        self.scales.len() * self.aspect_ratios.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub levels: Vec<LevelSpec>,
}

impl AnchorConfig {
    /// Five levels, strides 8 to 128, three aspect ratios per location.
    pub fn yolact_550() -> Self {
        let scales = [24.0, 48.0, 96.0, 192.0, 384.0];
        let levels = [8, 16, 32, 64, 128]
            .into_iter()
            .zip(scales)
            .map(|(stride, scale)| LevelSpec {
                stride,
                scales: vec![scale],
                aspect_ratios: vec![1.0, 0.5, 2.0],
            })
            .collect();
        Self { levels }
    }

    /// Same pyramid, one square anchor per location with side 8 x stride.
    pub fn atss_550() -> Self {
        let levels = [8, 16, 32, 64, 128]
            .into_iter()
            .map(|stride| LevelSpec {
                stride,
                scales: vec![8.0 * f64::from(stride)],
                aspect_ratios: vec![1.0],
            })
            .collect();
        Self { levels }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "yolact-550" => Some(Self::yolact_550()),
            "atss-550" => Some(Self::atss_550()),
            _ => None,
        }
    }

    /// A preset name, or a path to a JSON file `{"levels": [...]}`.
    pub fn resolve(source: &str) -> Result<Self> {
        if let Some(cfg) = Self::preset(source) {
            return Ok(cfg);
        }
        let path = Path::new(source);
        if !path.exists() {
            return Err(Error::Config(format!(
                "`{source}` is neither a preset (yolact-550, atss-550) nor a file"
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: AnchorConfig = serde_json::from_str(&text).map_err(|e| Error::Schema {
            field: "anchor-config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("anchor config has no levels".into()));
        }
        for (i, level) in self.levels.iter().enumerate() {
            let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|&x| x.is_finite() && x > 0.0);
            if level.stride == 0 || !positive(&level.scales) || !positive(&level.aspect_ratios) {
                return Err(Error::Config(format!(
                    "level {i}: stride, scales and aspect ratios must be positive and non-empty"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: FloatBox,
    pub level: usize,
    pub center: (f64, f64),
}

/// Materialized anchors for one image, level-major then row-major then
/// per-location index.
#[derive(Debug, Clone)]
pub struct AnchorGrid {
    width: u32,
    height: u32,
    anchors: Vec<Anchor>,
    levels: Vec<Range<usize>>,
}

impl AnchorGrid {
    pub fn frame(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Index range of each pyramid level.
    pub fn levels(&self) -> &[Range<usize>] {
        &self.levels
    }

    /// Cover-snapped integer boxes, one per anchor.
    pub fn snapped(&self) -> Vec<BBox> {
        self.anchors
            .iter()
            .map(|a| {
                a.bbox
                    .cover_snap(self.width, self.height)
                    .expect("anchor centres lie inside the frame")
            })
            .collect()
    }

    /// Grid from explicit anchors grouped into levels; used for hand-built
    /// scenes. Anchors are ordered by level as given.
    pub fn from_levels(width: u32, height: u32, levels: Vec<Vec<FloatBox>>) -> Result<Self> {
        let mut anchors = Vec::new();
        let mut ranges = Vec::new();
        for (level, boxes) in levels.into_iter().enumerate() {
            let start = anchors.len();
            for bbox in boxes {
                let center = bbox.center();
                if !(center.0 > 0.0 && center.0 < f64::from(width) && center.1 > 0.0 && center.1 < f64::from(height)) {
                    return Err(Error::Config(format!("anchor centre {center:?} outside the frame")));
                }
                anchors.push(Anchor { bbox, level, center });
            }
            ranges.push(start..anchors.len());
        }
        Ok(Self {
            width,
            height,
            anchors,
            levels: ranges,
        })
    }
}

fn feature_size(extent: u32, stride: u32) -> u32 {
    extent.div_ceil(stride)
}

pub fn generate_anchors(width: u32, height: u32, config: &AnchorConfig) -> Result<AnchorGrid> {
    config.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidFrame { width, height });
    }
    let mut anchors = Vec::new();
    let mut levels = Vec::with_capacity(config.levels.len());
    for (li, level) in config.levels.iter().enumerate() {
        let start = anchors.len();
        let fw = feature_size(width, level.stride);
        let fh = feature_size(height, level.stride);
        // centres spread evenly so the last cell stays inside the frame
        let step_x = f64::from(width) / f64::from(fw);
        let step_y = f64::from(height) / f64::from(fh);
        for j in 0..fh {
            let cy = (f64::from(j) + 0.5) * step_y;
            for i in 0..fw {
                let cx = (f64::from(i) + 0.5) * step_x;
                for &scale in &level.scales {
                    for &ratio in &level.aspect_ratios {
                        let w = scale * ratio.sqrt();
                        let h = scale / ratio.sqrt();
                        anchors.push(Anchor {
                            bbox: FloatBox::from_center(cx, cy, w, h)?,
                            level: li,
                            center: (cx, cy),
                        });
                    }
                }
            }
        }
        levels.push(start..anchors.len());
    }
    Ok(AnchorGrid {
        width,
        height,
        anchors,
        levels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "label", content = "gt_index", rename_all = "lowercase")]
pub enum Label {
    Positive(usize),
    Negative,
    Ignore,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub negative: usize,
    pub ignore: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.ignore
    }

    pub fn add(&mut self, other: &LabelCounts) {
        self.positive += other.positive;
        self.negative += other.negative;
        self.ignore += other.ignore;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    pub labels: Vec<Label>,
    /// Best score seen for each anchor.
    pub scores: Vec<f64>,
}

impl AssignmentResult {
    fn all_negative(n: usize) -> Self {
        Self {
            labels: vec![Label::Negative; n],
            scores: vec![0.0; n],
        }
    }

    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for label in &self.labels {
            match label {
                Label::Positive(_) => c.positive += 1,
                Label::Negative => c.negative += 1,
                Label::Ignore => c.ignore += 1,
            }
        }
        c
    }

    pub fn positives(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().enumerate().filter_map(|(i, l)| match l {
            Label::Positive(g) => Some((i, *g)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedThresholdConfig {
    negative: f64,
    positive: f64,
}

impl FixedThresholdConfig {
    pub fn new(negative: f64, positive: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&negative) || !(0.0..=1.0).contains(&positive) || negative > positive {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 <= neg ({negative}) <= pos ({positive}) <= 1"
            )));
        }
        Ok(Self { negative, positive })
    }

    pub fn negative(&self) -> f64 {
        self.negative
    }

    pub fn positive(&self) -> f64 {
        self.positive
    }

    /// `>= pos` is positive, `< neg` negative, anything between ignored.
    pub fn label(&self, score: f64, gt: usize) -> Label {
        if score >= self.positive {
            Label::Positive(gt)
        } else if score < self.negative {
            Label::Negative
        } else {
            Label::Ignore
        }
    }
}

impl Default for FixedThresholdConfig {
    fn default() -> Self {
        Self {
            negative: 0.4,
            positive: 0.5,
        }
    }
}

/// Labels each anchor from its best score over all instances.
pub fn assign_fixed<P: Proximity + ?Sized>(
    grid: &AnchorGrid,
    gts: &[GroundTruth],
    cfg: &FixedThresholdConfig,
    measure: &P,
) -> AssignmentResult {
    if gts.is_empty() {
        return AssignmentResult::all_negative(grid.len());
    }
    let boxes = grid.snapped();
    let (labels, scores) = boxes
        .par_iter()
        .map(|anchor| {
            let mut best = (f64::NEG_INFINITY, 0);
            for (g, gt) in gts.iter().enumerate() {
                let s = measure.score(anchor, gt);
                if s > best.0 {
                    best = (s, g);
                }
            }
            (cfg.label(best.0, best.1), best.0)
        })
        .unzip();
    AssignmentResult { labels, scores }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtssConfig {
    k: usize,
    pub measure: Measure,
}

impl AtssConfig {
    pub fn new(k: usize, measure: Measure) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(Self { k, measure })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Candidate statistics: `threshold = mean + population standard deviation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveThreshold {
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
}

pub fn adaptive_threshold(scores: &[f64]) -> AdaptiveThreshold {
    if scores.is_empty() {
        return AdaptiveThreshold {
            mean: 0.0,
            std: 0.0,
            threshold: f64::INFINITY,
        };
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    AdaptiveThreshold {
        mean,
        std,
        threshold: mean + std,
    }
}

/// The `k` anchors per level whose centres are closest to the centre of
/// `gt_box`, ties broken by anchor index. Returned in ascending index order.
pub fn atss_candidates(grid: &AnchorGrid, gt_box: &BBox, k: usize) -> Vec<usize> {
    let (gx, gy) = gt_box.center();
    let mut out = Vec::new();
    let mut ranked: Vec<(f64, usize)> = Vec::new();
    for range in grid.levels() {
        ranked.clear();
        ranked.extend(range.clone().map(|i| {
            let (cx, cy) = grid.anchors[i].center;
            ((cx - gx).powi(2) + (cy - gy).powi(2), i)
        }));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if ranked.len() > k {
            ranked.select_nth_unstable_by(k - 1, cmp);
            ranked.truncate(k);
        }
        out.extend(ranked.iter().map(|&(_, i)| i));
    }
    out.sort_unstable();
    out
}

/// What ATSS did for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GtSelection {
    pub candidates: Vec<usize>,
    pub scores: Vec<f64>,
    pub threshold: AdaptiveThreshold,
    /// Candidates passing both the threshold and the centre test.
    pub kept: Vec<usize>,
}

pub fn assign_atss(grid: &AnchorGrid, gts: &[GroundTruth], cfg: &AtssConfig) -> AssignmentResult {
    assign_atss_with(grid, gts, cfg.k, &cfg.measure).0
}

/// ATSS with an arbitrary proximity, also returning the per-instance trace.
pub fn assign_atss_with<P: Proximity + ?Sized>(
    grid: &AnchorGrid,
    gts: &[GroundTruth],
    k: usize,
    measure: &P,
) -> (AssignmentResult, Vec<GtSelection>) {
    if gts.is_empty() {
        return (AssignmentResult::all_negative(grid.len()), Vec::new());
    }
    let boxes = grid.snapped();
    let selections: Vec<GtSelection> = gts
        .par_iter()
        .map(|gt| {
            let candidates = atss_candidates(grid, gt.bbox(), k);
            let scores: Vec<f64> = candidates.iter().map(|&i| measure.score(&boxes[i], gt)).collect();
            let threshold = adaptive_threshold(&scores);
            let kept = candidates
                .iter()
                .zip(&scores)
                .filter(|&(&i, &s)| {
                    let (cx, cy) = grid.anchors[i].center;
                    s >= threshold.threshold && gt.bbox().contains_point(cx, cy)
                })
                .map(|(&i, _)| i)
                .collect();
            GtSelection {
                candidates,
                scores,
                threshold,
                kept,
            }
        })
        .collect();

    let mut result = AssignmentResult::all_negative(grid.len());
    let mut best: Vec<Option<(f64, usize)>> = vec![None; grid.len()];
    for (g, sel) in selections.iter().enumerate() {
        for (&i, &s) in sel.candidates.iter().zip(&sel.scores) {
            if s > result.scores[i] {
                result.scores[i] = s;
            }
            if sel.kept.binary_search(&i).is_ok()
                && best[i].is_none_or(|(bs, _)| s.total_cmp(&bs) == Ordering::Greater)
            {
                best[i] = Some((s, g));
            }
        }
    }
    for (i, b) in best.into_iter().enumerate() {
        if let Some((s, g)) = b {
            result.labels[i] = Label::Positive(g);
            result.scores[i] = s;
        }
    }
    (result, selections)
}

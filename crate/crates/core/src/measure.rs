//! Proximity measures consumed by the assigners and the analysis commands.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{diou, giou, iou, BBox};
use crate::gmaiou::{gmaiou, GmaMode, GroundTruth};

/// Anchor-to-instance proximity used to score candidates.
pub trait Proximity: Sync {
    fn score(&self, anchor: &BBox, gt: &GroundTruth) -> f64;
}

/// The built-in measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    Iou,
    Giou,
    Diou,
    GmaIou(GmaMode),
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::Iou,
        Measure::Giou,
        Measure::Diou,
        Measure::GmaIou(GmaMode::PolyIsBox),
        Measure::GmaIou(GmaMode::PolyIsMask),
    ];

    /// Box measures compare against the instance box; GmaIoU uses the mask.
    pub fn evaluate(&self, anchor: &BBox, gt: &GroundTruth) -> Result<f64> {
        match self {
            Measure::Iou => Ok(iou(anchor, gt.bbox())),
            Measure::Giou => Ok(giou(anchor, gt.bbox())),
            Measure::Diou => Ok(diou(anchor, gt.bbox())),
            Measure::GmaIou(mode) => gmaiou(anchor, gt, *mode),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Measure::Iou => "iou",
            Measure::Giou => "giou",
            Measure::Diou => "diou",
            Measure::GmaIou(GmaMode::PolyIsBox) => "gmaiou-b",
            Measure::GmaIou(GmaMode::PolyIsMask) => "gmaiou-m",
        }
    }
}

impl Proximity for Measure {
    fn score(&self, anchor: &BBox, gt: &GroundTruth) -> f64 {
        self.evaluate(anchor, gt)
            .expect("ground truths always carry a non-empty mask")
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown measure `{s}` (expected iou, giou, diou, gmaiou-b or gmaiou-m)"
                ))
            })
    }
}

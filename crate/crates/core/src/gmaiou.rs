//! Mask-over-box ratio and Generalized Mask-aware IoU.
//!
//! For an anchor `Â`, a ground truth with box `B` and mask `M`, and an
//! "energy" region `P` (either `B` or `M`):
//!
//! ```text
//! GmaI   = |P| / |M| * |Â ∩ M|
//! GmaU   = |Â ∪ P|
//! GmaIoU = GmaI / GmaU
//! ```
//!
//! Off-mask pixels contribute nothing to the intersection and each on-mask
//! pixel carries weight `|P| / |M|`. With `P = B` this is the mask-aware IoU;
//! with `P = M` it is the plain IoU between the anchor box and the mask. Both
//! cases only need `|M|` and `|Â ∩ M|`, which come from the integral image.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_intersection_area, BBox};
use crate::mask::{box_mask_intersection, build_integral, mask_area, IntegralImage, RasterMask};
use crate::measure::Measure;

/// Which region carries the ground truth's energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GmaMode {
    /// `P = B`: mask-aware IoU.
    PolyIsBox,
    /// `P = M`: IoU between anchor box and mask.
    PolyIsMask,
}

impl GmaMode {
    pub const ALL: [GmaMode; 2] = [GmaMode::PolyIsBox, GmaMode::PolyIsMask];
}

/// One annotated instance: box, mask and the mask's integral image.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    bbox: BBox,
    mask: RasterMask,
    integral: IntegralImage,
    class_id: u32,
    /// Source annotation id, when loaded from a file.
    pub annotation_id: Option<u64>,
    /// Box stored in the annotation (`[x, y, w, h]`), kept for diagnostics only.
    pub stored_bbox: Option<[f64; 4]>,
}

impl GroundTruth {
    /// Builds the integral image and recomputes the tight box from the mask.
    pub fn from_mask(mask: RasterMask, class_id: u32) -> Result<Self> {
        let bbox = mask.tight_box().ok_or(Error::EmptyMask)?;
        let integral = build_integral(&mask);
        Ok(Self {
            bbox,
            mask,
            integral,
            class_id,
            annotation_id: None,
            stored_bbox: None,
        })
    }

    /// Uses an explicit box, which must contain every set mask pixel.
    pub fn with_box(bbox: BBox, mask: RasterMask, class_id: u32) -> Result<Self> {
        let tight = mask.tight_box().ok_or(Error::EmptyMask)?;
        if tight.intersect(&bbox) != Some(tight) {
            return Err(Error::Config(format!(
                "box {bbox:?} does not contain the mask extent {tight:?}"
            )));
        }
        let mut gt = Self::from_mask(mask, class_id)?;
        gt.bbox = bbox;
        Ok(gt)
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn mask(&self) -> &RasterMask {
        &self.mask
    }

    pub fn integral(&self) -> &IntegralImage {
        &self.integral
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn frame(&self) -> (u32, u32) {
        (self.mask.width(), self.mask.height())
    }

    pub fn mask_area(&self) -> u64 {
        mask_area(&self.integral)
    }

    /// `MOB(B, M) = |M| / |B|` for the instance's own box.
    pub fn mob(&self) -> f64 {
        self.mask_area() as f64 / self.bbox.area() as f64
    }

    #[doc(hidden)]
    pub fn corrupt_integral_for_testing(&mut self) {
        self.integral.corrupt_for_testing();
    }
}

/// Exact `numerator / denominator` before the final division.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GmaRatio {
    pub numerator: u128,
    pub denominator: u128,
}

impl GmaRatio {
    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// Compares the represented values by cross-multiplication.
    pub fn cmp_value(&self, other: &GmaRatio) -> Ordering {
        match (
            self.numerator.checked_mul(other.denominator),
            other.numerator.checked_mul(self.denominator),
        ) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => self.value().total_cmp(&other.value()),
        }
    }
}

/// `|B̄ ∩ M| / |B̄|` with `b` clipped to the mask frame; 0 when nothing is left.
pub fn mob_ratio(b: &BBox, gt: &GroundTruth) -> f64 {
    let (w, h) = gt.frame();
    match b.clip(w, h) {
        Some(c) => box_mask_intersection(&gt.integral, &c) as f64 / c.area() as f64,
        None => 0.0,
    }
}

/// Integer terms shared by every GmaIoU quantity.
struct Terms {
    anchor_area: u64,
    anchor_mask: u64,
    mask_area: u64,
    poly_area: u64,
    anchor_poly: u64,
}

fn terms(anchor: &BBox, gt: &GroundTruth, mode: GmaMode) -> Result<Terms> {
    let mask_area = gt.mask_area();
    if mask_area == 0 {
        return Err(Error::EmptyMask);
    }
    let (w, h) = gt.frame();
    let clipped = anchor.clip(w, h);
    let anchor_area = clipped.map_or(0, |c| c.area());
    let anchor_mask = clipped.map_or(0, |c| box_mask_intersection(&gt.integral, &c));
    let (poly_area, anchor_poly) = match mode {
        GmaMode::PolyIsBox => (
            gt.bbox.area(),
            clipped.map_or(0, |c| box_intersection_area(&c, &gt.bbox)),
        ),
        GmaMode::PolyIsMask => (mask_area, anchor_mask),
    };
    Ok(Terms {
        anchor_area,
        anchor_mask,
        mask_area,
        poly_area,
        anchor_poly,
    })
}

/// `(|P| / |M|) * |Â ∩ M|`.
pub fn gma_intersection(anchor: &BBox, gt: &GroundTruth, mode: GmaMode) -> Result<f64> {
    let t = terms(anchor, gt, mode)?;
    Ok(t.poly_area as f64 / t.mask_area as f64 * t.anchor_mask as f64)
}

/// `|Â ∪ P| = |Â| + |P| - |Â ∩ P|`.
pub fn gma_union(anchor: &BBox, gt: &GroundTruth, mode: GmaMode) -> Result<f64> {
    let t = terms(anchor, gt, mode)?;
    Ok((t.anchor_area + t.poly_area - t.anchor_poly) as f64)
}

/// GmaIoU as the exact ratio `|P| |Â ∩ M| / (|M| |Â ∪ P|)`.
#[inline]
pub fn gmaiou_ratio(anchor: &BBox, gt: &GroundTruth, mode: GmaMode) -> Result<GmaRatio> {
    let t = terms(anchor, gt, mode)?;
    let union = t.anchor_area + t.poly_area - t.anchor_poly;
    Ok(GmaRatio {
        numerator: u128::from(t.poly_area) * u128::from(t.anchor_mask),
        denominator: u128::from(t.mask_area) * u128::from(union),
    })
}

pub fn gmaiou(anchor: &BBox, gt: &GroundTruth, mode: GmaMode) -> Result<f64> {
    gmaiou_ratio(anchor, gt, mode).map(|r| r.value())
}

/// Index of the bin holding `score` among `bins` equal bins over `[0, 1]`.
/// Scores outside the range land in the first or last bin.
pub fn bin_index(score: f64, bins: usize) -> usize {
    let i = (score.max(0.0) * bins as f64).floor() as usize;
    i.min(bins - 1)
}

/// Joint counts of two `[0, 1]` measures over anchor/instance pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram2d {
    bins: usize,
    counts: Vec<u64>,
}

impl Histogram2d {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            counts: vec![0; bins * bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn get(&self, x_bin: usize, y_bin: usize) -> u64 {
        self.counts[x_bin * self.bins + y_bin]
    }

    pub fn add(&mut self, x: f64, y: f64) {
        let (i, j) = (bin_index(x, self.bins), bin_index(y, self.bins));
        self.counts[i * self.bins + j] += 1;
    }

    pub fn merge(&mut self, other: &Histogram2d) {
        assert_eq!(self.bins, other.bins);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Count outside the diagonal cells.
    pub fn off_diagonal(&self) -> u64 {
        self.total() - (0..self.bins).map(|i| self.get(i, i)).sum::<u64>()
    }

    /// Non-empty cells as `(x_bin, y_bin, count)`, x-major.
    pub fn nonzero_cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(k, &c)| (k / self.bins, k % self.bins, c))
    }
}

pub(crate) fn check_hist_measure(m: Measure) -> Result<()> {
    match m {
        Measure::Iou | Measure::GmaIou(_) => Ok(()),
        other => Err(Error::Config(format!(
            "histogram measures must lie in [0, 1]; `{other}` does not"
        ))),
    }
}

/// Bins every pair by `(measure_x, measure_y)`.
pub fn joint_histogram<'a>(
    pairs: impl IntoIterator<Item = (BBox, &'a GroundTruth)>,
    measure_x: Measure,
    measure_y: Measure,
    bins: usize,
) -> Result<Histogram2d> {
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    check_hist_measure(measure_x)?;
    check_hist_measure(measure_y)?;
    let mut hist = Histogram2d::new(bins);
    for (anchor, gt) in pairs {
        hist.add(measure_x.evaluate(&anchor, gt)?, measure_y.evaluate(&anchor, gt)?);
    }
    Ok(hist)
}

//! Brute-force reference implementations.
//!
//! Everything here counts pixels one by one and never touches an integral
//! image, so it can audit the fast path in [`crate::gmaiou`]. The general
//! form accepts an arbitrary pixel set as the energy region `P`.

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::gmaiou::{gmaiou_ratio, GmaMode, GmaRatio, GroundTruth};
use crate::mask::{build_integral, rasterize, Polygon, RasterMask};
use crate::measure::Proximity;

/// Explicit set of pixels inside a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelSet {
    width: u32,
    height: u32,
    member: Vec<bool>,
    len: u64,
}

impl PixelSet {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            member: vec![false; width as usize * height as usize],
            len: 0,
        }
    }

    pub fn from_box(width: u32, height: u32, b: &BBox) -> Self {
        let mut set = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if b.contains_pixel(x as i32, y as i32) {
                    set.insert(x, y).unwrap();
                }
            }
        }
        set
    }

    pub fn from_mask(mask: &RasterMask) -> Self {
        let mut set = Self::new(mask.width(), mask.height());
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(x, y) {
                    set.insert(x, y).unwrap();
                }
            }
        }
        set
    }

    /// Adds a pixel; returns whether it was new.
    pub fn insert(&mut self, x: u32, y: u32) -> Result<bool> {
        if x >= self.width || y >= self.height {
            return Err(Error::Config(format!("pixel ({x}, {y}) outside the frame")));
        }
        let slot = &mut self.member[y as usize * self.width as usize + x as usize];
        let fresh = !*slot;
        *slot = true;
        self.len += u64::from(fresh);
        Ok(fresh)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.member[y as usize * self.width as usize + x as usize]
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Pixels of `b` that fall inside a `width x height` frame.
fn pixels_of(b: &BBox, width: u32, height: u32) -> impl Iterator<Item = (u32, u32)> {
    let x1 = b.x1().clamp(0, width as i32) as u32;
    let x2 = b.x2().clamp(0, width as i32) as u32;
    let y1 = b.y1().clamp(0, height as i32) as u32;
    let y2 = b.y2().clamp(0, height as i32) as u32;
    (y1..y2).flat_map(move |y| (x1..x2).map(move |x| (x, y)))
}

/// Counts set mask pixels inside `b` with a double loop.
pub fn brute_box_mask_intersection(mask: &RasterMask, b: &BBox) -> u64 {
    pixels_of(b, mask.width(), mask.height())
        .filter(|&(x, y)| mask.get(x, y))
        .count() as u64
}

pub fn brute_mask_area(mask: &RasterMask) -> u64 {
    let mut n = 0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            n += u64::from(mask.get(x, y));
        }
    }
    n
}

/// `|P| |Â ∩ M| / (|M| (|Â| + |P| - |Â ∩ P|))`, every term by enumeration.
pub fn brute_gmaiou_general(anchor: &BBox, p: &PixelSet, mask: &RasterMask) -> Result<GmaRatio> {
    let m = brute_mask_area(mask);
    if m == 0 {
        return Err(Error::EmptyMask);
    }
    let (mut anchor_area, mut anchor_mask, mut anchor_p) = (0u64, 0u64, 0u64);
    for (x, y) in pixels_of(anchor, mask.width(), mask.height()) {
        anchor_area += 1;
        anchor_mask += u64::from(mask.get(x, y));
        anchor_p += u64::from(p.contains(x, y));
    }
    let union = anchor_area + p.len() - anchor_p;
    Ok(GmaRatio {
        numerator: u128::from(p.len()) * u128::from(anchor_mask),
        denominator: u128::from(m) * u128::from(union),
    })
}

/// The energy region for `mode`, materialized as a pixel set.
pub fn energy_region(gt: &GroundTruth, mode: GmaMode) -> PixelSet {
    let (w, h) = gt.frame();
    match mode {
        GmaMode::PolyIsBox => PixelSet::from_box(w, h, gt.bbox()),
        GmaMode::PolyIsMask => PixelSet::from_mask(gt.mask()),
    }
}

pub fn brute_gmaiou(anchor: &BBox, gt: &GroundTruth, mode: GmaMode) -> Result<GmaRatio> {
    brute_gmaiou_general(anchor, &energy_region(gt, mode), gt.mask())
}

/// Pixel-set IoU between a box and a mask, by enumeration.
pub fn brute_box_mask_iou(anchor: &BBox, mask: &RasterMask) -> f64 {
    let inter = brute_box_mask_intersection(mask, anchor);
    let anchor_area = pixels_of(anchor, mask.width(), mask.height()).count() as u64;
    inter as f64 / (anchor_area + brute_mask_area(mask) - inter) as f64
}

/// GmaIoU scored through the brute-force path; slow.
#[derive(Debug, Clone, Copy)]
pub struct BruteGmaIou(pub GmaMode);

impl Proximity for BruteGmaIou {
    fn score(&self, anchor: &BBox, gt: &GroundTruth) -> f64 {
        brute_gmaiou(anchor, gt, self.0)
            .expect("ground truths always carry a non-empty mask")
            .value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Integral-image ratio differs from the enumerated one.
    FastOracleMismatch,
    /// `P = B` scored below `P = M`.
    Ordering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub mode: GmaMode,
    pub anchor: BBox,
    pub gt_box: BBox,
    pub fast: GmaRatio,
    pub oracle: GmaRatio,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} mode={:?} anchor={:?} gt_box={:?} fast={}/{} oracle={}/{}",
            self.kind,
            self.mode,
            self.anchor,
            self.gt_box,
            self.fast.numerator,
            self.fast.denominator,
            self.oracle.numerator,
            self.oracle.denominator
        )
    }
}

/// Result of auditing one anchor/instance pair in both modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAudit {
    pub fast: [GmaRatio; 2],
    pub oracle: [GmaRatio; 2],
    pub violations: Vec<Violation>,
}

impl PairAudit {
    /// Whether the two modes score strictly apart.
    pub fn strict(&self) -> bool {
        self.oracle[0].cmp_value(&self.oracle[1]).is_gt()
    }
}

/// Fast vs brute force in both modes, plus the `P = B >= P = M` ordering.
pub fn audit_pair(anchor: &BBox, gt: &GroundTruth) -> Result<PairAudit> {
    let mut fast = [GmaRatio { numerator: 0, denominator: 1 }; 2];
    let mut oracle = fast;
    let mut violations = Vec::new();
    for (k, mode) in GmaMode::ALL.into_iter().enumerate() {
        fast[k] = gmaiou_ratio(anchor, gt, mode)?;
        oracle[k] = brute_gmaiou(anchor, gt, mode)?;
        if fast[k] != oracle[k] {
            violations.push(Violation {
                kind: ViolationKind::FastOracleMismatch,
                mode,
                anchor: *anchor,
                gt_box: *gt.bbox(),
                fast: fast[k],
                oracle: oracle[k],
            });
        }
    }
    if fast[0].cmp_value(&fast[1]).is_lt() {
        violations.push(Violation {
            kind: ViolationKind::Ordering,
            mode: GmaMode::PolyIsBox,
            anchor: *anchor,
            gt_box: *gt.bbox(),
            fast: fast[0],
            oracle: fast[1],
        });
    }
    Ok(PairAudit {
        fast,
        oracle,
        violations,
    })
}

/// Random star-shaped polygon mask, a noisy blob, or a solid rectangle,
/// inside a frame of at most `max_side` pixels per side. Never empty.
pub fn random_instance(rng: &mut impl Rng, max_side: u32) -> GroundTruth {
    let w = rng.gen_range(2..=max_side.max(2));
    let h = rng.gen_range(2..=max_side.max(2));
    loop {
        let mask = match rng.gen_range(0..3) {
            0 => random_polygon_mask(rng, w, h),
            1 => {
                let region = random_box_in(rng, w, h);
                let density = rng.gen_range(0.05..1.0);
                RasterMask::from_fn(w, h, |x, y| region.contains_pixel(x as i32, y as i32) && rng.gen_bool(density))
                    .unwrap()
            }
            _ => RasterMask::from_box(w, h, &random_box_in(rng, w, h)).unwrap(),
        };
        if let Ok(gt) = GroundTruth::from_mask(mask, 0) {
            return gt;
        }
    }
}

fn random_polygon_mask(rng: &mut impl Rng, w: u32, h: u32) -> RasterMask {
    let (fw, fh) = (f64::from(w), f64::from(h));
    let cx = rng.gen_range(0.0..fw);
    let cy = rng.gen_range(0.0..fh);
    let radius = rng.gen_range(1.0..fw.max(fh));
    let n = rng.gen_range(3..12);
    let vertices = (0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * (f64::from(k) + rng.gen_range(0.0..0.9)) / f64::from(n);
            let r = radius * rng.gen_range(0.2..1.0);
            (cx + r * theta.cos(), cy + r * theta.sin())
        })
        .collect();
    rasterize(&Polygon::new(vertices).unwrap(), w, h).unwrap()
}

/// Box fully inside the frame.
pub fn random_box_in(rng: &mut impl Rng, w: u32, h: u32) -> BBox {
    let x1 = rng.gen_range(0..w as i32);
    let y1 = rng.gen_range(0..h as i32);
    let x2 = rng.gen_range(x1 + 1..=w as i32);
    let y2 = rng.gen_range(y1 + 1..=h as i32);
    BBox::new(x1, y1, x2, y2).unwrap()
}

/// Anchor that may overhang the frame.
pub fn random_anchor(rng: &mut impl Rng, w: u32, h: u32) -> BBox {
    let (w, h) = (w as i32, h as i32);
    let x1 = rng.gen_range(-w / 4..w);
    let y1 = rng.gen_range(-h / 4..h);
    let bw = rng.gen_range(1..=w);
    let bh = rng.gen_range(1..=h);
    BBox::new(x1, y1, x1 + bw, y1 + bh).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_anchors: usize,
    pub n_gts: usize,
    pub mask_size: u32,
    pub repeats: usize,
    pub brute_ns: Vec<u128>,
    pub fast_ns: Vec<u128>,
    pub brute_median_ns: u128,
    pub fast_median_ns: u128,
    pub speedup: f64,
}

fn median(samples: &[u128]) -> u128 {
    let mut s = samples.to_vec();
    s.sort_unstable();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2
    }
}

/// Times brute-force against integral-image GmaIoU (`P = B`) over the full
/// anchor x instance grid, single-threaded. The fast timing includes
/// building every integral image.
pub fn benchmark_pairing(
    n_anchors: usize,
    n_gts: usize,
    mask_size: u32,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport> {
    if n_anchors == 0 || n_gts == 0 || mask_size < 2 || repeats == 0 {
        return Err(Error::Config(
            "anchors, gts and repeats must be at least 1 and mask size at least 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks: Vec<RasterMask> = (0..n_gts)
        .map(|_| loop {
            let m = random_polygon_mask(&mut rng, mask_size, mask_size);
            if m.pixel_count() > 0 {
                break m;
            }
        })
        .collect();
    let boxes: Vec<BBox> = masks.iter().map(|m| m.tight_box().unwrap()).collect();
    let max_side = (mask_size as i32).min(48);
    let anchors: Vec<BBox> = (0..n_anchors)
        .map(|_| {
            let bw = rng.gen_range(4.min(max_side)..=max_side);
            let bh = rng.gen_range(4.min(max_side)..=max_side);
            let x = rng.gen_range(0..=mask_size as i32 - bw);
            let y = rng.gen_range(0..=mask_size as i32 - bh);
            BBox::new(x, y, x + bw, y + bh).unwrap()
        })
        .collect();

    let mut brute_ns = Vec::with_capacity(repeats);
    let mut fast_ns = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let mut brute_sum = 0u128;
        for (mask, gt_box) in masks.iter().zip(&boxes) {
            let m = brute_mask_area(mask);
            for anchor in &anchors {
                let inter = brute_box_mask_intersection(mask, anchor);
                let union = anchor.area() + gt_box.area() - crate::geometry::box_intersection_area(anchor, gt_box);
                let r = GmaRatio {
                    numerator: u128::from(gt_box.area()) * u128::from(inter),
                    denominator: u128::from(m) * u128::from(union),
                };
                brute_sum += black_box(r).numerator;
            }
        }
        brute_ns.push(start.elapsed().as_nanos());

        let start = Instant::now();
        let mut fast_sum = 0u128;
        for mask in &masks {
            let gt = GroundTruth::from_mask(black_box(mask).clone(), 0)?;
            for anchor in &anchors {
                fast_sum += black_box(gmaiou_ratio(anchor, &gt, GmaMode::PolyIsBox)?).numerator;
            }
        }
        fast_ns.push(start.elapsed().as_nanos());

        if brute_sum != fast_sum {
            return Err(Error::Config(format!(
                "benchmark paths disagree: brute {brute_sum} vs fast {fast_sum}"
            )));
        }
    }
    let brute_median_ns = median(&brute_ns);
    let fast_median_ns = median(&fast_ns);
    Ok(BenchReport {
        n_anchors,
        n_gts,
        mask_size,
        repeats,
        brute_ns,
        fast_ns,
        brute_median_ns,
        fast_median_ns,
        speedup: brute_median_ns as f64 / fast_median_ns.max(1) as f64,
    })
}

/// Integral image lookup cross-checked against enumeration for one box.
pub fn integral_agrees(gt: &GroundTruth, b: &BBox) -> bool {
    crate::mask::box_mask_intersection(gt.integral(), b) == brute_box_mask_intersection(gt.mask(), b)
        && build_integral(gt.mask()) == *gt.integral()
}

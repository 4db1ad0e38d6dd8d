#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gmaiou_core::assign::{generate_anchors, AnchorConfig, AnchorGrid, LevelSpec};
use gmaiou_core::geometry::box_intersection_area;
use gmaiou_core::gmaiou::GmaRatio;
use gmaiou_core::oracle::{random_box_in, random_instance};
use gmaiou_core::{BBox, GroundTruth, RasterMask};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Box IoU as an exact ratio.
pub fn box_iou_ratio(a: &BBox, b: &BBox) -> GmaRatio {
    let inter = box_intersection_area(a, b);
    GmaRatio {
        numerator: u128::from(inter),
        denominator: u128::from(a.area() + b.area() - inter),
    }
}

/// Pixel IoU between a box and a mask as an exact ratio, by enumeration.
pub fn pixel_iou_ratio(anchor: &BBox, mask: &RasterMask) -> GmaRatio {
    let (mut inter, mut union) = (0u128, 0u128);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let in_box = anchor.contains_pixel(x as i32, y as i32);
            let in_mask = mask.get(x, y);
            inter += u128::from(in_box && in_mask);
            union += u128::from(in_box || in_mask);
        }
    }
    GmaRatio {
        numerator: inter,
        denominator: union,
    }
}

/// Anchor inside the frame of `gt`, biased towards overlapping its box.
pub fn anchor_near(rng: &mut impl Rng, gt: &GroundTruth) -> BBox {
    let (w, h) = gt.frame();
    if rng.gen_bool(0.5) {
        return random_box_in(rng, w, h);
    }
    let b = gt.bbox();
    let jitter = |rng: &mut dyn rand::RngCore, v: i32, lo: i32, hi: i32| {
        (v + rng.gen_range(-4..=4)).clamp(lo, hi)
    };
    let x1 = jitter(rng, b.x1(), 0, w as i32 - 1);
    let y1 = jitter(rng, b.y1(), 0, h as i32 - 1);
    let x2 = jitter(rng, b.x2(), x1 + 1, w as i32);
    let y2 = jitter(rng, b.y2(), y1 + 1, h as i32);
    BBox::new(x1, y1, x2, y2).unwrap()
}

/// A solid-rectangle instance, whose mask fills its box.
pub fn solid_instance(rng: &mut impl Rng, max_side: u32) -> GroundTruth {
    let w = rng.gen_range(2..=max_side);
    let h = rng.gen_range(2..=max_side);
    let b = random_box_in(rng, w, h);
    GroundTruth::from_mask(RasterMask::from_box(w, h, &b).unwrap(), 0).unwrap()
}

/// Random non-solid instance whose mask leaves part of its box uncovered.
pub fn partial_instance(rng: &mut impl Rng, max_side: u32) -> GroundTruth {
    loop {
        let gt = random_instance(rng, max_side);
        if gt.mask_area() < gt.bbox().area() {
            return gt;
        }
    }
}

/// Small multi-level anchor layout for random scenes.
pub fn scene_anchor_config() -> AnchorConfig {
    AnchorConfig {
        levels: vec![
            LevelSpec {
                stride: 8,
                scales: vec![16.0],
                aspect_ratios: vec![1.0, 0.5, 2.0],
            },
            LevelSpec {
                stride: 16,
                scales: vec![32.0],
                aspect_ratios: vec![1.0],
            },
            LevelSpec {
                stride: 32,
                scales: vec![64.0, 96.0],
                aspect_ratios: vec![1.0],
            },
        ],
    }
}

/// A random frame with anchors and between 1 and 5 instances.
pub fn random_scene(rng: &mut impl Rng) -> (AnchorGrid, Vec<GroundTruth>) {
    let w = rng.gen_range(32..=160);
    let h = rng.gen_range(32..=160);
    let grid = generate_anchors(w, h, &scene_anchor_config()).unwrap();
    let n = rng.gen_range(1..=5);
    let gts = (0..n)
        .map(|_| loop {
            let region = random_box_in(rng, w, h);
            let density = rng.gen_range(0.3..1.0);
            let mask = RasterMask::from_fn(w, h, |x, y| {
                region.contains_pixel(x as i32, y as i32) && rng.gen_bool(density)
            })
            .unwrap();
            if let Ok(gt) = GroundTruth::from_mask(mask, 0) {
                break gt;
            }
        })
        .collect();
    (grid, gts)
}

//! Axis-aligned boxes on the pixel grid and the box-only proximity measures.
//!
//! Integer boxes are half-open: `BBox { x1, y1, x2, y2 }` covers the pixels
//! with `x1 <= x < x2` and `y1 <= y < y2`. Areas and intersections are exact
//! integer counts; scores are `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel box, half-open on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    x1: i32,
    y1: i32,
    x2: i32,
    y2: i32,
}

impl BBox {
    pub fn new(x1: i32, y1: i32, x2: i32, y2: i32) -> Result<Self> {
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidBox {
                x1: x1.into(),
                y1: y1.into(),
                x2: x2.into(),
                y2: y2.into(),
            });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box from a top-left corner and a positive size.
    pub fn from_xywh(x: i32, y: i32, w: i32, h: i32) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn x1(&self) -> i32 {
        self.x1
    }

    pub fn y1(&self) -> i32 {
        self.y1
    }

    pub fn x2(&self) -> i32 {
        self.x2
    }

    pub fn y2(&self) -> i32 {
        self.y2
    }

    pub fn width(&self) -> u32 {
        (self.x2 - self.x1) as u32
    }

    pub fn height(&self) -> u32 {
        (self.y2 - self.y1) as u32
    }

    /// Number of pixels covered.
    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (f64::from(self.x1) + f64::from(self.x2)) / 2.0,
            (f64::from(self.y1) + f64::from(self.y2)) / 2.0,
        )
    }

    /// Overlap of two boxes, `None` when they share no pixel.
    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        (x2 > x1 && y2 > y1).then_some(BBox { x1, y1, x2, y2 })
    }

    /// Smallest box containing both.
    pub fn enclose(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Restrict to the frame `[0, width) x [0, height)`.
    pub fn clip(&self, width: u32, height: u32) -> Option<BBox> {
        let frame = BBox {
            x1: 0,
            y1: 0,
            x2: width as i32,
            y2: height as i32,
        };
        self.intersect(&frame)
    }

    pub fn contains_pixel(&self, x: i32, y: i32) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }

    /// Strict interior test for a real-valued point.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x > f64::from(self.x1) && x < f64::from(self.x2) && y > f64::from(self.y1) && y < f64::from(self.y2)
    }

    pub fn to_float(&self) -> FloatBox {
        FloatBox {
            x1: self.x1.into(),
            y1: self.y1.into(),
            x2: self.x2.into(),
            y2: self.y2.into(),
        }
    }
}

/// Real-valued box as produced by anchor generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloatBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl FloatBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box of size `w x h` centred on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Clip to the frame, then round the top-left corner down and the
    /// bottom-right corner up, so every pixel the box touches is kept.
    pub fn cover_snap(&self, width: u32, height: u32) -> Option<BBox> {
        let x1 = self.x1.max(0.0).floor();
        let y1 = self.y1.max(0.0).floor();
        let x2 = self.x2.min(f64::from(width)).ceil();
        let y2 = self.y2.min(f64::from(height)).ceil();
        (x2 > x1 && y2 > y1).then_some(BBox {
            x1: x1 as i32,
            y1: y1 as i32,
            x2: x2 as i32,
            y2: y2 as i32,
        })
    }
}

pub fn area(b: &BBox) -> u64 {
    b.area()
}

pub fn box_intersection_area(a: &BBox, b: &BBox) -> u64 {
    a.intersect(b).map_or(0, |i| i.area())
}

fn union_area(a: &BBox, b: &BBox) -> u64 {
    a.area() + b.area() - box_intersection_area(a, b)
}

/// `|A ∩ B| / |A ∪ B|`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    box_intersection_area(a, b) as f64 / union_area(a, b) as f64
}

/// Generalized IoU: `IoU - (|C| - |A ∪ B|) / |C|`, where `C` is the smallest
/// box enclosing both inputs.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let union = union_area(a, b);
    let hull = a.enclose(b).area();
    let inter = box_intersection_area(a, b);
    inter as f64 / union as f64 - (hull - union) as f64 / hull as f64
}

/// Distance IoU: `IoU - d² / c²`, with `d` the distance between the box
/// centres and `c` the diagonal of the enclosing box.
pub fn diou(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let d2 = (ax - bx).powi(2) + (ay - by).powi(2);
    let hull = a.enclose(b);
    let c2 = f64::from(hull.width()).powi(2) + f64::from(hull.height()).powi(2);
    iou(a, b) - d2 / c2
}

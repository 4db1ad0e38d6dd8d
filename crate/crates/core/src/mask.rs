//! Binary raster masks, polygon rasterization and integral images.
//!
//! An [`IntegralImage`] over an `m x n` mask is an `(m+1) x (n+1)` table whose
//! entry `(i, j)` counts the set pixels in `[0, i) x [0, j)`. Any rectangle
//! count then costs four lookups.

use crate::error::{Error, Result};
use crate::geometry::BBox;

const MAX_SIDE: u32 = 1 << 16;

fn check_frame(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(Error::InvalidFrame { width, height });
    }
    Ok(())
}

/// Row-major binary mask covering a whole image frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl RasterMask {
    pub fn empty(width: u32, height: u32) -> Result<Self> {
        check_frame(width, height)?;
        Ok(Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        })
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        check_frame(width, height)?;
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(Error::MaskSize {
                expected,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        check_frame(width, height)?;
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Mask with exactly the pixels of `b` (clipped to the frame) set.
    pub fn from_box(width: u32, height: u32, b: &BBox) -> Result<Self> {
        Self::from_fn(width, height, |x, y| b.contains_pixel(x as i32, y as i32))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn row(&self, y: u32) -> &[bool] {
        let w = self.width as usize;
        let start = y as usize * w;
        &self.bits[start..start + w]
    }

    pub fn pixel_count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Coordinates of every set pixel, row-major.
    pub fn set_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Smallest box containing every set pixel; `None` for an empty mask.
    pub fn tight_box(&self) -> Option<BBox> {
        let mut x1 = u32::MAX;
        let mut y1 = u32::MAX;
        let mut x2 = 0;
        let mut y2 = 0;
        for (x, y) in self.set_pixels() {
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x + 1);
            y2 = y2.max(y + 1);
        }
        if x1 == u32::MAX {
            return None;
        }
        BBox::new(x1 as i32, y1 as i32, x2 as i32, y2 as i32).ok()
    }

    /// In-place union with a mask of the same frame.
    pub fn or_assign(&mut self, other: &RasterMask) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }
}

/// Summed-area table of a [`RasterMask`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    // (height + 1) rows of (width + 1) entries; entry (i, j) at j * (width + 1) + i
    table: Vec<u32>,
}

impl IntegralImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Count of set pixels in `[0, i) x [0, j)`, for `i <= width`, `j <= height`.
    #[inline]
    pub fn get(&self, i: u32, j: u32) -> u32 {
        self.table[j as usize * (self.width as usize + 1) + i as usize]
    }

    #[doc(hidden)]
    pub fn corrupt_for_testing(&mut self) {
        if let Some(last) = self.table.last_mut() {
            *last += 1;
        }
    }
}

/// Single pass prefix sum over the mask.
pub fn build_integral(mask: &RasterMask) -> IntegralImage {
    let w = mask.width as usize;
    let stride = w + 1;
    let mut table = vec![0u32; stride * (mask.height as usize + 1)];
    for y in 0..mask.height as usize {
        let mut row_sum = 0u32;
        let (above, below) = table.split_at_mut((y + 1) * stride);
        let prev = &above[y * stride..];
        let cur = &mut below[..stride];
        for (x, &bit) in mask.row(y as u32).iter().enumerate() {
            row_sum += u32::from(bit);
            cur[x + 1] = prev[x + 1] + row_sum;
        }
    }
    IntegralImage {
        width: mask.width,
        height: mask.height,
        table,
    }
}

/// `|M|`, read from the bottom-right table entry.
pub fn mask_area(ii: &IntegralImage) -> u64 {
    u64::from(ii.get(ii.width, ii.height))
}

/// `|b ∩ M|` in constant time; `b` is clipped to the mask frame first.
#[inline]
pub fn box_mask_intersection(ii: &IntegralImage, b: &BBox) -> u64 {
    match b.clip(ii.width, ii.height) {
        Some(c) => {
            let (x1, y1, x2, y2) = (c.x1() as u32, c.y1() as u32, c.x2() as u32, c.y2() as u32);
            let total = u64::from(ii.get(x2, y2)) + u64::from(ii.get(x1, y1));
            total - u64::from(ii.get(x2, y1)) - u64::from(ii.get(x1, y2))
        }
        None => 0,
    }
}

/// Closed polygon with real-valued vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(vertices.len()));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinitePolygon);
        }
        Ok(Self { vertices })
    }

    /// From a COCO-style flat list `[x0, y0, x1, y1, ...]`.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(Error::Schema {
                field: "segmentation".into(),
                message: format!("odd number of coordinates ({})", coords.len()),
            });
        }
        Self::new(coords.chunks_exact(2).map(|c| (c[0], c[1])).collect())
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Edges crossing the horizontal line at `y`, as sorted x positions.
    /// Each edge counts when exactly one endpoint lies above `y`.
    fn crossings(&self, y: f64, out: &mut Vec<f64>) {
        out.clear();
        let n = self.vertices.len();
        for k in 0..n {
            let (xi, yi) = self.vertices[k];
            let (xj, yj) = self.vertices[(k + n - 1) % n];
            if (yi > y) != (yj > y) {
                out.push((xj - xi) * (y - yi) / (yj - yi) + xi);
            }
        }
        out.sort_by(f64::total_cmp);
    }
}

/// Sets every pixel whose centre lies inside `poly` under the even-odd rule.
pub fn rasterize(poly: &Polygon, width: u32, height: u32) -> Result<RasterMask> {
    let mut mask = RasterMask::empty(width, height)?;
    fill_polygon(&mut mask, poly);
    Ok(mask)
}

/// Rasterizes each part and ORs the results.
pub fn rasterize_parts(parts: &[Polygon], width: u32, height: u32) -> Result<RasterMask> {
    let mut mask = RasterMask::empty(width, height)?;
    for poly in parts {
        fill_polygon(&mut mask, poly);
    }
    Ok(mask)
}

fn fill_polygon(mask: &mut RasterMask, poly: &Polygon) {
    let mut xs = Vec::new();
    for y in 0..mask.height {
        poly.crossings(f64::from(y) + 0.5, &mut xs);
        for span in xs.chunks_exact(2) {
            let (lo, hi) = (span[0], span[1]);
            // centre x + 0.5 must satisfy lo <= c < hi
            let mut x = (lo - 0.5).floor().max(0.0) as i64;
            while x < i64::from(mask.width) && (x as f64 + 0.5) < hi {
                if (x as f64 + 0.5) >= lo {
                    mask.set(x as u32, y, true);
                }
                x += 1;
            }
        }
    }
}

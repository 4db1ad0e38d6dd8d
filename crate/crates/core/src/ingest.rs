//! COCO-style instance annotations.
//!
//! Accepted subset:
//!
//! ```json
//! {
//!   "images": [{"id": 1, "width": 640, "height": 480}],
//!   "annotations": [{"id": 7, "image_id": 1, "category_id": 3, "iscrowd": 0,
//!                    "segmentation": [[x0, y0, x1, y1, ...], ...],
//!                    "bbox": [x, y, w, h]}]
//! }
//! ```
//!
//! Unknown fields are ignored. Crowd annotations and RLE segmentations are
//! skipped with a warning. The stored `bbox` is kept for diagnostics; the
//! instance box is always recomputed from the rasterized mask.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gmaiou::GroundTruth;
use crate::mask::{rasterize_parts, Polygon};

#[derive(Debug, Deserialize)]
struct RawFile {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Deserialize)]
struct RawImage {
    id: u64,
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u32,
    #[serde(default)]
    iscrowd: u8,
    segmentation: Value,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub polygons: Vec<Polygon>,
    pub stored_bbox: Option<[f64; 4]>,
}

/// Validated annotation file. Images and annotations are sorted by id.
#[derive(Debug, Clone, Default)]
pub struct AnnotationFile {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    /// Crowd or RLE annotations that were not loaded.
    pub skipped: usize,
    pub warnings: Vec<String>,
    by_image: HashMap<u64, Vec<usize>>,
}

/// One image with its rasterized instances.
#[derive(Debug, Clone)]
pub struct DatasetImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub ground_truths: Vec<GroundTruth>,
    /// Instances dropped because their mask came out empty.
    pub dropped_empty: usize,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationFile> {
    let text = std::fs::read_to_string(path)?;
    parse_annotations(&text)
}

pub fn parse_annotations(text: &str) -> Result<AnnotationFile> {
    let syntax = |e: serde_json::Error| Error::Json {
        offset: byte_offset(text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawFile = match serde_path_to_error::deserialize(&mut de) {
        Ok(raw) => raw,
        Err(err) => {
            let field = err.path().to_string();
            let inner = err.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Data => Error::Schema {
                    field,
                    message: inner.to_string(),
                },
                _ => syntax(inner),
            });
        }
    };
    de.end().map_err(syntax)?;

    let mut images: Vec<ImageInfo> = raw
        .images
        .iter()
        .map(|i| ImageInfo {
            id: i.id,
            width: i.width,
            height: i.height,
        })
        .collect();
    images.sort_by_key(|i| i.id);
    for (k, pair) in images.windows(2).enumerate() {
        if pair[0].id == pair[1].id {
            return Err(Error::Schema {
                field: format!("images[{k}].id"),
                message: format!("duplicate image id {}", pair[0].id),
            });
        }
    }
    for (k, img) in images.iter().enumerate() {
        if img.width == 0 || img.height == 0 || img.width > 1 << 16 || img.height > 1 << 16 {
            return Err(Error::Schema {
                field: format!("images[{k}].width"),
                message: format!("image {} has unsupported size {}x{}", img.id, img.width, img.height),
            });
        }
    }

    let known: HashSet<u64> = images.iter().map(|i| i.id).collect();
    let dangling: BTreeSet<u64> = raw
        .annotations
        .iter()
        .filter(|a| !known.contains(&a.image_id))
        .map(|a| a.image_id)
        .collect();
    if !dangling.is_empty() {
        return Err(Error::DanglingImageIds(dangling.into_iter().collect()));
    }

    let mut file = AnnotationFile {
        images,
        ..Default::default()
    };
    for (k, a) in raw.annotations.into_iter().enumerate() {
        if a.iscrowd != 0 {
            file.skip(format!("annotation {}: crowd annotation skipped", a.id));
            continue;
        }
        let parts = match &a.segmentation {
            Value::Array(parts) => parts,
            Value::Object(_) => {
                file.skip(format!("annotation {}: RLE segmentation skipped", a.id));
                continue;
            }
            _ => {
                return Err(Error::Schema {
                    field: format!("annotations[{k}].segmentation"),
                    message: "expected a list of polygons".into(),
                })
            }
        };
        let mut polygons = Vec::with_capacity(parts.len());
        for (p, part) in parts.iter().enumerate() {
            let field = || format!("annotations[{k}].segmentation[{p}]");
            let coords: Vec<f64> = part
                .as_array()
                .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
                .ok_or_else(|| Error::Schema {
                    field: field(),
                    message: "expected a flat list of numbers".into(),
                })?;
            if !coords.len().is_multiple_of(2) {
                return Err(Error::Schema {
                    field: field(),
                    message: format!("odd number of coordinates ({})", coords.len()),
                });
            }
            match Polygon::from_flat(&coords) {
                Ok(poly) => polygons.push(poly),
                Err(e) => file.warn(format!("annotation {}: polygon part {p} ignored: {e}", a.id)),
            }
        }
        file.annotations.push(Annotation {
            id: a.id,
            image_id: a.image_id,
            category_id: a.category_id,
            polygons,
            stored_bbox: a.bbox,
        });
    }
    file.annotations.sort_by_key(|a| a.id);
    for (k, a) in file.annotations.iter().enumerate() {
        file.by_image.entry(a.image_id).or_default().push(k);
    }
    Ok(file)
}

impl AnnotationFile {
    fn warn(&mut self, message: String) {
        warn!("{message}");
        self.warnings.push(message);
    }

    fn skip(&mut self, message: String) {
        self.skipped += 1;
        self.warn(message);
    }

    pub fn image(&self, image_id: u64) -> Option<&ImageInfo> {
        self.images
            .binary_search_by_key(&image_id, |i| i.id)
            .ok()
            .map(|k| &self.images[k])
    }

    fn annotations_for(&self, image_id: u64) -> impl Iterator<Item = &Annotation> {
        self.by_image
            .get(&image_id)
            .into_iter()
            .flatten()
            .map(|&k| &self.annotations[k])
    }

    /// Rasterizes every annotation of one image.
    pub fn dataset_image(&self, image_id: u64) -> Result<DatasetImage> {
        let info = *self.image(image_id).ok_or(Error::UnknownImage(image_id))?;
        let mut ground_truths = Vec::new();
        let mut dropped_empty = 0;
        for a in self.annotations_for(image_id) {
            let mask = rasterize_parts(&a.polygons, info.width, info.height)?;
            match GroundTruth::from_mask(mask, a.category_id) {
                Ok(mut gt) => {
                    gt.annotation_id = Some(a.id);
                    gt.stored_bbox = a.stored_bbox;
                    ground_truths.push(gt);
                }
                Err(Error::EmptyMask) => {
                    warn!("annotation {}: empty mask after rasterization, dropped", a.id);
                    dropped_empty += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(DatasetImage {
            id: info.id,
            width: info.width,
            height: info.height,
            ground_truths,
            dropped_empty,
        })
    }

    pub fn to_ground_truths(&self, image_id: u64) -> Result<Vec<GroundTruth>> {
        self.dataset_image(image_id).map(|d| d.ground_truths)
    }

    /// All images in id order, rasterized in parallel.
    pub fn dataset_images(&self) -> Result<Vec<DatasetImage>> {
        self.images.par_iter().map(|i| self.dataset_image(i.id)).collect()
    }
}

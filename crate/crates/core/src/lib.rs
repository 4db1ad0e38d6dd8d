//! Mask-aware anchor proximity for instance segmentation.
//!
//! The crate computes Generalized Mask-aware IoU (GmaIoU) between anchor boxes
//! and ground-truth instances, using integral images over the binary masks so
//! that every anchor/instance pair costs a constant number of table lookups.
//! Box-only baselines (IoU, GIoU, DIoU) and two anchor assigners (fixed
//! threshold and ATSS) are provided alongside, together with brute-force
//! reference implementations used to audit the fast path.

pub mod assign;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod gmaiou;
pub mod ingest;
pub mod mask;
pub mod measure;
pub mod oracle;

pub use error::{Error, Result};
pub use geometry::{BBox, FloatBox};
pub use gmaiou::{GmaMode, GroundTruth};
pub use mask::{IntegralImage, Polygon, RasterMask};
pub use measure::{Measure, Proximity};

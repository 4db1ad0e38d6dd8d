use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box [{x1}, {x2}) x [{y1}, {y2}): extent must be positive")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),

    #[error("polygon has a non-finite coordinate")]
    NonFinitePolygon,

    #[error("frame must be at least 1x1 and at most 65536 per side, got {width}x{height}")]
    InvalidFrame { width: u32, height: u32 },

    #[error("mask buffer has {got} pixels, expected {expected}")]
    MaskSize { expected: usize, got: usize },

    #[error("ground truth mask has zero area")]
    EmptyMask,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed JSON at byte {offset} (line {line}, column {column}): {message}")]
    Json {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation in `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("annotations reference unknown image ids: {0:?}")]
    DanglingImageIds(Vec<u64>),

    #[error("unknown image id {0}")]
    UnknownImage(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

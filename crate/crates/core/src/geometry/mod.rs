//! Point clouds and the metrics used to train and score completions.
//!
//! All arithmetic here is `f64`, independent of the precision the network
//! weights are stored in.

mod cloud;
mod io;
mod kdtree;
mod metrics;
mod report;
mod sample;

pub use cloud::{NormalizeTransform, Point, PointCloud};
pub use io::{parse_xyz, read_xyz, write_xyz};
pub use kdtree::KdTree;
pub use metrics::{chamfer_distance, chamfer_with_grad, fscore, nn_sq_dists, sq_dist, DEFAULT_FSCORE_TAU};
pub use report::{CategoryMetrics, MetricReport};
pub use sample::{farthest_point_indices, resample, ResampleMethod};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate geometry: all points coincide")]
    DegenerateGeometry,
    #[error("invalid threshold {0}: must be positive")]
    InvalidThreshold(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed xyz at line {line}: {reason}")]
    MalformedXyz { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GeometryError {
    fn from(e: std::io::Error) -> Self {
        GeometryError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GeometryError>;

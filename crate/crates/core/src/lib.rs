//! Point cloud completion guided by a rendered image and a text description.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: point clouds, nearest-neighbour search, Chamfer distance and F-Score.
//! * [`nn`]: a dense reverse-mode differentiation engine and layer primitives.
//! * [`encoders`]: trainable point and image feature extractors, prompt
//!   construction and frozen global embedders.
//! * [`fusion`]: the two-stage global fusion, cross-attention and decoder.
//! * [`corpus`]: question-answering pipeline producing fine-grained shape descriptions.
//! * [`data`]: dataset layout, loading and the procedural shape generator.
//! * [`harness`]: training, evaluation, ablation and inference.

pub mod geometry;
pub mod rng;
pub mod nn;
pub mod encoders;
pub mod external;
pub mod config;
pub mod fusion;
pub mod corpus;
pub mod data;
pub mod harness;

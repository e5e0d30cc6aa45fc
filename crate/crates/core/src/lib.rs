//! Fidelity-weighted learning for pairwise learning-to-rank.
//!
//! The numeric core is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod annotate;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod student;
pub mod teacher;

pub use error::{FwlError, Result};
pub use scalar::Scalar;

pub type Student = student::StudentParams<f64>;
pub type Gradients = student::Gradients<f64>;
pub type Gp = teacher::GpPosterior<f64>;
pub type ClusteredTeacher = teacher::ClusteredGp<f64>;
pub type Trained = pipeline::TrainedStudent<f64>;

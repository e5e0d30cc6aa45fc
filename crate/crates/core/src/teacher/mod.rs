//! Gaussian-process teacher over student representations.

mod clustered;
mod gp;
mod soft;

pub use clustered::{default_cluster_count, fit_clustered, kmeans, nearest, predict_clustered, ClusteredGp, KMeans};
pub use gp::{gp_fit, gp_predict, kernel_rbf, median_heuristic, GpPosterior, KernelParams};
pub use soft::{build_soft_dataset, format_soft, parse_soft, read_soft, soft_label, uncertainty, write_soft};

use crate::error::Result;
use crate::scalar::Scalar;

/// Anything that yields a posterior `(mean, variance)` at a point.
pub trait Teacher<T: Scalar> {
    fn posterior(&self, x: &[T]) -> Result<(T, T)>;
}

impl<T: Scalar> Teacher<T> for GpPosterior<T> {
    fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        self.predict(x)
    }
}

impl<T: Scalar> Teacher<T> for ClusteredGp<T> {
    fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        self.predict(x)
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FwlError, Result};
use crate::scalar::{sq_dist, Scalar};

/// Squared-exponential covariance with additive observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_var: f64,
    pub length_scale: f64,
    pub noise_var: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { signal_var: 1.0, length_scale: 1.0, noise_var: 1e-4 }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_var > 0.0 && self.length_scale > 0.0 && self.noise_var >= 0.0) {
            return Err(invalid(format!("kernel needs signal_var > 0, length_scale > 0, noise_var >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// `σf²·exp(-‖a-b‖²/(2ℓ²))`.
pub fn kernel_rbf<T: Scalar>(a: &[T], b: &[T], kp: &KernelParams) -> Result<T> {
    if a.len() != b.len() {
        return Err(FwlError::ShapeMismatch(format!("kernel inputs of width {} and {}", a.len(), b.len())));
    }
    Ok(rbf(a, b, kp))
}

#[inline]
fn rbf<T: Scalar>(a: &[T], b: &[T], kp: &KernelParams) -> T {
    let l = T::of(kp.length_scale);
    T::of(kp.signal_var) * (-sq_dist(a, b) / (T::of(2.0) * l * l)).exp()
}

/// Jitter ladder tried when `K + σn²I` is not numerically positive definite.
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Exact GP regression posterior with a constant prior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior<T> {
    train_inputs: Vec<Vec<T>>,
    /// Lower Cholesky factor of `K + (σn² + jitter)I`, row-major `n x n`.
    chol: Vec<T>,
    /// `(K + σn²I)⁻¹ (y - prior_mean)`.
    alpha: Vec<T>,
    kernel: KernelParams,
    prior_mean: T,
    jitter: f64,
}

/// In-place Cholesky of a symmetric row-major matrix. Returns the smallest
/// pivot on failure.
fn cholesky<T: Scalar>(a: &mut [T], n: usize) -> std::result::Result<(), f64> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(d.f64());
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = T::zero();
        }
    }
    Ok(())
}

/// Solves `L z = b` for lower-triangular `L`.
fn solve_lower<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ z = b` for lower-triangular `L`.
fn solve_upper_t<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Fits the posterior: prior mean = mean(y), Gram matrix factored by Cholesky
/// with jitter escalation up to `1e-6` if needed.
pub fn gp_fit<T: Scalar>(x: &[Vec<T>], y: &[T], kp: &KernelParams) -> Result<GpPosterior<T>> {
    kp.validate()?;
    let n = x.len();
    if n == 0 {
        return Err(invalid("GP needs at least one training point"));
    }
    if y.len() != n {
        return Err(FwlError::ShapeMismatch(format!("{n} inputs but {} targets", y.len())));
    }
    let m = x[0].len();
    if x.iter().any(|r| r.len() != m) {
        return Err(FwlError::ShapeMismatch("training inputs of unequal width".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite GP training data"));
    }
    let prior_mean = y.iter().copied().sum::<T>() / T::count(n);
    let mut gram = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = rbf(&x[i], &x[j], kp);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    let mut last_pivot = 0.0;
    for jitter in std::iter::once(0.0).chain(JITTER_LADDER) {
        let mut chol = gram.clone();
        let diag = T::of(kp.noise_var + jitter);
        for i in 0..n {
            chol[i * n + i] += diag;
        }
        match cholesky(&mut chol, n) {
            Ok(()) => {
                let mut alpha: Vec<T> = y.iter().map(|&v| v - prior_mean).collect();
                solve_lower(&chol, n, &mut alpha);
                solve_upper_t(&chol, n, &mut alpha);
                return Ok(GpPosterior { train_inputs: x.to_vec(), chol, alpha, kernel: *kp, prior_mean, jitter });
            }
            Err(p) => last_pivot = p,
        }
    }
    Err(FwlError::NotPositiveDefinite { min_pivot: last_pivot, jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] })
}

impl<T: Scalar> GpPosterior<T> {
    pub fn len(&self) -> usize {
        self.train_inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.train_inputs[0].len()
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior_mean(&self) -> T {
        self.prior_mean
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn train_inputs(&self) -> &[Vec<T>] {
        &self.train_inputs
    }

    /// Jitter that had to be added to the diagonal (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower Cholesky factor, row-major.
    pub fn chol_factor(&self) -> &[T] {
        &self.chol
    }

    /// Posterior mean and unclamped latent variance at `x`.
    pub fn predict_raw(&self, x: &[T]) -> (T, T) {
        let n = self.len();
        let mut v: Vec<T> = self.train_inputs.iter().map(|xi| rbf(xi, x, &self.kernel)).collect();
        let mean = self.prior_mean + v.iter().zip(&self.alpha).fold(T::zero(), |a, (&k, &al)| a + k * al);
        solve_lower(&self.chol, n, &mut v);
        let explained = v.iter().fold(T::zero(), |a, &z| a + z * z);
        (mean, T::of(self.kernel.signal_var) - explained)
    }

    /// Posterior mean and variance (clamped at zero from below).
    pub fn predict(&self, x: &[T]) -> Result<(T, T)> {
        if x.len() != self.input_dim() {
            return Err(FwlError::ShapeMismatch(format!("query width {} but GP inputs have {}", x.len(), self.input_dim())));
        }
        let (mean, var) = self.predict_raw(x);
        Ok((mean, var.max(T::zero())))
    }
}

/// Posterior mean and variance at `x`.
pub fn gp_predict<T: Scalar>(post: &GpPosterior<T>, x: &[T]) -> Result<(T, T)> {
    post.predict(x)
}

/// Median of pairwise Euclidean distances; 1.0 when fewer than two distinct points.
pub fn median_heuristic<T: Scalar>(x: &[Vec<T>]) -> f64 {
    let mut d = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in 0..i {
            d.push(sq_dist(&x[i], &x[j]).f64().sqrt());
        }
    }
    d.retain(|&v| v > 0.0);
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn kp(noise: f64) -> KernelParams {
        KernelParams { signal_var: 1.0, length_scale: 1.0, noise_var: noise }
    }

    /// Explicit-inverse reference implementation.
    fn dense_oracle(x: &[Vec<f64>], y: &[f64], kp: &KernelParams, q: &[f64]) -> (f64, f64, Vec<f64>) {
        let n = x.len();
        let k = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
            kp.signal_var * (-d / (2.0 * kp.length_scale.powi(2))).exp()
        };
        let gram = DMatrix::from_fn(n, n, |i, j| k(&x[i], &x[j]) + if i == j { kp.noise_var } else { 0.0 });
        let inv = gram.try_inverse().expect("invertible");
        let mu = y.iter().sum::<f64>() / n as f64;
        let r = DVector::from_iterator(n, y.iter().map(|v| v - mu));
        let alpha = &inv * r;
        let ks = DVector::from_iterator(n, x.iter().map(|xi| k(xi, q)));
        let mean = mu + ks.dot(&alpha);
        let var = k(q, q) - (ks.transpose() * &inv * &ks)[(0, 0)];
        (mean, var, alpha.iter().copied().collect())
    }

    fn random_points(rng: &mut seed::Rng, n: usize, m: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
    }

    #[test]
    fn kernel_examples() {
        let k = kp(0.0);
        assert_eq!(kernel_rbf(&[0.3, -1.0], &[0.3, -1.0], &k).unwrap(), 1.0);
        let v = kernel_rbf(&[1.0, 1.0], &[0.0, 0.0], &k).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!(kernel_rbf(&[10.0], &[0.0], &k).unwrap() < (-50.0f64).exp() * 1.0000001);
        assert!(kernel_rbf(&[1.0], &[0.0, 0.0], &k).is_err());
    }

    #[test]
    fn single_point_gp() {
        let post = gp_fit(&[vec![0.5, 0.5]], &[0.8], &kp(0.0)).unwrap();
        assert_eq!(post.alpha(), &[0.0]);
        let (m, v) = post.predict(&[0.5, 0.5]).unwrap();
        assert_eq!(m, 0.8);
        assert!(v <= 1e-10);
    }

    #[test]
    fn duplicate_rows_need_noise_or_jitter() {
        let x = vec![vec![0.1, 0.2], vec![0.1, 0.2], vec![1.0, 0.0]];
        let y = [0.0, 1.0, 0.5];
        match gp_fit(&x, &y, &kp(0.0)) {
            Ok(p) => assert!(p.jitter() > 0.0),
            Err(e) => assert!(matches!(e, FwlError::NotPositiveDefinite { .. })),
        }
        let p = gp_fit(&x, &y, &kp(0.1)).unwrap();
        assert_eq!(p.jitter(), 0.0);
    }

    #[test]
    fn two_point_alpha_matches_direct_solve() {
        let x = vec![vec![0.2, -0.4, 1.0], vec![-0.3, 0.1, 0.7]];
        let y = [0.9, 0.2];
        let k = kp(0.05);
        let post: GpPosterior<f64> = gp_fit(&x, &y, &k).unwrap();
        // 2x2 inverse by hand.
        let k12 = kernel_rbf(&x[0], &x[1], &k).unwrap();
        let (a, b, d) = (1.0 + 0.05, k12, 1.0 + 0.05);
        let det = a * d - b * b;
        let r = [y[0] - 0.55, y[1] - 0.55];
        let want = [(d * r[0] - b * r[1]) / det, (-b * r[0] + a * r[1]) / det];
        for (g, w) in post.alpha().iter().zip(want) {
            assert!((g - w).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolates_noise_free_training_points() {
        let mut rng = seed::rng(3);
        let x = random_points(&mut rng, 6, 2);
        let y: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let post = gp_fit(&x, &y, &kp(0.0)).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, v) = post.predict(xi).unwrap();
            assert!((m - yi).abs() < 1e-6, "{m} vs {yi}");
            assert!(v <= 1e-10);
        }
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let x = vec![vec![0.0, 0.0], vec![0.5, 0.1]];
        let post: GpPosterior<f64> = gp_fit(&x, &[0.2, 0.6], &kp(1e-4)).unwrap();
        let (m, v) = post.predict(&[10.0, 10.0]).unwrap();
        assert!((m - 0.4).abs() < 1e-8);
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn matches_dense_inverse_on_random_instances() {
        let mut rng = seed::rng(17);
        for _ in 0..100 {
            let n = rng.random_range(1..=20);
            let m = rng.random_range(1..=8);
            let k = KernelParams {
                signal_var: rng.random_range(0.5..2.0),
                length_scale: rng.random_range(0.5..2.0),
                noise_var: rng.random_range(0.01..0.5),
            };
            let x = random_points(&mut rng, n, m);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let q: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
            let post: GpPosterior<f64> = gp_fit(&x, &y, &k).unwrap();
            let (mean, var) = post.predict_raw(&q);
            let (om, ov, oalpha) = dense_oracle(&x, &y, &k, &q);
            assert!((mean - om).abs() <= 1e-8 * om.abs().max(1.0));
            assert!((var - ov).abs() <= 1e-8 * ov.abs().max(1.0));
            for (a, b) in post.alpha().iter().zip(oalpha) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
            }
            assert!(var >= -1e-12 && var <= k.signal_var + 1e-12);
        }
    }

    #[test]
    fn adding_a_point_never_increases_variance() {
        let mut rng = seed::rng(5);
        for _ in 0..20 {
            let x = random_points(&mut rng, 5, 3);
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
            let probes = random_points(&mut rng, 10, 3);
            let new_x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let before = gp_fit(&x, &y, &kp(0.0)).unwrap();
            let mut x2 = x.clone();
            x2.push(new_x.clone());
            let mut y2 = y.clone();
            y2.push(0.77);
            let after = gp_fit(&x2, &y2, &kp(0.0)).unwrap();
            for p in &probes {
                assert!(after.predict(p).unwrap().1 <= before.predict(p).unwrap().1 + 1e-10);
            }
            let (m, v) = after.predict(&new_x).unwrap();
            assert!((m - 0.77).abs() < 1e-5);
            assert!(v < 1e-8);
        }
    }

    #[test]
    fn f32_posterior_tracks_f64() {
        let x64 = vec![vec![0.0, 0.1], vec![0.7, -0.2], vec![-0.4, 0.5]];
        let x32: Vec<Vec<f32>> = x64.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        let p64 = gp_fit(&x64, &[0.1, 0.5, 0.9], &kp(0.01)).unwrap();
        let p32 = gp_fit(&x32, &[0.1f32, 0.5, 0.9], &kp(0.01)).unwrap();
        let (m64, v64) = p64.predict(&[0.2, 0.2]).unwrap();
        let (m32, v32) = p32.predict(&[0.2f32, 0.2]).unwrap();
        assert!((m64 - f64::from(m32)).abs() < 1e-5);
        assert!((v64 - f64::from(v32)).abs() < 1e-5);
    }

    #[test]
    fn median_heuristic_by_hand() {
        let x = vec![vec![0.0], vec![1.0], vec![3.0]];
        // distances 1, 3, 2 → median 2
        assert_eq!(median_heuristic(&x), 2.0);
        assert_eq!(median_heuristic(&[vec![1.0f64]]), 1.0);
    }
}

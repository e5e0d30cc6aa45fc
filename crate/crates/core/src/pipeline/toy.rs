//! One-dimensional regression walk-through of the three training steps.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::student::fidelity_lr;
use crate::teacher::{gp_fit, KernelParams};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub weak_points: usize,
    pub strong_x: Vec<f64>,
    pub grid_points: usize,
    pub hidden_units: usize,
    /// Width of each hidden unit's Gaussian bump at initialisation.
    pub unit_width: f64,
    pub epochs_step1: usize,
    pub epochs_step3: usize,
    pub eta: f64,
    pub fidelity_beta: f64,
    pub length_scale: f64,
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            weak_points: 100,
            strong_x: vec![-3.4, -2.9, -2.4, -1.9, 1.9, 2.4, 2.9, 3.4],
            grid_points: 161,
            hidden_units: 161,
            unit_width: 0.05,
            epochs_step1: 200,
            epochs_step3: 3,
            eta: 0.2,
            fidelity_beta: 20.0,
            length_scale: 1.0,
            noise_var: 1e-4,
            seed: 7,
        }
    }
}

pub const TOY_RANGE: (f64, f64) = (-4.0, 4.0);

/// The target function.
pub fn toy_truth(x: f64) -> f64 {
    x.sin() + 0.5 * x
}

/// The biased weak annotator.
pub fn toy_weak(x: f64) -> f64 {
    toy_truth(x) + 0.7 + 0.3 * (3.0 * x).sin()
}

/// `f(x) = Σ v_j exp(-(w_j x + a_j)² / 2)`: one Gaussian-activation hidden
/// layer and a linear output without bias, so every update stays local in `x`.
#[derive(Debug, Clone, PartialEq)]
struct BumpNet {
    w: Vec<f64>,
    a: Vec<f64>,
    v: Vec<f64>,
}

impl BumpNet {
    fn new(units: usize, width: f64) -> Self {
        let (lo, hi) = TOY_RANGE;
        let step = if units > 1 { (hi - lo) / (units - 1) as f64 } else { 0.0 };
        let w = vec![1.0 / width; units];
        let a = (0..units).map(|j| -(lo + step * j as f64) / width).collect();
        Self { w, a, v: vec![0.0; units] }
    }

    fn eval(&self, x: f64) -> f64 {
        (0..self.v.len())
            .map(|j| {
                let u = self.w[j] * x + self.a[j];
                self.v[j] * (-0.5 * u * u).exp()
            })
            .sum()
    }

    /// One squared-error SGD step towards `y`.
    fn step(&mut self, x: f64, y: f64, eta: f64) {
        if eta == 0.0 {
            return;
        }
        let r = self.eval(x) - y;
        for j in 0..self.v.len() {
            let u = self.w[j] * x + self.a[j];
            let h = (-0.5 * u * u).exp();
            let g_u = -r * self.v[j] * u * h;
            self.v[j] -= eta * r * h;
            self.w[j] -= eta * g_u * x;
            self.a[j] -= eta * g_u;
        }
    }

    fn fit(&mut self, xs: &[f64], ys: &[f64], etas: &[f64], epochs: usize, seed: u64) {
        let mut rng = seed::rng(seed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                self.step(xs[i], ys[i], etas[i]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToySampleKind {
    Grid,
    Weak,
    Strong,
}

/// One row of the demo table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub kind: ToySampleKind,
    pub x: f64,
    pub true_y: f64,
    pub weak_y: f64,
    pub step1_fit: f64,
    pub teacher_mean: f64,
    pub teacher_sigma: f64,
    pub eta2: f64,
    pub step3_fit: f64,
}

/// Pre-trains on the weak annotator, fits a GP to the strong points in raw
/// `x`, then fine-tunes on teacher labels with `η₂ = exp(-βΣ)`. Rows cover a
/// regular grid, every weak point and every strong point.
pub fn toy1d_demo(cfg: &ToyConfig) -> Result<Vec<ToyRow>> {
    if cfg.weak_points == 0 || cfg.strong_x.is_empty() || cfg.grid_points < 2 || cfg.hidden_units == 0 {
        return Err(invalid("toy demo needs weak points, strong points, a grid and hidden units"));
    }
    if !(cfg.unit_width > 0.0 && cfg.eta > 0.0 && cfg.fidelity_beta >= 0.0) {
        return Err(invalid("toy demo needs unit_width > 0, eta > 0, beta >= 0"));
    }
    let (lo, hi) = TOY_RANGE;
    let mut rng = seed::rng(seed::derive(cfg.seed, "toy/weak"));
    let weak_x: Vec<f64> = (0..cfg.weak_points).map(|_| rng.random_range(lo..hi)).collect();
    let weak_y: Vec<f64> = weak_x.iter().map(|&x| toy_weak(x)).collect();

    let mut net = BumpNet::new(cfg.hidden_units, cfg.unit_width);
    net.fit(&weak_x, &weak_y, &vec![cfg.eta; weak_x.len()], cfg.epochs_step1, seed::derive(cfg.seed, "toy/step1"));
    let step1 = net.clone();

    let kp = KernelParams { signal_var: 1.0, length_scale: cfg.length_scale, noise_var: cfg.noise_var };
    let strong_pts: Vec<Vec<f64>> = cfg.strong_x.iter().map(|&x| vec![x]).collect();
    let strong_y: Vec<f64> = cfg.strong_x.iter().map(|&x| toy_truth(x)).collect();
    let teacher = gp_fit(&strong_pts, &strong_y, &kp)?;
    let posterior = |x: f64| teacher.predict(&[x]);

    let mut soft_x = weak_x.clone();
    soft_x.extend(&cfg.strong_x);
    let mut soft_y = Vec::with_capacity(soft_x.len());
    let mut etas = Vec::with_capacity(soft_x.len());
    for &x in &soft_x {
        let (m, v) = posterior(x)?;
        soft_y.push(m);
        etas.push(cfg.eta * fidelity_lr(v, cfg.fidelity_beta)?);
    }
    net.fit(&soft_x, &soft_y, &etas, cfg.epochs_step3, seed::derive(cfg.seed, "toy/step3"));

    let grid = (0..cfg.grid_points).map(|i| lo + (hi - lo) * i as f64 / (cfg.grid_points - 1) as f64);
    let points = grid
        .map(|x| (ToySampleKind::Grid, x))
        .chain(weak_x.iter().map(|&x| (ToySampleKind::Weak, x)))
        .chain(cfg.strong_x.iter().map(|&x| (ToySampleKind::Strong, x)));
    points
        .map(|(kind, x)| {
            let (m, v) = posterior(x)?;
            Ok(ToyRow {
                kind,
                x,
                true_y: toy_truth(x),
                weak_y: toy_weak(x),
                step1_fit: step1.eval(x),
                teacher_mean: m,
                teacher_sigma: v,
                eta2: fidelity_lr(v, cfg.fidelity_beta)?,
                step3_fit: net.eval(x),
            })
        })
        .collect()
}

pub fn toy_rows_to_csv(rows: &[ToyRow]) -> String {
    let mut s = String::from("kind,x,true_y,weak_y,step1_fit,teacher_mean,teacher_sigma,eta2,step3_fit\n");
    for r in rows {
        let kind = match r.kind {
            ToySampleKind::Grid => "grid",
            ToySampleKind::Weak => "weak",
            ToySampleKind::Strong => "strong",
        };
        let _ = writeln!(
            s,
            "{kind},{},{},{},{},{},{},{},{}",
            r.x, r.true_y, r.weak_y, r.step1_fit, r.teacher_mean, r.teacher_sigma, r.eta2, r.step3_fit
        );
    }
    s
}

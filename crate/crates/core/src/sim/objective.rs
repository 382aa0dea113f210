//! Training objectives and synthetic dataset generators.

use crate::error::{BqError, Result};
use crate::rng::{Purpose, Stream};
use rand::Rng;
use rand_distr::StandardNormal;

/// A finite-sum objective: per-sample losses and gradients over an indexed
/// dataset, with optional curvature metadata for convergence bounds.
pub trait Objective: Send + Sync {
    fn dimension(&self) -> usize;
    fn sample_count(&self) -> usize;
    fn loss(&self, theta: &[f64], sample: usize) -> f64;
    fn gradient(&self, theta: &[f64], sample: usize, out: &mut [f64]);

    /// Smoothness constant of the full objective, when known (an upper
    /// bound is fine).
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Classification accuracy at theta, for objectives where that makes
    /// sense.
    fn accuracy(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
}

/// Mean loss over a set of sample indices.
pub fn mean_loss(obj: &dyn Objective, theta: &[f64], indices: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in indices {
        total += obj.loss(theta, i);
    }
    total / indices.len() as f64
}

/// Mean gradient over a set of sample indices.
pub fn mean_gradient(obj: &dyn Objective, theta: &[f64], indices: &[usize], out: &mut [f64]) {
    out.fill(0.0);
    let mut g = vec![0.0; theta.len()];
    for &i in indices {
        obj.gradient(theta, i, &mut g);
        for (acc, v) in out.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    let inv = 1.0 / indices.len() as f64;
    for acc in out.iter_mut() {
        *acc *= inv;
    }
}

/// Quadratic objective: per-sample loss (1/2) ||theta - c_xi||^2 with one
/// center per sample. The population optimum and gradient variance are exact
/// functions of the realized centers, which is what makes it usable as an
/// analytic oracle.
pub struct QuadraticObjective {
    centers: Vec<f64>, // n * d, row-major
    dimension: usize,
}

impl QuadraticObjective {
    pub fn new(centers: Vec<f64>, dimension: usize) -> Result<Self> {
        if dimension == 0 || centers.is_empty() || centers.len() % dimension != 0 {
            return Err(BqError::InvalidConfig(
                "centers length must be a positive multiple of the dimension".into(),
            ));
        }
        Ok(QuadraticObjective { centers, dimension })
    }

    pub fn center(&self, sample: usize) -> &[f64] {
        &self.centers[sample * self.dimension..(sample + 1) * self.dimension]
    }

    /// Mean center over the given samples; the minimizer of their mean loss.
    pub fn center_mean(&self, indices: &[usize]) -> Vec<f64> {
        let mut mean = vec![0.0; self.dimension];
        for &i in indices {
            for (acc, v) in mean.iter_mut().zip(self.center(i)) {
                *acc += v;
            }
        }
        let inv = 1.0 / indices.len() as f64;
        for acc in &mut mean {
            *acc *= inv;
        }
        mean
    }

    /// Exact per-sample gradient variance over the given samples:
    /// mean ||c - c_bar||^2. This is the sigma^2 of the bounded-variance
    /// assumption for batches drawn from those samples.
    pub fn gradient_variance(&self, indices: &[usize]) -> f64 {
        let mean = self.center_mean(indices);
        let mut total = 0.0;
        for &i in indices {
            for (c, m) in self.center(i).iter().zip(&mean) {
                let diff = c - m;
                total += diff * diff;
            }
        }
        total / indices.len() as f64
    }
}

impl Objective for QuadraticObjective {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn sample_count(&self) -> usize {
        self.centers.len() / self.dimension
    }

    fn loss(&self, theta: &[f64], sample: usize) -> f64 {
        self.center(sample)
            .iter()
            .zip(theta)
            .map(|(c, t)| (t - c) * (t - c))
            .sum::<f64>()
            * 0.5
    }

    fn gradient(&self, theta: &[f64], sample: usize, out: &mut [f64]) {
        for ((o, t), c) in out.iter_mut().zip(theta).zip(self.center(sample)) {
            *o = t - c;
        }
    }

    fn smoothness(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Binary logistic regression on labeled feature vectors, labels in {-1, +1}.
pub struct LogisticObjective {
    features: Vec<f64>, // n * d, row-major
    labels: Vec<f64>,
    dimension: usize,
}

impl LogisticObjective {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, dimension: usize) -> Result<Self> {
        if dimension == 0 || features.len() != labels.len() * dimension {
            return Err(BqError::InvalidConfig(
                "features length must equal labels length times dimension".into(),
            ));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(BqError::InvalidConfig("labels must be +/-1".into()));
        }
        Ok(LogisticObjective {
            features,
            labels,
            dimension,
        })
    }

    fn sample(&self, i: usize) -> (&[f64], f64) {
        (
            &self.features[i * self.dimension..(i + 1) * self.dimension],
            self.labels[i],
        )
    }

    fn margin(&self, theta: &[f64], i: usize) -> f64 {
        let (x, y) = self.sample(i);
        y * x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
    }
}

// log(1 + e^-t) without overflow for large |t|.
fn log1p_exp_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

impl Objective for LogisticObjective {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn sample_count(&self) -> usize {
        self.labels.len()
    }

    fn loss(&self, theta: &[f64], sample: usize) -> f64 {
        log1p_exp_neg(self.margin(theta, sample))
    }

    fn gradient(&self, theta: &[f64], sample: usize, out: &mut [f64]) {
        let t = self.margin(theta, sample);
        let (x, y) = self.sample(sample);
        // d/dtheta log(1+e^{-y x.theta}) = -y sigmoid(-t) x
        let coef = -y / (1.0 + t.exp());
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = coef * xi;
        }
    }

    fn smoothness(&self) -> Option<f64> {
        // Upper bound: max_xi ||x||^2 / 4.
        let d = self.dimension;
        let max_sq = (0..self.sample_count())
            .map(|i| {
                self.features[i * d..(i + 1) * d]
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
            })
            .fold(0.0f64, f64::max);
        Some(max_sq / 4.0)
    }

    fn accuracy(&self, theta: &[f64]) -> Option<f64> {
        let hits = (0..self.sample_count())
            .filter(|&i| self.margin(theta, i) > 0.0)
            .count();
        Some(hits as f64 / self.sample_count() as f64)
    }
}

/// Synthetic task kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticTask {
    /// Centers drawn N(0, spread^2 I).
    Quadratic { spread: f64 },
    /// Two classes along the first axis, guaranteed inter-class gap
    /// `margin`, remaining coordinates standard normal.
    Logistic { margin: f64 },
}

/// Deterministic synthetic dataset + objective for the given task.
pub fn generate_synthetic(
    task: SyntheticTask,
    dimension: usize,
    samples: usize,
    seed: u64,
) -> Result<Box<dyn Objective>> {
    if dimension == 0 || samples == 0 {
        return Err(BqError::InvalidConfig(
            "synthetic dataset needs dimension >= 1 and samples >= 1".into(),
        ));
    }
    let stream = Stream::new(seed, u32::MAX, 0, Purpose::DataGen);
    let mut rng = stream.whole();
    match task {
        SyntheticTask::Quadratic { spread } => {
            let centers: Vec<f64> = (0..dimension * samples)
                .map(|_| spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Ok(Box::new(QuadraticObjective::new(centers, dimension)?))
        }
        SyntheticTask::Logistic { margin } => {
            if !(margin.is_finite() && margin > 0.0) {
                return Err(BqError::InvalidConfig(format!(
                    "logistic margin must be positive, got {margin}"
                )));
            }
            let mut features = Vec::with_capacity(dimension * samples);
            let mut labels = Vec::with_capacity(samples);
            let half = margin / 2.0;
            for i in 0..samples {
                let y = if i % 2 == 0 { 1.0 } else { -1.0 };
                // First coordinate: center +/- margin with the offset
                // clamped so |x_1| >= margin/2, i.e. a class gap of at
                // least `margin`.
                let z: f64 = rng.sample(StandardNormal);
                features.push(y * (margin + z.clamp(-half, half)));
                for _ in 1..dimension {
                    features.push(rng.sample::<f64, _>(StandardNormal));
                }
                labels.push(y);
            }
            Ok(Box::new(LogisticObjective::new(
                features, labels, dimension,
            )?))
        }
    }
}

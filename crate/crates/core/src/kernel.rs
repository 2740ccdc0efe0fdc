//! Gaussian-kernel Nadaraya-Watson estimators of class means and covariances,
//! their pooled combination, and leave-one-out bandwidth selection.
//!
//! Covariances are always formed in centered form `Σ w̃ᵢ (xᵢ − μ̂)(xᵢ − μ̂)ᵀ`
//! where `μ̂` is the weighted mean at the *covariance* bandwidth. The class
//! mean reported in [`LocalMoments`] uses the *mean* bandwidth; the two agree
//! whenever the bandwidths do.

use std::f64::consts::PI;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{DspcaError, Result};
use crate::linalg;

/// Kernel weight sums below this are treated as out of bandwidth reach.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub h: f64,
}

impl KernelSpec {
    pub fn gaussian(h: f64) -> Result<Self> {
        check_bandwidth(h)?;
        Ok(KernelSpec {
            family: KernelFamily::Gaussian,
            h,
        })
    }

    /// `K_h(diff) = K(diff / h) / h`.
    pub fn weight(&self, diff: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let z = diff / self.h;
                (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * self.h)
            }
        }
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(DspcaError::InvalidArgument(format!(
            "bandwidth must be positive and finite, got {h}"
        )))
    }
}

/// Gaussian `K_h(diff)`.
pub fn kernel_weight(diff: f64, h: f64) -> Result<f64> {
    if !diff.is_finite() {
        return Err(DspcaError::InvalidArgument(format!("non-finite kernel argument {diff}")));
    }
    Ok(KernelSpec::gaussian(h)?.weight(diff))
}

/// Per-class bandwidths for the mean and the covariance estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub mean_h: [f64; 2],
    pub cov_h: [f64; 2],
}

impl Bandwidths {
    pub fn uniform(h: f64) -> Self {
        Bandwidths {
            mean_h: [h; 2],
            cov_h: [h; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mean_h.iter().chain(&self.cov_h).try_for_each(|&h| check_bandwidth(h))
    }
}

/// Default candidate bandwidths: 20 log-spaced values on `[0.02, 1]`.
pub fn default_bandwidth_grid() -> Vec<f64> {
    let (lo, hi, n) = (0.02f64, 1.0f64, 20);
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                lo * (hi / lo).powf(k as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Observations of one class laid out as an `n_c × p` matrix.
#[derive(Debug, Clone)]
pub struct ClassSamples {
    pub label: Label,
    pub x: Mat<f64>,
    pub u: Vec<f64>,
    /// Row of each sample in the originating dataset.
    pub rows: Vec<usize>,
}

impl ClassSamples {
    pub fn from_dataset(ds: &Dataset, label: Label) -> Self {
        let rows: Vec<usize> = ds
            .observations()
            .iter()
            .enumerate()
            .filter(|(_, o)| o.label == label)
            .map(|(i, _)| i)
            .collect();
        let obs = ds.observations();
        let x = Mat::from_fn(rows.len(), ds.p(), |i, j| obs[rows[i]].features[j]);
        let u = rows.iter().map(|&i| obs[i].index).collect();
        ClassSamples { label, x, u, rows }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Normalized kernel weights at query `u`.
    pub fn weights(&self, u: f64, h: f64) -> Result<Vec<f64>> {
        let k = KernelSpec::gaussian(h)?;
        if self.is_empty() {
            return Err(DspcaError::InvalidArgument(format!("class {} is empty", self.label)));
        }
        let mut w: Vec<f64> = self.u.iter().map(|&ui| k.weight(ui - u)).collect();
        let total: f64 = w.iter().sum();
        if !(total >= WEIGHT_FLOOR) {
            return Err(DspcaError::BandwidthUnderflow { u, h });
        }
        w.iter_mut().for_each(|v| *v /= total);
        Ok(w)
    }

    fn raw_weight_sum(&self, u: f64, h: f64) -> Result<f64> {
        let k = KernelSpec::gaussian(h)?;
        Ok(self.u.iter().map(|&ui| k.weight(ui - u)).sum())
    }

    pub fn weighted_mean(&self, w: &[f64]) -> Vec<f64> {
        let p = self.p();
        let mut mu = vec![0.0; p];
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            for (j, m) in mu.iter_mut().enumerate() {
                *m += wi * self.x[(i, j)];
            }
        }
        mu
    }

    /// Rows `√w̃ᵢ (xᵢ − center)`; their Gram matrix is the weighted covariance.
    pub fn scaled_centered_rows(&self, w: &[f64], center: &[f64]) -> Mat<f64> {
        Mat::from_fn(self.len(), self.p(), |i, j| w[i].sqrt() * (self.x[(i, j)] - center[j]))
    }
}

/// Training data split by class, built once and reused across queries.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub classes: [ClassSamples; 2],
    pub n: usize,
    pub p: usize,
}

impl TrainingSet {
    pub fn new(ds: &Dataset) -> Self {
        TrainingSet {
            classes: [
                ClassSamples::from_dataset(ds, Label::One),
                ClassSamples::from_dataset(ds, Label::Two),
            ],
            n: ds.len(),
            p: ds.p(),
        }
    }

    pub fn class(&self, c: Label) -> &ClassSamples {
        &self.classes[c.slot()]
    }

    pub fn prior(&self, c: Label) -> f64 {
        self.class(c).len() as f64 / self.n as f64
    }
}

/// Kernel-smoothed moments at one query index.
#[derive(Debug, Clone)]
pub struct LocalMoments {
    pub u: f64,
    /// `μ̂⁽ᶜ⁾(u)` at the mean bandwidth, indexed by class slot.
    pub mu: [Vec<f64>; 2],
    /// `Σ̂⁽ᶜ⁾(u)` at the covariance bandwidth.
    pub sigma: [Mat<f64>; 2],
    pub sigma_pooled: Mat<f64>,
    /// `μ̂⁽¹⁾(u) − μ̂⁽²⁾(u)`.
    pub delta: Vec<f64>,
    /// Raw kernel weight sums at the mean bandwidth.
    pub class_weight_sums: [f64; 2],
    /// Weighted means at the covariance bandwidth (the covariance centers).
    pub cov_centers: [Vec<f64>; 2],
    pub priors: [f64; 2],
    pub bandwidths: Bandwidths,
}

impl LocalMoments {
    pub fn mu1(&self) -> &[f64] {
        &self.mu[0]
    }

    pub fn mu2(&self) -> &[f64] {
        &self.mu[1]
    }

    pub fn sigma1(&self) -> &Mat<f64> {
        &self.sigma[0]
    }

    pub fn sigma2(&self) -> &Mat<f64> {
        &self.sigma[1]
    }

    pub fn p(&self) -> usize {
        self.delta.len()
    }
}

/// Moments plus the per-class scaled rows whose Gram matrices are `Σ̂⁽ᶜ⁾(u)`.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub moments: LocalMoments,
    pub scaled_rows: [Mat<f64>; 2],
}

/// Computes all local moments at `u` from a prepared training set.
pub fn local_fit(train: &TrainingSet, u: f64, bw: &Bandwidths) -> Result<LocalFit> {
    bw.validate()?;
    if !u.is_finite() {
        return Err(DspcaError::InvalidArgument(format!("non-finite query index {u}")));
    }
    let mut mu: [Vec<f64>; 2] = Default::default();
    let mut centers: [Vec<f64>; 2] = Default::default();
    let mut sums = [0.0; 2];
    let mut rows: [Mat<f64>; 2] = [Mat::zeros(0, 0), Mat::zeros(0, 0)];
    let mut sigma: [Mat<f64>; 2] = [Mat::zeros(0, 0), Mat::zeros(0, 0)];
    for c in Label::BOTH {
        let s = c.slot();
        let samples = train.class(c);
        let wm = samples.weights(u, bw.mean_h[s])?;
        mu[s] = samples.weighted_mean(&wm);
        sums[s] = samples.raw_weight_sum(u, bw.mean_h[s])?;
        let wc = if bw.cov_h[s] == bw.mean_h[s] {
            wm
        } else {
            samples.weights(u, bw.cov_h[s])?
        };
        centers[s] = samples.weighted_mean(&wc);
        rows[s] = samples.scaled_centered_rows(&wc, &centers[s]);
        sigma[s] = linalg::gram(rows[s].as_ref());
    }
    let priors = [train.prior(Label::One), train.prior(Label::Two)];
    let pooled = pool(&sigma, priors);
    let delta = mu[0].iter().zip(&mu[1]).map(|(a, b)| a - b).collect();
    Ok(LocalFit {
        moments: LocalMoments {
            u,
            mu,
            sigma,
            sigma_pooled: pooled,
            delta,
            class_weight_sums: sums,
            cov_centers: centers,
            priors,
            bandwidths: *bw,
        },
        scaled_rows: rows,
    })
}

fn pool(sigma: &[Mat<f64>; 2], priors: [f64; 2]) -> Mat<f64> {
    let p = sigma[0].nrows();
    Mat::from_fn(p, p, |i, j| priors[0] * sigma[0][(i, j)] + priors[1] * sigma[1][(i, j)])
}

pub fn local_moments(ds: &Dataset, u: f64, bw: &Bandwidths) -> Result<LocalMoments> {
    ds.require_per_class(1)?;
    Ok(local_fit(&TrainingSet::new(ds), u, bw)?.moments)
}

/// Nadaraya-Watson estimate of the class-`c` mean at `u`.
pub fn nw_mean(ds: &Dataset, c: Label, u: f64, h: f64) -> Result<Vec<f64>> {
    let samples = ClassSamples::from_dataset(ds, c);
    let w = samples.weights(u, h)?;
    Ok(samples.weighted_mean(&w))
}

/// Nadaraya-Watson estimate of the class-`c` covariance at `u`.
pub fn nw_class_cov(ds: &Dataset, c: Label, u: f64, h: f64) -> Result<Mat<f64>> {
    let samples = ClassSamples::from_dataset(ds, c);
    let w = samples.weights(u, h)?;
    let mu = samples.weighted_mean(&w);
    Ok(linalg::gram(samples.scaled_centered_rows(&w, &mu).as_ref()))
}

/// Leave-one-out criteria for one class at one bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoocvErrors {
    pub mean: f64,
    pub cov: f64,
}

/// Precomputed Gram matrix of the column-centered class samples. Every
/// inner product the leave-one-out residuals need is a function of it, so
/// each bandwidth costs `O(n_c³)` regardless of `p`.
pub struct LoocvWorkspace<'a> {
    samples: &'a ClassSamples,
    gram: Mat<f64>,
}

impl<'a> LoocvWorkspace<'a> {
    pub fn new(samples: &'a ClassSamples) -> Result<Self> {
        if samples.len() < 2 {
            return Err(DspcaError::InvalidArgument(format!(
                "class {} needs at least 2 observations for leave-one-out",
                samples.label
            )));
        }
        let (n, p) = (samples.len(), samples.p());
        let means: Vec<f64> = (0..p)
            .map(|j| (0..n).map(|i| samples.x[(i, j)]).sum::<f64>() / n as f64)
            .collect();
        let centered = Mat::from_fn(n, p, |i, j| samples.x[(i, j)] - means[j]);
        let gram = linalg::gram(centered.transpose());
        Ok(LoocvWorkspace { samples, gram })
    }

    pub fn errors(&self, h: f64) -> Result<LoocvErrors> {
        let kernel = KernelSpec::gaussian(h)?;
        let n = self.samples.len();
        let p = self.samples.p() as f64;
        let g = &self.gram;
        let u = &self.samples.u;

        let mut failed = Vec::new();
        let mut mean_sum = 0.0;
        let mut cov_sum = 0.0;
        let mut w = vec![0.0; n];
        let mut gw = vec![0.0; n];
        let mut c = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            let mut total = 0.0;
            for j in 0..n {
                w[j] = if j == i { 0.0 } else { kernel.weight(u[j] - u[i]) };
                total += w[j];
            }
            if !(total >= WEIGHT_FLOOR) {
                failed.push(self.samples.rows[i]);
                continue;
            }
            w.iter_mut().for_each(|v| *v /= total);
            // gw = G w̃ = (μᵀ x_j)_j ; mm = μᵀ μ
            for (j, out) in gw.iter_mut().enumerate() {
                *out = (0..n).map(|k| g[(j, k)] * w[k]).sum();
            }
            let mm = linalg::dot(&w, &gw);
            // C_jk = (x_j − μ)ᵀ (x_k − μ)
            for k in 0..n {
                for j in 0..n {
                    c[(j, k)] = g[(j, k)] - gw[j] - gw[k] + mm;
                }
            }
            let r2 = c[(i, i)];
            mean_sum += r2;

            // ‖r rᵀ − S‖²_F = ‖r‖⁴ − 2 rᵀ S r + ‖S‖²_F
            let mut r_s_r = 0.0;
            let mut s_frob = 0.0;
            for j in 0..n {
                if w[j] == 0.0 {
                    continue;
                }
                r_s_r += w[j] * c[(i, j)] * c[(i, j)];
                let inner: f64 = (0..n)
                    .filter(|&k| w[k] != 0.0)
                    .map(|k| w[k] * c[(j, k)] * c[(j, k)])
                    .sum();
                s_frob += w[j] * inner;
            }
            cov_sum += (r2 * r2 - 2.0 * r_s_r + s_frob).max(0.0);
        }
        if !failed.is_empty() {
            return Err(DspcaError::LoocvUnderflow {
                class: self.samples.label.value(),
                h,
                indices: failed,
            });
        }
        let scale = 1.0 / (p * p * n as f64);
        Ok(LoocvErrors {
            mean: scale * mean_sum,
            cov: scale * cov_sum,
        })
    }
}

/// Leave-one-out mean criterion `(1/(p² n_c)) Σ ‖xᵢ − μ̂₋ᵢ(uᵢ)‖²`.
pub fn loocv_mean_error(ds: &Dataset, c: Label, h: f64) -> Result<f64> {
    let samples = ClassSamples::from_dataset(ds, c);
    Ok(LoocvWorkspace::new(&samples)?.errors(h)?.mean)
}

/// Leave-one-out covariance criterion
/// `(1/(p² n_c)) Σ ‖(xᵢ − μ̂₋ᵢ)(xᵢ − μ̂₋ᵢ)ᵀ − Σ̂₋ᵢ‖²_F`.
pub fn loocv_cov_error(ds: &Dataset, c: Label, h: f64) -> Result<f64> {
    let samples = ClassSamples::from_dataset(ds, c);
    Ok(LoocvWorkspace::new(&samples)?.errors(h)?.cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Mean,
    Cov,
}

/// One selected bandwidth with its criterion value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub class: Label,
    pub criterion: Criterion,
    pub h: f64,
    pub criterion_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidths: Bandwidths,
    pub choices: Vec<BandwidthChoice>,
}

/// Picks, per class and per criterion, the grid value minimizing the
/// leave-one-out criterion. Ties go to the smaller `h`; grid values whose
/// evaluation fails are skipped.
pub fn select_bandwidths(ds: &Dataset, grid: &[f64]) -> Result<Bandwidths> {
    Ok(select_bandwidths_detailed(ds, grid)?.bandwidths)
}

pub fn select_bandwidths_detailed(ds: &Dataset, grid: &[f64]) -> Result<BandwidthSelection> {
    if grid.is_empty() {
        return Err(DspcaError::InvalidArgument("bandwidth grid is empty".into()));
    }
    grid.iter().try_for_each(|&h| check_bandwidth(h))?;
    ds.require_per_class(2)?;
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut bw = Bandwidths::uniform(grid[0]);
    let mut choices = Vec::new();
    for c in Label::BOTH {
        let samples = ClassSamples::from_dataset(ds, c);
        let ws = LoocvWorkspace::new(&samples)?;
        let evals: Vec<Option<LoocvErrors>> = grid
            .par_iter()
            .map(|&h| match ws.errors(h) {
                Ok(e) => Some(e),
                Err(err) => {
                    log::debug!("skipping bandwidth {h} for class {c}: {err}");
                    None
                }
            })
            .collect();
        for criterion in [Criterion::Mean, Criterion::Cov] {
            let mut best: Option<(f64, f64)> = None;
            for (&h, e) in grid.iter().zip(&evals) {
                let Some(e) = e else { continue };
                let v = match criterion {
                    Criterion::Mean => e.mean,
                    Criterion::Cov => e.cov,
                };
                if best.is_none_or(|(_, bv)| v < bv) {
                    best = Some((h, v));
                }
            }
            let (h, v) = best.ok_or_else(|| {
                DspcaError::Selection(format!(
                    "every grid bandwidth failed for class {c}, {criterion:?} criterion"
                ))
            })?;
            match criterion {
                Criterion::Mean => bw.mean_h[c.slot()] = h,
                Criterion::Cov => bw.cov_h[c.slot()] = h,
            }
            choices.push(BandwidthChoice {
                class: c,
                criterion,
                h,
                criterion_value: v,
            });
        }
    }
    Ok(BandwidthSelection {
        bandwidths: bw,
        choices,
    })
}

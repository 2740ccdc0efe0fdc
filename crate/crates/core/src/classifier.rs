//! Per-query dynamic projection followed by LDA or QDA in the reduced space.
//!
//! The reduced-space rule plugs in the projected kernel moments
//! `Bᵀμ̂⁽ᶜ⁾(u)` and `BᵀΣ̂(u)B` (or `BᵀΣ̂⁽ᶜ⁾(u)B`). [`MomentSource::Sample`]
//! switches to unweighted sample moments of the projected training points.

use std::collections::BTreeMap;
use std::io::Write;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{DspcaError, Result};
use crate::kernel::{local_fit, Bandwidths, LocalFit, TrainingSet};
use crate::linalg::{self, Cholesky};
use crate::spectral::{factor_from_fit, top_eigenvectors, EigenStrategy, ProjectionBasis, SpectralSource};

pub const RIDGE_START: f64 = 1e-8;
pub const RIDGE_MAX: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lda,
    Qda,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Lda => "lda",
            Variant::Qda => "qda",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = DspcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lda" => Ok(Variant::Lda),
            "qda" => Ok(Variant::Qda),
            other => Err(DspcaError::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MomentSource {
    #[default]
    Kernel,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub bandwidths: Bandwidths,
    pub rho: f64,
    pub k: usize,
    pub variant: Variant,
    #[serde(default)]
    pub moment_source: MomentSource,
    #[serde(default)]
    pub strategy: EigenStrategy,
}

impl Hyperparameters {
    pub fn new(bandwidths: Bandwidths, rho: f64, k: usize, variant: Variant) -> Self {
        Hyperparameters {
            bandwidths,
            rho,
            k,
            variant,
            moment_source: MomentSource::Kernel,
            strategy: EigenStrategy::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bandwidths.validate()?;
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(DspcaError::InvalidArgument(format!("rho must be finite and nonnegative, got {}", self.rho)));
        }
        if self.k == 0 {
            return Err(DspcaError::InvalidArgument("K must be at least 1".into()));
        }
        Ok(())
    }
}

/// A symmetric matrix after ridge repair, with its Cholesky factor.
pub struct Regularized {
    pub matrix: Mat<f64>,
    pub ridge: f64,
    pub chol: Cholesky,
}

/// Adds `ε (trace/K) I` with `ε = 1e-8, 1e-7, …, 1e-2` until the matrix
/// factors.
pub fn regularize(m: &Mat<f64>) -> Result<Regularized> {
    let k = m.nrows();
    let scale = linalg::trace(m.as_ref()) / k as f64;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DspcaError::NotPositiveDefinite(format!("projected covariance has trace/K = {scale}")));
    }
    let mut eps = RIDGE_START;
    while eps <= RIDGE_MAX * (1.0 + 1e-9) {
        let mut r = m.clone();
        for i in 0..k {
            r[(i, i)] += eps * scale;
        }
        if let Ok(chol) = Cholesky::new(r.as_ref()) {
            return Ok(Regularized { matrix: r, ridge: eps, chol });
        }
        eps *= 10.0;
    }
    Err(DspcaError::NotPositiveDefinite(format!(
        "projected covariance not repairable with ridge up to {RIDGE_MAX}"
    )))
}

/// Gaussian LDA score `(x − (m₁+m₂)/2)ᵀ S⁻¹ (m₁ − m₂) + log_prior_ratio`.
pub fn gaussian_lda_score(x: &[f64], mu1: &[f64], mu2: &[f64], pooled: &Cholesky, log_prior_ratio: f64) -> f64 {
    let delta: Vec<f64> = mu1.iter().zip(mu2).map(|(a, b)| a - b).collect();
    let beta = pooled.solve_vec(&delta);
    let centered: Vec<f64> = x.iter().zip(mu1.iter().zip(mu2)).map(|(xi, (a, b))| xi - 0.5 * (a + b)).collect();
    linalg::dot(&centered, &beta) + log_prior_ratio
}

/// Gaussian QDA log-likelihood-ratio score of class 1 against class 2.
pub fn gaussian_qda_score(
    x: &[f64],
    mu1: &[f64],
    mu2: &[f64],
    sigma1: &Cholesky,
    sigma2: &Cholesky,
    log_prior_ratio: f64,
) -> f64 {
    let d1: Vec<f64> = x.iter().zip(mu1).map(|(a, b)| a - b).collect();
    let d2: Vec<f64> = x.iter().zip(mu2).map(|(a, b)| a - b).collect();
    -0.5 * sigma1.quad_form_inv(&d1) + 0.5 * sigma2.quad_form_inv(&d2) - 0.5 * sigma1.log_det()
        + 0.5 * sigma2.log_det()
        + log_prior_ratio
}

/// Label from a score; ties go to class 1.
pub fn label_of(score: f64) -> Label {
    if score >= 0.0 {
        Label::One
    } else {
        Label::Two
    }
}

/// Projected moments at the largest dimension of interest. Rules for any
/// smaller `K` take leading blocks.
#[derive(Debug, Clone)]
pub struct ProjectedMoments {
    pub basis: ProjectionBasis,
    pub mu: [Vec<f64>; 2],
    pub sigma: [Mat<f64>; 2],
    pub pooled: Mat<f64>,
    pub log_prior_ratio: f64,
}

fn leading_block(m: &Mat<f64>, k: usize) -> Mat<f64> {
    m.as_ref().submatrix(0, 0, k, k).to_owned()
}

fn project_rows(rows: &Mat<f64>, basis: &ProjectionBasis) -> Mat<f64> {
    rows * &basis.vectors
}

/// Projects the moments of `fit` onto `basis`.
pub fn project_moments(
    train: &TrainingSet,
    fit: &LocalFit,
    basis: &ProjectionBasis,
    source: MomentSource,
) -> Result<ProjectedMoments> {
    let m = &fit.moments;
    let mut mu: [Vec<f64>; 2] = Default::default();
    let mut sigma: [Mat<f64>; 2] = [Mat::zeros(0, 0), Mat::zeros(0, 0)];
    for c in Label::BOTH {
        let s = c.slot();
        match source {
            MomentSource::Kernel => {
                mu[s] = basis.project(&m.mu[s]);
                sigma[s] = linalg::gram(project_rows(&fit.scaled_rows[s], basis).as_ref());
            }
            MomentSource::Sample => {
                let samples = train.class(c);
                let n = samples.len();
                let w = vec![1.0 / n as f64; n];
                let center = samples.weighted_mean(&w);
                mu[s] = basis.project(&center);
                let rows = samples.scaled_centered_rows(&w, &center);
                sigma[s] = linalg::gram(project_rows(&rows, basis).as_ref());
            }
        }
    }
    let k = basis.k();
    let pooled = Mat::from_fn(k, k, |i, j| m.priors[0] * sigma[0][(i, j)] + m.priors[1] * sigma[1][(i, j)]);
    Ok(ProjectedMoments {
        basis: basis.clone(),
        mu,
        sigma,
        pooled,
        log_prior_ratio: (m.priors[0] / m.priors[1]).ln(),
    })
}

impl ProjectedMoments {
    /// Rule using the first `k` basis columns.
    pub fn rule(&self, k: usize, variant: Variant) -> Result<DiscriminantRule> {
        if k == 0 || k > self.basis.k() {
            return Err(DspcaError::InvalidArgument(format!(
                "K = {k} outside 1..={}",
                self.basis.k()
            )));
        }
        let mu = [self.mu[0][..k].to_vec(), self.mu[1][..k].to_vec()];
        let (pooled, classes) = match variant {
            Variant::Lda => (Some(regularize(&leading_block(&self.pooled, k))?), None),
            Variant::Qda => (
                None,
                Some([
                    regularize(&leading_block(&self.sigma[0], k))?,
                    regularize(&leading_block(&self.sigma[1], k))?,
                ]),
            ),
        };
        Ok(DiscriminantRule {
            u: self.basis.u,
            basis: self.basis.truncate(k),
            variant,
            proj_mu: mu,
            pooled,
            classes,
            log_prior_ratio: self.log_prior_ratio,
        })
    }
}

/// Reduced-space discriminant at one query index.
pub struct DiscriminantRule {
    pub u: f64,
    pub basis: ProjectionBasis,
    pub variant: Variant,
    pub proj_mu: [Vec<f64>; 2],
    /// Regularized `BᵀΣ̂B`; present for LDA.
    pub pooled: Option<Regularized>,
    /// Regularized `BᵀΣ̂⁽ᶜ⁾B`; present for QDA.
    pub classes: Option<[Regularized; 2]>,
    pub log_prior_ratio: f64,
}

impl DiscriminantRule {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.basis.p() {
            return Err(DspcaError::DimensionMismatch {
                expected: self.basis.p(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn lda_score_projected(&self, xt: &[f64]) -> Result<f64> {
        let pooled = self
            .pooled
            .as_ref()
            .ok_or_else(|| DspcaError::Internal("rule has no pooled covariance".into()))?;
        Ok(gaussian_lda_score(xt, &self.proj_mu[0], &self.proj_mu[1], &pooled.chol, self.log_prior_ratio))
    }

    pub fn qda_score_projected(&self, xt: &[f64]) -> Result<f64> {
        let [s1, s2] = self
            .classes
            .as_ref()
            .ok_or_else(|| DspcaError::Internal("rule has no class covariances".into()))?;
        Ok(gaussian_qda_score(
            xt,
            &self.proj_mu[0],
            &self.proj_mu[1],
            &s1.chol,
            &s2.chol,
            self.log_prior_ratio,
        ))
    }

    pub fn score_projected(&self, xt: &[f64]) -> Result<f64> {
        match self.variant {
            Variant::Lda => self.lda_score_projected(xt),
            Variant::Qda => self.qda_score_projected(xt),
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.score_projected(&self.basis.project(x))
    }
}

pub fn lda_score(rule: &DiscriminantRule, x: &[f64]) -> Result<f64> {
    rule.check(x)?;
    rule.lda_score_projected(&rule.basis.project(x))
}

pub fn qda_score(rule: &DiscriminantRule, x: &[f64]) -> Result<f64> {
    rule.check(x)?;
    rule.qda_score_projected(&rule.basis.project(x))
}

/// Local fit and top-`k` basis at `u`.
pub fn local_basis(train: &TrainingSet, u: f64, hp: &Hyperparameters, k: usize) -> Result<(LocalFit, ProjectionBasis)> {
    let fit = local_fit(train, u, &hp.bandwidths)?;
    let factor = factor_from_fit(&fit, hp.rho)?;
    let basis = top_eigenvectors(SpectralSource::Factor(&factor), k, hp.strategy)?;
    Ok((fit, basis))
}

pub fn local_rule_prepared(train: &TrainingSet, u: f64, hp: &Hyperparameters) -> Result<DiscriminantRule> {
    hp.validate()?;
    let (fit, basis) = local_basis(train, u, hp, hp.k)?;
    project_moments(train, &fit, &basis, hp.moment_source)?.rule(hp.k, hp.variant)
}

pub fn local_rule(ds: &Dataset, u: f64, hp: &Hyperparameters) -> Result<DiscriminantRule> {
    ds.require_per_class(1)?;
    local_rule_prepared(&TrainingSet::new(ds), u, hp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub features: Vec<f64>,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub query_id: usize,
    pub u: f64,
    pub score: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFailure {
    pub query_id: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PredictionBatch {
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<QueryFailure>,
}

impl PredictionBatch {
    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }
}

/// Scores every query. One rule is built per distinct `u` bit pattern; records
/// are ordered by query id. Fails only when every query fails.
pub fn predict(train: &Dataset, queries: &[Query], hp: &Hyperparameters) -> Result<PredictionBatch> {
    hp.validate()?;
    train.require_per_class(1)?;
    for q in queries {
        if q.features.len() != train.p() {
            return Err(DspcaError::DimensionMismatch {
                expected: train.p(),
                found: q.features.len(),
            });
        }
    }
    let ts = TrainingSet::new(train);
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        groups.entry(q.u.to_bits()).or_default().push(i);
    }
    let groups: Vec<(u64, Vec<usize>)> = groups.into_iter().collect();
    let outcomes: Vec<Vec<(usize, std::result::Result<f64, String>)>> = groups
        .par_iter()
        .map(|(bits, ids)| {
            let u = f64::from_bits(*bits);
            match local_rule_prepared(&ts, u, hp) {
                Ok(rule) => ids
                    .iter()
                    .map(|&i| (i, rule.score(&queries[i].features).map_err(|e| e.to_string())))
                    .collect(),
                Err(e) => ids.iter().map(|&i| (i, Err(e.to_string()))).collect(),
            }
        })
        .collect();
    let mut flat: Vec<(usize, std::result::Result<f64, String>)> = outcomes.into_iter().flatten().collect();
    flat.sort_by_key(|(i, _)| *i);
    let mut batch = PredictionBatch::default();
    for (i, outcome) in flat {
        match outcome {
            Ok(score) => batch.records.push(PredictionRecord {
                query_id: i,
                u: queries[i].u,
                score,
                label: label_of(score),
            }),
            Err(message) => {
                log::warn!("query {i} failed: {message}");
                batch.failures.push(QueryFailure { query_id: i, message });
            }
        }
    }
    if batch.records.is_empty() {
        if let Some(first) = batch.failures.first() {
            return Err(DspcaError::Prediction {
                index: first.query_id,
                message: format!("all {} queries failed; first: {}", batch.failures.len(), first.message),
            });
        }
    }
    Ok(batch)
}

pub fn write_predictions_csv<W: Write>(records: &[PredictionRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["query_id", "u", "score", "label"])?;
    for r in records {
        w.write_record([
            r.query_id.to_string(),
            r.u.to_string(),
            r.score.to_string(),
            r.label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `counts[true][predicted]` by class slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(DspcaError::DimensionMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let mut counts = [[0; 2]; 2];
        for (t, p) in truth.iter().zip(predicted) {
            counts[t.slot()][p.slot()] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn misclassification_rate(&self) -> f64 {
        let wrong = self.counts[0][1] + self.counts[1][0];
        wrong as f64 / self.total().max(1) as f64
    }
}

pub fn misclassification_rate(truth: &[Label], predicted: &[Label]) -> Result<f64> {
    Ok(ConfusionMatrix::from_labels(truth, predicted)?.misclassification_rate())
}

//! Total covariance `Σ̂(u) + ρ δ̂(u) δ̂(u)ᵀ`, its low-rank factor, and the
//! top-K eigenvectors that define the supervised projection.
//!
//! When `p` exceeds the number of factor rows, the spectrum is computed from
//! the small `(n+1) × (n+1)` matrix `A Aᵀ` and each eigenvector `w` is mapped
//! back to `Aᵀ w / ‖Aᵀ w‖`.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{DspcaError, Result};
use crate::kernel::{ClassSamples, LocalFit, LocalMoments};
use crate::linalg;

/// Eigenvalues at or below this fraction of the largest count as zero on the
/// factor path.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TotalCovariance {
    pub matrix: Mat<f64>,
    pub rho: f64,
    pub u: f64,
}

impl TotalCovariance {
    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(DspcaError::InvalidArgument(format!("rho must be finite and nonnegative, got {rho}")))
    }
}

pub fn total_cov(m: &LocalMoments, rho: f64) -> Result<TotalCovariance> {
    check_rho(rho)?;
    let d = &m.delta;
    let p = d.len();
    let s = &m.sigma_pooled;
    let mut matrix = Mat::from_fn(p, p, |i, j| s[(i, j)] + rho * d[i] * d[j]);
    linalg::symmetrize(&mut matrix);
    Ok(TotalCovariance { matrix, rho, u: m.u })
}

/// `(n+1) × p` matrix `A` with `AᵀA = Σ̂^tot_ρ(u)`.
#[derive(Debug, Clone)]
pub struct FactorMatrix {
    pub rows: Mat<f64>,
    pub rho: f64,
    pub u: f64,
}

impl FactorMatrix {
    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn to_total(&self) -> TotalCovariance {
        TotalCovariance {
            matrix: linalg::gram(self.rows.as_ref()),
            rho: self.rho,
            u: self.u,
        }
    }
}

/// Builds `A` in dataset row order: row `i` is
/// `√((n_{yᵢ}/n) w̃ᵢ) (xᵢ − μ̂^{(yᵢ)}(u))ᵀ` with weights and centers at the
/// class covariance bandwidth, and the last row is `√ρ δ̂(u)ᵀ`.
pub fn factor_matrix(ds: &Dataset, m: &LocalMoments, rho: f64) -> Result<FactorMatrix> {
    check_rho(rho)?;
    if ds.p() != m.p() {
        return Err(DspcaError::DimensionMismatch {
            expected: m.p(),
            found: ds.p(),
        });
    }
    let n = ds.len();
    let p = ds.p();
    let mut weights = vec![0.0; n];
    for c in Label::BOTH {
        let samples = ClassSamples::from_dataset(ds, c);
        let w = samples.weights(m.u, m.bandwidths.cov_h[c.slot()])?;
        let prior = samples.len() as f64 / n as f64;
        for (&row, &wi) in samples.rows.iter().zip(&w) {
            if wi < 0.0 {
                return Err(DspcaError::Internal(format!("negative kernel weight {wi}")));
            }
            weights[row] = prior * wi;
        }
    }
    let obs = ds.observations();
    let sr = rho.sqrt();
    let rows = Mat::from_fn(n + 1, p, |i, j| {
        if i == n {
            sr * m.delta[j]
        } else {
            let o = &obs[i];
            weights[i].sqrt() * (o.features[j] - m.cov_centers[o.label.slot()][j])
        }
    });
    Ok(FactorMatrix { rows, rho, u: m.u })
}

/// Factor built from a [`LocalFit`]; rows are grouped by class.
pub fn factor_from_fit(fit: &LocalFit, rho: f64) -> Result<FactorMatrix> {
    check_rho(rho)?;
    let m = &fit.moments;
    let [r1, r2] = &fit.scaled_rows;
    let (n1, n2) = (r1.nrows(), r2.nrows());
    let s1 = m.priors[0].sqrt();
    let s2 = m.priors[1].sqrt();
    let sr = rho.sqrt();
    let rows = Mat::from_fn(n1 + n2 + 1, m.p(), |i, j| {
        if i < n1 {
            s1 * r1[(i, j)]
        } else if i < n1 + n2 {
            s2 * r2[(i - n1, j)]
        } else {
            sr * m.delta[j]
        }
    });
    Ok(FactorMatrix { rows, rho, u: m.u })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EigenStrategy {
    Direct,
    Factor,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub enum SpectralSource<'a> {
    Total(&'a TotalCovariance),
    Factor(&'a FactorMatrix),
}

impl SpectralSource<'_> {
    pub fn p(&self) -> usize {
        match self {
            SpectralSource::Total(t) => t.p(),
            SpectralSource::Factor(f) => f.p(),
        }
    }

    fn rho_u(&self) -> (f64, f64) {
        match self {
            SpectralSource::Total(t) => (t.rho, t.u),
            SpectralSource::Factor(f) => (f.rho, f.u),
        }
    }
}

/// Top-K eigenvectors (columns, orthonormal, sign-normalized) and eigenvalues.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    pub vectors: Mat<f64>,
    pub eigenvalues: Vec<f64>,
    pub u: f64,
    pub rho: f64,
}

impl ProjectionBasis {
    pub fn k(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn p(&self) -> usize {
        self.vectors.nrows()
    }

    /// Basis restricted to its first `k` columns.
    pub fn truncate(&self, k: usize) -> ProjectionBasis {
        let k = k.min(self.k());
        ProjectionBasis {
            vectors: self.vectors.subcols(0, k).to_owned(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            u: self.u,
            rho: self.rho,
        }
    }

    /// `basisᵀ x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.vectors;
        (0..v.ncols())
            .map(|j| (0..v.nrows()).map(|i| v[(i, j)] * x[i]).sum())
            .collect()
    }

    pub fn to_record(&self) -> BasisRecord {
        BasisRecord {
            u: self.u,
            k: self.k(),
            rho: self.rho,
            eigenvalues: self.eigenvalues.clone(),
            loadings: (0..self.k())
                .map(|j| (0..self.p()).map(|i| self.vectors[(i, j)]).collect())
                .collect(),
        }
    }
}

/// JSON view of a basis; `loadings[j]` is the `j`-th eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisRecord {
    pub u: f64,
    pub k: usize,
    pub rho: f64,
    pub eigenvalues: Vec<f64>,
    pub loadings: Vec<Vec<f64>>,
}

fn finish_basis(mut vectors: Mat<f64>, eigenvalues: Vec<f64>, rho: f64, u: f64) -> ProjectionBasis {
    for j in 0..vectors.ncols() {
        let mut col: Vec<f64> = (0..vectors.nrows()).map(|i| vectors[(i, j)]).collect();
        linalg::normalize_sign(&mut col);
        for (i, v) in col.into_iter().enumerate() {
            vectors[(i, j)] = v;
        }
    }
    ProjectionBasis {
        vectors,
        eigenvalues,
        u,
        rho,
    }
}

fn direct_top(matrix: MatRef<'_, f64>, k: usize, rho: f64, u: f64) -> Result<ProjectionBasis> {
    let p = matrix.nrows();
    if k > p {
        return Err(DspcaError::InvalidArgument(format!("K = {k} exceeds p = {p}")));
    }
    let (vals, vecs) = linalg::sym_eigen_desc(matrix)?;
    let eigenvalues = vals[..k].iter().map(|v| v.max(0.0)).collect();
    Ok(finish_basis(vecs.subcols(0, k).to_owned(), eigenvalues, rho, u))
}

fn factor_top(f: &FactorMatrix, k: usize) -> Result<ProjectionBasis> {
    let a = f.rows.as_ref();
    let (m, p) = (a.nrows(), a.ncols());
    if k > m.min(p) {
        return Err(DspcaError::InvalidArgument(format!(
            "K = {k} exceeds min(p, n+1) = {}",
            m.min(p)
        )));
    }
    let small = linalg::gram(a.transpose());
    let (vals, w) = linalg::sym_eigen_desc(small.as_ref())?;
    let top = vals.first().copied().unwrap_or(0.0);
    let usable = if top > 0.0 {
        vals.iter().take_while(|&&v| v > RANK_TOLERANCE * top).count()
    } else {
        0
    };
    if k > usable {
        return Err(DspcaError::RankDeficient { requested: k, usable });
    }
    let mapped = a.transpose() * w.subcols(0, k);
    let mut vectors = mapped;
    for j in 0..k {
        let norm = vectors.col(j).norm_l2();
        for i in 0..p {
            vectors[(i, j)] /= norm;
        }
    }
    Ok(finish_basis(vectors, vals[..k].to_vec(), f.rho, f.u))
}

/// Top-K eigenpairs of the total covariance. `Auto` uses the factor path
/// when `p > n + 1` (only possible for a factor source).
pub fn top_eigenvectors(src: SpectralSource<'_>, k: usize, strategy: EigenStrategy) -> Result<ProjectionBasis> {
    if k == 0 {
        return Err(DspcaError::InvalidArgument("K must be at least 1".into()));
    }
    let (rho, u) = src.rho_u();
    match (src, strategy) {
        (SpectralSource::Total(t), EigenStrategy::Direct | EigenStrategy::Auto) => {
            direct_top(t.matrix.as_ref(), k, rho, u)
        }
        (SpectralSource::Total(_), EigenStrategy::Factor) => Err(DspcaError::InvalidArgument(
            "factor strategy requires a factor matrix".into(),
        )),
        (SpectralSource::Factor(f), EigenStrategy::Factor) => factor_top(f, k),
        (SpectralSource::Factor(f), EigenStrategy::Auto) if f.p() > f.rows.nrows() => factor_top(f, k),
        (SpectralSource::Factor(f), _) => direct_top(f.to_total().matrix.as_ref(), k, rho, u),
    }
}

fn orthonormality_defect(b: MatRef<'_, f64>) -> f64 {
    let g = b.transpose() * b;
    let k = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Spectral norm of `B₁B₁ᵀ − B₂B₂ᵀ` for column-orthonormal `B₁`, `B₂`.
pub fn subspace_distance(b1: MatRef<'_, f64>, b2: MatRef<'_, f64>) -> Result<f64> {
    if b1.nrows() != b2.nrows() {
        return Err(DspcaError::DimensionMismatch {
            expected: b1.nrows(),
            found: b2.nrows(),
        });
    }
    for b in [b1, b2] {
        let defect = orthonormality_defect(b);
        if defect > 1e-6 {
            return Err(DspcaError::NonOrthonormal(defect));
        }
    }
    let (k1, k2) = (b1.ncols(), b2.ncols());
    if k1 + k2 == 0 {
        return Ok(0.0);
    }
    // Orthonormal basis Q of span[B₁ B₂]; the projector difference lives there.
    let stacked = Mat::from_fn(b1.nrows(), k1 + k2, |i, j| if j < k1 { b1[(i, j)] } else { b2[(i, j - k1)] });
    let (vals, vecs) = linalg::sym_eigen_desc(linalg::gram(stacked.as_ref()).as_ref())?;
    let keep = vals.iter().take_while(|&&v| v > 1e-12 * vals[0]).count();
    let mut q = &stacked * vecs.subcols(0, keep);
    for j in 0..keep {
        let s = vals[j].sqrt();
        for i in 0..q.nrows() {
            q[(i, j)] /= s;
        }
    }
    let c1 = q.transpose() * b1;
    let c2 = q.transpose() * b2;
    let diff = &c1 * c1.transpose() - &c2 * c2.transpose();
    let (dv, _) = linalg::sym_eigen_desc(diff.as_ref())?;
    Ok(dv.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

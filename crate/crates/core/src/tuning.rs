//! Cross-validated choice of the weight `ρ` and the reduced dimension `K`
//! with bandwidths held fixed.
//!
//! Per held-out point and per `ρ`, the top-`K_max` basis is computed once and
//! every `K` reuses its leading columns. Misclassification is pooled over all
//! held-out points.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{label_of, project_moments, Hyperparameters, MomentSource, Variant};
use crate::dataset::{Dataset, Label};
use crate::error::{DspcaError, Result};
use crate::kernel::{local_fit, select_bandwidths, Bandwidths, TrainingSet};
use crate::spectral::{factor_from_fit, top_eigenvectors, EigenStrategy, SpectralSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub rhos: Vec<f64>,
    pub k_max: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TuningGrid {
    fn default() -> Self {
        default_grid()
    }
}

/// `ρ ∈ {e⁻¹, e⁰, …, e⁶}`, `K ∈ {1, …, 5}`, 5 folds.
pub fn default_grid() -> TuningGrid {
    TuningGrid {
        rhos: (-1..=6).map(|r| (r as f64).exp()).collect(),
        k_max: 5,
        folds: 5,
        seed: 0,
    }
}

impl TuningGrid {
    pub fn ks(&self) -> Vec<usize> {
        (1..=self.k_max).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rhos.is_empty() {
            return Err(DspcaError::InvalidArgument("rho grid is empty".into()));
        }
        if self.rhos.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(DspcaError::InvalidArgument("rho grid values must be positive and finite".into()));
        }
        if self.rhos.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DspcaError::InvalidArgument("rho grid must be strictly ascending".into()));
        }
        if self.k_max == 0 {
            return Err(DspcaError::InvalidArgument("k_max must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(DspcaError::InvalidArgument("at least 2 folds are required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: Variant,
    pub rhos: Vec<f64>,
    pub ks: Vec<usize>,
    /// `error_table[i][j]` is the pooled held-out error at `(rhos[i], ks[j])`;
    /// `None` marks an inadmissible cell.
    pub error_table: Vec<Vec<Option<f64>>>,
    pub chosen_rho: f64,
    pub chosen_k: usize,
    pub folds: usize,
    pub seed: u64,
    pub held_out: usize,
}

impl CvReport {
    pub fn chosen_error(&self) -> Option<f64> {
        let i = self.rhos.iter().position(|&r| r == self.chosen_rho)?;
        let j = self.ks.iter().position(|&k| k == self.chosen_k)?;
        self.error_table[i][j]
    }
}

/// Index `(rho, k)` of the admissible minimum; ties go to the smallest `K`,
/// then the smallest `ρ`. Rows must be in ascending `ρ`, columns in
/// ascending `K`.
pub fn select_from_table(table: &[Vec<Option<f64>>]) -> Result<(usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    let ncols = table.iter().map(Vec::len).max().unwrap_or(0);
    for j in 0..ncols {
        for (i, row) in table.iter().enumerate() {
            if let Some(Some(e)) = row.get(j) {
                if best.is_none_or(|(b, _, _)| *e < b) {
                    best = Some((*e, i, j));
                }
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
        .ok_or_else(|| DspcaError::Tuning("every (rho, K) cell is inadmissible".into()))
}

/// Per-class round-robin fold index after a seeded shuffle.
pub fn stratified_folds(ds: &Dataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(DspcaError::InvalidArgument("at least 2 folds are required".into()));
    }
    for c in Label::BOTH {
        if ds.count(c) < folds {
            return Err(DspcaError::Split(format!(
                "class {c} has {} observations, fewer than {folds} folds",
                ds.count(c)
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; ds.len()];
    for c in Label::BOTH {
        let mut rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.observations()[i].label == c).collect();
        rows.shuffle(&mut rng);
        for (pos, row) in rows.into_iter().enumerate() {
            assignment[row] = pos % folds;
        }
    }
    Ok(assignment)
}

/// `cells[v][i][j]`: `Some(wrong)` or `None` when the cell failed.
type CellOutcomes = Vec<Vec<Vec<Option<bool>>>>;

fn score_held_out(
    train: &TrainingSet,
    x: &[f64],
    u: f64,
    truth: Label,
    bw: &Bandwidths,
    grid: &TuningGrid,
    variants: &[Variant],
    strategy: EigenStrategy,
) -> CellOutcomes {
    let nk = grid.k_max;
    let mut out = vec![vec![vec![None; nk]; grid.rhos.len()]; variants.len()];
    let fit = match local_fit(train, u, bw) {
        Ok(f) => f,
        Err(_) => return out,
    };
    for (i, &rho) in grid.rhos.iter().enumerate() {
        let Ok(factor) = factor_from_fit(&fit, rho) else { continue };
        let src = SpectralSource::Factor(&factor);
        let k_top = nk.min(factor.p());
        let basis = match top_eigenvectors(src, k_top, strategy) {
            Ok(b) => b,
            Err(DspcaError::RankDeficient { usable, .. }) if usable >= 1 => {
                match top_eigenvectors(src, usable, strategy) {
                    Ok(b) => b,
                    Err(_) => continue,
                }
            }
            Err(_) => continue,
        };
        let Ok(pm) = project_moments(train, &fit, &basis, MomentSource::Kernel) else { continue };
        for (v, &variant) in variants.iter().enumerate() {
            for k in 1..=basis.k() {
                out[v][i][k - 1] = pm
                    .rule(k, variant)
                    .and_then(|r| r.score(x))
                    .ok()
                    .map(|s| label_of(s) != truth);
            }
        }
    }
    out
}

/// One [`CvReport`] per variant from a single pass over the folds.
pub fn cv_tables(
    train: &Dataset,
    bw: &Bandwidths,
    grid: &TuningGrid,
    variants: &[Variant],
    strategy: EigenStrategy,
) -> Result<Vec<CvReport>> {
    grid.validate()?;
    bw.validate()?;
    if variants.is_empty() {
        return Err(DspcaError::InvalidArgument("no classifier variant requested".into()));
    }
    let assignment = stratified_folds(train, grid.folds, grid.seed)?;
    let fold_sets: Vec<TrainingSet> = (0..grid.folds)
        .map(|f| {
            let rows: Vec<usize> = (0..train.len()).filter(|&i| assignment[i] != f).collect();
            train.subset(&rows).map(|d| TrainingSet::new(&d))
        })
        .collect::<Result<_>>()?;
    let obs = train.observations();
    let outcomes: Vec<CellOutcomes> = (0..train.len())
        .into_par_iter()
        .map(|i| {
            let o = &obs[i];
            score_held_out(&fold_sets[assignment[i]], &o.features, o.index, o.label, bw, grid, variants, strategy)
        })
        .collect();
    let n = train.len();
    let ks = grid.ks();
    variants
        .iter()
        .enumerate()
        .map(|(v, &variant)| {
            let error_table: Vec<Vec<Option<f64>>> = (0..grid.rhos.len())
                .map(|i| {
                    (0..ks.len())
                        .map(|j| {
                            let mut wrong = 0usize;
                            for o in &outcomes {
                                wrong += usize::from(o[v][i][j]?);
                            }
                            Some(wrong as f64 / n as f64)
                        })
                        .collect()
                })
                .collect();
            let (bi, bj) = select_from_table(&error_table)?;
            Ok(CvReport {
                variant,
                rhos: grid.rhos.clone(),
                ks: ks.clone(),
                chosen_rho: grid.rhos[bi],
                chosen_k: ks[bj],
                error_table,
                folds: grid.folds,
                seed: grid.seed,
                held_out: n,
            })
        })
        .collect()
}

pub fn cv_select(train: &Dataset, bw: &Bandwidths, grid: &TuningGrid, variant: Variant) -> Result<CvReport> {
    Ok(cv_tables(train, bw, grid, &[variant], EigenStrategy::Auto)?.remove(0))
}

/// Everything chosen by the full tuning pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedModel {
    pub hyperparameters: Hyperparameters,
    pub report: CvReport,
}

/// Leave-one-out bandwidths followed by `(ρ, K)` cross-validation, for each
/// requested variant.
pub fn tune(train: &Dataset, bandwidth_grid: &[f64], grid: &TuningGrid, variants: &[Variant]) -> Result<Vec<TunedModel>> {
    let bw = select_bandwidths(train, bandwidth_grid)?;
    let reports = cv_tables(train, &bw, grid, variants, EigenStrategy::Auto)?;
    Ok(reports
        .into_iter()
        .map(|report| TunedModel {
            hyperparameters: Hyperparameters::new(bw, report.chosen_rho, report.chosen_k, report.variant),
            report,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Observation;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn e(x: i32) -> f64 {
        (x as f64).exp()
    }

    #[test]
    fn default_grid_values() {
        let g = default_grid();
        assert_eq!(g.rhos.len(), 8);
        assert!((g.rhos[0] - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(g.ks(), vec![1, 2, 3, 4, 5]);
        assert_eq!(g.folds, 5);
        g.validate().unwrap();
    }

    fn table_with(cells: &[(usize, usize, f64)]) -> Vec<Vec<Option<f64>>> {
        let mut t = vec![vec![Some(0.5); 5]; 8];
        for &(i, j, v) in cells {
            t[i][j] = Some(v);
        }
        t
    }

    // rows are ρ = e^(i−1), columns K = j+1
    #[test]
    fn unique_minimum() {
        assert_eq!(select_from_table(&table_with(&[(3, 2, 0.1)])).unwrap(), (3, 2));
        assert!((default_grid().rhos[3] - e(2)).abs() < 1e-12);
    }

    #[test]
    fn tie_prefers_smaller_k() {
        assert_eq!(select_from_table(&table_with(&[(2, 1, 0.1), (1, 3, 0.1)])).unwrap(), (2, 1));
    }

    #[test]
    fn tie_then_prefers_smaller_rho() {
        assert_eq!(select_from_table(&table_with(&[(1, 1, 0.1), (4, 1, 0.1)])).unwrap(), (1, 1));
    }

    #[test]
    fn inadmissible_cells_are_skipped() {
        let mut t = table_with(&[(0, 0, 0.0), (5, 4, 0.2)]);
        t[0][0] = None;
        assert_eq!(select_from_table(&t).unwrap(), (5, 4));
        let none = vec![vec![None; 3]; 2];
        assert!(matches!(select_from_table(&none), Err(DspcaError::Tuning(_))));
    }

    fn drift_data(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::new();
        for c in Label::BOTH {
            for _ in 0..n {
                let u: f64 = rng.gen();
                let s = if c == Label::One { 1.0 } else { -1.0 };
                let features = (0..p)
                    .map(|j| rng.sample::<f64, _>(StandardNormal) + if j < 2 { s * (0.5 + u) } else { 0.0 })
                    .collect();
                v.push(Observation { features, index: u, label: c });
            }
        }
        Dataset::new(v).unwrap()
    }

    #[test]
    fn cv_report_shape_and_determinism() {
        let ds = drift_data(1, 20, 6);
        let mut g = default_grid();
        g.k_max = 3;
        let bw = Bandwidths::uniform(0.3);
        let a = cv_select(&ds, &bw, &g, Variant::Lda).unwrap();
        assert_eq!(a.error_table.len(), 8);
        assert!(a.error_table.iter().all(|r| r.len() == 3));
        let best = a.chosen_error().unwrap();
        assert!(a.error_table.iter().flatten().flatten().all(|&e| e >= best));
        assert!(best < 0.2);
        assert_eq!(a, cv_select(&ds, &bw, &g, Variant::Lda).unwrap());
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<CvReport>(&json).unwrap(), a);
    }

    #[test]
    fn joint_tables_match_single_variant_runs() {
        let ds = drift_data(2, 12, 5);
        let mut g = default_grid();
        g.k_max = 2;
        g.rhos.truncate(3);
        let bw = Bandwidths::uniform(0.4);
        let both = cv_tables(&ds, &bw, &g, &[Variant::Lda, Variant::Qda], EigenStrategy::Auto).unwrap();
        assert_eq!(both[0], cv_select(&ds, &bw, &g, Variant::Lda).unwrap());
        assert_eq!(both[1], cv_select(&ds, &bw, &g, Variant::Qda).unwrap());
    }

    #[test]
    fn too_few_per_class_for_folds() {
        let ds = drift_data(3, 4, 3);
        assert!(matches!(stratified_folds(&ds, 5, 0), Err(DspcaError::Split(_))));
    }

    #[test]
    fn grid_validation() {
        let mut g = default_grid();
        g.rhos = vec![2.0, 1.0];
        assert!(g.validate().is_err());
        g = default_grid();
        g.folds = 1;
        assert!(g.validate().is_err());
    }

    #[test]
    fn tune_end_to_end() {
        let ds = drift_data(4, 15, 4);
        let mut g = default_grid();
        g.k_max = 2;
        let models = tune(&ds, &[0.1, 0.3, 1.0], &g, &[Variant::Lda]).unwrap();
        let hp = models[0].hyperparameters;
        assert_eq!(hp.rho, models[0].report.chosen_rho);
        assert_eq!(hp.k, models[0].report.chosen_k);
    }

    proptest! {
        #[test]
        fn folds_partition_with_balanced_class_sizes(seed in any::<u64>(), n1 in 5usize..30, n2 in 5usize..30, folds in 2usize..6) {
            let mut v = Vec::new();
            for (c, n) in [(Label::One, n1), (Label::Two, n2)] {
                for i in 0..n {
                    v.push(Observation { features: vec![i as f64], index: 0.0, label: c });
                }
            }
            let ds = Dataset::new(v).unwrap();
            let a = stratified_folds(&ds, folds, seed).unwrap();
            prop_assert_eq!(a.len(), n1 + n2);
            prop_assert!(a.iter().all(|&f| f < folds));
            for c in Label::BOTH {
                let mut sizes = vec![0usize; folds];
                for (i, o) in ds.observations().iter().enumerate() {
                    if o.label == c { sizes[a[i]] += 1; }
                }
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
            prop_assert_eq!(a, stratified_folds(&ds, folds, seed).unwrap());
        }
    }
}

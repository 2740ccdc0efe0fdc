//! Synthetic index-dependent Gaussian models, the Bayes oracle rule, and a
//! replicate benchmark runner.

use std::io::Write;
use std::time::Instant;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{label_of, misclassification_rate, predict, Hyperparameters, Query, Variant};
use crate::dataset::{Dataset, Label, Observation};
use crate::error::{DspcaError, Result};
use crate::kernel::{default_bandwidth_grid, select_bandwidths};
use crate::linalg::{self, Cholesky};
use crate::spectral::EigenStrategy;
use crate::tuning::{cv_tables, default_grid, TuningGrid};

/// Scalar function of the index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    Const { value: f64 },
    /// `scale · u`
    Linear { scale: f64 },
    Exp,
    /// `sin(freq · u)`
    Sin { freq: f64 },
}

impl Curve {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Curve::Const { value } => value,
            Curve::Linear { scale } => scale * u,
            Curve::Exp => u.exp(),
            Curve::Sin { freq } => (freq * u).sin(),
        }
    }
}

/// Coordinates `start..end` (0-based, exclusive end) follow `curve`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSegment {
    pub start: usize,
    pub end: usize,
    pub curve: Curve,
}

/// Piecewise mean vector; segments must tile `0..p` in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanProfile {
    pub segments: Vec<MeanSegment>,
}

impl MeanProfile {
    pub fn uniform(p: usize, curve: Curve) -> Self {
        MeanProfile {
            segments: vec![MeanSegment { start: 0, end: p, curve }],
        }
    }

    pub fn split(p: usize, at: usize, head: Curve, tail: Curve) -> Self {
        MeanProfile {
            segments: vec![
                MeanSegment { start: 0, end: at, curve: head },
                MeanSegment { start: at, end: p, curve: tail },
            ],
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        let mut next = 0;
        for s in &self.segments {
            if s.start != next || s.end < s.start {
                return Err(DspcaError::InvalidArgument("mean segments must tile 0..p in order".into()));
            }
            next = s.end;
        }
        if next != p {
            return Err(DspcaError::InvalidArgument(format!("mean segments cover {next} of {p} coordinates")));
        }
        Ok(())
    }

    pub fn eval(&self, u: f64) -> Vec<f64> {
        let p = self.segments.last().map_or(0, |s| s.end);
        let mut mu = vec![0.0; p];
        for s in &self.segments {
            let v = s.curve.eval(u);
            mu[s.start..s.end].iter_mut().for_each(|m| *m = v);
        }
        mu
    }
}

/// Index-dependent covariance family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovProfile {
    /// `(r(u)^{|i−j|})`
    Ar1 { r: Curve },
    /// `ρ(u) 𝟙𝟙ᵀ + (1 − ρ(u)) I`
    CompoundSymmetry { rho: Curve },
    /// Index-free dense matrix, row-major.
    Fixed { matrix: Vec<Vec<f64>> },
}

impl CovProfile {
    pub fn at(&self, u: f64) -> Covariance {
        match self {
            CovProfile::Ar1 { r } => Covariance::Ar1(r.eval(u)),
            CovProfile::CompoundSymmetry { rho } => Covariance::CompoundSymmetry(rho.eval(u)),
            CovProfile::Fixed { matrix } => {
                Covariance::Dense(Mat::from_fn(matrix.len(), matrix.len(), |i, j| matrix[i][j]))
            }
        }
    }
}

/// Covariance at one index value.
#[derive(Debug, Clone)]
pub enum Covariance {
    Ar1(f64),
    CompoundSymmetry(f64),
    Dense(Mat<f64>),
}

impl Covariance {
    pub fn dense(&self, p: usize) -> Mat<f64> {
        match self {
            Covariance::Ar1(r) => Mat::from_fn(p, p, |i, j| r.powi(i.abs_diff(j) as i32)),
            Covariance::CompoundSymmetry(rho) => Mat::from_fn(p, p, |i, j| if i == j { 1.0 } else { *rho }),
            Covariance::Dense(m) => m.clone(),
        }
    }

    fn check_pd(&self, p: usize) -> Result<()> {
        let ok = match self {
            Covariance::Ar1(r) => r.abs() < 1.0,
            Covariance::CompoundSymmetry(rho) => {
                *rho < 1.0 && 1.0 + (p as f64 - 1.0) * rho > 0.0
            }
            Covariance::Dense(m) => m.nrows() == p && Cholesky::new(m.as_ref()).is_ok(),
        };
        if ok {
            Ok(())
        } else {
            Err(DspcaError::Simulation(format!("covariance {self:?} is not positive definite at p = {p}")))
        }
    }

    /// Length of the standard-normal vector consumed by [`Self::apply_factor`].
    pub fn noise_dim(&self, p: usize) -> usize {
        match self {
            Covariance::CompoundSymmetry(_) => p + 1,
            _ => p,
        }
    }

    /// `F z` for a fixed factor with `F Fᵀ = Σ`.
    pub fn apply_factor(&self, z: &[f64], p: usize) -> Result<Vec<f64>> {
        match self {
            Covariance::Ar1(r) => {
                let s = (1.0 - r * r).max(0.0).sqrt();
                let mut x = vec![0.0; p];
                for j in 0..p {
                    x[j] = if j == 0 { z[0] } else { r * x[j - 1] + s * z[j] };
                }
                Ok(x)
            }
            Covariance::CompoundSymmetry(rho) => {
                if !(0.0..=1.0).contains(rho) {
                    return Err(DspcaError::Simulation(format!(
                        "compound-symmetry sampler needs 0 ≤ ρ ≤ 1, got {rho}"
                    )));
                }
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                Ok((0..p).map(|j| a * z[p] + b * z[j]).collect())
            }
            Covariance::Dense(m) => {
                let chol = Cholesky::new(m.as_ref())?;
                let l = chol.lower();
                Ok((0..p).map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum()).collect())
            }
        }
    }

    /// `Σ⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p = v.len();
        match self {
            Covariance::Ar1(r) => {
                if p == 1 {
                    return Ok(v.to_vec());
                }
                let (r, s) = (*r, 1.0 / (1.0 - r * r));
                Ok((0..p)
                    .map(|i| {
                        let diag = if i == 0 || i == p - 1 { 1.0 } else { 1.0 + r * r };
                        let mut acc = diag * v[i];
                        if i > 0 {
                            acc -= r * v[i - 1];
                        }
                        if i + 1 < p {
                            acc -= r * v[i + 1];
                        }
                        s * acc
                    })
                    .collect())
            }
            Covariance::CompoundSymmetry(rho) => {
                let total: f64 = v.iter().sum();
                let c = rho / (1.0 - rho + p as f64 * rho);
                Ok(v.iter().map(|x| (x - c * total) / (1.0 - rho)).collect())
            }
            Covariance::Dense(m) => Ok(Cholesky::new(m.as_ref())?.solve_vec(v)),
        }
    }

    pub fn log_det(&self, p: usize) -> Result<f64> {
        let pf = p as f64;
        match self {
            Covariance::Ar1(r) => Ok((pf - 1.0) * (1.0 - r * r).ln()),
            Covariance::CompoundSymmetry(rho) => Ok((pf - 1.0) * (1.0 - rho).ln() + (1.0 + (pf - 1.0) * rho).ln()),
            Covariance::Dense(m) => Ok(Cholesky::new(m.as_ref())?.log_det()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationModelSpec {
    /// `Some(1..=6)` for the built-in models.
    pub model_id: Option<u8>,
    pub p: usize,
    pub mean: [MeanProfile; 2],
    pub cov: [CovProfile; 2],
}

/// Number of leading (or trailing) coordinates where the class means differ.
pub const SIGNAL_COORDS: usize = 20;

impl SimulationModelSpec {
    /// Built-in model `id ∈ 1..=6` at dimension `p`.
    pub fn builtin(id: u8, p: usize) -> Result<Self> {
        let s = SIGNAL_COORDS;
        if p < s {
            return Err(DspcaError::InvalidArgument(format!("p must be at least {s}, got {p}")));
        }
        let lin = |scale: f64| Curve::Linear { scale };
        let one = Curve::Const { value: 1.0 };
        let ar_u = CovProfile::Ar1 { r: lin(1.0) };
        let cs_u = CovProfile::CompoundSymmetry { rho: lin(1.0) };
        let (mean, cov) = match id {
            1 => (
                [MeanProfile::uniform(p, one), MeanProfile::split(p, s, Curve::Const { value: 0.0 }, one)],
                CovProfile::Ar1 { r: Curve::Const { value: 0.5 } },
            ),
            2 => ([MeanProfile::uniform(p, Curve::Exp), MeanProfile::split(p, s, lin(1.0), Curve::Exp)], ar_u.clone()),
            3 => ([MeanProfile::uniform(p, lin(1.0)), MeanProfile::split(p, s, lin(-1.0), lin(1.0))], cs_u.clone()),
            4 | 6 => (
                [MeanProfile::uniform(p, lin(1.0)), MeanProfile::split(p, p - s, lin(-1.0), lin(1.0))],
                cs_u.clone(),
            ),
            5 => ([MeanProfile::uniform(p, lin(1.0)), MeanProfile::uniform(p, Curve::Sin { freq: 4.0 })], cs_u.clone()),
            _ => return Err(DspcaError::InvalidArgument(format!("model id must be in 1..=6, got {id}"))),
        };
        let cov = if id == 6 { [ar_u, cs_u] } else { [cov.clone(), cov] };
        let spec = SimulationModelSpec { model_id: Some(id), p, mean, cov };
        spec.validate()?;
        Ok(spec)
    }

    pub fn custom(p: usize, mean: [MeanProfile; 2], cov: [CovProfile; 2]) -> Result<Self> {
        let spec = SimulationModelSpec { model_id: None, p, mean, cov };
        spec.validate()?;
        Ok(spec)
    }

    pub fn equal_cov(&self) -> bool {
        self.cov[0] == self.cov[1]
    }

    /// Checks mean layout and positive definiteness at interior index values.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(DspcaError::InvalidArgument("p must be positive".into()));
        }
        for c in 0..2 {
            self.mean[c].validate(self.p)?;
            for k in 0..20 {
                let u = (k as f64 + 0.5) / 20.0;
                self.cov[c].at(u).check_pd(self.p)?;
            }
        }
        Ok(())
    }

    pub fn mean(&self, c: Label, u: f64) -> Vec<f64> {
        self.mean[c.slot()].eval(u)
    }

    pub fn covariance(&self, c: Label, u: f64) -> Covariance {
        self.cov[c.slot()].at(u)
    }

    /// One draw from class `c` at index `u`.
    pub fn sample_at<R: Rng>(&self, c: Label, u: f64, rng: &mut R) -> Result<Vec<f64>> {
        let cov = self.covariance(c, u);
        let z: Vec<f64> = (0..cov.noise_dim(self.p)).map(|_| rng.sample(StandardNormal)).collect();
        let noise = cov.apply_factor(&z, self.p)?;
        Ok(self.mean(c, u).iter().zip(noise).map(|(m, e)| m + e).collect())
    }
}

/// `n1` class-1 rows followed by `n2` class-2 rows with `u ~ U[0, 1)`.
pub fn generate_with_rng<R: Rng>(spec: &SimulationModelSpec, n1: usize, n2: usize, rng: &mut R) -> Result<Dataset> {
    if n1 == 0 || n2 == 0 {
        return Err(DspcaError::InvalidArgument("each class needs at least one observation".into()));
    }
    let mut obs = Vec::with_capacity(n1 + n2);
    for (c, n) in [(Label::One, n1), (Label::Two, n2)] {
        for _ in 0..n {
            let u: f64 = rng.gen();
            obs.push(Observation {
                features: spec.sample_at(c, u, rng)?,
                index: u,
                label: c,
            });
        }
    }
    Dataset::new(obs)
}

pub fn generate(spec: &SimulationModelSpec, n1: usize, n2: usize, seed: u64) -> Result<Dataset> {
    generate_with_rng(spec, n1, n2, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Independent generator for one role of one replicate.
pub fn replicate_rng(seed: u64, replicate: usize, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 * 4 + role);
    rng
}

/// Bayes log-likelihood-ratio score with true parameters and equal priors.
/// Equal-covariance models use the linear rule.
pub fn oracle_score(spec: &SimulationModelSpec, x: &[f64], u: f64) -> Result<f64> {
    if x.len() != spec.p {
        return Err(DspcaError::DimensionMismatch {
            expected: spec.p,
            found: x.len(),
        });
    }
    let (m1, m2) = (spec.mean(Label::One, u), spec.mean(Label::Two, u));
    if spec.equal_cov() {
        let delta: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| a - b).collect();
        let beta = spec.covariance(Label::One, u).solve(&delta)?;
        let centered: Vec<f64> = x.iter().zip(m1.iter().zip(&m2)).map(|(xi, (a, b))| xi - 0.5 * (a + b)).collect();
        Ok(linalg::dot(&centered, &beta))
    } else {
        let mut score = 0.0;
        for (c, m, sign) in [(Label::One, &m1, -0.5), (Label::Two, &m2, 0.5)] {
            let cov = spec.covariance(c, u);
            let d: Vec<f64> = x.iter().zip(m).map(|(a, b)| a - b).collect();
            score += sign * (linalg::dot(&d, &cov.solve(&d)?) + cov.log_det(spec.p)?);
        }
        Ok(score)
    }
}

pub fn oracle_predict(spec: &SimulationModelSpec, queries: &[Query]) -> Result<Vec<Label>> {
    queries.iter().map(|q| oracle_score(spec, &q.features, q.u).map(label_of)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Oracle,
    #[serde(rename = "DSPCALDA")]
    DspcaLda,
    #[serde(rename = "DSPCAQDA")]
    DspcaQda,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Oracle, Method::DspcaLda, Method::DspcaQda];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "Oracle",
            Method::DspcaLda => "DSPCALDA",
            Method::DspcaQda => "DSPCAQDA",
        }
    }

    fn variant(self) -> Option<Variant> {
        match self {
            Method::Oracle => None,
            Method::DspcaLda => Some(Variant::Lda),
            Method::DspcaQda => Some(Variant::Qda),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = DspcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(Method::Oracle),
            "dspcalda" | "lda" => Ok(Method::DspcaLda),
            "dspcaqda" | "qda" => Ok(Method::DspcaQda),
            other => Err(DspcaError::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub model_id: u8,
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub test_n1: usize,
    pub test_n2: usize,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub bandwidth_grid: Vec<f64>,
    pub tuning: TuningGrid,
}

impl BenchmarkConfig {
    /// Equal class sizes for training and test, default grids.
    pub fn new(model_id: u8, p: usize, n_per_class: usize, reps: usize, seed: u64) -> Self {
        BenchmarkConfig {
            model_id,
            p,
            n1: n_per_class,
            n2: n_per_class,
            test_n1: n_per_class,
            test_n2: n_per_class,
            reps,
            methods: Method::ALL.to_vec(),
            seed,
            bandwidth_grid: default_bandwidth_grid(),
            tuning: default_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(DspcaError::InvalidArgument(format!(
                "at least 2 replicates are needed for a standard error, got {}",
                self.reps
            )));
        }
        if self.methods.is_empty() {
            return Err(DspcaError::InvalidArgument("no methods selected".into()));
        }
        self.tuning.validate()?;
        SimulationModelSpec::builtin(self.model_id, self.p).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    /// Test error per method, in `config.methods` order.
    pub errors: Vec<f64>,
    pub seconds: Vec<f64>,
    pub chosen: Vec<Option<Hyperparameters>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_error: f64,
    pub se: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub config: BenchmarkConfig,
    pub summaries: Vec<MethodSummary>,
    pub replicates: Vec<ReplicateOutcome>,
    pub failures: Vec<(usize, String)>,
}

impl BenchmarkResult {
    pub fn summary(&self, m: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == m)
    }
}

/// One replicate. DSPCA timings include the shared bandwidth and
/// cross-validation pass plus the method's own test prediction.
pub fn run_replicate(config: &BenchmarkConfig, spec: &SimulationModelSpec, rep: usize) -> Result<ReplicateOutcome> {
    let train = generate_with_rng(spec, config.n1, config.n2, &mut replicate_rng(config.seed, rep, 0))?;
    let test = generate_with_rng(spec, config.test_n1, config.test_n2, &mut replicate_rng(config.seed, rep, 1))?;
    let tuning_seed: u64 = replicate_rng(config.seed, rep, 2).gen();
    let queries: Vec<Query> = test
        .observations()
        .iter()
        .map(|o| Query { features: o.features.clone(), u: o.index })
        .collect();
    let truth: Vec<Label> = test.observations().iter().map(|o| o.label).collect();

    let variants: Vec<Variant> = config.methods.iter().filter_map(|m| m.variant()).collect();
    let (shared_secs, tuned) = if variants.is_empty() {
        (0.0, Vec::new())
    } else {
        let start = Instant::now();
        let bw = select_bandwidths(&train, &config.bandwidth_grid)?;
        let grid = TuningGrid { seed: tuning_seed, ..config.tuning.clone() };
        let reports = cv_tables(&train, &bw, &grid, &variants, EigenStrategy::Auto)?;
        let hps: Vec<Hyperparameters> = reports
            .iter()
            .map(|r| Hyperparameters::new(bw, r.chosen_rho, r.chosen_k, r.variant))
            .collect();
        (start.elapsed().as_secs_f64(), hps)
    };

    let mut out = ReplicateOutcome {
        replicate: rep,
        errors: Vec::new(),
        seconds: Vec::new(),
        chosen: Vec::new(),
    };
    for m in &config.methods {
        let start = Instant::now();
        let (predicted, hp) = match m.variant() {
            None => (oracle_predict(spec, &queries)?, None),
            Some(v) => {
                let hp = *tuned.iter().find(|h| h.variant == v).expect("variant tuned above");
                let batch = predict(&train, &queries, &hp)?;
                // failed queries count as errors
                let mut labels: Vec<Label> = truth.iter().map(|t| t.other()).collect();
                for r in &batch.records {
                    labels[r.query_id] = r.label;
                }
                (labels, Some(hp))
            }
        };
        let secs = start.elapsed().as_secs_f64() + if hp.is_some() { shared_secs } else { 0.0 };
        out.errors.push(misclassification_rate(&truth, &predicted)?);
        out.seconds.push(secs);
        out.chosen.push(hp);
    }
    Ok(out)
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Failures below 5% of replicates are dropped with a warning; more is an
/// error.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkResult> {
    config.validate()?;
    let spec = SimulationModelSpec::builtin(config.model_id, config.p)?;
    let outcomes: Vec<Result<ReplicateOutcome>> =
        (0..config.reps).into_par_iter().map(|rep| run_replicate(config, &spec, rep)).collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => replicates.push(r),
            Err(e) => {
                log::warn!("replicate {rep} failed: {e}");
                failures.push((rep, e.to_string()));
            }
        }
    }
    if failures.len() * 20 >= config.reps || replicates.len() < 2 {
        return Err(DspcaError::Benchmark(format!(
            "{} of {} replicates failed; first: {}",
            failures.len(),
            config.reps,
            failures.first().map_or("none", |f| f.1.as_str())
        )));
    }
    let summaries = config
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let errs: Vec<f64> = replicates.iter().map(|r| r.errors[j]).collect();
            let secs: Vec<f64> = replicates.iter().map(|r| r.seconds[j]).collect();
            let (mean_error, se) = mean_se(&errs);
            MethodSummary {
                method,
                mean_error,
                se,
                mean_seconds: secs.iter().sum::<f64>() / secs.len() as f64,
            }
        })
        .collect();
    Ok(BenchmarkResult {
        config: config.clone(),
        summaries,
        replicates,
        failures,
    })
}

/// Table with one row per result (`p`, then `mean(SE)` per method).
pub fn write_table_csv<W: Write>(results: &[BenchmarkResult], sink: W) -> Result<()> {
    let Some(first) = results.first() else {
        return Err(DspcaError::InvalidArgument("no benchmark results to write".into()));
    };
    let methods = &first.config.methods;
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["p".to_string()];
    header.extend(methods.iter().map(|m| m.name().to_string()));
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![r.config.p.to_string()];
        for m in methods {
            row.push(match r.summary(*m) {
                Some(s) => format!("{:.3}({:.3})", s.mean_error, s.se),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

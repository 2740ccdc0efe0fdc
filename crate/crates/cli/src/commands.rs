use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use dspca::classifier::{predict as predict_batch, write_predictions_csv, ConfusionMatrix, Hyperparameters, Query, Variant};
use dspca::dataset::{
    load_csv, load_table, normalize_index, screen_manifest, split_rows, write_csv, Dataset, IndexMap, Schema,
};
use dspca::kernel::{default_bandwidth_grid, select_bandwidths_detailed, Bandwidths, BandwidthSelection};
use dspca::simulation::{run_benchmark, write_table_csv, BenchmarkConfig, Method};
use dspca::tuning::{cv_select, default_grid, TuningGrid};
use serde::{Deserialize, Serialize};

use crate::{Cli, CliError, PredictArgs, SchemaArgs, ScreenArgs, SimulateArgs, TuneArgs};

/// Handoff from `tune` to `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub hyperparameters: Hyperparameters,
    pub normalize_index: bool,
    pub p: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigEcho<T> {
    argv: Vec<String>,
    out_dir: PathBuf,
    resolved: T,
}

impl SchemaArgs {
    fn schema(&self) -> Schema {
        Schema {
            label_column: self.label_column.clone(),
            index_column: self.index_column.clone(),
            feature_columns: self.features.clone(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(create(dir, name)?, value)
        .map_err(|e| CliError::input(format!("cannot write {name}: {e}")))
}

fn echo<T: Serialize>(cli: &Cli, argv: &[String], resolved: &T) -> Result<(), CliError> {
    write_json(
        &cli.out_dir,
        "config.json",
        &ConfigEcho { argv: argv.to_vec(), out_dir: cli.out_dir.clone(), resolved },
    )
}

pub fn load_replay_argv(path: &Path) -> Result<Vec<String>, CliError> {
    let echo: ConfigEcho<serde_json::Value> = serde_json::from_reader(open(path)?)
        .map_err(|e| CliError::input(format!("{} is not a config echo: {e}", path.display())))?;
    Ok(echo.argv)
}

fn load_training(path: &Path, schema: &SchemaArgs) -> Result<Dataset, CliError> {
    Ok(load_csv(open(path)?, &schema.schema()).map_err(|e| CliError::from(e).context(path))?)
}

impl CliError {
    fn context(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

fn maybe_normalize(ds: Dataset, normalize: bool) -> Result<(Dataset, IndexMap), CliError> {
    if normalize {
        Ok(normalize_index(&ds)?)
    } else {
        Ok((ds, IndexMap::identity()))
    }
}

#[derive(Debug, Serialize)]
struct TuneResolved<'a> {
    args: &'a TuneArgs,
    grid: &'a TuningGrid,
    bandwidth_grid: &'a [f64],
}

pub fn tune(cli: &Cli, a: &TuneArgs, argv: &[String]) -> Result<(), CliError> {
    let variant: Variant = a.variant.parse()?;
    let raw = load_training(&a.train, &a.schema)?;
    let (train, _) = maybe_normalize(raw, !a.no_normalize)?;
    let mut grid = default_grid();
    if let Some(r) = &a.rhos {
        grid.rhos = r.clone();
    }
    grid.k_max = a.kmax;
    grid.folds = a.folds;
    grid.seed = a.seed;
    grid.validate()?;
    let bandwidth_grid = a.bandwidth_grid.clone().unwrap_or_else(default_bandwidth_grid);
    prepare_out_dir(&cli.out_dir)?;
    echo(cli, argv, &TuneResolved { args: a, grid: &grid, bandwidth_grid: &bandwidth_grid })?;

    let selection = match a.bandwidth {
        Some(h) => {
            let bandwidths = Bandwidths::uniform(h);
            bandwidths.validate()?;
            BandwidthSelection { bandwidths, choices: Vec::new() }
        }
        None => select_bandwidths_detailed(&train, &bandwidth_grid)?,
    };
    let report = cv_select(&train, &selection.bandwidths, &grid, variant)?;
    let params = ParamsFile {
        hyperparameters: Hyperparameters::new(selection.bandwidths, report.chosen_rho, report.chosen_k, variant),
        normalize_index: !a.no_normalize,
        p: train.p(),
    };
    write_json(&cli.out_dir, "bandwidths.json", &selection)?;
    write_json(&cli.out_dir, "cv_report.json", &report)?;
    write_json(&cli.out_dir, "params.json", &params)?;
    let bw = selection.bandwidths;
    println!(
        "variant {variant}, rho {:.6}, K {}, cv error {:.4}",
        report.chosen_rho,
        report.chosen_k,
        report.chosen_error().unwrap_or(f64::NAN)
    );
    println!(
        "bandwidths: mean h = ({:.6}, {:.6}), covariance h = ({:.6}, {:.6})",
        bw.mean_h[0], bw.mean_h[1], bw.cov_h[0], bw.cov_h[1]
    );
    Ok(())
}

pub fn predict(cli: &Cli, a: &PredictArgs, argv: &[String]) -> Result<(), CliError> {
    let params: ParamsFile = serde_json::from_reader(open(&a.params)?)
        .map_err(|e| CliError::input(format!("{}: {e}", a.params.display())))?;
    let raw = load_training(&a.train, &a.schema)?;
    let test = load_table(open(&a.test)?, &a.schema.schema(), false).map_err(|e| CliError::from(e).context(&a.test))?;
    if test.p() != raw.p() {
        return Err(dspca::DspcaError::DimensionMismatch { expected: raw.p(), found: test.p() }.into());
    }
    if params.p != raw.p() {
        return Err(dspca::DspcaError::DimensionMismatch { expected: params.p, found: raw.p() }.into());
    }
    let (train, map) = maybe_normalize(raw, params.normalize_index)?;
    prepare_out_dir(&cli.out_dir)?;
    echo(cli, argv, &(a, &params))?;

    let queries: Vec<Query> = test
        .features
        .iter()
        .zip(&test.index)
        .map(|(x, &u)| Query { features: x.clone(), u: map.apply(u) })
        .collect();
    let batch = predict_batch(&train, &queries, &params.hyperparameters)?;
    write_predictions_csv(&batch.records, create(&cli.out_dir, "predictions.csv")?)?;
    write_json(&cli.out_dir, "predictions.json", &batch)?;
    println!("{} predictions written to {}", batch.records.len(), cli.out_dir.join("predictions.csv").display());
    for f in &batch.failures {
        eprintln!("query {} failed: {}", f.query_id, f.message);
    }
    if let Some(labels) = &test.labels {
        let truth: Vec<_> = batch.records.iter().map(|r| labels[r.query_id]).collect();
        let cm = ConfusionMatrix::from_labels(&truth, &batch.labels())?;
        println!("confusion (rows true, columns predicted):");
        println!("        pred 1  pred 2");
        for (i, row) in cm.counts.iter().enumerate() {
            println!("true {}  {:>6}  {:>6}", i + 1, row[0], row[1]);
        }
        println!("misclassification rate: {:.4}", cm.misclassification_rate());
    }
    Ok(())
}

pub fn screen(cli: &Cli, a: &ScreenArgs, argv: &[String]) -> Result<(), CliError> {
    let ds = load_training(&a.input, &a.schema)?;
    prepare_out_dir(&cli.out_dir)?;
    echo(cli, argv, a)?;
    let (train, test) = match a.test_fraction {
        Some(f) => {
            let split = split_rows(&ds, f, a.seed)?;
            write_json(&cli.out_dir, "split_manifest.json", &split)?;
            (ds.subset(&split.train_rows)?, Some(ds.subset(&split.test_rows)?))
        }
        None => (ds, None),
    };
    let manifest = screen_manifest(&train, a.p_keep)?;
    write_json(&cli.out_dir, "screen_manifest.json", &manifest)?;
    let name = if test.is_some() { "train.csv" } else { "screened.csv" };
    write_csv(&train.select_features(&manifest.selected)?, create(&cli.out_dir, name)?)?;
    if let Some(t) = test {
        write_csv(&t.select_features(&manifest.selected)?, create(&cli.out_dir, "test.csv")?)?;
    }
    println!(
        "kept {} of {} features; top: {}",
        manifest.selected.len(),
        train.p(),
        manifest.selected_names.iter().take(5).cloned().collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

pub fn simulate(cli: &Cli, a: &SimulateArgs, argv: &[String]) -> Result<(), CliError> {
    let methods: Vec<Method> = a.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    let configs: Vec<BenchmarkConfig> = a
        .p
        .iter()
        .map(|&p| {
            let mut c = BenchmarkConfig::new(a.model, p, a.n, a.reps, a.seed);
            c.methods = methods.clone();
            c.tuning.k_max = a.kmax;
            c.tuning.folds = a.folds;
            c
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    prepare_out_dir(&cli.out_dir)?;
    echo(cli, argv, &configs)?;
    let mut results = Vec::new();
    for c in &configs {
        log::info!("model {} p {}: {} replicates", c.model_id, c.p, c.reps);
        let r = run_benchmark(c)?;
        for (rep, msg) in &r.failures {
            eprintln!("replicate {rep} excluded: {msg}");
        }
        results.push(r);
    }
    write_table_csv(&results, create(&cli.out_dir, "benchmark.csv")?)?;
    write_json(&cli.out_dir, "benchmark.json", &results)?;
    let mut table = Vec::new();
    write_table_csv(&results, &mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}

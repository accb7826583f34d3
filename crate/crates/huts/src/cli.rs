//! Command-line front end: ingestion, fitting, forecasting, intervals,
//! backtesting, truncation search, and residual diagnostics, each writing
//! tab-separated tables plus a digest manifest to an output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::decomposition::{
    fit_fpca, fit_huts, fit_lc, ModelDocument, ModelKind,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    expanding_backtest, metrics_by_age, mse_mae_by_horizon, residual_diagnostics,
    truncation_search, BacktestSpec, ModelTag,
};
use crate::forecast::{forecast_lc, point_forecast};
use crate::hmd::{
    build_surface, parse_hmd_table_sex, to_log_surface, CountryConfig,
    LogMortalitySurface, RawMortalityTable, TableKind, TableRow,
};
use crate::smoothing::{smooth_surface, SmoothParams};
use crate::uncertainty::{
    bias_corrected_interval, bootstrap_variants, percentile_interval,
};

/// Top-level argument parser.
#[derive(Debug, Parser)]
#[command(name = "huts", version, about = "Signature-based mortality forecasting")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Which model family a command operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    /// Signature-basis component model.
    Huts,
    /// Principal-component basis component model.
    Hu,
    /// Lee-Carter.
    Lc,
}

impl ModelChoice {
    fn tag(self) -> ModelTag {
        match self {
            ModelChoice::Huts => ModelTag::Huts,
            ModelChoice::Hu => ModelTag::HuFpca,
            ModelChoice::Lc => ModelTag::Lc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

/// Raw input files shared by data-consuming commands.
#[derive(Debug, Clone, Args)]
struct InputArgs {
    /// Country extraction settings (`key = value` text file).
    #[arg(long = "country-config")]
    country_config: PathBuf,
    /// HMD Mx 1x1 table.
    #[arg(long)]
    mx: Option<PathBuf>,
    /// HMD Deaths 1x1 table.
    #[arg(long)]
    deaths: Option<PathBuf>,
    /// HMD Exposures 1x1 table.
    #[arg(long)]
    exposures: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct OutArgs {
    /// Directory receiving all artifacts and the run manifest.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse HMD tables into a pooled log-rate surface table.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit a model and save it to a model file.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "huts")]
        model: ModelChoice,
        /// Signature truncation order.
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Number of basis components.
        #[arg(long = "K", default_value_t = 6)]
        k: usize,
        /// Model file path; defaults to `model.json` in the output directory.
        #[arg(long = "model-out")]
        model_out: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Point and variance forecasts from a saved model.
    Forecast {
        #[arg(long = "model-in")]
        model_in: PathBuf,
        #[arg(long, default_value_t = 10)]
        horizons: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Bootstrap prediction intervals from a saved model.
    Interval {
        #[arg(long = "model-in")]
        model_in: PathBuf,
        #[arg(long, default_value_t = 10)]
        horizons: usize,
        /// Miscoverage level; intervals are nominally `1 - alpha`.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Number of bootstrap variants per horizon.
        #[arg(long = "L", default_value_t = 1000)]
        l: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long = "bias-correct", value_enum, default_value = "on")]
        bias_correct: OnOff,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Expanding-window backtest with horizon and per-age metrics.
    Backtest {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "huts")]
        model: ModelChoice,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long = "K", default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        horizons: usize,
        /// First scored calendar year; defaults to the last two decades.
        #[arg(long = "first-forecast-year")]
        first_forecast_year: Option<i32>,
        /// Last training-window endpoint; defaults to the penultimate year.
        #[arg(long = "last-origin-year")]
        last_origin_year: Option<i32>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare signature truncation orders by backtest error.
    Truncsearch {
        #[command(flatten)]
        input: InputArgs,
        /// Candidate truncation orders.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        orders: Vec<usize>,
        #[arg(long = "K", default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        horizons: usize,
        #[arg(long = "first-forecast-year")]
        first_forecast_year: Option<i32>,
        #[arg(long = "last-origin-year")]
        last_origin_year: Option<i32>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Residual histograms and normality tests for a fitted model.
    Diagnose {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "huts")]
        model: ModelChoice,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long = "K", default_value_t = 6)]
        k: usize,
        /// Ages to diagnose; defaults to every tenth age on the grid.
        #[arg(long, value_delimiter = ',')]
        ages: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").expect("writing to a String cannot fail");
    }
    hex
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: String,
    parameters: BTreeMap<String, String>,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
}

/// Collects artifacts in an output directory and finishes with a manifest
/// that digests every file written. Contains no timestamps, so reruns with
/// identical inputs are byte-identical.
struct RunWriter {
    out_dir: PathBuf,
    artifacts: Vec<FileDigest>,
}

impl RunWriter {
    fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(Self { out_dir: out_dir.to_path_buf(), artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.out_dir.join(name), contents)?;
        self.artifacts.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    /// Record a file written elsewhere (a saved model, for example).
    fn record_external(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.artifacts.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn finish(
        mut self,
        command: &str,
        parameters: BTreeMap<String, String>,
        inputs: Vec<FileDigest>,
    ) -> Result<()> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters,
            inputs,
            artifacts: std::mem::take(&mut self.artifacts),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
        text.push('\n');
        fs::write(self.out_dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn digest_input(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn read_table(path: &Path, kind: TableKind, cfg: &CountryConfig) -> Result<RawMortalityTable> {
    let file = fs::File::open(path)?;
    parse_hmd_table_sex(BufReader::new(file), kind, cfg.sex)
}

/// Build rates from deaths over exposures when no Mx table is given.
fn rates_from_counts(
    deaths: &RawMortalityTable,
    exposures: &RawMortalityTable,
) -> Result<RawMortalityTable> {
    let mut by_cell: BTreeMap<(i32, u32), (Option<f64>, bool)> = BTreeMap::new();
    for r in &exposures.rows {
        by_cell.insert((r.year, r.age), (r.value, r.open_age));
    }
    let mut rows = Vec::with_capacity(deaths.rows.len());
    for d in &deaths.rows {
        let (exposure, open_age) = by_cell
            .get(&(d.year, d.age))
            .copied()
            .ok_or_else(|| {
                Error::Alignment(format!(
                    "deaths cell (year {}, age {}) has no exposure row",
                    d.year, d.age
                ))
            })?;
        let value = match (d.value, exposure) {
            (Some(dv), Some(ev)) if ev > 0.0 => Some(dv / ev),
            _ => None,
        };
        rows.push(TableRow { year: d.year, age: d.age, open_age, value });
    }
    Ok(RawMortalityTable { kind: TableKind::DeathRates, rows })
}

/// Parse the configured inputs into a log-rate surface, returning the
/// config and the digests of every file read.
fn load_surface(
    input: &InputArgs,
) -> Result<(CountryConfig, LogMortalitySurface, Vec<FileDigest>)> {
    let cfg = CountryConfig::from_file(&input.country_config)?;
    let mut digests = vec![digest_input(&input.country_config)?];

    let deaths = match &input.deaths {
        Some(p) => {
            digests.push(digest_input(p)?);
            Some(read_table(p, TableKind::Deaths, &cfg)?)
        }
        None => None,
    };
    let exposures = match &input.exposures {
        Some(p) => {
            digests.push(digest_input(p)?);
            Some(read_table(p, TableKind::Exposures, &cfg)?)
        }
        None => None,
    };
    let rates = match &input.mx {
        Some(p) => {
            digests.push(digest_input(p)?);
            read_table(p, TableKind::DeathRates, &cfg)?
        }
        None => match (&deaths, &exposures) {
            (Some(d), Some(e)) => rates_from_counts(d, e)?,
            _ => {
                return Err(Error::Config(
                    "provide --mx, or both --deaths and --exposures".into(),
                ))
            }
        },
    };

    let surface = build_surface(&rates, deaths.as_ref(), exposures.as_ref(), &cfg)?;
    let log = to_log_surface(&surface)?;
    Ok((cfg, log, digests))
}

/// Shortest-round-trip decimal form, stable across runs.
fn num(x: f64) -> String {
    format!("{x}")
}

fn fit_document(
    surface: &LogMortalitySurface,
    model: ModelChoice,
    m: usize,
    k: usize,
) -> Result<ModelDocument> {
    match model {
        ModelChoice::Lc => Ok(ModelDocument::lee_carter(fit_lc(surface)?)),
        ModelChoice::Huts | ModelChoice::Hu => {
            let smooth = smooth_surface(surface, &SmoothParams::default())?;
            let fitted = match model {
                ModelChoice::Huts => fit_huts(&smooth, m, k)?,
                _ => fit_fpca(&smooth, k)?,
            };
            Ok(ModelDocument::component(fitted))
        }
    }
}

fn backtest_tables(
    surface: &LogMortalitySurface,
    spec: &BacktestSpec,
    writer: &mut RunWriter,
) -> Result<(usize, usize)> {
    let report = expanding_backtest(surface, spec)?;

    let mut records = String::from("origin_year\thorizon\tage\tactual\tpredicted\n");
    for r in &report.records {
        let _ = writeln!(
            records,
            "{}\t{}\t{}\t{}\t{}",
            r.origin_year,
            r.horizon,
            r.age,
            num(r.actual),
            num(r.predicted)
        );
    }
    writer.write("backtest_records.tsv", &records)?;

    let mut horizon_table = String::from("horizon\tmse\tmae\n");
    let mut age_table = String::from("horizon\tage\tmse\tmae\tme\n");
    for h in 1..=spec.horizons {
        if let Ok((mse, mae)) = mse_mae_by_horizon(&report, h) {
            let _ = writeln!(horizon_table, "{h}\t{}\t{}", num(mse), num(mae));
            for a in metrics_by_age(&report, h)? {
                let _ = writeln!(
                    age_table,
                    "{h}\t{}\t{}\t{}\t{}",
                    a.age,
                    num(a.mse),
                    num(a.mae),
                    num(a.me)
                );
            }
        }
    }
    writer.write("metrics_by_horizon.tsv", &horizon_table)?;
    writer.write("metrics_by_age.tsv", &age_table)?;

    let mut skipped = String::from("origin_year\treason\n");
    for s in &report.skipped {
        let _ = writeln!(skipped, "{}\t{}", s.origin_year, s.reason);
    }
    writer.write("skipped_origins.tsv", &skipped)?;

    Ok((report.records.len(), report.skipped.len()))
}

fn window_defaults(
    surface: &LogMortalitySurface,
    first: Option<i32>,
    last: Option<i32>,
) -> Result<(i32, i32)> {
    let end_year = *surface
        .years
        .last()
        .ok_or_else(|| Error::InsufficientData("surface has no years".into()))?;
    Ok((first.unwrap_or(end_year - 19), last.unwrap_or(end_year - 1)))
}

fn run_ingest(input: &InputArgs, out: &OutArgs) -> Result<()> {
    let (cfg, log, digests) = load_surface(input)?;
    let mut writer = RunWriter::new(&out.out_dir)?;

    let mut table = String::from("age\tyear\tlog_rate\tsigma_obs\n");
    for (ai, &age) in log.ages.iter().enumerate() {
        for (yi, &year) in log.years.iter().enumerate() {
            let sigma = log
                .sigma_obs
                .as_ref()
                .map(|s| num(s[log.idx(ai, yi)]))
                .unwrap_or_default();
            let _ = writeln!(table, "{age}\t{year}\t{}\t{sigma}", num(log.value(ai, yi)));
        }
    }
    writer.write("surface.tsv", &table)?;

    let mut params = BTreeMap::new();
    params.insert("code".into(), cfg.code.clone());
    params.insert("sex".into(), cfg.sex.to_string());
    params.insert("commencing_year".into(), cfg.commencing_year.to_string());
    params.insert("end_year".into(), cfg.end_year.to_string());
    params.insert("max_age".into(), cfg.max_age.to_string());
    params.insert(
        "imputation_constant".into(),
        num(log.imputation_constant),
    );
    writer.finish("ingest", params, digests)
}

fn run_fit(
    input: &InputArgs,
    model: ModelChoice,
    m: usize,
    k: usize,
    model_out: &Option<PathBuf>,
    out: &OutArgs,
) -> Result<()> {
    let (cfg, log, digests) = load_surface(input)?;
    let mut writer = RunWriter::new(&out.out_dir)?;
    let doc = fit_document(&log, model, m, k)?;
    let path = model_out
        .clone()
        .unwrap_or_else(|| out.out_dir.join("model.json"));
    doc.save(&path)?;
    writer.record_external(&path)?;

    let mut params = BTreeMap::new();
    params.insert("code".into(), cfg.code);
    params.insert("model".into(), format!("{model:?}").to_lowercase());
    params.insert("m".into(), m.to_string());
    params.insert("K".into(), k.to_string());
    writer.finish("fit", params, digests)
}

fn run_forecast(model_in: &Path, horizons: usize, out: &OutArgs) -> Result<()> {
    let doc = ModelDocument::load(model_in)?;
    let mut writer = RunWriter::new(&out.out_dir)?;

    let mut table = String::from("age\thorizon\tpoint\tvariance\tmodel\n");
    match &doc.model {
        ModelKind::Component(model) => {
            let bundle = point_forecast(model, horizons)?;
            for h in 1..=horizons {
                for (i, &age) in model.grid.iter().enumerate() {
                    let _ = writeln!(
                        table,
                        "{}\t{h}\t{}\t{}\t{}",
                        num(age),
                        num(bundle.point_curves[h - 1][i]),
                        num(bundle.variance_curves[h - 1][i]),
                        bundle.model_tag
                    );
                }
            }
        }
        ModelKind::LeeCarter(model) => {
            let fc = forecast_lc(model, horizons)?;
            for h in 1..=horizons {
                for (i, &age) in model.ages.iter().enumerate() {
                    let var = model.b[i] * model.b[i] * fc.k_variance[h - 1]
                        + model.resid_var[i];
                    let _ = writeln!(
                        table,
                        "{}\t{h}\t{}\t{}\tlc",
                        num(age),
                        num(fc.point_curves[h - 1][i]),
                        num(var)
                    );
                }
            }
        }
    }
    writer.write("forecast.tsv", &table)?;

    let mut params = BTreeMap::new();
    params.insert("horizons".into(), horizons.to_string());
    writer.finish("forecast", params, vec![digest_input(model_in)?])
}

#[allow(clippy::too_many_arguments)]
fn run_interval(
    model_in: &Path,
    horizons: usize,
    alpha: f64,
    l: usize,
    seed: u64,
    bias_correct: OnOff,
    out: &OutArgs,
) -> Result<()> {
    let doc = ModelDocument::load(model_in)?;
    let mut writer = RunWriter::new(&out.out_dir)?;
    let nominal = 1.0 - alpha;

    let mut table =
        String::from("age\thorizon\tlower\tupper\tnominal\tmethod\tseed\tL\n");
    match &doc.model {
        ModelKind::Component(model) => {
            let bundle = point_forecast(model, horizons)?;
            for h in 1..=horizons {
                let variants = bootstrap_variants(model, &bundle, h, l, seed)?;
                let interval = match bias_correct {
                    OnOff::On => bias_corrected_interval(
                        &variants,
                        &bundle.point_curves[h - 1],
                        alpha,
                    )?,
                    OnOff::Off => percentile_interval(&variants, alpha)?,
                };
                for (i, &age) in interval.grid.iter().enumerate() {
                    let _ = writeln!(
                        table,
                        "{}\t{h}\t{}\t{}\t{}\t{}\t{seed}\t{l}",
                        num(age),
                        num(interval.lower[i]),
                        num(interval.upper[i]),
                        num(nominal),
                        interval.method.tag()
                    );
                }
            }
        }
        ModelKind::LeeCarter(model) => {
            let fc = forecast_lc(model, horizons)?;
            let std_normal = Normal::new(0.0, 1.0)
                .map_err(|e| Error::Config(e.to_string()))?;
            let z = std_normal.inverse_cdf(1.0 - alpha / 2.0);
            for h in 1..=horizons {
                for (i, &age) in model.ages.iter().enumerate() {
                    let var = model.b[i] * model.b[i] * fc.k_variance[h - 1]
                        + model.resid_var[i];
                    let half = z * var.sqrt();
                    let point = fc.point_curves[h - 1][i];
                    let _ = writeln!(
                        table,
                        "{}\t{h}\t{}\t{}\t{}\tnormal\t{seed}\t{l}",
                        num(age),
                        num(point - half),
                        num(point + half),
                        num(nominal)
                    );
                }
            }
        }
    }
    writer.write("intervals.tsv", &table)?;

    let mut params = BTreeMap::new();
    params.insert("horizons".into(), horizons.to_string());
    params.insert("alpha".into(), num(alpha));
    params.insert("L".into(), l.to_string());
    params.insert("seed".into(), seed.to_string());
    params.insert(
        "bias_correct".into(),
        match bias_correct {
            OnOff::On => "on".into(),
            OnOff::Off => "off".into(),
        },
    );
    writer.finish("interval", params, vec![digest_input(model_in)?])
}

#[allow(clippy::too_many_arguments)]
fn run_backtest(
    input: &InputArgs,
    model: ModelChoice,
    m: usize,
    k: usize,
    horizons: usize,
    first: Option<i32>,
    last: Option<i32>,
    seed: u64,
    out: &OutArgs,
) -> Result<()> {
    let (cfg, log, digests) = load_surface(input)?;
    let (first_forecast_year, last_origin_year) = window_defaults(&log, first, last)?;
    let mut writer = RunWriter::new(&out.out_dir)?;
    let spec = BacktestSpec {
        model: model.tag(),
        m,
        k,
        horizons,
        first_forecast_year,
        last_origin_year,
        seed,
    };
    let (n_records, n_skipped) = backtest_tables(&log, &spec, &mut writer)?;

    let mut params = BTreeMap::new();
    params.insert("code".into(), cfg.code);
    params.insert("model".into(), spec.model.tag().to_string());
    params.insert("m".into(), m.to_string());
    params.insert("K".into(), k.to_string());
    params.insert("horizons".into(), horizons.to_string());
    params.insert("first_forecast_year".into(), first_forecast_year.to_string());
    params.insert("last_origin_year".into(), last_origin_year.to_string());
    params.insert("seed".into(), seed.to_string());
    params.insert("records".into(), n_records.to_string());
    params.insert("skipped_origins".into(), n_skipped.to_string());
    writer.finish("backtest", params, digests)
}

#[allow(clippy::too_many_arguments)]
fn run_truncsearch(
    input: &InputArgs,
    orders: &[usize],
    k: usize,
    horizons: usize,
    first: Option<i32>,
    last: Option<i32>,
    seed: u64,
    out: &OutArgs,
) -> Result<()> {
    let (cfg, log, digests) = load_surface(input)?;
    let (first_forecast_year, last_origin_year) = window_defaults(&log, first, last)?;
    let mut writer = RunWriter::new(&out.out_dir)?;
    let spec = BacktestSpec {
        model: ModelTag::Huts,
        m: 2,
        k,
        horizons,
        first_forecast_year,
        last_origin_year,
        seed,
    };
    let search = truncation_search(&log, orders, &spec)?;

    let mut table = String::from("m\thorizon\tmse\tmae\n");
    for row in &search.rows {
        for h in 1..=horizons {
            let _ = writeln!(
                table,
                "{}\t{h}\t{}\t{}",
                row.m,
                num(row.mse_by_horizon[h - 1]),
                num(row.mae_by_horizon[h - 1])
            );
        }
    }
    writer.write("truncsearch.tsv", &table)?;

    let mut summary = String::from("m\tmean_mse\trecommended\n");
    for row in &search.rows {
        let flag = if row.m == search.recommended_m { 1 } else { 0 };
        let _ = writeln!(summary, "{}\t{}\t{flag}", row.m, num(row.mean_mse));
    }
    writer.write("truncsearch_summary.tsv", &summary)?;

    let mut params = BTreeMap::new();
    params.insert("code".into(), cfg.code);
    params.insert(
        "orders".into(),
        orders.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","),
    );
    params.insert("K".into(), k.to_string());
    params.insert("horizons".into(), horizons.to_string());
    params.insert("first_forecast_year".into(), first_forecast_year.to_string());
    params.insert("last_origin_year".into(), last_origin_year.to_string());
    params.insert("seed".into(), seed.to_string());
    params.insert("recommended_m".into(), search.recommended_m.to_string());
    writer.finish("truncsearch", params, digests)
}

fn run_diagnose(
    input: &InputArgs,
    model: ModelChoice,
    m: usize,
    k: usize,
    ages: &Option<Vec<f64>>,
    out: &OutArgs,
) -> Result<()> {
    if model == ModelChoice::Lc {
        return Err(Error::Config(
            "diagnose needs a component model (huts or hu)".into(),
        ));
    }
    let (cfg, log, digests) = load_surface(input)?;
    let mut writer = RunWriter::new(&out.out_dir)?;
    let doc = fit_document(&log, model, m, k)?;
    let fitted = match &doc.model {
        ModelKind::Component(c) => c,
        ModelKind::LeeCarter(_) => unreachable!("lc was rejected above"),
    };
    let selection: Vec<f64> = match ages {
        Some(a) => a.clone(),
        None => fitted
            .grid
            .iter()
            .copied()
            .filter(|a| (*a as i64) % 10 == 0 && a.fract() == 0.0)
            .collect(),
    };
    let diagnostics = residual_diagnostics(fitted, &selection)?;

    let mut stats = String::from(
        "age\tn\tskewness\texcess_kurtosis\tjarque_bera\tp_value\n",
    );
    let mut histo = String::from("age\tbin\tlower\tupper\tcount\n");
    for d in &diagnostics {
        let _ = writeln!(
            stats,
            "{}\t{}\t{}\t{}\t{}\t{}",
            num(d.age),
            d.n,
            num(d.skewness),
            num(d.excess_kurtosis),
            num(d.jarque_bera),
            num(d.p_value)
        );
        for (b, &count) in d.counts.iter().enumerate() {
            let _ = writeln!(
                histo,
                "{}\t{b}\t{}\t{}\t{count}",
                num(d.age),
                num(d.bin_edges[b]),
                num(d.bin_edges[b + 1])
            );
        }
    }
    writer.write("diagnostics.tsv", &stats)?;
    writer.write("histograms.tsv", &histo)?;

    let mut params = BTreeMap::new();
    params.insert("code".into(), cfg.code);
    params.insert("model".into(), format!("{model:?}").to_lowercase());
    params.insert("m".into(), m.to_string());
    params.insert("K".into(), k.to_string());
    params.insert(
        "ages".into(),
        selection.iter().map(|a| num(*a)).collect::<Vec<_>>().join(","),
    );
    writer.finish("diagnose", params, digests)
}

/// Run one parsed command.
pub fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { input, out } => run_ingest(input, out),
        Command::Fit { input, model, m, k, model_out, out } => {
            run_fit(input, *model, *m, *k, model_out, out)
        }
        Command::Forecast { model_in, horizons, out } => {
            run_forecast(model_in, *horizons, out)
        }
        Command::Interval { model_in, horizons, alpha, l, seed, bias_correct, out } => {
            run_interval(model_in, *horizons, *alpha, *l, *seed, *bias_correct, out)
        }
        Command::Backtest {
            input,
            model,
            m,
            k,
            horizons,
            first_forecast_year,
            last_origin_year,
            seed,
            out,
        } => run_backtest(
            input,
            *model,
            *m,
            *k,
            *horizons,
            *first_forecast_year,
            *last_origin_year,
            *seed,
            out,
        ),
        Command::Truncsearch {
            input,
            orders,
            k,
            horizons,
            first_forecast_year,
            last_origin_year,
            seed,
            out,
        } => run_truncsearch(
            input,
            orders,
            *k,
            *horizons,
            *first_forecast_year,
            *last_origin_year,
            *seed,
            out,
        ),
        Command::Diagnose { input, model, m, k, ages, out } => {
            run_diagnose(input, *model, *m, *k, ages, out)
        }
    }
}

/// Parse and run the given arguments; for tests and the binary alike.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)
        .map_err(|e| Error::Config(e.to_string()))?;
    execute(cli)
}

/// Binary entry point: parses the process arguments, runs the command, and
/// reports failures as a single `category: detail` line on stderr.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}: {e}", e.category());
            1
        }
    }
}

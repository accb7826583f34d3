//! Expanding-window backtests, horizon- and age-resolved error metrics,
//! truncation-order search, and residual normality diagnostics.

use std::collections::BTreeMap;

use crate::decomposition::{fit_fpca, fit_huts, fit_lc, ComponentModel};
use crate::error::{Error, Result};
use crate::forecast::{forecast_lc, point_forecast};
use crate::hmd::LogMortalitySurface;
use crate::smoothing::{smooth_surface, SmoothParams, SmoothSurface};

/// Which model a backtest evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    /// Signature-basis component model.
    Huts,
    /// Principal-component basis component model.
    HuFpca,
    /// Lee-Carter.
    Lc,
}

impl ModelTag {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelTag::Huts => "huts",
            ModelTag::HuFpca => "hu",
            ModelTag::Lc => "lc",
        }
    }
}

/// Backtest protocol: model, window bounds, and horizons.
#[derive(Debug, Clone)]
pub struct BacktestSpec {
    pub model: ModelTag,
    /// Signature truncation order (used by `Huts` only).
    pub m: usize,
    /// Number of basis components (component models only).
    pub k: usize,
    /// Maximum forecast horizon.
    pub horizons: usize,
    /// First calendar year a forecast is scored against.
    pub first_forecast_year: i32,
    /// Last calendar year used as a training-window endpoint.
    pub last_origin_year: i32,
    /// Recorded for reproducibility of downstream resampling runs; point
    /// backtests themselves are deterministic.
    pub seed: u64,
}

/// One scored forecast cell.
#[derive(Debug, Clone)]
pub struct BacktestRecord {
    pub origin_year: i32,
    pub horizon: usize,
    pub age: u32,
    pub actual: f64,
    pub predicted: f64,
}

/// An origin whose fit or forecast failed, kept out of the averages.
#[derive(Debug, Clone)]
pub struct SkippedOrigin {
    pub origin_year: i32,
    pub reason: String,
}

/// Output of an expanding-window backtest.
#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub model_tag: &'static str,
    pub horizons: usize,
    pub records: Vec<BacktestRecord>,
    pub skipped: Vec<SkippedOrigin>,
}

fn smooth_prefix(s: &SmoothSurface, n_keep: usize) -> SmoothSurface {
    let q = s.n_grid();
    SmoothSurface {
        years: s.years[..n_keep].to_vec(),
        grid: s.grid.clone(),
        curves: s.curves[..n_keep].to_vec(),
        std_residuals: s.std_residuals[..n_keep * q].to_vec(),
        sigma_from_residuals: s.sigma_from_residuals,
    }
}

fn fit_and_forecast(
    surface: &LogMortalitySurface,
    smooth: Option<&SmoothSurface>,
    spec: &BacktestSpec,
    origin_year: i32,
    h_max: usize,
) -> Result<Vec<Vec<f64>>> {
    match spec.model {
        ModelTag::Lc => {
            let window = surface.up_to_year(origin_year)?;
            let model = fit_lc(&window)?;
            Ok(forecast_lc(&model, h_max)?.point_curves)
        }
        ModelTag::Huts | ModelTag::HuFpca => {
            let smooth = smooth.expect("component backtests carry a smoothed surface");
            let n_keep = smooth.years.iter().filter(|&&t| t <= origin_year).count();
            let window = smooth_prefix(smooth, n_keep);
            let model: ComponentModel = match spec.model {
                ModelTag::Huts => fit_huts(&window, spec.m, spec.k)?,
                _ => fit_fpca(&window, spec.k)?,
            };
            Ok(point_forecast(&model, h_max)?.point_curves)
        }
    }
}

/// Backtest with an expanding training window.
///
/// For each origin year `T` from `first_forecast_year - 1` through
/// `last_origin_year`, fits the model on all years up to `T` and scores
/// forecasts at horizons `1..=min(horizons, end_year - T)` against the
/// observed log rates. Origins whose fit fails are flagged in `skipped`
/// and contribute no records.
pub fn expanding_backtest(
    surface: &LogMortalitySurface,
    spec: &BacktestSpec,
) -> Result<BacktestReport> {
    if spec.horizons == 0 {
        return Err(Error::Config("horizons must be at least 1".into()));
    }
    if spec.first_forecast_year > spec.last_origin_year + 1 {
        return Err(Error::Config(format!(
            "first forecast year {} exceeds last origin year {} + 1",
            spec.first_forecast_year, spec.last_origin_year
        )));
    }
    let end_year = *surface.years.last().ok_or_else(|| {
        Error::InsufficientData("surface has no years".into())
    })?;
    if spec.last_origin_year >= end_year {
        return Err(Error::Config(format!(
            "last origin year {} leaves no holdout before {}",
            spec.last_origin_year, end_year
        )));
    }
    if spec.first_forecast_year <= surface.years[0] {
        return Err(Error::Config(format!(
            "first forecast year {} leaves no training data",
            spec.first_forecast_year
        )));
    }

    let smooth = match spec.model {
        ModelTag::Lc => None,
        _ => Some(smooth_surface(surface, &SmoothParams::default())?),
    };

    let year_index: BTreeMap<i32, usize> = surface
        .years
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i))
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for origin_year in (spec.first_forecast_year - 1)..=spec.last_origin_year {
        let h_max = spec.horizons.min((end_year - origin_year) as usize);
        let curves =
            match fit_and_forecast(surface, smooth.as_ref(), spec, origin_year, h_max) {
                Ok(c) => c,
                Err(e) => {
                    skipped.push(SkippedOrigin {
                        origin_year,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
        for h in 1..=h_max {
            let target = origin_year + h as i32;
            let yi = *year_index.get(&target).ok_or_else(|| {
                Error::Alignment(format!("target year {target} missing from surface"))
            })?;
            for (ai, &age) in surface.ages.iter().enumerate() {
                records.push(BacktestRecord {
                    origin_year,
                    horizon: h,
                    age,
                    actual: surface.value(ai, yi),
                    predicted: curves[h - 1][ai],
                });
            }
        }
    }

    Ok(BacktestReport {
        model_tag: spec.model.tag(),
        horizons: spec.horizons,
        records,
        skipped,
    })
}

/// Mean squared and mean absolute error over all records at horizon `h`.
pub fn mse_mae_by_horizon(report: &BacktestReport, h: usize) -> Result<(f64, f64)> {
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut n = 0usize;
    for r in report.records.iter().filter(|r| r.horizon == h) {
        let e = r.actual - r.predicted;
        sse += e * e;
        sae += e.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData(format!(
            "no backtest records at horizon {h}"
        )));
    }
    Ok((sse / n as f64, sae / n as f64))
}

/// Per-age error metrics at one horizon, averaged over origins.
#[derive(Debug, Clone)]
pub struct AgeMetrics {
    pub age: u32,
    pub mse: f64,
    pub mae: f64,
    /// Mean error (actual minus predicted), signed.
    pub me: f64,
}

/// Per-age MSE, MAE, and mean error at horizon `h`.
pub fn metrics_by_age(report: &BacktestReport, h: usize) -> Result<Vec<AgeMetrics>> {
    let mut by_age: BTreeMap<u32, (f64, f64, f64, usize)> = BTreeMap::new();
    for r in report.records.iter().filter(|r| r.horizon == h) {
        let e = r.actual - r.predicted;
        let slot = by_age.entry(r.age).or_insert((0.0, 0.0, 0.0, 0));
        slot.0 += e * e;
        slot.1 += e.abs();
        slot.2 += e;
        slot.3 += 1;
    }
    if by_age.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no backtest records at horizon {h}"
        )));
    }
    Ok(by_age
        .into_iter()
        .map(|(age, (sse, sae, se, n))| AgeMetrics {
            age,
            mse: sse / n as f64,
            mae: sae / n as f64,
            me: se / n as f64,
        })
        .collect())
}

/// One row of a truncation-order comparison.
#[derive(Debug, Clone)]
pub struct TruncationRow {
    pub m: usize,
    /// MSE at horizons `1..=horizons`.
    pub mse_by_horizon: Vec<f64>,
    /// MAE at horizons `1..=horizons`.
    pub mae_by_horizon: Vec<f64>,
    pub mean_mse: f64,
}

/// Result of a truncation-order search.
#[derive(Debug, Clone)]
pub struct TruncationSearch {
    pub rows: Vec<TruncationRow>,
    /// Order with the smallest mean MSE; ties go to the smaller order.
    pub recommended_m: usize,
}

/// Run the same backtest once per candidate truncation order and rank the
/// orders by mean MSE across horizons.
pub fn truncation_search(
    surface: &LogMortalitySurface,
    candidates: &[usize],
    spec: &BacktestSpec,
) -> Result<TruncationSearch> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate truncation orders".into()));
    }
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut rows = Vec::with_capacity(sorted.len());
    for &m in &sorted {
        let run = BacktestSpec {
            model: ModelTag::Huts,
            m,
            ..spec.clone()
        };
        let report = expanding_backtest(surface, &run)?;
        let mut mse_by_horizon = Vec::with_capacity(spec.horizons);
        let mut mae_by_horizon = Vec::with_capacity(spec.horizons);
        for h in 1..=spec.horizons {
            let (mse, mae) = mse_mae_by_horizon(&report, h)?;
            mse_by_horizon.push(mse);
            mae_by_horizon.push(mae);
        }
        let mean_mse =
            mse_by_horizon.iter().sum::<f64>() / mse_by_horizon.len() as f64;
        rows.push(TruncationRow { m, mse_by_horizon, mae_by_horizon, mean_mse });
    }

    let mut best = &rows[0];
    for row in &rows[1..] {
        // A strictly lower mean MSE beyond rounding noise is required to
        // displace a smaller order.
        if row.mean_mse < best.mean_mse - 1e-12 * (1.0 + best.mean_mse.abs()) {
            best = row;
        }
    }
    let recommended_m = best.m;
    Ok(TruncationSearch { rows, recommended_m })
}

/// Normality summary for one residual series.
#[derive(Debug, Clone)]
pub struct NormalityDiagnostics {
    pub age: f64,
    pub n: usize,
    /// 21 bin edges spanning the sample range.
    pub bin_edges: Vec<f64>,
    /// 20 bin counts.
    pub counts: Vec<usize>,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub jarque_bera: f64,
    /// Asymptotic p-value of the Jarque-Bera statistic.
    pub p_value: f64,
}

const HIST_BINS: usize = 20;

/// Histogram, moment statistics, and the Jarque-Bera test for one series.
pub fn diagnose_series(residuals: &[f64], age: f64) -> Result<NormalityDiagnostics> {
    let n = residuals.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "normality diagnostics need at least 8 residuals, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = residuals.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &r in residuals {
        let d = r - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= 0.0 || !m2.is_finite() {
        return Err(Error::Data(
            "residuals have zero or undefined variance".into(),
        ));
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let jarque_bera =
        nf / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    // Chi-squared with 2 degrees of freedom: the survival function is
    // exp(-x/2) in closed form.
    let p_value = (-jarque_bera / 2.0).exp();

    let lo = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / HIST_BINS as f64;
    let bin_edges: Vec<f64> =
        (0..=HIST_BINS).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; HIST_BINS];
    for &r in residuals {
        let b = (((r - lo) / width) as usize).min(HIST_BINS - 1);
        counts[b] += 1;
    }

    Ok(NormalityDiagnostics {
        age,
        n,
        bin_edges,
        counts,
        skewness,
        excess_kurtosis,
        jarque_bera,
        p_value,
    })
}

/// Residual normality diagnostics for a fitted component model at the
/// requested grid ages.
pub fn residual_diagnostics(
    model: &ComponentModel,
    ages: &[f64],
) -> Result<Vec<NormalityDiagnostics>> {
    let mut out = Vec::with_capacity(ages.len());
    for &age in ages {
        let i = model
            .grid
            .iter()
            .position(|&g| (g - age).abs() < 1e-9)
            .ok_or_else(|| {
                Error::Domain(format!("age {age} is not on the model grid"))
            })?;
        let series: Vec<f64> =
            model.residuals.iter().map(|row| row[i]).collect();
        out.push(diagnose_series(&series, age)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StudentT};

    /// Mortality-shaped synthetic log surface: downward trend plus a mild
    /// age profile and optional noise.
    fn synthetic_surface(
        ages: std::ops::RangeInclusive<u32>,
        years: std::ops::RangeInclusive<i32>,
        noise_sd: f64,
        seed: u64,
    ) -> LogMortalitySurface {
        let ages: Vec<u32> = ages.collect();
        let years: Vec<i32> = years.collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let p = ages.len();
        let n = years.len();
        let mut y = vec![0.0; p * n];
        for (ai, &a) in ages.iter().enumerate() {
            let profile = -5.0 + 0.04 * a as f64 + 0.3 * (a as f64 / 9.0).sin();
            let response = 0.5 + 0.02 * a as f64;
            for (ti, &t) in years.iter().enumerate() {
                let k = -0.03 * (t - years[0]) as f64;
                let noise = if noise_sd > 0.0 {
                    noise_sd * normal.sample(&mut rng)
                } else {
                    0.0
                };
                y[ai * n + ti] = profile + response * k + noise;
            }
        }
        LogMortalitySurface {
            code: "SYN".into(),
            ages,
            years,
            y,
            imputation_constant: 0.0,
            sigma_obs: None,
        }
    }

    fn lc_spec(first: i32, last: i32, horizons: usize) -> BacktestSpec {
        BacktestSpec {
            model: ModelTag::Lc,
            m: 2,
            k: 1,
            horizons,
            first_forecast_year: first,
            last_origin_year: last,
            seed: 42,
        }
    }

    #[test]
    fn protocol_triangle_matches_the_reference_layout() {
        let surface = synthetic_surface(0..=29, 1976..=2015, 0.02, 1);
        let report =
            expanding_backtest(&surface, &lc_spec(1996, 2014, 10)).unwrap();
        assert!(report.skipped.is_empty());

        let origins: std::collections::BTreeSet<i32> =
            report.records.iter().map(|r| r.origin_year).collect();
        assert_eq!(origins.iter().copied().collect::<Vec<_>>(),
                   (1995..=2014).collect::<Vec<_>>());
        for r in &report.records {
            assert!(r.origin_year + r.horizon as i32 <= 2015);
        }
        let last_origin_horizons: Vec<usize> = report
            .records
            .iter()
            .filter(|r| r.origin_year == 2014)
            .map(|r| r.horizon)
            .collect();
        assert!(last_origin_horizons.iter().all(|&h| h == 1));
        // Full triangle: origin T contributes min(10, 2015 - T) horizons,
        // each with one record per age.
        let expected: usize = (1995..=2014)
            .map(|t| 10usize.min((2015 - t) as usize) * 30)
            .sum();
        assert_eq!(report.records.len(), expected);
    }

    #[test]
    fn single_horizon_gives_one_record_per_origin_and_age() {
        let surface = synthetic_surface(0..=29, 1980..=2010, 0.02, 2);
        let report =
            expanding_backtest(&surface, &lc_spec(2001, 2009, 1)).unwrap();
        assert_eq!(report.records.len(), 10 * 30);
        for r in &report.records {
            assert_eq!(r.horizon, 1);
        }
    }

    #[test]
    fn known_generator_one_step_mse_is_bounded_by_the_noise() {
        // The generator is exactly a bilinear model with a linear period
        // index, so Lee-Carter one-step errors should be dominated by the
        // injected observation noise.
        let noise_sd = 0.05;
        let surface = synthetic_surface(0..=29, 1950..=2015, noise_sd, 3);
        let report =
            expanding_backtest(&surface, &lc_spec(2006, 2014, 1)).unwrap();
        let (mse, _) = mse_mae_by_horizon(&report, 1).unwrap();
        assert!(
            mse < noise_sd * noise_sd * 1.1,
            "one-step MSE {mse} exceeds 1.1x the noise variance"
        );
    }

    fn record(h: usize, age: u32, actual: f64, predicted: f64) -> BacktestRecord {
        BacktestRecord { origin_year: 2000, horizon: h, age, actual, predicted }
    }

    fn report_of(records: Vec<BacktestRecord>) -> BacktestReport {
        BacktestReport { model_tag: "lc", horizons: 10, records, skipped: vec![] }
    }

    #[test]
    fn metric_arithmetic_hand_cases() {
        let exact = report_of(vec![record(1, 0, -3.0, -3.0), record(1, 1, -2.0, -2.0)]);
        assert_eq!(mse_mae_by_horizon(&exact, 1).unwrap(), (0.0, 0.0));

        let one = report_of(vec![record(1, 0, -2.7, -3.0)]);
        let (mse, mae) = mse_mae_by_horizon(&one, 1).unwrap();
        assert!((mse - 0.09).abs() < 1e-15);
        assert!((mae - 0.3).abs() < 1e-15);

        let symmetric = report_of(vec![
            record(1, 5, -3.1, -3.0),
            record(1, 5, -2.9, -3.0),
        ]);
        let ages = metrics_by_age(&symmetric, 1).unwrap();
        assert_eq!(ages.len(), 1);
        assert!(ages[0].me.abs() < 1e-15);
        assert!((ages[0].mae - 0.1).abs() < 1e-15);
        assert!((ages[0].mse - 0.01).abs() < 1e-15);

        let biased = report_of(vec![
            record(1, 7, -3.0 + 0.25, -3.0),
            record(1, 7, -4.0 + 0.25, -4.0),
        ]);
        let ages = metrics_by_age(&biased, 1).unwrap();
        assert!((ages[0].me - 0.25).abs() < 1e-15);

        assert!(matches!(
            mse_mae_by_horizon(&one, 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn per_age_metrics_aggregate_to_the_horizon_metric() {
        let surface = synthetic_surface(0..=29, 1980..=2010, 0.03, 4);
        let report =
            expanding_backtest(&surface, &lc_spec(2003, 2009, 3)).unwrap();
        for h in 1..=3 {
            let (mse, mae) = mse_mae_by_horizon(&report, h).unwrap();
            let per_age = metrics_by_age(&report, h).unwrap();
            let mse_avg =
                per_age.iter().map(|a| a.mse).sum::<f64>() / per_age.len() as f64;
            let mae_avg =
                per_age.iter().map(|a| a.mae).sum::<f64>() / per_age.len() as f64;
            assert!((mse_avg - mse).abs() < 1e-12);
            assert!((mae_avg - mae).abs() < 1e-12);
            // Jensen: the squared mean error never exceeds the MSE.
            for a in &per_age {
                assert!(a.mse + 1e-15 >= a.me * a.me);
            }
        }
    }

    #[test]
    fn backtests_are_deterministic() {
        let surface = synthetic_surface(0..=29, 1980..=2010, 0.03, 5);
        let spec = BacktestSpec {
            model: ModelTag::Huts,
            m: 2,
            k: 3,
            horizons: 2,
            first_forecast_year: 2007,
            last_origin_year: 2009,
            seed: 42,
        };
        let a = expanding_backtest(&surface, &spec).unwrap();
        let b = expanding_backtest(&surface, &spec).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.predicted.to_bits(), y.predicted.to_bits());
        }
        assert!(a.skipped.is_empty());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let surface = synthetic_surface(0..=29, 1980..=2010, 0.02, 6);
        let mut spec = lc_spec(2005, 2009, 0);
        assert!(matches!(
            expanding_backtest(&surface, &spec),
            Err(Error::Config(_))
        ));
        spec.horizons = 1;
        spec.first_forecast_year = 2011;
        assert!(matches!(
            expanding_backtest(&surface, &spec),
            Err(Error::Config(_))
        ));
        spec.first_forecast_year = 2005;
        spec.last_origin_year = 2010;
        assert!(matches!(
            expanding_backtest(&surface, &spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn singleton_truncation_search_returns_its_only_candidate() {
        let surface = synthetic_surface(0..=29, 1980..=2005, 0.02, 7);
        let spec = BacktestSpec {
            model: ModelTag::Huts,
            m: 2,
            k: 2,
            horizons: 1,
            first_forecast_year: 2003,
            last_origin_year: 2004,
            seed: 42,
        };
        let search = truncation_search(&surface, &[2], &spec).unwrap();
        assert_eq!(search.recommended_m, 2);
        assert_eq!(search.rows.len(), 1);
    }

    #[test]
    fn truncation_ties_break_toward_the_smaller_order() {
        // A surface with no age structure: every age series is identical,
        // so the signature matrix is rank one for every order and all
        // orders produce the same fit.
        let ages: Vec<u32> = (0..30).collect();
        let years: Vec<i32> = (1980..=2005).collect();
        let n = years.len();
        let mut y = vec![0.0; ages.len() * n];
        for ai in 0..ages.len() {
            for ti in 0..n {
                y[ai * n + ti] = -4.0 - 0.02 * ti as f64;
            }
        }
        let surface = LogMortalitySurface {
            code: "FLAT".into(),
            ages,
            years,
            y,
            imputation_constant: 0.0,
            sigma_obs: None,
        };
        let spec = BacktestSpec {
            model: ModelTag::Huts,
            m: 2,
            k: 1,
            horizons: 1,
            first_forecast_year: 2003,
            last_origin_year: 2004,
            seed: 42,
        };
        let search = truncation_search(&surface, &[3, 2], &spec).unwrap();
        assert_eq!(search.recommended_m, 2);
        let spread = (search.rows[0].mean_mse - search.rows[1].mean_mse).abs();
        assert!(spread < 1e-12, "orders did not tie: spread {spread}");
    }

    #[test]
    fn normal_samples_pass_the_jarque_bera_test() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut passes = 0;
        let reps = 40;
        for seed in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sample: Vec<f64> =
                (0..5000).map(|_| normal.sample(&mut rng)).collect();
            let d = diagnose_series(&sample, 0.0).unwrap();
            if d.p_value > 0.01 {
                passes += 1;
            }
        }
        assert!(
            passes * 100 >= reps * 95,
            "only {passes}/{reps} normal samples passed"
        );
    }

    #[test]
    fn heavy_tails_fail_the_jarque_bera_test() {
        let t3 = StudentT::new(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sample: Vec<f64> = (0..5000).map(|_| t3.sample(&mut rng)).collect();
        let d = diagnose_series(&sample, 0.0).unwrap();
        assert!(d.p_value < 0.01, "t(3) sample passed with p {}", d.p_value);
        assert!(d.excess_kurtosis > 1.0);
    }

    #[test]
    fn diagnostics_reject_degenerate_series() {
        assert!(matches!(
            diagnose_series(&[0.5; 20], 0.0),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            diagnose_series(&[0.1, 0.2, 0.3], 0.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn diagnostics_run_on_a_fitted_model() {
        let surface = synthetic_surface(0..=29, 1980..=2010, 0.05, 8);
        let smooth = smooth_surface(&surface, &SmoothParams::default()).unwrap();
        let model = fit_huts(&smooth, 2, 3).unwrap();
        let out = residual_diagnostics(&model, &[0.0, 10.0, 29.0]).unwrap();
        assert_eq!(out.len(), 3);
        for d in &out {
            assert_eq!(d.counts.iter().sum::<usize>(), d.n);
            assert_eq!(d.bin_edges.len(), HIST_BINS + 1);
            assert!(d.p_value > 0.0 && d.p_value <= 1.0);
        }
        assert!(matches!(
            residual_diagnostics(&model, &[200.0]),
            Err(Error::Domain(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let histo_sample: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
        let d = diagnose_series(&histo_sample, 0.0).unwrap();
        assert_eq!(d.counts.iter().sum::<usize>(), 100);
    }
}

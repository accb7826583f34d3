//! Expanding-window backtest comparing the signature model against
//! Lee-Carter on a surface with injected outlier years.

use huts::evaluation::{
    expanding_backtest, metrics_by_age, mse_mae_by_horizon, BacktestSpec,
    ModelTag,
};
use huts::synthetic::{mortality_like_surface, MortalityScenario};

fn main() {
    let scenario = MortalityScenario {
        years: (1935..=2010).collect(),
        outlier_years: vec![1940, 1941, 1942, 1943, 1944],
        outlier_size: 1.2,
        ..Default::default()
    };
    let surface = mortality_like_surface(&scenario, 6).unwrap();

    let base = BacktestSpec {
        model: ModelTag::Huts,
        m: 2,
        k: 6,
        horizons: 10,
        first_forecast_year: 1991,
        last_origin_year: 2009,
        seed: 42,
    };

    for model in [ModelTag::Huts, ModelTag::Lc] {
        let spec = BacktestSpec { model, ..base.clone() };
        let report = expanding_backtest(&surface, &spec).unwrap();
        println!(
            "{}: {} records, {} skipped origins",
            report.model_tag,
            report.records.len(),
            report.skipped.len()
        );
        for h in [1usize, 5, 10] {
            let (mse, mae) = mse_mae_by_horizon(&report, h).unwrap();
            println!("  h={h:2}  MSE {mse:.5}  MAE {mae:.5}");
        }
        let per_age = metrics_by_age(&report, 1).unwrap();
        let worst = per_age
            .iter()
            .max_by(|a, b| a.mse.total_cmp(&b.mse))
            .unwrap();
        println!("  worst age at h=1: {} (MSE {:.5})", worst.age, worst.mse);
    }
}

//! Choosing the signature truncation order by backtest error.

use huts::evaluation::{truncation_search, BacktestSpec, ModelTag};
use huts::synthetic::{mortality_like_surface, MortalityScenario};

fn main() {
    let scenario = MortalityScenario {
        ages: (0..=80).collect(),
        years: (1960..=2005).collect(),
        ..Default::default()
    };
    let surface = mortality_like_surface(&scenario, 8).unwrap();

    let spec = BacktestSpec {
        model: ModelTag::Huts,
        m: 2,
        k: 4,
        horizons: 5,
        first_forecast_year: 1996,
        last_origin_year: 2004,
        seed: 42,
    };
    let search = truncation_search(&surface, &[2, 3, 4, 5], &spec).unwrap();

    println!("m   mean MSE   MSE by horizon");
    for row in &search.rows {
        let per_h: Vec<String> =
            row.mse_by_horizon.iter().map(|v| format!("{v:.4}")).collect();
        println!("{}   {:.5}    {}", row.m, row.mean_mse, per_h.join(" "));
    }
    println!("recommended truncation order: {}", search.recommended_m);
}

//! Bootstrapped prediction intervals: plain percentile and bias-corrected,
//! at two horizons, from seeded forecast-variant clouds.

use huts::decomposition::fit_huts;
use huts::forecast::point_forecast;
use huts::smoothing::{smooth_surface, SmoothParams};
use huts::synthetic::{mortality_like_surface, MortalityScenario};
use huts::uncertainty::{
    bias_corrected_interval, bootstrap_variants, percentile_interval,
};

fn main() {
    let surface =
        mortality_like_surface(&MortalityScenario::default(), 2).unwrap();
    let smooth = smooth_surface(&surface, &SmoothParams::default()).unwrap();
    let model = fit_huts(&smooth, 2, 6).unwrap();
    let bundle = point_forecast(&model, 10).unwrap();

    let alpha = 0.05;
    for h in [1usize, 10] {
        let variants = bootstrap_variants(&model, &bundle, h, 1000, 7).unwrap();
        let plain = percentile_interval(&variants, alpha).unwrap();
        let corrected =
            bias_corrected_interval(&variants, &bundle.point_curves[h - 1], alpha)
                .unwrap();
        println!(
            "horizon {h}: {} variants, {} clamp warnings after correction",
            variants.l, corrected.clamp_warnings
        );
        println!("age   point     percentile            bias-corrected");
        for ai in (0..model.n_grid()).step_by(20) {
            println!(
                "{:3}   {:7.3}   [{:7.3}, {:7.3}]   [{:7.3}, {:7.3}]",
                model.grid[ai] as u32,
                bundle.point_curves[h - 1][ai],
                plain.lower[ai],
                plain.upper[ai],
                corrected.lower[ai],
                corrected.upper[ai]
            );
        }
        println!();
    }
}

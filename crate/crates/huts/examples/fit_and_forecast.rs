//! The full point-forecast pipeline: smooth a log-rate surface, fit the
//! signature-basis component model, and forecast ten years ahead with
//! per-age variances.

use huts::decomposition::fit_huts;
use huts::forecast::point_forecast;
use huts::smoothing::{smooth_surface, SmoothParams};
use huts::synthetic::{mortality_like_surface, MortalityScenario};

fn main() {
    let surface =
        mortality_like_surface(&MortalityScenario::default(), 1).unwrap();
    let smooth = smooth_surface(&surface, &SmoothParams::default()).unwrap();

    let model = fit_huts(&smooth, 2, 6).unwrap();
    println!(
        "fitted {} components on {} years x {} ages (method tag: {})",
        model.k,
        model.n_years(),
        model.n_grid(),
        model.method.tag()
    );
    println!("leading singular values: {:?}", &model.singular_values[..3]);

    let bundle = point_forecast(&model, 10).unwrap();
    for (k, cm) in bundle.coeff_models.iter().enumerate() {
        println!(
            "coefficient {k}: ARIMA({},{},{}){}",
            cm.p,
            cm.d,
            cm.q,
            if cm.with_constant { " with constant" } else { "" }
        );
    }

    println!("\nage   h=1 point  h=10 point  h=10 sd");
    for ai in (0..model.n_grid()).step_by(10) {
        println!(
            "{:3}   {:9.4}  {:10.4}  {:7.4}",
            model.grid[ai] as u32,
            bundle.point_curves[0][ai],
            bundle.point_curves[9][ai],
            bundle.variance_curves[9][ai].sqrt()
        );
    }
}

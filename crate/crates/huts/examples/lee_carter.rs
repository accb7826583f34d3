//! The Lee-Carter baseline: bilinear fit of the log-rate surface and a
//! random-walk-with-drift extrapolation of the period index.

use huts::decomposition::fit_lc;
use huts::forecast::forecast_lc;
use huts::synthetic::{mortality_like_surface, MortalityScenario};

fn main() {
    let surface =
        mortality_like_surface(&MortalityScenario::default(), 4).unwrap();
    let model = fit_lc(&surface).unwrap();

    let b_sum: f64 = model.b.iter().sum();
    let k_sum: f64 = model.k_t.iter().sum();
    println!(
        "fitted Lee-Carter on {} years x {} ages (sum b = {:.3}, sum k = {:.2e})",
        model.years.len(),
        model.ages.len(),
        b_sum,
        k_sum
    );
    println!(
        "period index: first {:.2}, last {:.2}",
        model.k_t[0],
        model.k_t.last().unwrap()
    );

    let fc = forecast_lc(&model, 10).unwrap();
    println!("\nh    k mean     k sd");
    for h in 1..=10 {
        println!("{h:2}   {:8.2}  {:7.2}", fc.k_mean[h - 1], fc.k_variance[h - 1].sqrt());
    }

    println!("\nage   last observed  h=10 forecast");
    let last_year = surface.n_years() - 1;
    for ai in (0..model.ages.len()).step_by(20) {
        println!(
            "{:5.0}   {:12.4}  {:13.4}",
            model.ages[ai],
            surface.value(ai, last_year),
            fc.point_curves[9][ai]
        );
    }
}

//! Penalized-spline smoothing of noisy log mortality curves, with GCV
//! penalty selection and the old-age monotonicity constraint.

use huts::smoothing::{smooth_surface, SmoothParams};
use huts::synthetic::{mortality_like_surface, MortalityScenario};

fn main() {
    let scenario = MortalityScenario {
        ages: (0..=95).collect(),
        years: (1990..=2010).collect(),
        noise_sd: 0.08,
        ..Default::default()
    };
    let surface = mortality_like_surface(&scenario, 3).unwrap();

    let smooth = smooth_surface(&surface, &SmoothParams::default()).unwrap();
    println!(
        "smoothed {} years over {} ages (sigma estimated from residuals: {})",
        smooth.n_years(),
        smooth.n_grid(),
        smooth.sigma_from_residuals
    );

    let last = smooth.curves.last().unwrap();
    println!("final year, GCV-selected lambda = {:.4}", last.lambda);
    println!("age   noisy     smoothed");
    for ai in (0..smooth.n_grid()).step_by(10) {
        let noisy = surface.value(ai, surface.n_years() - 1);
        println!("{:3}   {:8.4}  {:8.4}", smooth.grid[ai] as u32, noisy, last.values[ai]);
    }

    // The monotone projection applies from age 65 up.
    let start = smooth.grid.iter().position(|&a| a >= 65.0).unwrap();
    let monotone = last.values[start..].windows(2).all(|w| w[1] >= w[0]);
    println!("values non-decreasing from age 65: {monotone}");
}

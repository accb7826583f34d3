//! Residual histograms and Jarque-Bera normality tests for a fitted
//! component model.

use huts::decomposition::fit_huts;
use huts::evaluation::residual_diagnostics;
use huts::smoothing::{smooth_surface, SmoothParams};
use huts::synthetic::{mortality_like_surface, MortalityScenario};

fn main() {
    let surface =
        mortality_like_surface(&MortalityScenario::default(), 5).unwrap();
    let smooth = smooth_surface(&surface, &SmoothParams::default()).unwrap();
    let model = fit_huts(&smooth, 2, 6).unwrap();

    let ages = [0.0, 25.0, 50.0, 75.0];
    let diagnostics = residual_diagnostics(&model, &ages).unwrap();

    println!("age    n   skewness  ex.kurtosis   JB      p-value");
    for d in &diagnostics {
        println!(
            "{:3.0}  {:3}   {:8.3}  {:11.3}  {:6.2}   {:.4}",
            d.age, d.n, d.skewness, d.excess_kurtosis, d.jarque_bera, d.p_value
        );
    }

    // A sketch of the age-50 histogram.
    let d = &diagnostics[2];
    println!("\nage 50 residual histogram ({} bins):", d.counts.len());
    let max = *d.counts.iter().max().unwrap();
    for (b, &count) in d.counts.iter().enumerate() {
        let bar = "#".repeat(if max > 0 { count * 40 / max } else { 0 });
        println!(
            "[{:7.4}, {:7.4})  {:2}  {bar}",
            d.bin_edges[b],
            d.bin_edges[b + 1],
            count
        );
    }
}

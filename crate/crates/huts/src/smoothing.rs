//! Weighted penalized regression spline smoothing of log-mortality curves.
//!
//! Each year is smoothed independently with cubic B-splines on equally
//! spaced knots and a second-order difference penalty on the coefficients,
//! weights proportional to inverse observational variances, the penalty
//! weight chosen by generalized cross-validation, and a non-decreasing
//! constraint at old ages enforced by pool-adjacent-violators on the fitted
//! grid values.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hmd::LogMortalitySurface;

/// Smoothing settings.
#[derive(Debug, Clone)]
pub struct SmoothParams {
    /// Fixed penalty weight, or None for per-year GCV selection.
    pub lambda: Option<f64>,
    /// Ages at and above this are constrained to be non-decreasing.
    pub monotone_age: f64,
    /// Spacing between interior knots, in years of age.
    pub knot_spacing: f64,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self { lambda: None, monotone_age: 65.0, knot_spacing: 3.0 }
    }
}

/// GCV search grid: 31 log-spaced points in [1e-4, 1e4].
fn lambda_grid() -> Vec<f64> {
    (0..31)
        .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 30.0))
        .collect()
}

/// One smoothed curve on the observed-age grid.
#[derive(Debug, Clone)]
pub struct SmoothCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Observational standard deviation carried per grid point.
    pub sigma: Vec<f64>,
    /// Penalty weight actually used.
    pub lambda: f64,
}

/// Smoothed curves for every year, sharing one grid, plus standardized
/// smoothing residuals `(y - fhat) / sigma` used by the bootstrap.
#[derive(Debug, Clone)]
pub struct SmoothSurface {
    pub years: Vec<i32>,
    pub grid: Vec<f64>,
    pub curves: Vec<SmoothCurve>,
    /// Row-major years x grid standardized residuals.
    pub std_residuals: Vec<f64>,
    /// True when sigma was estimated from smoothing residuals instead of
    /// observed death counts.
    pub sigma_from_residuals: bool,
}

impl SmoothSurface {
    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn n_grid(&self) -> usize {
        self.grid.len()
    }

    /// Time series of smoothed values at grid index `i`.
    pub fn age_series(&self, i: usize) -> Vec<f64> {
        self.curves.iter().map(|c| c.values[i]).collect()
    }
}

/// Cardinal cubic B-spline on support [0, 4).
fn cubic_bspline(u: f64) -> f64 {
    if !(0.0..4.0).contains(&u) {
        return 0.0;
    }
    if u < 1.0 {
        u * u * u / 6.0
    } else if u < 2.0 {
        (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0
    } else if u < 3.0 {
        (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0
    } else {
        let w = 4.0 - u;
        w * w * w / 6.0
    }
}

/// Evaluate the B-spline design matrix at `xs` for equally spaced knots
/// starting at `x0 - 3h` with spacing `h`; `nb` basis functions.
fn design_matrix(xs: &[f64], x0: f64, h: f64, nb: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(xs.len(), nb);
    for (r, &x) in xs.iter().enumerate() {
        for j in 0..nb {
            // Basis j has support [x0 + (j-3)h, x0 + (j+1)h).
            let u = (x - x0) / h - (j as f64 - 3.0);
            b[(r, j)] = cubic_bspline(u);
        }
    }
    b
}

fn basis_size(range: f64, h: f64) -> usize {
    let intervals = (range / h).ceil().max(1.0) as usize;
    intervals + 3
}

/// Pool-adjacent-violators projection to a non-decreasing sequence.
fn pava_non_decreasing(values: &mut [f64]) {
    let n = values.len();
    if n < 2 {
        return;
    }
    // Blocks of (sum, count), merged while out of order.
    let mut sums: Vec<f64> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for &v in values.iter() {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let k = sums.len();
            let mean_last = sums[k - 1] / counts[k - 1] as f64;
            let mean_prev = sums[k - 2] / counts[k - 2] as f64;
            if mean_prev <= mean_last {
                break;
            }
            let s = sums.pop().unwrap();
            let c = counts.pop().unwrap();
            *sums.last_mut().unwrap() += s;
            *counts.last_mut().unwrap() += c;
        }
    }
    let mut i = 0;
    for (s, c) in sums.iter().zip(&counts) {
        let mean = s / *c as f64;
        for _ in 0..*c {
            values[i] = mean;
            i += 1;
        }
    }
}

struct PenalizedFit {
    fitted: Vec<f64>,
    gcv: f64,
}

/// Solve the penalized weighted least-squares problem for one lambda.
fn fit_lambda(
    b: &DMatrix<f64>,
    btwb: &DMatrix<f64>,
    btwy: &DVector<f64>,
    penalty: &DMatrix<f64>,
    weights: &[f64],
    y: &[f64],
    lambda: f64,
) -> Result<PenalizedFit> {
    let a = btwb + penalty * lambda;
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::Fit("singular normal equations in penalized spline fit".into())
    })?;
    let coefs = chol.solve(btwy);
    let fitted_vec = b * &coefs;
    // tr(H) = tr(A^{-1} B'WB).
    let ainv_m = chol.solve(btwb);
    let trace: f64 = (0..ainv_m.nrows()).map(|i| ainv_m[(i, i)]).sum();
    let n = y.len() as f64;
    let rss_w: f64 = y
        .iter()
        .zip(fitted_vec.iter())
        .zip(weights)
        .map(|((&yi, &fi), &wi)| wi * (yi - fi) * (yi - fi))
        .sum();
    let denom = (n - trace).max(1e-8);
    let gcv = n * rss_w / (denom * denom);
    Ok(PenalizedFit { fitted: fitted_vec.iter().copied().collect(), gcv })
}

/// Smooth one year of log rates.
///
/// Minimizes the weighted residual sum of squares plus a second-order
/// difference penalty over a cubic B-spline space, with lambda chosen by GCV
/// unless fixed in `params`, then projects the fitted grid values to be
/// non-decreasing from `params.monotone_age` up.
pub fn smooth_curve(
    ages: &[f64],
    y: &[f64],
    weights: &[f64],
    params: &SmoothParams,
) -> Result<SmoothCurve> {
    let n = ages.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "smoothing needs at least 10 ages, got {n}"
        )));
    }
    if y.len() != n || weights.len() != n {
        return Err(Error::Shape("ages, values and weights must align".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::Fit("weights must be positive and finite".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite log rate".into()));
    }

    let x0 = ages[0];
    let range = ages[n - 1] - x0;
    if range <= 0.0 {
        return Err(Error::Domain("ages must span a positive range".into()));
    }
    let h = params.knot_spacing;
    let nb = basis_size(range, h);
    let b = design_matrix(ages, x0, h, nb);

    let w_diag = DMatrix::from_diagonal(&DVector::from_row_slice(weights));
    let btwb = b.transpose() * &w_diag * &b;
    let btwy = b.transpose() * &w_diag * DVector::from_row_slice(y);

    // Second-order difference penalty D2' D2.
    let mut d2 = DMatrix::zeros(nb - 2, nb);
    for i in 0..nb - 2 {
        d2[(i, i)] = 1.0;
        d2[(i, i + 1)] = -2.0;
        d2[(i, i + 2)] = 1.0;
    }
    let penalty = d2.transpose() * d2;

    let (fitted, lambda) = match params.lambda {
        Some(l) => (fit_lambda(&b, &btwb, &btwy, &penalty, weights, y, l)?.fitted, l),
        None => {
            let mut best: Option<(f64, PenalizedFit)> = None;
            for l in lambda_grid() {
                let fit = fit_lambda(&b, &btwb, &btwy, &penalty, weights, y, l)?;
                if best.as_ref().map_or(true, |(_, b)| fit.gcv < b.gcv) {
                    best = Some((l, fit));
                }
            }
            let (l, fit) = best.expect("non-empty lambda grid");
            (fit.fitted, l)
        }
    };

    let mut values = fitted;
    let mono_start = ages.iter().position(|&a| a >= params.monotone_age);
    if let Some(s) = mono_start {
        pava_non_decreasing(&mut values[s..]);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite fitted values".into()));
    }

    Ok(SmoothCurve {
        grid: ages.to_vec(),
        values,
        sigma: weights.iter().map(|&w| (1.0 / w).sqrt()).collect(),
        lambda,
    })
}

/// Smooth every year of a log surface independently, weighting by inverse
/// observational variances when available (uniform weights otherwise, with
/// sigma then estimated from each year's smoothing residuals).
pub fn smooth_surface(
    surface: &LogMortalitySurface,
    params: &SmoothParams,
) -> Result<SmoothSurface> {
    let p = surface.n_ages();
    let n = surface.n_years();
    let grid: Vec<f64> = surface.ages.iter().map(|&a| a as f64).collect();
    let mut curves = Vec::with_capacity(n);
    let mut std_residuals = vec![0.0; n * p];
    let has_sigma = surface.sigma_obs.is_some();

    for yi in 0..n {
        let y = surface.year_column(yi);
        let weights: Vec<f64> = match &surface.sigma_obs {
            Some(s) => (0..p)
                .map(|ai| {
                    let sd = s[surface.idx(ai, yi)];
                    1.0 / (sd * sd)
                })
                .collect(),
            None => vec![1.0; p],
        };
        let mut curve = smooth_curve(&grid, &y, &weights, params).map_err(|e| {
            Error::Fit(format!("year {}: {e}", surface.years[yi]))
        })?;
        if !has_sigma {
            // Fall back to the year's RMS residual as a common sigma.
            let rss: f64 = y
                .iter()
                .zip(&curve.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let sd = (rss / p as f64).sqrt().max(1e-12);
            curve.sigma = vec![sd; p];
        }
        for ai in 0..p {
            std_residuals[yi * p + ai] = (y[ai] - curve.values[ai]) / curve.sigma[ai];
        }
        curves.push(curve);
    }

    Ok(SmoothSurface {
        years: surface.years.clone(),
        grid,
        curves,
        std_residuals,
        sigma_from_residuals: !has_sigma,
    })
}

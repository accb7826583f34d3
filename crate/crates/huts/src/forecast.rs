//! Coefficient extrapolation and curve forecasting.
//!
//! Each principal-component coefficient series gets an automatically
//! selected ARIMA model, fitted by exact Gaussian maximum likelihood
//! through a Kalman filter on the differenced series. Point forecasts come
//! from state propagation; forecast variances from the psi-weights of the
//! integrated process. Curve forecasts recombine the mean curve, the age
//! basis, and the coefficient forecasts, with the variance split into the
//! mean-estimation, coefficient, model-residual, and observational terms.
//! Lee-Carter forecasting uses a random walk with drift on the period
//! index.

use nalgebra::{DMatrix, DVector};

use crate::decomposition::{ComponentModel, LcModel};
use crate::error::{Error, Result};

/// A fitted ARIMA(p,d,q) model for one coefficient series.
///
/// `constant` is the process mean when `d == 0` and the drift of the
/// differenced series when `d == 1`; it is unused (zero) when `d == 2` or
/// `with_constant` is false.
#[derive(Debug, Clone)]
pub struct CoeffModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub with_constant: bool,
    /// AR coefficients phi_1..phi_p of `w_t = sum phi_i w_{t-i} + e_t + sum theta_j e_{t-j}`.
    pub ar: Vec<f64>,
    /// MA coefficients theta_1..theta_q (additive sign convention).
    pub ma: Vec<f64>,
    pub constant: f64,
    /// Innovation variance.
    pub sigma2: f64,
    /// Exact Gaussian log-likelihood of the differenced series.
    pub loglik: f64,
    pub aicc: f64,
    /// The undifferenced series the model was fitted to.
    pub series: Vec<f64>,
}

impl CoeffModel {
    /// Number of estimated parameters (AR, MA, constant, innovation
    /// variance), as counted by AICc.
    pub fn n_params(&self) -> usize {
        self.p + self.q + usize::from(self.with_constant) + 1
    }

    /// Numerical stationarity/invertibility check: both polynomials must
    /// map to partial coefficients strictly inside (-1, 1).
    pub fn is_stationary_invertible(&self) -> bool {
        let ok = |coeffs: &[f64]| match ar_to_pacf(coeffs) {
            Some(pacf) => pacf.iter().all(|r| r.abs() < 1.0),
            None => false,
        };
        // The MA polynomial 1 + theta B + ... is invertible exactly when
        // the AR polynomial 1 - (-theta) B - ... is stationary.
        let neg_ma: Vec<f64> = self.ma.iter().map(|&t| -t).collect();
        ok(&self.ar) && ok(&neg_ma)
    }
}

/// Point and variance forecasts for all components and the recombined
/// curves.
#[derive(Debug, Clone)]
pub struct ForecastBundle {
    pub horizons: usize,
    /// H rows of q points: forecast log rates per grid point.
    pub point_curves: Vec<Vec<f64>>,
    /// H rows of q points: total forecast variance per grid point.
    pub variance_curves: Vec<Vec<f64>>,
    /// H rows of K coefficient mean forecasts.
    pub coeff_means: Vec<Vec<f64>>,
    /// H rows of K coefficient forecast variances.
    pub coeff_variances: Vec<Vec<f64>>,
    /// One fitted model per component.
    pub coeff_models: Vec<CoeffModel>,
    /// Tag of the decomposition that produced the curves.
    pub model_tag: String,
}

/// `d`-fold differencing.
pub fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut w = series.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Successive-differencing variance test: difference while it strictly
/// lowers the sample variance, up to `d = 2`.
pub fn select_d(series: &[f64]) -> usize {
    let mut d = 0;
    let mut current = variance(series);
    while d < 2 {
        let next = difference(series, d + 1);
        if next.len() < 4 {
            break;
        }
        let nv = variance(&next);
        if nv < current {
            d += 1;
            current = nv;
        } else {
            break;
        }
    }
    d
}

/// Expand partial coefficients in (-1, 1) into AR coefficients
/// (Durbin-Levinson step-up). Any such vector yields a stationary
/// polynomial, which is why the optimizer works on this scale.
fn pacf_to_ar(pacf: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::new();
    for (k, &r) in pacf.iter().enumerate() {
        let mut next = vec![0.0; k + 1];
        for j in 0..k {
            next[j] = a[j] - r * a[k - 1 - j];
        }
        next[k] = r;
        a = next;
    }
    a
}

/// Inverse of [`pacf_to_ar`] (step-down); `None` when a step is singular,
/// which signals a non-stationary polynomial.
fn ar_to_pacf(ar: &[f64]) -> Option<Vec<f64>> {
    let mut a = ar.to_vec();
    let mut pacf = vec![0.0; ar.len()];
    for k in (0..ar.len()).rev() {
        let r = a[k];
        pacf[k] = r;
        if k == 0 {
            break;
        }
        let denom = 1.0 - r * r;
        if denom.abs() < 1e-300 {
            return None;
        }
        let prev: Vec<f64> = (0..k).map(|j| (a[j] + r * a[k - 1 - j]) / denom).collect();
        a = prev;
    }
    Some(pacf)
}

/// Harvey state-space form of an ARMA(p,q): transition matrix and
/// innovation loading with state dimension `max(p, q + 1)`; the observed
/// value is the first state element.
fn state_space(ar: &[f64], ma: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let r = ar.len().max(ma.len() + 1);
    let mut t = DMatrix::zeros(r, r);
    for (i, &phi) in ar.iter().enumerate() {
        t[(i, 0)] = phi;
    }
    for i in 0..r - 1 {
        t[(i, i + 1)] = 1.0;
    }
    let mut rv = DVector::zeros(r);
    rv[0] = 1.0;
    for (j, &theta) in ma.iter().enumerate() {
        rv[j + 1] = theta;
    }
    (t, rv)
}

/// Stationary state covariance at unit innovation variance: solves
/// `P = T P T' + R R'` through the vectorized linear system.
fn stationary_cov(t: &DMatrix<f64>, rv: &DVector<f64>) -> Option<DMatrix<f64>> {
    let r = t.nrows();
    let n2 = r * r;
    let mut a = DMatrix::identity(n2, n2);
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                for l in 0..r {
                    // vec index (row i + r*j) for P[i,j]; T P T' term.
                    a[(i + r * j, k + r * l)] -= t[(i, k)] * t[(j, l)];
                }
            }
        }
    }
    let mut b = DVector::zeros(n2);
    for i in 0..r {
        for j in 0..r {
            b[i + r * j] = rv[i] * rv[j];
        }
    }
    let p_vec = a.lu().solve(&b)?;
    Some(DMatrix::from_fn(r, r, |i, j| p_vec[i + r * j]))
}

/// Kalman filter pass at unit innovation variance.
struct FilterOutput {
    /// Sum of log one-step prediction variances.
    sum_log_f: f64,
    /// Sum of squared standardized innovations.
    sum_v2_f: f64,
    /// Predicted state after the last observation, `a_{n+1|n}`.
    a_next: DVector<f64>,
}

fn kalman_filter(w: &[f64], ar: &[f64], ma: &[f64]) -> Option<FilterOutput> {
    let (t, rv) = state_space(ar, ma);
    let r = t.nrows();
    let rr = &rv * rv.transpose();
    let mut p = stationary_cov(&t, &rv)?;
    let mut a = DVector::zeros(r);
    let mut sum_log_f = 0.0;
    let mut sum_v2_f = 0.0;
    for &obs in w {
        let f = p[(0, 0)];
        if !(f.is_finite() && f > 1e-300) {
            return None;
        }
        let v = obs - a[0];
        sum_log_f += f.ln();
        sum_v2_f += v * v / f;
        let k = (&t * p.column(0)) / f;
        a = &t * a + &k * v;
        p = &t * &p * t.transpose() - (&k * k.transpose()) * f + &rr;
        // Keep the covariance symmetric against drift.
        p = (&p + p.transpose()) * 0.5;
    }
    Some(FilterOutput { sum_log_f, sum_v2_f, a_next: a })
}

/// Exact Gaussian log-likelihood with the innovation variance concentrated
/// out; returns `(loglik, sigma2_hat)`.
fn concentrated_loglik(w: &[f64], ar: &[f64], ma: &[f64]) -> Option<(f64, f64)> {
    let n = w.len() as f64;
    let filt = kalman_filter(w, ar, ma)?;
    let sigma2 = (filt.sum_v2_f / n).max(1e-300);
    let ll = -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + 1.0 + sigma2.ln())
        - 0.5 * filt.sum_log_f;
    if ll.is_finite() {
        Some((ll, sigma2))
    } else {
        None
    }
}

/// Standard Nelder-Mead simplex minimization.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    if n == 0 {
        let v = f(x0);
        return (x0.to_vec(), v);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= tol * (1.0 + best.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> = (0..n)
            .map(|j| centroid[j] + (centroid[j] - simplex[n].0[j]))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 2.0 * (centroid[j] - simplex[n].0[j]))
                .collect();
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 0.5 * (simplex[n].0[j] - centroid[j]))
                .collect();
            let fc = f(&contract);
            if fc < simplex[n].1 {
                simplex[n] = (contract, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n)
                        .map(|j| best_x[j] + 0.5 * (entry.0[j] - best_x[j]))
                        .collect();
                    let fx = f(&x);
                    *entry = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0)
}

/// Sample autocorrelations rho_1..rho_m of a mean-removed series.
fn autocorrelations(w: &[f64], m: usize) -> Vec<f64> {
    let n = w.len();
    let mean = w.iter().sum::<f64>() / n as f64;
    let c0: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
    if c0 <= 0.0 {
        return vec![0.0; m];
    }
    (1..=m)
        .map(|lag| {
            let c: f64 = (lag..n)
                .map(|t| (w[t] - mean) * (w[t - lag] - mean))
                .sum();
            c / c0
        })
        .collect()
}

/// Yule-Walker reflection coefficients (sample PACF), clamped away from
/// the boundary, as optimizer starting values.
fn yule_walker_pacf(w: &[f64], p: usize) -> Vec<f64> {
    if p == 0 || w.len() < p + 2 {
        return vec![0.0; p];
    }
    let rho = autocorrelations(w, p);
    let mut phi = vec![0.0; p];
    let mut prev = vec![0.0; p];
    let mut pacf = vec![0.0; p];
    for k in 1..=p {
        let num = rho[k - 1]
            - (1..k).map(|j| prev[j - 1] * rho[k - 1 - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| prev[j - 1] * rho[j - 1]).sum::<f64>();
        let r = if den.abs() > 1e-12 { num / den } else { 0.0 };
        let r = r.clamp(-0.95, 0.95);
        pacf[k - 1] = r;
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - r * prev[k - 1 - j];
        }
        phi[k - 1] = r;
        prev[..k].copy_from_slice(&phi[..k]);
    }
    pacf
}

fn unpack_params(x: &[f64], p: usize, q: usize, with_constant: bool) -> (Vec<f64>, Vec<f64>, f64) {
    let ar = pacf_to_ar(&x[..p].iter().map(|v| v.tanh()).collect::<Vec<_>>());
    let ma_pacf: Vec<f64> = x[p..p + q].iter().map(|v| v.tanh()).collect();
    // Invertibility of the MA polynomial via the same step-up map, with the
    // sign flipped to land on the additive convention.
    let ma: Vec<f64> = pacf_to_ar(&ma_pacf).iter().map(|&v| -v).collect();
    let constant = if with_constant { x[p + q] } else { 0.0 };
    (ar, ma, constant)
}

/// Fit a fixed-order ARIMA by exact maximum likelihood.
pub fn fit_arima(
    series: &[f64],
    p: usize,
    d: usize,
    q: usize,
    with_constant: bool,
) -> Result<CoeffModel> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in coefficient series".into()));
    }
    let w = difference(series, d);
    let n = w.len();
    let k_params = p + q + usize::from(with_constant) + 1;
    if n < k_params + 2 || n < 4 {
        return Err(Error::InsufficientData(format!(
            "{n} differenced observations for {k_params} parameters"
        )));
    }

    let dim = p + q + usize::from(with_constant);
    let w_mean = w.iter().sum::<f64>() / n as f64;
    let objective = |x: &[f64], w: &[f64]| -> f64 {
        let (ar, ma, constant) = unpack_params(x, p, q, with_constant);
        let adj: Vec<f64> = w.iter().map(|&v| v - constant).collect();
        match concentrated_loglik(&adj, &ar, &ma) {
            Some((ll, _)) => -ll,
            None => f64::INFINITY,
        }
    };

    // Starting points: method-of-moments reflection coefficients on the
    // mean-removed series, and all zeros.
    let centered: Vec<f64> = w.iter().map(|&v| v - w_mean).collect();
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    if p > 0 {
        let mut x = vec![0.0; dim];
        for (i, r) in yule_walker_pacf(&centered, p).iter().enumerate() {
            x[i] = r.atanh();
        }
        starts.push(x);
    }
    if with_constant {
        for x in starts.iter_mut() {
            x[p + q] = w_mean;
        }
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (x, fx) = nelder_mead(|x| objective(x, &w), start, 0.2, 1e-8, 200 * (dim + 2));
        // Polish with a restart from the found point.
        let (x, fx) = if fx.is_finite() {
            nelder_mead(|x| objective(x, &w), &x, 0.05, 1e-10, 200 * (dim + 2))
        } else {
            (x, fx)
        };
        if best.as_ref().map(|(_, b)| fx < *b).unwrap_or(true) {
            best = Some((x, fx));
        }
    }
    let (x, fx) = best.unwrap();
    if !fx.is_finite() {
        return Err(Error::Fit(format!(
            "ARIMA({p},{d},{q}) likelihood optimization did not converge"
        )));
    }
    let (ar, ma, constant) = unpack_params(&x, p, q, with_constant);
    let adj: Vec<f64> = w.iter().map(|&v| v - constant).collect();
    let (loglik, sigma2) = concentrated_loglik(&adj, &ar, &ma)
        .ok_or_else(|| Error::Fit(format!("ARIMA({p},{d},{q}) filter failed at the optimum")))?;

    let kf = k_params as f64;
    let nf = n as f64;
    let aicc = if nf - kf - 1.0 > 0.0 {
        -2.0 * loglik + 2.0 * kf + 2.0 * kf * (kf + 1.0) / (nf - kf - 1.0)
    } else {
        f64::INFINITY
    };
    Ok(CoeffModel {
        p,
        d,
        q,
        with_constant,
        ar,
        ma,
        constant,
        sigma2,
        loglik,
        aicc,
        series: series.to_vec(),
    })
}

/// Automatic model selection: choose `d` by the differencing variance
/// test, then search all `p, q <= 3` by AICc. Ties go to fewer parameters,
/// then lower `p`. A constant is included when `d <= 1` (mean for `d = 0`,
/// drift for `d = 1`).
pub fn fit_coeff_model(series: &[f64]) -> Result<CoeffModel> {
    if series.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "coefficient series has {} observations, need 10",
            series.len()
        )));
    }
    let d = select_d(series);
    let with_constant = d <= 1;
    let mut best: Option<CoeffModel> = None;
    let mut last_err: Option<Error> = None;
    for p in 0..=3 {
        for q in 0..=3 {
            match fit_arima(series, p, d, q, with_constant) {
                Ok(model) => {
                    let better = match &best {
                        None => true,
                        Some(cur) => {
                            let tol = 1e-7 * (1.0 + cur.aicc.abs());
                            if model.aicc < cur.aicc - tol {
                                true
                            } else if (model.aicc - cur.aicc).abs() <= tol {
                                (model.n_params(), model.p) < (cur.n_params(), cur.p)
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        best = Some(model);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Fit("no ARIMA candidate converged".into()))
    })
}

/// Psi-weights of the integrated process `theta(B) / (phi(B) (1-B)^d)`,
/// `psi_0..psi_{len-1}`.
fn psi_weights(model: &CoeffModel, len: usize) -> Vec<f64> {
    // Coefficients g_i of the recursion y_t = sum g_i y_{t-i} + MA part,
    // from expanding phi(B) (1-B)^d.
    let mut c = vec![1.0];
    for &phi in &model.ar {
        c.push(-phi);
    }
    for _ in 0..model.d {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci;
        }
        c = next;
    }
    let g: Vec<f64> = c[1..].iter().map(|&v| -v).collect();
    let mut psi = vec![0.0; len];
    if len == 0 {
        return psi;
    }
    psi[0] = 1.0;
    for j in 1..len {
        let mut v = if j <= model.q { model.ma[j - 1] } else { 0.0 };
        for (i, &gi) in g.iter().enumerate() {
            if j > i {
                v += gi * psi[j - 1 - i];
            }
        }
        psi[j] = v;
    }
    psi
}

/// Forecast means on the original scale from an arbitrary origin: uses
/// only `series[..n_used]`, with the fitted parameters held fixed.
pub fn forecast_means_at(model: &CoeffModel, n_used: usize, h: usize) -> Result<Vec<f64>> {
    if n_used > model.series.len() || n_used < model.d + 1 {
        return Err(Error::Domain(format!(
            "origin {n_used} outside the fitted series of length {}",
            model.series.len()
        )));
    }
    let prefix = &model.series[..n_used];
    let w = difference(prefix, model.d);
    let adj: Vec<f64> = w.iter().map(|&v| v - model.constant).collect();
    let filt = kalman_filter(&adj, &model.ar, &model.ma)
        .ok_or_else(|| Error::Fit("filter failed during forecasting".into()))?;
    let (t, _) = state_space(&model.ar, &model.ma);
    let mut a = filt.a_next;
    let mut w_fc = Vec::with_capacity(h);
    for step in 0..h {
        if step > 0 {
            a = &t * a;
        }
        w_fc.push(a[0] + model.constant);
    }
    // Undifference, one level at a time, seeding each level with its last
    // observed value.
    let mut fc = w_fc;
    for level in (0..model.d).rev() {
        let level_series = difference(prefix, level);
        let mut acc = *level_series.last().unwrap();
        for v in fc.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    Ok(fc)
}

/// h-step forecast means and variances `u_1..u_h` from the end of the
/// fitted series.
pub fn forecast_coeff(model: &CoeffModel, h: usize) -> Result<Vec<(f64, f64)>> {
    if h == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let means = forecast_means_at(model, model.series.len(), h)?;
    let psi = psi_weights(model, h);
    let mut cum = 0.0;
    let out = means
        .into_iter()
        .zip(psi)
        .map(|(mean, pj)| {
            cum += pj * pj;
            (mean, model.sigma2 * cum)
        })
        .collect();
    Ok(out)
}

/// One-step in-sample prediction errors of the fitted model on the
/// original scale (innovations for `d = 0`; integrated otherwise).
pub fn one_step_errors(model: &CoeffModel) -> Result<Vec<f64>> {
    let n = model.series.len();
    let mut errs = Vec::new();
    for origin in (model.d + 1).max(4)..n {
        let fc = forecast_means_at(model, origin, 1)?;
        errs.push(model.series[origin] - fc[0]);
    }
    Ok(errs)
}

/// Forecast the curves of a fitted component model over horizons `1..=h`.
pub fn point_forecast(model: &ComponentModel, h: usize) -> Result<ForecastBundle> {
    if h == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let q = model.n_grid();
    let mut coeff_models = Vec::with_capacity(model.k);
    for k in 0..model.k {
        let series = model.beta_series(k);
        let fitted = fit_coeff_model(&series).map_err(|e| {
            Error::Fit(format!("coefficient {k}: {e}"))
        })?;
        coeff_models.push(fitted);
    }

    let mut coeff_means = vec![vec![0.0; model.k]; h];
    let mut coeff_variances = vec![vec![0.0; model.k]; h];
    for (k, cm) in coeff_models.iter().enumerate() {
        for (step, (mean, var)) in forecast_coeff(cm, h)?.into_iter().enumerate() {
            coeff_means[step][k] = mean;
            coeff_variances[step][k] = var;
        }
    }

    let mut point_curves = Vec::with_capacity(h);
    let mut variance_curves = Vec::with_capacity(h);
    for step in 0..h {
        let mut pts = vec![0.0; q];
        let mut vars = vec![0.0; q];
        for i in 0..q {
            let mut y = model.mean[i];
            let mut var = model.sigma2_mu[i] + model.v[i] + model.sigma2_obs[i];
            for k in 0..model.k {
                let z = model.basis[i][k];
                y += z * coeff_means[step][k];
                var += z * z * coeff_variances[step][k];
            }
            pts[i] = y;
            vars[i] = var;
        }
        point_curves.push(pts);
        variance_curves.push(vars);
    }

    Ok(ForecastBundle {
        horizons: h,
        point_curves,
        variance_curves,
        coeff_means,
        coeff_variances,
        coeff_models,
        model_tag: model.method.tag().to_string(),
    })
}

/// Lee-Carter forecast: period index extrapolated by a random walk with
/// drift.
#[derive(Debug, Clone)]
pub struct LcForecast {
    pub horizons: usize,
    pub k_mean: Vec<f64>,
    /// Variance of the index forecast, including drift-estimation error.
    pub k_variance: Vec<f64>,
    /// H rows of per-age point forecasts `a + b * k`.
    pub point_curves: Vec<Vec<f64>>,
}

pub fn forecast_lc(model: &LcModel, h: usize) -> Result<LcForecast> {
    let n = model.k_t.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "period index has {n} values, need 3"
        )));
    }
    if h == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let diffs: Vec<f64> = model.k_t.windows(2).map(|p| p[1] - p[0]).collect();
    let nd = diffs.len() as f64;
    let drift = diffs.iter().sum::<f64>() / nd;
    let s2 = diffs
        .iter()
        .map(|d| (d - drift) * (d - drift))
        .sum::<f64>()
        / (nd - 1.0).max(1.0);
    let last = *model.k_t.last().unwrap();
    let mut k_mean = Vec::with_capacity(h);
    let mut k_variance = Vec::with_capacity(h);
    let mut point_curves = Vec::with_capacity(h);
    for step in 1..=h {
        let hf = step as f64;
        let km = last + hf * drift;
        k_mean.push(km);
        k_variance.push(s2 * hf + hf * hf * s2 / nd);
        point_curves.push(
            model
                .a
                .iter()
                .zip(&model.b)
                .map(|(&a, &b)| a + b * km)
                .collect(),
        );
    }
    Ok(LcForecast { horizons: h, k_mean, k_variance, point_curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn differencing_and_d_selection() {
        assert_eq!(difference(&[1.0, 3.0, 6.0], 1), vec![2.0, 3.0]);
        assert_eq!(difference(&[1.0, 3.0, 6.0], 2), vec![1.0]);

        let linear: Vec<f64> = (0..30).map(|t| 2.5 * t as f64).collect();
        assert_eq!(select_d(&linear), 1);

        let quadratic: Vec<f64> = (0..30).map(|t| 0.3 * (t * t) as f64).collect();
        assert_eq!(select_d(&quadratic), 2);

        let mut rng = StdRng::seed_from_u64(1);
        let noise: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert_eq!(select_d(&noise), 0);
    }

    #[test]
    fn pacf_ar_round_trip() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..50 {
            let p = rng.gen_range(1..=4);
            let pacf: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.95..0.95)).collect();
            let ar = pacf_to_ar(&pacf);
            let back = ar_to_pacf(&ar).unwrap();
            for (a, b) in pacf.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        // AR(1): identity map.
        assert!((pacf_to_ar(&[0.7])[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn kalman_matches_white_noise_closed_form() {
        let mut rng = StdRng::seed_from_u64(3);
        let w: Vec<f64> = (0..100).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (ll, s2) = concentrated_loglik(&w, &[], &[]).unwrap();
        let n = w.len() as f64;
        let s2_hat = w.iter().map(|v| v * v).sum::<f64>() / n;
        let ll_direct = -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + 1.0 + s2_hat.ln());
        assert!((s2 - s2_hat).abs() < 1e-12);
        assert!((ll - ll_direct).abs() < 1e-9);
    }

    #[test]
    fn kalman_matches_ar1_exact_likelihood() {
        let mut rng = StdRng::seed_from_u64(4);
        let phi = 0.6;
        let mut w = vec![rng.gen_range(-1.0..1.0)];
        for _ in 1..150 {
            let prev = *w.last().unwrap();
            w.push(phi * prev + rng.gen_range(-1.0..1.0));
        }
        let (ll, s2) = concentrated_loglik(&w, &[phi], &[]).unwrap();
        // Closed-form exact Gaussian likelihood of a stationary AR(1)
        // evaluated at the same (phi, sigma2).
        let n = w.len() as f64;
        let mut quad = w[0] * w[0] * (1.0 - phi * phi);
        for t in 1..w.len() {
            let e = w[t] - phi * w[t - 1];
            quad += e * e;
        }
        let ll_direct = -0.5
            * (n * (2.0 * std::f64::consts::PI).ln() + n * s2.ln()
                - (1.0 - phi * phi).ln()
                + quad / s2);
        assert!((ll - ll_direct).abs() < 1e-8, "{ll} vs {ll_direct}");
    }

    fn simulate_arma(
        ar: &[f64],
        ma: &[f64],
        n: usize,
        sigma: f64,
        seed: u64,
    ) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let burn = 200;
        let mut e = Vec::with_capacity(n + burn);
        let mut y: Vec<f64> = Vec::with_capacity(n + burn);
        for t in 0..n + burn {
            let eps: f64 = normal.sample(&mut rng);
            let mut v = eps;
            for (i, &phi) in ar.iter().enumerate() {
                if t > i {
                    v += phi * y[t - 1 - i];
                }
            }
            for (j, &theta) in ma.iter().enumerate() {
                if t > j {
                    v += theta * e[t - 1 - j];
                }
            }
            e.push(eps);
            y.push(v);
        }
        y.split_off(burn)
    }

    #[test]
    fn ar1_parameter_recovery() {
        let y = simulate_arma(&[0.8], &[], 2000, 1.0, 5);
        let model = fit_arima(&y, 1, 0, 0, true).unwrap();
        assert!((model.ar[0] - 0.8).abs() < 0.05, "phi {}", model.ar[0]);
        assert!((model.sigma2 - 1.0).abs() < 0.1, "sigma2 {}", model.sigma2);
        assert!(model.is_stationary_invertible());
    }

    #[test]
    fn ma1_parameter_recovery() {
        let y = simulate_arma(&[], &[0.5], 2000, 1.0, 6);
        let model = fit_arima(&y, 0, 0, 1, true).unwrap();
        assert!((model.ma[0] - 0.5).abs() < 0.07, "theta {}", model.ma[0]);
        assert!(model.is_stationary_invertible());
    }

    #[test]
    fn random_walk_with_drift_forecast_closed_form() {
        let mut rng = StdRng::seed_from_u64(7);
        let mut y = vec![0.0];
        for _ in 1..200 {
            y.push(y.last().unwrap() + 0.3 + rng.gen_range(-0.5..0.5));
        }
        let model = fit_arima(&y, 0, 1, 0, true).unwrap();
        let fc = forecast_coeff(&model, 5).unwrap();
        let last = *y.last().unwrap();
        for (h, (mean, u)) in fc.iter().enumerate() {
            let hf = (h + 1) as f64;
            assert!((mean - (last + hf * model.constant)).abs() < 1e-10);
            assert!((u - hf * model.sigma2).abs() < 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn constant_mean_model_forecast() {
        let mut rng = StdRng::seed_from_u64(8);
        let y: Vec<f64> = (0..200).map(|_| 4.0 + rng.gen_range(-1.0..1.0)).collect();
        let model = fit_arima(&y, 0, 0, 0, true).unwrap();
        let fc = forecast_coeff(&model, 6).unwrap();
        for (mean, u) in &fc {
            assert!((mean - model.constant).abs() < 1e-10);
            assert!((u - model.sigma2).abs() < 1e-12);
        }
        // The MLE mean is the sample mean.
        let sample_mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((model.constant - sample_mean).abs() < 1e-4);
    }

    #[test]
    fn ar1_variance_closed_form() {
        let y = simulate_arma(&[0.7], &[], 300, 1.0, 9);
        let model = fit_arima(&y, 1, 0, 0, false).unwrap();
        let phi = model.ar[0];
        let fc = forecast_coeff(&model, 10).unwrap();
        for (h, (_, u)) in fc.iter().enumerate() {
            let hf = (h + 1) as i32;
            let want = model.sigma2 * (1.0 - phi.powi(2 * hf)) / (1.0 - phi * phi);
            assert!((u - want).abs() < 1e-10 * (1.0 + want), "h={} u={} want={}", h + 1, u, want);
        }
    }

    #[test]
    fn auto_fit_linear_trend_continues_the_line() {
        let y: Vec<f64> = (0..40).map(|t| 1.5 * t as f64 - 3.0).collect();
        let model = fit_coeff_model(&y).unwrap();
        assert!(model.d >= 1);
        let fc = forecast_coeff(&model, 8).unwrap();
        for (h, (mean, _)) in fc.iter().enumerate() {
            let want = 1.5 * (40 + h) as f64 - 3.0;
            assert!((mean - want).abs() < 1e-6, "h={} mean={} want={}", h + 1, mean, want);
        }
    }

    #[test]
    fn auto_fit_white_noise_forecasts_near_zero() {
        let mut rng = StdRng::seed_from_u64(10);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let y: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng)).collect();
        let model = fit_coeff_model(&y).unwrap();
        assert_eq!(model.d, 0);
        let fc = forecast_coeff(&model, 5).unwrap();
        let bound = 3.0 / (y.len() as f64).sqrt();
        for (mean, _) in &fc {
            assert!(mean.abs() < bound, "forecast {mean} vs bound {bound}");
        }
    }

    #[test]
    fn u_is_non_decreasing_in_h() {
        let mut rng = StdRng::seed_from_u64(11);
        for trial in 0..10 {
            let p = rng.gen_range(0..=2);
            let q = rng.gen_range(0..=2);
            let d = rng.gen_range(0..=1);
            let base = simulate_arma(&[0.5], &[0.3], 150, 1.0, 100 + trial);
            let y = if d == 1 {
                let mut acc = 0.0;
                base.iter().map(|v| { acc += v; acc }).collect()
            } else {
                base
            };
            if let Ok(model) = fit_arima(&y, p, d, q, d <= 1) {
                let fc = forecast_coeff(&model, 15).unwrap();
                for w in fc.windows(2) {
                    assert!(w[1].1 >= w[0].1 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn forecast_at_earlier_origin_uses_only_the_prefix() {
        let mut rng = StdRng::seed_from_u64(12);
        let mut y = vec![0.0];
        for _ in 1..120 {
            y.push(y.last().unwrap() + 0.2 + rng.gen_range(-0.4..0.4));
        }
        let model = fit_arima(&y, 1, 1, 0, true).unwrap();
        // Refit-free origin forecast must agree with filtering the prefix
        // through an identical model.
        let mut clone = model.clone();
        clone.series = y[..80].to_vec();
        let a = forecast_means_at(&model, 80, 5).unwrap();
        let b = forecast_means_at(&clone, 80, 5).unwrap();
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() < 1e-12);
        }
    }

    fn synthetic_component_model(
        n: usize,
        q: usize,
        k: usize,
        beta_gen: impl Fn(usize, usize) -> f64,
    ) -> ComponentModel {
        use crate::decomposition::BasisMethod;
        // Orthogonal basis from sinusoids on the grid.
        let basis: Vec<Vec<f64>> = (0..q)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let f = (j + 1) as f64;
                        ((i as f64 + 0.5) * f * std::f64::consts::PI / q as f64).cos()
                            * (2.0 / q as f64).sqrt()
                    })
                    .collect()
            })
            .collect();
        let beta: Vec<Vec<f64>> = (0..n)
            .map(|t| (0..k).map(|j| beta_gen(t, j)).collect())
            .collect();
        ComponentModel {
            country: None,
            method: BasisMethod::Fpca,
            grid: (0..q).map(|i| i as f64).collect(),
            years: (1990..1990 + n as i32).collect(),
            k,
            mean: vec![-4.0; q],
            basis,
            singular_values: vec![1.0; k],
            beta,
            residuals: vec![vec![0.0; q]; n],
            v: vec![0.01; q],
            sigma2_mu: vec![0.001; q],
            sigma2_obs: vec![0.02; q],
            smooth_resid_std: vec![vec![0.0; q]; n],
            sigma_from_residuals: false,
        }
    }

    #[test]
    fn constant_coefficients_give_constant_curves() {
        let model = synthetic_component_model(30, 8, 2, |_, j| 1.5 - j as f64);
        let bundle = point_forecast(&model, 4).unwrap();
        let expected: Vec<f64> = (0..8)
            .map(|i| {
                model.mean[i]
                    + (0..2)
                        .map(|j| model.basis[i][j] * model.beta[0][j])
                        .sum::<f64>()
            })
            .collect();
        for curves in &bundle.point_curves {
            for (got, want) in curves.iter().zip(&expected) {
                assert!((got - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn variance_recombination_identity() {
        let mut rng = StdRng::seed_from_u64(13);
        let model = synthetic_component_model(40, 10, 3, move |t, j| {
            0.1 * t as f64 * (j == 0) as i32 as f64
                + ((t * (j + 2)) as f64 * 0.37).sin()
        });
        let _ = &mut rng;
        let bundle = point_forecast(&model, 6).unwrap();
        for step in 0..6 {
            for i in 0..10 {
                let base = model.sigma2_mu[i] + model.v[i] + model.sigma2_obs[i];
                let zsum: f64 = (0..3)
                    .map(|k| model.basis[i][k].powi(2) * bundle.coeff_variances[step][k])
                    .sum();
                let total = bundle.variance_curves[step][i];
                assert!((total - base - zsum).abs() < 1e-10);
                assert!(total > 0.0);
            }
        }
    }

    #[test]
    fn two_stage_oracle_agreement() {
        // Recombination must equal a hand-rolled pipeline: fit each beta
        // series, extrapolate, then assemble mean + Z * beta by hand.
        let model = synthetic_component_model(35, 6, 2, |t, j| {
            if j == 0 { 0.2 * t as f64 } else { ((t as f64) * 0.5).sin() }
        });
        let bundle = point_forecast(&model, 5).unwrap();
        for (k, cm) in bundle.coeff_models.iter().enumerate() {
            let own = fit_coeff_model(&model.beta_series(k)).unwrap();
            assert_eq!((own.p, own.d, own.q), (cm.p, cm.d, cm.q));
            let own_fc = forecast_coeff(&own, 5).unwrap();
            for (step, (mean, _)) in own_fc.iter().enumerate() {
                assert!((bundle.coeff_means[step][k] - mean).abs() < 1e-8);
            }
        }
        for step in 0..5 {
            for i in 0..6 {
                let want = model.mean[i]
                    + (0..2)
                        .map(|k| model.basis[i][k] * bundle.coeff_means[step][k])
                        .sum::<f64>();
                assert!((bundle.point_curves[step][i] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lc_forecast_closed_forms() {
        // Linear period index: forecast continues the line exactly.
        let n = 12;
        let mut k_t: Vec<f64> = (0..n).map(|t| -0.8 * t as f64).collect();
        let km = k_t.iter().sum::<f64>() / n as f64;
        for v in k_t.iter_mut() {
            *v -= km;
        }
        let model = LcModel {
            country: None,
            ages: (0..5).map(|a| a as f64).collect(),
            years: (2000..2000 + n as i32).collect(),
            a: vec![-4.0, -4.5, -5.0, -5.5, -6.0],
            b: vec![0.3, 0.25, 0.2, 0.15, 0.1],
            k_t: k_t.clone(),
            resid_var: vec![0.0; 5],
        };
        let fc = forecast_lc(&model, 6).unwrap();
        let last = *k_t.last().unwrap();
        for (h, km) in fc.k_mean.iter().enumerate() {
            assert!((km - (last - 0.8 * (h + 1) as f64)).abs() < 1e-10);
        }
        // Zero-drift-variance case: exactly linear differences.
        for v in &fc.k_variance {
            assert!(v.abs() < 1e-18);
        }

        // Closed form a + b (k_n + h delta) on noisy data.
        let mut rng = StdRng::seed_from_u64(14);
        let k_noisy: Vec<f64> = (0..n).map(|t| -0.8 * t as f64 + rng.gen_range(-0.3..0.3)).collect();
        let model2 = LcModel { k_t: k_noisy.clone(), ..model.clone() };
        let diffs: Vec<f64> = k_noisy.windows(2).map(|p| p[1] - p[0]).collect();
        let drift = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let fc2 = forecast_lc(&model2, 4).unwrap();
        for h in 1..=4 {
            let want_k = k_noisy.last().unwrap() + h as f64 * drift;
            for (x, (&a, &b)) in fc2.point_curves[h - 1]
                .iter()
                .zip(model2.a.iter().zip(&model2.b))
            {
                assert!((x - (a + b * want_k)).abs() < 1e-12);
            }
        }

        // b = 0 at an age: that age's forecast is constant a.
        let mut model3 = model2.clone();
        model3.b[2] = 0.0;
        let fc3 = forecast_lc(&model3, 3).unwrap();
        for row in &fc3.point_curves {
            assert!((row[2] - model3.a[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fit_arima(&[1.0, f64::NAN, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], 1, 0, 0, true).is_err());
        assert!(fit_coeff_model(&[1.0; 5]).is_err());
        let y: Vec<f64> = (0..30).map(|t| t as f64).collect();
        let model = fit_coeff_model(&y).unwrap();
        assert!(forecast_coeff(&model, 0).is_err());
    }
}

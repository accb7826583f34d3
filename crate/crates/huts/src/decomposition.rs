//! Functional decomposition of smoothed log-mortality surfaces.
//!
//! The signature-based fit computes, per age, the truncated signature of
//! that age's time series (basepoint + time + lead-lag embedded), stacks the
//! signatures into a matrix, extracts principal-component scores by SVD, and
//! regresses each year's centered curve on the resulting age basis. An FPCA
//! fit of the centered curves and a Lee-Carter fit of the raw log surface
//! provide baselines with the same downstream interface.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmd::LogMortalitySurface;
use crate::signature::{augment_path, path_signature, sig_length};
use crate::smoothing::SmoothSurface;

/// How the age basis was derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisMethod {
    /// PCA of per-age truncated signatures of order `m` (`sig_cols` feature
    /// columns after dropping the constant).
    Signature { m: usize, sig_cols: usize },
    /// Functional PCA of the centered smooth curves.
    Fpca,
}

impl BasisMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            BasisMethod::Signature { .. } => "huts",
            BasisMethod::Fpca => "hu",
        }
    }
}

/// A fitted basis-decomposition model (signature or FPCA variant):
/// mean curve, age basis, per-year coefficients, residuals, and the
/// variance components needed for forecasting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentModel {
    pub country: Option<String>,
    pub method: BasisMethod,
    /// Evaluation grid (observed ages).
    pub grid: Vec<f64>,
    pub years: Vec<i32>,
    pub k: usize,
    /// Mean curve over years, per grid point.
    pub mean: Vec<f64>,
    /// Age basis, `q` rows of `k` entries (columns mutually orthogonal).
    pub basis: Vec<Vec<f64>>,
    /// Singular values of the decomposed matrix, descending.
    pub singular_values: Vec<f64>,
    /// Coefficient series, `n` rows of `k` entries.
    pub beta: Vec<Vec<f64>>,
    /// Fit residuals, `n` rows of `q` entries.
    pub residuals: Vec<Vec<f64>>,
    /// Mean squared residual per grid point.
    pub v: Vec<f64>,
    /// Variance of the estimated mean curve per grid point.
    pub sigma2_mu: Vec<f64>,
    /// Forecast observational variance per grid point (constant in horizon).
    pub sigma2_obs: Vec<f64>,
    /// Standardized smoothing residuals, `n` rows of `q` entries.
    pub smooth_resid_std: Vec<Vec<f64>>,
    /// True when observational sigmas were estimated from smoothing
    /// residuals rather than death counts.
    pub sigma_from_residuals: bool,
}

impl ComponentModel {
    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn n_grid(&self) -> usize {
        self.grid.len()
    }

    /// Coefficient time series for component `k`.
    pub fn beta_series(&self, k: usize) -> Vec<f64> {
        self.beta.iter().map(|row| row[k]).collect()
    }

    /// Basis column `k` over the grid.
    pub fn basis_column(&self, k: usize) -> Vec<f64> {
        self.basis.iter().map(|row| row[k]).collect()
    }

    /// Fitted curve for year index `t`: mean + basis * beta_t (residual
    /// excluded).
    pub fn fitted_curve(&self, t: usize) -> Vec<f64> {
        (0..self.n_grid())
            .map(|i| {
                self.mean[i]
                    + (0..self.k)
                        .map(|k| self.basis[i][k] * self.beta[t][k])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Pointwise mean of the smoothed curves.
pub fn mean_curve(surface: &SmoothSurface) -> Result<Vec<f64>> {
    let n = surface.n_years();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "mean curve needs at least 2 years, got {n}"
        )));
    }
    let q = surface.n_grid();
    let mut mean = vec![0.0; q];
    for c in &surface.curves {
        for (m, v) in mean.iter_mut().zip(&c.values) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    Ok(mean)
}

/// Per-age truncated-signature features: row `i` is the signature of age
/// `i`'s embedded time series with the constant order-0 entry dropped.
pub fn signature_matrix(surface: &SmoothSurface, m: usize) -> Result<DMatrix<f64>> {
    let q = surface.n_grid();
    let cols = sig_length(3, m)? - 1;
    let mut s = DMatrix::zeros(q, cols);
    for i in 0..q {
        let series = surface.age_series(i);
        let sig = path_signature(&augment_path(&series)?, m)?;
        for (j, &c) in sig.feature_coeffs().iter().enumerate() {
            s[(i, j)] = c;
        }
    }
    Ok(s)
}

/// Thin SVD with singular values sorted descending, as `(U, s, V)` with
/// `M = U diag(s) V'`.
///
/// Computed by one-sided Jacobi rotations on the tall orientation.
/// nalgebra's iterative SVD fails to converge to full accuracy on some
/// small matrices (reconstruction errors around 1e-1 were observed on a
/// rank-deficient 16x5 input), and downstream fits need the factorization
/// to machine precision, so the decomposition is done locally. Jacobi is
/// fully deterministic and accurate for the modest sizes used here.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let transposed = m.nrows() < m.ncols();
    let mut a = if transposed { m.transpose() } else { m.clone() };
    let rows = a.nrows();
    let n = a.ncols();
    let mut v = DMatrix::identity(n, n);

    // Sweep until every column pair is numerically orthogonal.
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let alpha = a.column(p).dot(&a.column(p));
                let beta = a.column(q).dot(&a.column(q));
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let max_s = s.first().copied().unwrap_or(0.0);
    let left = DMatrix::from_fn(rows, n, |i, j| {
        let src = order[j];
        if norms[src] > max_s * f64::EPSILON {
            a[(i, src)] / norms[src]
        } else {
            0.0
        }
    });
    let right = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    if transposed {
        (right, s, left)
    } else {
        (left, s, right)
    }
}

/// Make each column's largest-magnitude entry positive, flipping the paired
/// right singular vector along with it.
fn fix_signs(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        let mut max_abs = 0.0;
        let mut sign = 1.0;
        for i in 0..u.nrows() {
            let val = u[(i, j)];
            if val.abs() > max_abs {
                max_abs = val.abs();
                sign = if val >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        if sign < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.nrows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
}

/// Effective rank given descending singular values.
fn effective_rank(singular: &[f64], rows: usize, cols: usize) -> usize {
    let tol = singular.first().copied().unwrap_or(0.0) * (rows.max(cols) as f64) * f64::EPSILON;
    singular.iter().filter(|&&v| v > tol).count()
}

/// Principal-component scores of a feature matrix.
///
/// Columns are mean-centered (unless `center` is false), then `Z = U Sigma`
/// truncated to `K` columns, with each column's largest-magnitude entry made
/// positive. Returns the scores and all singular values (descending).
pub fn svd_scores_opts(
    s: &DMatrix<f64>,
    k: usize,
    center: bool,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let q = s.nrows();
    let cols = s.ncols();
    if k > q.min(cols) {
        return Err(Error::Rank { requested: k, rank: q.min(cols) });
    }
    let mut c = s.clone();
    if center {
        for j in 0..cols {
            let mean = c.column(j).sum() / q as f64;
            for i in 0..q {
                c[(i, j)] -= mean;
            }
        }
    }
    let (mut u, singular, mut v) = thin_svd(&c);
    let rank = effective_rank(&singular, q, cols);
    if k > rank {
        return Err(Error::Rank { requested: k, rank });
    }
    fix_signs(&mut u, &mut v);
    let z = DMatrix::from_fn(q, k, |i, j| u[(i, j)] * singular[j]);
    Ok((z, singular))
}

/// [`svd_scores_opts`] with column centering on (the default).
pub fn svd_scores(s: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    svd_scores_opts(s, k, true)
}

/// Output of the year-wise least-squares regression on the age basis.
pub struct ScoreRegression {
    /// `n` rows of `k` coefficients.
    pub beta: Vec<Vec<f64>>,
    /// `n` rows of `q` residuals.
    pub residuals: Vec<Vec<f64>>,
    /// Mean squared residual per grid point.
    pub v: Vec<f64>,
    /// Variance of the mean-curve estimate per grid point.
    pub sigma2_mu: Vec<f64>,
}

/// Regress each year's centered curve on the basis columns.
///
/// The basis columns are orthogonal by construction, so the least-squares
/// solution reduces to per-column projections. `sigma2_mu` uses the
/// observational variances when they are trustworthy, else `v / n`.
pub fn regress_scores(
    z: &DMatrix<f64>,
    surface: &SmoothSurface,
    mean: &[f64],
) -> Result<ScoreRegression> {
    let q = surface.n_grid();
    let n = surface.n_years();
    let k = z.ncols();
    if z.nrows() != q {
        return Err(Error::Shape(format!(
            "basis has {} rows for a {q}-point grid",
            z.nrows()
        )));
    }
    let norms: Vec<f64> = (0..k).map(|j| z.column(j).dot(&z.column(j))).collect();
    if norms.iter().any(|&nz| nz <= 0.0 || !nz.is_finite()) {
        return Err(Error::Rank { requested: k, rank: norms.iter().filter(|&&v| v > 0.0).count() });
    }

    let mut beta = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut v = vec![0.0; q];
    for t in 0..n {
        let y: Vec<f64> = (0..q)
            .map(|i| surface.curves[t].values[i] - mean[i])
            .collect();
        let mut b = vec![0.0; k];
        for j in 0..k {
            let dot: f64 = (0..q).map(|i| z[(i, j)] * y[i]).sum();
            b[j] = dot / norms[j];
        }
        let mut e = vec![0.0; q];
        for i in 0..q {
            let fit: f64 = (0..k).map(|j| z[(i, j)] * b[j]).sum();
            e[i] = y[i] - fit;
            v[i] += e[i] * e[i];
        }
        beta.push(b);
        residuals.push(e);
    }
    for vi in v.iter_mut() {
        *vi /= n as f64;
    }

    let sigma2_mu = if surface.sigma_from_residuals {
        v.iter().map(|&vi| vi / n as f64).collect()
    } else {
        (0..q)
            .map(|i| {
                let sum: f64 = surface
                    .curves
                    .iter()
                    .map(|c| c.sigma[i] * c.sigma[i])
                    .sum();
                sum / (n as f64 * n as f64)
            })
            .collect()
    };

    Ok(ScoreRegression { beta, residuals, v, sigma2_mu })
}

/// Forecast observational variance: mean of the last `min(10, n)` years'
/// observational variances per grid point, constant in the horizon.
fn forecast_obs_variance(surface: &SmoothSurface) -> Vec<f64> {
    let n = surface.n_years();
    let q = surface.n_grid();
    let take = n.min(10);
    (0..q)
        .map(|i| {
            let sum: f64 = surface.curves[n - take..]
                .iter()
                .map(|c| c.sigma[i] * c.sigma[i])
                .sum();
            sum / take as f64
        })
        .collect()
}

fn assemble_model(
    surface: &SmoothSurface,
    method: BasisMethod,
    z: DMatrix<f64>,
    singular: Vec<f64>,
    country: Option<String>,
) -> Result<ComponentModel> {
    let mean = mean_curve(surface)?;
    let reg = regress_scores(&z, surface, &mean)?;
    let q = surface.n_grid();
    let n = surface.n_years();
    let k = z.ncols();
    let basis: Vec<Vec<f64>> = (0..q)
        .map(|i| (0..k).map(|j| z[(i, j)]).collect())
        .collect();
    let smooth_resid_std: Vec<Vec<f64>> = (0..n)
        .map(|t| (0..q).map(|i| surface.std_residuals[t * q + i]).collect())
        .collect();
    Ok(ComponentModel {
        country,
        method,
        grid: surface.grid.clone(),
        years: surface.years.clone(),
        k,
        mean,
        basis,
        singular_values: singular,
        beta: reg.beta,
        residuals: reg.residuals,
        v: reg.v,
        sigma2_mu: reg.sigma2_mu,
        sigma2_obs: forecast_obs_variance(surface),
        smooth_resid_std,
        sigma_from_residuals: surface.sigma_from_residuals,
    })
}

/// Fit the signature-basis model: signatures per age, SVD scores of the
/// signature matrix, year-wise regression.
///
/// The SVD is taken of the signature matrix directly, without column
/// centering. At order 2 the shuffle relations leave only five linearly
/// independent non-constant columns (the terminal value, its square, the
/// two time integrals, and the lead-lag area), so centering caps the rank
/// at 5 and the default six-component fit would always fail. The uncentered
/// matrix keeps the constant direction and has rank 6. Centering remains
/// available through [`fit_huts_opts`] for comparison runs.
pub fn fit_huts(surface: &SmoothSurface, m: usize, k: usize) -> Result<ComponentModel> {
    fit_huts_opts(surface, m, k, false)
}

/// [`fit_huts`] with explicit control over column centering of the
/// signature matrix before the SVD.
pub fn fit_huts_opts(
    surface: &SmoothSurface,
    m: usize,
    k: usize,
    center: bool,
) -> Result<ComponentModel> {
    let s = signature_matrix(surface, m)?;
    let sig_cols = s.ncols();
    let (z, singular) = svd_scores_opts(&s, k, center)?;
    assemble_model(surface, BasisMethod::Signature { m, sig_cols }, z, singular, None)
}

/// Fit the FPCA baseline: SVD of the centered year x grid matrix of smooth
/// curves; the basis columns are the unit-norm right singular vectors.
pub fn fit_fpca(surface: &SmoothSurface, k: usize) -> Result<ComponentModel> {
    let n = surface.n_years();
    let q = surface.n_grid();
    let mean = mean_curve(surface)?;
    let mut c = DMatrix::zeros(n, q);
    for t in 0..n {
        for i in 0..q {
            c[(t, i)] = surface.curves[t].values[i] - mean[i];
        }
    }
    if k > n.min(q) {
        return Err(Error::Rank { requested: k, rank: n.min(q) });
    }
    let (mut u, singular, mut v) = thin_svd(&c);
    let rank = effective_rank(&singular, n, q);
    if k > rank {
        return Err(Error::Rank { requested: k, rank });
    }
    // The basis lives in the right factor here; apply the sign convention to
    // it and keep the left factor consistent.
    fix_signs(&mut v, &mut u);
    let z = DMatrix::from_fn(q, k, |i, j| v[(i, j)]);
    assemble_model(surface, BasisMethod::Fpca, z, singular, None)
}

/// Linear interpolation of the basis columns at age `x`; exact at grid
/// points, error outside the grid.
pub fn basis_at(model: &ComponentModel, x: f64) -> Result<Vec<f64>> {
    let grid = &model.grid;
    let q = grid.len();
    if x < grid[0] || x > grid[q - 1] {
        return Err(Error::Domain(format!(
            "age {x} outside grid [{}, {}]",
            grid[0],
            grid[q - 1]
        )));
    }
    let j = match grid.iter().position(|&g| g >= x) {
        Some(0) => return Ok(model.basis[0].clone()),
        Some(j) => j,
        None => unreachable!("x is within the grid range"),
    };
    let (x0, x1) = (grid[j - 1], grid[j]);
    let w = (x - x0) / (x1 - x0);
    Ok((0..model.k)
        .map(|k| model.basis[j - 1][k] * (1.0 - w) + model.basis[j][k] * w)
        .collect())
}

/// Lee-Carter fit: age level, age sensitivity and period index with the
/// usual sum-to-one / sum-to-zero normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcModel {
    pub country: Option<String>,
    pub ages: Vec<f64>,
    pub years: Vec<i32>,
    /// Average log rate per age.
    pub a: Vec<f64>,
    /// Age response to the period index, summing to 1.
    pub b: Vec<f64>,
    /// Period index, summing to 0.
    pub k_t: Vec<f64>,
    /// Residual variance per age around the bilinear fit.
    pub resid_var: Vec<f64>,
}

/// Fit the Lee-Carter model on the raw log surface via the leading singular
/// triple of the row-centered matrix.
pub fn fit_lc(surface: &LogMortalitySurface) -> Result<LcModel> {
    let p = surface.n_ages();
    let n = surface.n_years();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "Lee-Carter needs at least 3 years, got {n}"
        )));
    }
    let mut a = vec![0.0; p];
    let mut c = DMatrix::zeros(p, n);
    for x in 0..p {
        let mut mean = 0.0;
        for t in 0..n {
            mean += surface.value(x, t);
        }
        mean /= n as f64;
        a[x] = mean;
        for t in 0..n {
            c[(x, t)] = surface.value(x, t) - mean;
        }
    }
    let (u, singular, v) = thin_svd(&c);
    let s1 = singular[0];
    if s1 <= f64::EPSILON * (p.max(n) as f64) {
        return Err(Error::Fit("degenerate surface: zero leading singular value".into()));
    }

    let u1: Vec<f64> = (0..p).map(|x| u[(x, 0)]).collect();
    let v1: Vec<f64> = (0..n).map(|t| v[(t, 0)]).collect();
    let sum_u: f64 = u1.iter().sum();
    if sum_u.abs() < 1e-12 {
        return Err(Error::Fit("Lee-Carter b normalization degenerate".into()));
    }
    let mut b: Vec<f64> = u1.iter().map(|&v| v / sum_u).collect();
    let mut k_t: Vec<f64> = v1.iter().map(|&v| v * s1 * sum_u).collect();

    // Sign: k_t positively correlated with the year-mean log rate.
    let year_means: Vec<f64> = (0..n)
        .map(|t| (0..p).map(|x| surface.value(x, t)).sum::<f64>() / p as f64)
        .collect();
    let ym_mean = year_means.iter().sum::<f64>() / n as f64;
    let corr: f64 = k_t
        .iter()
        .zip(&year_means)
        .map(|(&k, &m)| k * (m - ym_mean))
        .sum();
    if corr < 0.0 {
        for v in b.iter_mut() {
            *v = -*v;
        }
        for v in k_t.iter_mut() {
            *v = -*v;
        }
    }

    // Recentre k and absorb the shift into a.
    let k_mean = k_t.iter().sum::<f64>() / n as f64;
    for v in k_t.iter_mut() {
        *v -= k_mean;
    }
    for (av, bv) in a.iter_mut().zip(&b) {
        *av += bv * k_mean;
    }

    let mut resid_var = vec![0.0; p];
    for x in 0..p {
        for t in 0..n {
            let e = surface.value(x, t) - a[x] - b[x] * k_t[t];
            resid_var[x] += e * e;
        }
        resid_var[x] /= n as f64;
    }

    Ok(LcModel {
        country: Some(surface.code.clone()),
        ages: surface.ages.iter().map(|&v| v as f64).collect(),
        years: surface.years.clone(),
        a,
        b,
        k_t,
        resid_var,
    })
}

/// Versioned on-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    #[serde(flatten)]
    pub model: ModelKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelKind {
    #[serde(rename = "component")]
    Component(ComponentModel),
    #[serde(rename = "lee_carter")]
    LeeCarter(LcModel),
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

impl ModelDocument {
    pub fn component(model: ComponentModel) -> Self {
        Self { schema_version: MODEL_SCHEMA_VERSION, model: ModelKind::Component(model) }
    }

    pub fn lee_carter(model: LcModel) -> Self {
        Self { schema_version: MODEL_SCHEMA_VERSION, model: ModelKind::LeeCarter(model) }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("model serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: ModelDocument = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("model deserialization failed: {e}")))?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "unsupported model schema version {}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}

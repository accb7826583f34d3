//! Truncated path signatures of piecewise-linear paths.
//!
//! A path here is a finite sequence of points in `R^d`, interpreted as the
//! piecewise-linear curve through them. Its truncated signature collects all
//! iterated-integral coefficients up to a chosen order `m`, stored densely in
//! graded lexicographic multi-index order with the empty index first.
//!
//! Signatures of single segments have a closed form (the truncated tensor
//! exponential of the increment); signatures of whole paths are assembled by
//! folding Chen's identity over the segments. The [`oracle`] submodule holds
//! an independent quadrature-based reference used only for verification.

use crate::error::{Error, Result};

/// Number of signature coefficients up to order `m` in dimension `d`,
/// i.e. `(d^{m+1} - 1) / (d - 1)`, including the order-0 constant.
pub fn sig_length(d: usize, m: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::Shape("dimension must be positive".into()));
    }
    let mut total: usize = 0;
    let mut block: usize = 1;
    for _ in 0..=m {
        total = total
            .checked_add(block)
            .ok_or_else(|| Error::Size(format!("sig_length(d={d}, m={m}) overflows usize")))?;
        block = block
            .checked_mul(d)
            .ok_or_else(|| Error::Size(format!("sig_length(d={d}, m={m}) overflows usize")))?;
    }
    Ok(total)
}

/// Offset of the order-`k` block within the dense coefficient layout.
fn block_offset(d: usize, k: usize) -> usize {
    // (d^k - 1) / (d - 1), computed additively to match sig_length.
    let mut total = 0;
    let mut block = 1;
    for _ in 0..k {
        total += block;
        block *= d;
    }
    total
}

/// A piecewise-linear path in `R^d`, stored as row-major point coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dim: usize,
    points: Vec<f64>,
    /// Number of original observations the path was built from (equals the
    /// point count for paths constructed directly).
    source_len: usize,
}

impl Path {
    /// Build a path from explicit points. `points[j]` is the j-th point.
    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::Shape(format!(
                    "point has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            flat.extend_from_slice(p);
        }
        Ok(Self { dim, points: flat, source_len: points.len() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of source observations behind this path.
    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }
}

/// Basepoint + time + lead-lag embedding of a scalar series.
///
/// The result is a 3-dimensional path (time, lead, lag): the zero basepoint,
/// then the lead-lag interleaving `(f_1,f_1), (f_2,f_1), (f_2,f_2), ...,
/// (f_n,f_n)`, for `2n` points in total. The time coordinate of point `j`
/// (0-based) is `j / (2n - 1)`.
pub fn augment_path(series: &[f64]) -> Result<Path> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "lead-lag embedding needs at least 2 observations, got {n}"
        )));
    }
    let total = 2 * n;
    let scale = 1.0 / (total - 1) as f64;
    let mut points = Vec::with_capacity(total * 3);
    points.extend_from_slice(&[0.0, 0.0, 0.0]);
    for j in 1..total {
        let t = j as f64 * scale;
        // j = 1, 3, 5, ... are the diagonal points (f_i, f_i);
        // j = 2, 4, ... are the lead steps (f_{i+1}, f_i).
        let (lead, lag) = if j % 2 == 1 {
            (series[(j - 1) / 2], series[(j - 1) / 2])
        } else {
            (series[j / 2], series[j / 2 - 1])
        };
        points.extend_from_slice(&[t, lead, lag]);
    }
    Ok(Path { dim: 3, points, source_len: n })
}

/// Dense truncated signature: all coefficients of orders `0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSignature {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl TruncatedSignature {
    /// The identity element (1, 0, 0, ...).
    pub fn identity(dim: usize, order: usize) -> Result<Self> {
        let len = sig_length(dim, order)?;
        let mut coeffs = vec![0.0; len];
        coeffs[0] = 1.0;
        Ok(Self { dim, order, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// All coefficients in graded lexicographic order, empty index first.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficients of orders `1..=m` only (the constant dropped), as used
    /// for regression features.
    pub fn feature_coeffs(&self) -> &[f64] {
        &self.coeffs[1..]
    }

    /// Position of a multi-index (letters in `1..=d`) in the dense layout.
    pub fn position(&self, index: &[usize]) -> Result<usize> {
        let k = index.len();
        if k > self.order {
            return Err(Error::Shape(format!(
                "index of length {k} exceeds truncation order {}",
                self.order
            )));
        }
        let mut pos = 0;
        for &i in index {
            if i < 1 || i > self.dim {
                return Err(Error::Shape(format!("letter {i} outside 1..={}", self.dim)));
            }
            pos = pos * self.dim + (i - 1);
        }
        Ok(block_offset(self.dim, k) + pos)
    }

    /// Coefficient for a multi-index (letters in `1..=d`).
    pub fn coeff(&self, index: &[usize]) -> Result<f64> {
        Ok(self.coeffs[self.position(index)?])
    }
}

/// Truncated tensor exponential of a single linear segment: the coefficient
/// of `(i_1..i_k)` is `increment[i_1] * ... * increment[i_k] / k!`.
pub fn segment_signature(increment: &[f64], m: usize) -> Result<TruncatedSignature> {
    let d = increment.len();
    let len = sig_length(d, m)?;
    let mut coeffs = vec![0.0; len];
    coeffs[0] = 1.0;
    let mut prev_off = 0;
    let mut prev_len = 1;
    for k in 1..=m {
        let off = prev_off + prev_len;
        for a in 0..prev_len {
            let base = coeffs[prev_off + a] / k as f64;
            for (i, &dx) in increment.iter().enumerate() {
                coeffs[off + a * d + i] = base * dx;
            }
        }
        prev_off = off;
        prev_len *= d;
    }
    Ok(TruncatedSignature { dim: d, order: m, coeffs })
}

/// Chen's identity: truncated tensor product of two signatures.
///
/// The coefficient of multi-index `I` in the result is the sum over all
/// splits `I = (prefix, suffix)` of `a[prefix] * b[suffix]`.
pub fn chen_concat(
    a: &TruncatedSignature,
    b: &TruncatedSignature,
) -> Result<TruncatedSignature> {
    if a.dim != b.dim || a.order != b.order {
        return Err(Error::Shape(format!(
            "signature shapes differ: (d={}, m={}) vs (d={}, m={})",
            a.dim, a.order, b.dim, b.order
        )));
    }
    let d = a.dim;
    let m = a.order;
    let mut coeffs = vec![0.0; a.coeffs.len()];
    for k in 0..=m {
        let out_off = block_offset(d, k);
        let mut ja_len = 1; // d^j for the prefix order j
        for j in 0..=k {
            let a_off = block_offset(d, j);
            let b_off = block_offset(d, k - j);
            let jb_len = d.pow((k - j) as u32);
            for ia in 0..ja_len {
                let av = a.coeffs[a_off + ia];
                if av == 0.0 {
                    continue;
                }
                let row = out_off + ia * jb_len;
                for ib in 0..jb_len {
                    coeffs[row + ib] += av * b.coeffs[b_off + ib];
                }
            }
            ja_len *= d;
        }
    }
    Ok(TruncatedSignature { dim: d, order: m, coeffs })
}

/// Signature of a piecewise-linear path, truncated at order `m`: the fold of
/// [`chen_concat`] over the segment signatures of successive increments.
pub fn path_signature(path: &Path, m: usize) -> Result<TruncatedSignature> {
    if path.len() < 2 {
        return Err(Error::InsufficientData(
            "path signature needs at least 2 points".into(),
        ));
    }
    let d = path.dim;
    let mut acc = TruncatedSignature::identity(d, m)?;
    let mut inc = vec![0.0; d];
    for j in 1..path.len() {
        let prev = path.point(j - 1);
        let next = path.point(j);
        for i in 0..d {
            inc[i] = next[i] - prev[i];
        }
        let seg = segment_signature(&inc, m)?;
        acc = chen_concat(&acc, &seg)?;
    }
    Ok(acc)
}

pub mod oracle {
    //! Quadrature reference for signature coefficients.
    //!
    //! Computes every iterated integral directly along a fine partition of
    //! the path's parametrization, independent of the Chen-identity fold.
    //! Intended for tests only; cost grows linearly in `steps` and in the
    //! number of coefficients.

    use super::{block_offset, sig_length, Path, TruncatedSignature};
    use crate::error::Result;

    /// Evaluate every signature coefficient up to order `m` by iterated
    /// quadrature with `steps` uniform parameter increments.
    ///
    /// Each step updates the running integrals in graded order with a
    /// trapezoidal rule, so the error decays quadratically in the step size.
    pub fn oracle_signature(path: &Path, m: usize, steps: usize) -> Result<TruncatedSignature> {
        let d = path.dim();
        let len = sig_length(d, m)?;
        let mut old = vec![0.0; len];
        let mut new = vec![0.0; len];
        old[0] = 1.0;
        new[0] = 1.0;

        let nseg = path.len() - 1;
        let mut x_prev = interp(path, 0.0);
        for s in 0..steps {
            let u1 = (s + 1) as f64 / steps as f64;
            let x_next = interp(path, u1 * nseg as f64);
            for k in 1..=m {
                let off = block_offset(d, k);
                let prev_off = block_offset(d, k - 1);
                let prev_len = d.pow((k - 1) as u32);
                for a in 0..prev_len {
                    let avg = 0.5 * (old[prev_off + a] + new[prev_off + a]);
                    for i in 0..d {
                        let idx = off + a * d + i;
                        new[idx] = old[idx] + avg * (x_next[i] - x_prev[i]);
                    }
                }
            }
            old.copy_from_slice(&new);
            x_prev = x_next;
        }
        Ok(TruncatedSignature { dim: d, order: m, coeffs: new })
    }

    /// Piecewise-linear interpolation at segment-scaled parameter `s`
    /// (so `s = j` is the j-th point).
    fn interp(path: &Path, s: f64) -> Vec<f64> {
        let nseg = path.len() - 1;
        let j = (s.floor() as usize).min(nseg - 1);
        let frac = s - j as f64;
        let a = path.point(j);
        let b = path.point(j + 1);
        a.iter().zip(b).map(|(&x, &y)| x + frac * (y - x)).collect()
    }
}

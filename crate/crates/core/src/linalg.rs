//! Thin singular value decomposition by Householder QR followed by one-sided
//! (Hestenes) Jacobi rotations on the small triangular factor.
//!
//! The matricized cubes handled here are short and wide (`bands × pixels`),
//! so the QR step reduces the Jacobi work to a `bands × bands` problem.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix { rows: self.cols, cols: self.rows, data: out }
    }
}

#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × k` left singular vectors; columns for zero singular values are zero.
    pub u: Matrix,
    /// `k = min(rows, cols)` values, descending.
    pub singular_values: Vec<f64>,
    /// `cols × k` right singular vectors.
    pub v: Matrix,
}

/// Column-major tall matrix with `rows >= cols`.
struct Tall {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tall {
    fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }
}

/// Upper-triangular factor of a Householder QR, returned column-major `n × n`.
fn householder_r(mut a: Tall) -> Vec<f64> {
    let (m, n) = (a.rows, a.cols);
    let mut v = vec![0.0; m];
    for k in 0..n {
        let len = m - k;
        let (head, tail) = a.data.split_at_mut((k + 1) * m);
        let colk = &mut head[k * m..];
        let x = &colk[k..];
        let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        v[..len].copy_from_slice(x);
        v[0] -= alpha;
        let vn2: f64 = v[..len].iter().map(|t| t * t).sum();
        colk[k] = alpha;
        colk[k + 1..].iter_mut().for_each(|t| *t = 0.0);
        if vn2 == 0.0 {
            continue;
        }
        for colj in tail.chunks_exact_mut(m) {
            let seg = &mut colj[k..];
            let s: f64 = seg.iter().zip(&v[..len]).map(|(a, b)| a * b).sum();
            let f = 2.0 * s / vn2;
            seg.iter_mut().zip(&v[..len]).for_each(|(a, b)| *a -= f * b);
        }
    }
    let mut r = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..=j.min(m - 1) {
            r[j * n + i] = a.data[j * m + i];
        }
    }
    r
}

/// One-sided Jacobi on a column-major square matrix `a` (`n × n`).
/// Returns (column norms, accumulated rotations `J` column-major) such that
/// `a·J` has mutually orthogonal columns.
fn one_sided_jacobi(a: &mut [f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut j = vec![0.0; n * n];
    for i in 0..n {
        j[i * n + i] = 1.0;
    }
    // Columns below roundoff relative to the whole matrix are treated as zero;
    // rotating them only churns denormals.
    let negligible = f64::EPSILON * f64::EPSILON * a.iter().map(|v| v * v).sum::<f64>();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let (x, y) = (a[p * n + i], a[q * n + i]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0
                    || alpha.min(beta) <= negligible
                    || gamma.abs() <= f64::EPSILON * alpha.sqrt() * beta.sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut *a, &mut j] {
                    for i in 0..n {
                        let (x, y) = (m[p * n + i], m[q * n + i]);
                        m[p * n + i] = c * x - s * y;
                        m[q * n + i] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!("Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")));
    }
    let norms = (0..n).map(|c| a[c * n..(c + 1) * n].iter().map(|t| t * t).sum::<f64>().sqrt()).collect();
    Ok((norms, j))
}

/// Singular values (descending) and right singular vectors (column-major,
/// matching order) of a tall matrix.
fn tall_right_svd(tall: Tall) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = tall.cols;
    if tall.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD input contains non-finite values".into()));
    }
    let mut r = householder_r(tall);
    let (sigma, j) = one_sided_jacobi(&mut r, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let sorted_sigma = order.iter().map(|&i| sigma[i]).collect();
    let mut sorted_j = Vec::with_capacity(n * n);
    for &i in &order {
        sorted_j.extend_from_slice(&j[i * n..(i + 1) * n]);
    }
    Ok((sorted_sigma, sorted_j))
}

/// Presents `m` or its transpose as a column-major tall matrix. Returns the
/// matrix and whether it was transposed.
fn as_tall(m: &Matrix) -> (Tall, bool) {
    if m.rows < m.cols {
        // Column-major storage of mᵀ is exactly m's row-major buffer.
        (Tall { rows: m.cols, cols: m.rows, data: m.data.clone() }, true)
    } else {
        let t = m.transpose();
        (Tall { rows: m.rows, cols: m.cols, data: t.data }, false)
    }
}

pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.data.is_empty() {
        return Ok(Vec::new());
    }
    let (tall, _) = as_tall(m);
    Ok(tall_right_svd(tall)?.0)
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    let k = m.rows.min(m.cols);
    if k == 0 {
        return Ok(Svd { u: Matrix::zeros(m.rows, 0), singular_values: Vec::new(), v: Matrix::zeros(m.cols, 0) });
    }
    let (tall, transposed) = as_tall(m);
    let (tr, tc) = (tall.rows, tall.cols);
    let tall_copy = Tall { rows: tr, cols: tc, data: tall.data.clone() };
    let (sigma, j) = tall_right_svd(tall)?;
    // Left vectors of the tall matrix: tall · J · Σ⁻¹.
    let mut left = Matrix::zeros(tr, k);
    for c in 0..k {
        if sigma[c] == 0.0 {
            continue;
        }
        let jc = &j[c * k..(c + 1) * k];
        for r in 0..tr {
            let mut acc = 0.0;
            for (p, &w) in jc.iter().enumerate() {
                acc += tall_copy.col(p)[r] * w;
            }
            left.data[r * k + c] = acc / sigma[c];
        }
    }
    let mut right = Matrix::zeros(tc, k);
    for c in 0..k {
        for r in 0..tc {
            right.data[r * k + c] = j[c * k + r];
        }
    }
    Ok(if transposed {
        Svd { u: right, singular_values: sigma, v: left }
    } else {
        Svd { u: left, singular_values: sigma, v: right }
    })
}

/// Singular value soft-thresholding `U·max(Σ − γ, 0)·Vᵀ`.
///
/// Evaluated as `W·diag(f)·Wᵀ` applied on the short side, with `W` the
/// singular vectors on that side and `fᵢ = max(σᵢ − γ, 0)/σᵢ`, so the long
/// singular vectors are never formed.
pub fn singular_value_threshold(m: &Matrix, gamma: f64) -> Result<Matrix> {
    let (tall, transposed) = as_tall(m);
    let k = tall.cols;
    let (sigma, w) = tall_right_svd(tall)?;
    let factors: Vec<f64> = sigma.iter().map(|&s| if s > gamma { (s - gamma) / s } else { 0.0 }).collect();
    // kernel = W diag(f) Wᵀ, k × k symmetric
    let mut kernel = vec![0.0; k * k];
    for (c, &f) in factors.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        let wc = &w[c * k..(c + 1) * k];
        for a in 0..k {
            let fa = f * wc[a];
            for b in 0..k {
                kernel[a * k + b] += fa * wc[b];
            }
        }
    }
    let mut out = Matrix::zeros(m.rows, m.cols);
    if transposed {
        // m is k × n: out = kernel · m
        for a in 0..k {
            let orow = &mut out.data[a * m.cols..(a + 1) * m.cols];
            for b in 0..k {
                let kv = kernel[a * k + b];
                if kv == 0.0 {
                    continue;
                }
                let mrow = &m.data[b * m.cols..(b + 1) * m.cols];
                orow.iter_mut().zip(mrow).for_each(|(o, &x)| *o += kv * x);
            }
        }
    } else {
        // m is n × k: out = m · kernel
        for r in 0..m.rows {
            let mrow = &m.data[r * k..(r + 1) * k];
            let orow = &mut out.data[r * k..(r + 1) * k];
            for (b, &x) in mrow.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let krow = &kernel[b * k..(b + 1) * k];
                orow.iter_mut().zip(krow).for_each(|(o, &kv)| *o += x * kv);
            }
        }
    }
    Ok(out)
}

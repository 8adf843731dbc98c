//! Dense complex linear algebra shared by every solver path: ordered
//! orthonormal bases, Hermitian eigendecompositions, real nullspaces,
//! Kronecker/vec machinery and PSD inverse square roots.
//!
//! Matrices here are small (a few hundred rows at most), so everything is
//! dense and every routine is a pure function.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Default relative tolerance for rank / independence decisions.
pub const RANK_TOL: f64 = 1e-7;

/// Relative tolerance below which a matrix is accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("degenerate span: no nonzero input vector")]
    DegenerateSpan,
    #[error("matrix is not Hermitian within tolerance (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("eigensolver failed to converge")]
    ConvergenceFailure,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Largest entry magnitude, used to scale relative tolerances.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// True if `max|H - H^H| <= tol * max|H|`.
pub fn is_hermitian(h: &CMat, rel_tol: f64) -> bool {
    hermitian_deviation(h) <= rel_tol * max_abs(h)
}

fn hermitian_deviation(h: &CMat) -> f64 {
    if !h.is_square() {
        return f64::INFINITY;
    }
    let mut dev: f64 = 0.0;
    for j in 0..h.ncols() {
        for i in 0..=j {
            dev = dev.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    dev
}

/// (H + H^H)/2.
pub fn hermitian_part(h: &CMat) -> CMat {
    (h + h.adjoint()).scale(0.5)
}

/// Orthonormal basis of the span of `vectors`, built by modified
/// Gram-Schmidt in input order: the first vector that is independent (up to
/// `tol`, relative) defines the first column. Input order is semantic for
/// the callers, so no pivoting is done.
pub fn orthonormal_basis(vectors: &[CVec], tol: f64) -> Result<CMat, KernelError> {
    assert!(tol > 0.0 && tol < 1.0, "tol must lie in (0, 1)");
    let m = vectors
        .first()
        .ok_or(KernelError::DegenerateSpan)?
        .len();
    for v in vectors {
        if v.len() != m {
            return Err(KernelError::DimensionMismatch(format!(
                "expected length {m}, got {}",
                v.len()
            )));
        }
    }
    let mut cols: Vec<CVec> = Vec::new();
    for v in vectors {
        let norm_in = v.norm();
        if norm_in == 0.0 {
            continue;
        }
        let mut r = v.clone();
        // Two projection passes keep the basis orthonormal to ~1e-15 even
        // for nearly dependent inputs.
        for _ in 0..2 {
            for u in &cols {
                let c = u.dotc(&r);
                r -= u * c;
            }
        }
        if r.norm() > tol * norm_in {
            let n = r.norm();
            cols.push(r / C64::new(n, 0.0));
        }
    }
    if cols.is_empty() {
        return Err(KernelError::DegenerateSpan);
    }
    Ok(CMat::from_columns(&cols))
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Eigenvalues in descending order.
    pub values: RVec,
    /// Orthonormal eigenvectors, column k pairs with `values[k]`; each
    /// column is phase-normalized so its first component of largest
    /// magnitude is real positive.
    pub vectors: CMat,
    /// Count of eigenvalues above `tol * max(lambda_max, 0)`.
    pub rank: usize,
}

/// Decompose a Hermitian matrix, with a deterministic eigenvector phase
/// convention so downstream closed forms are reproducible bit for bit.
pub fn hermitian_eig(h: &CMat, tol: f64) -> Result<HermitianEig, KernelError> {
    if !h.is_square() {
        return Err(KernelError::DimensionMismatch(format!(
            "{}x{} is not square",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = max_abs(h);
    let dev = hermitian_deviation(h);
    if dev > HERMITIAN_TOL * scale {
        return Err(KernelError::NotHermitian(dev));
    }
    let n = h.nrows();
    if n == 0 {
        return Err(KernelError::DimensionMismatch("empty matrix".into()));
    }
    let hs = hermitian_part(h);
    let se = hs
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or(KernelError::ConvergenceFailure)?;

    // Sort descending; stable so equal eigenvalues keep solver order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let mut values = RVec::zeros(n);
    let mut vectors = CMat::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        values[k] = se.eigenvalues[src];
        let mut col: CVec = se.eigenvectors.column(src).into_owned();
        normalize_phase(&mut col);
        vectors.set_column(k, &col);
    }

    // Reconstruction check guards against a silently bad decomposition.
    let rec = &vectors * RMat::from_diagonal(&values).map(|v| C64::new(v, 0.0)) * vectors.adjoint();
    if max_abs(&(&rec - &hs)) > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(KernelError::ConvergenceFailure);
    }

    let thr = tol * values[0].max(0.0);
    let rank = values.iter().filter(|&&v| v > thr).count();
    Ok(HermitianEig {
        values,
        vectors,
        rank,
    })
}

/// Rotate the global phase so the first component of largest magnitude is
/// real positive.
fn normalize_phase(v: &mut CVec) {
    let mut best = 0usize;
    let mut best_mag = 0.0f64;
    for (i, c) in v.iter().enumerate() {
        let mag = c.norm();
        if mag > best_mag {
            best_mag = mag;
            best = i;
        }
    }
    if best_mag > 0.0 {
        let phase = v[best] / C64::new(best_mag, 0.0);
        let rot = phase.conj();
        for c in v.iter_mut() {
            *c *= rot;
        }
        // Force the pivot exactly real.
        v[best] = C64::new(v[best].re, 0.0);
    }
}

/// Orthonormal basis of `{x : Ax = 0}` for a real matrix, computed from the
/// Gram matrix `A^T A`. Columns are ordered by ascending singular value of
/// `A`, which makes the "first basis vector" choice of callers
/// deterministic. May have zero columns.
pub fn nullspace_real(a: &RMat, tol: f64) -> RMat {
    let q = a.ncols();
    let gram = a.transpose() * a;
    let se = gram
        .symmetric_eigen();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&x, &y| {
        se.eigenvalues[x]
            .partial_cmp(&se.eigenvalues[y])
            .expect("eigenvalues are finite")
    });
    let sigma_max = se
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.max(0.0)))
        .sqrt();
    let mut cols: Vec<RVec> = Vec::new();
    for &idx in &order {
        let sigma = se.eigenvalues[idx].max(0.0).sqrt();
        if sigma <= tol * sigma_max {
            let mut col: RVec = se.eigenvectors.column(idx).into_owned();
            // Deterministic sign: first component of largest magnitude positive.
            let mut best = 0usize;
            let mut best_mag = 0.0f64;
            for (i, &c) in col.iter().enumerate() {
                if c.abs() > best_mag {
                    best_mag = c.abs();
                    best = i;
                }
            }
            if col[best] < 0.0 {
                col.neg_mut();
            }
            cols.push(col);
        }
    }
    if cols.is_empty() {
        RMat::zeros(q, 0)
    } else {
        RMat::from_columns(&cols)
    }
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec_mat(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_mat`].
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "vector length must equal rows*cols");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Hermitian `H^{-1/2}` of a positive definite matrix.
pub fn inv_sqrt_psd(h: &CMat, tol: f64) -> Result<CMat, KernelError> {
    let eig = hermitian_eig(h, tol)?;
    let n = h.nrows();
    let lam_max = eig.values[0];
    let lam_min = eig.values[n - 1];
    if lam_max <= 0.0 || lam_min <= tol * lam_max {
        return Err(KernelError::NotPositiveDefinite);
    }
    let d = RMat::from_diagonal(&eig.values.map(|v| 1.0 / v.sqrt()));
    let out = &eig.vectors * d.map(|v| C64::new(v, 0.0)) * eig.vectors.adjoint();
    Ok(hermitian_part(&out))
}

/// Convenience constructor for complex matrices from (re, im) pairs in
/// row-major order.
pub fn cmat_from_rows(rows: usize, cols: usize, entries: &[(f64, f64)]) -> CMat {
    assert_eq!(entries.len(), rows * cols);
    CMat::from_row_slice(
        rows,
        cols,
        &entries
            .iter()
            .map(|&(re, im)| C64::new(re, im))
            .collect::<Vec<_>>(),
    )
}

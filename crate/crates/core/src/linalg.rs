//! Dense symmetric eigensolver backend and small matrix utilities.
//!
//! - full decompositions go through LAPACK `dsyevd` (via ndarray-linalg)
//! - partial decompositions go through ranged LAPACK `dsyevr`
//! - eigenvalues are returned ascending for `Smallest`, descending for `Largest`
//! - eigenvector columns get a deterministic sign (largest-magnitude entry
//!   positive, ties broken by lowest index)
//!
//! All eigensolver entry points assume a symmetric input; callers validate
//! symmetry (the row-major buffer is handed to LAPACK as column-major, which
//! is only sound when A = A^T).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};

/// Which end of the spectrum a partial decomposition resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SpectrumSide {
    Smallest,
    Largest,
}

/// Max absolute deviation from symmetry.
pub fn symmetry_deviation(a: &ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    dev
}

pub fn check_symmetric(a: &ArrayView2<f64>, tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare(a.nrows(), a.ncols()));
    }
    let max_dev = symmetry_deviation(a);
    if max_dev > tol {
        return Err(Error::NotSymmetric { max_dev, tol });
    }
    Ok(())
}

/// Replace A by (A + A^T) / 2. Removes round-off asymmetry after products.
pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}

/// Deterministic eigenvector orientation: the entry of largest magnitude in
/// each column is made positive; on exact magnitude ties the lowest index
/// decides.
pub fn canonicalize_signs(vecs: &mut Array2<f64>) {
    for mut col in vecs.axis_iter_mut(Axis(1)) {
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, &v) in col.iter().enumerate() {
            let a = v.abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
pub fn eigh_full(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (vals, vecs) = a
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigensolver(format!("dsyevd: {e}")))?;
    Ok((vals, vecs))
}

/// Partial symmetric eigendecomposition via ranged `dsyevr`: the `m`
/// eigenpairs at the requested end of the spectrum. Ascending for
/// `Smallest`, descending for `Largest`.
pub fn eigh_partial(
    a: &Array2<f64>,
    m: usize,
    side: SpectrumSide,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare(n, a.ncols()));
    }
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "requested {m} eigenpairs from a {n} x {n} matrix"
        )));
    }
    let (il, iu) = match side {
        SpectrumSide::Smallest => (1, m as i32),
        SpectrumSide::Largest => ((n - m + 1) as i32, n as i32),
    };
    // Row-major symmetric buffer doubles as column-major; dsyevr destroys it.
    let mut af: Vec<f64> = a.iter().cloned().collect();
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * m];
    let mut isuppz = vec![0i32; 2 * m];
    let mut found = 0i32;
    let mut info = 0i32;
    let mut work = vec![0.0; 1];
    let mut iwork = vec![0i32; 1];
    unsafe {
        lapack::dsyevr(
            b'V', b'I', b'L', n as i32, &mut af, n as i32, 0.0, 0.0, il, iu, 0.0, &mut found,
            &mut w, &mut z, n as i32, &mut isuppz, &mut work, -1, &mut iwork, -1, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(format!(
            "dsyevr workspace query failed with info = {info}"
        )));
    }
    let lwork = work[0] as i32;
    let liwork = iwork[0];
    work = vec![0.0; lwork as usize];
    iwork = vec![0i32; liwork as usize];
    unsafe {
        lapack::dsyevr(
            b'V', b'I', b'L', n as i32, &mut af, n as i32, 0.0, 0.0, il, iu, 0.0, &mut found,
            &mut w, &mut z, n as i32, &mut isuppz, &mut work, lwork, &mut iwork, liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(format!("dsyevr failed with info = {info}")));
    }
    if found as usize != m {
        return Err(Error::Eigensolver(format!(
            "dsyevr resolved {found} of {m} requested eigenpairs"
        )));
    }
    // z is column-major n x m: eigenvector j occupies z[j*n .. (j+1)*n].
    let mut vals = Array1::zeros(m);
    let mut vecs = Array2::zeros((n, m));
    for j in 0..m {
        // LAPACK returns the range ascending; flip for Largest so the leading
        // pair comes first.
        let dst = match side {
            SpectrumSide::Smallest => j,
            SpectrumSide::Largest => m - 1 - j,
        };
        vals[dst] = w[j];
        for i in 0..n {
            vecs[[i, dst]] = z[j * n + i];
        }
    }
    Ok((vals, vecs))
}

/// Extreme eigenvalues (min, max) of a symmetric matrix, values only.
pub fn eigh_extreme_values(a: &Array2<f64>) -> Result<(f64, f64)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare(n, a.ncols()));
    }
    let lo = eigvals_range(a, 1, 1)?;
    let hi = eigvals_range(a, n as i32, n as i32)?;
    Ok((lo[0], hi[0]))
}

fn eigvals_range(a: &Array2<f64>, il: i32, iu: i32) -> Result<Vec<f64>> {
    let n = a.nrows();
    let m = (iu - il + 1) as usize;
    let mut af: Vec<f64> = a.iter().cloned().collect();
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; 1];
    let mut isuppz = vec![0i32; 2 * m];
    let mut found = 0i32;
    let mut info = 0i32;
    let mut work = vec![0.0; 1];
    let mut iwork = vec![0i32; 1];
    unsafe {
        lapack::dsyevr(
            b'N', b'I', b'L', n as i32, &mut af, n as i32, 0.0, 0.0, il, iu, 0.0, &mut found,
            &mut w, &mut z, 1, &mut isuppz, &mut work, -1, &mut iwork, -1, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(format!(
            "dsyevr workspace query failed with info = {info}"
        )));
    }
    let lwork = work[0] as i32;
    let liwork = iwork[0];
    work = vec![0.0; lwork as usize];
    iwork = vec![0i32; liwork as usize];
    unsafe {
        lapack::dsyevr(
            b'N', b'I', b'L', n as i32, &mut af, n as i32, 0.0, 0.0, il, iu, 0.0, &mut found,
            &mut w, &mut z, 1, &mut isuppz, &mut work, lwork, &mut iwork, liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(format!("dsyevr failed with info = {info}")));
    }
    w.truncate(found as usize);
    Ok(w)
}

/// Spectral norm (largest |eigenvalue|) of a symmetric matrix.
pub fn spectral_norm_sym(a: &Array2<f64>) -> Result<f64> {
    let (lo, hi) = eigh_extreme_values(a)?;
    Ok(lo.abs().max(hi.abs()))
}

/// Spectral norm (largest singular value) of a general rectangular matrix,
/// via the Gram matrix on the smaller side.
pub fn spectral_norm_rect(a: &ArrayView2<f64>) -> Result<f64> {
    let (n, k) = (a.nrows(), a.ncols());
    let gram = if k <= n { a.t().dot(a) } else { a.dot(&a.t()) };
    let (_, hi) = eigh_extreme_values(&gram)?;
    Ok(hi.max(0.0).sqrt())
}

pub fn frobenius(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Max over columns of ||A v - lambda v||_2; the caller compares against a
/// tolerance scaled by ||A||_F.
pub fn max_eig_residual(a: &Array2<f64>, vals: &Array1<f64>, vecs: &Array2<f64>) -> f64 {
    let av = a.dot(vecs);
    let mut worst: f64 = 0.0;
    for (j, &lam) in vals.iter().enumerate() {
        let mut ss = 0.0;
        for i in 0..a.nrows() {
            let r = av[[i, j]] - lam * vecs[[i, j]];
            ss += r * r;
        }
        worst = worst.max(ss.sqrt());
    }
    worst
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Errors when a
/// column is (numerically) in the span of its predecessors.
pub fn orthonormalize_columns(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, k) = (a.nrows(), a.ncols());
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "cannot orthonormalize {k} columns in dimension {n}"
        )));
    }
    let mut q = a.to_owned();
    for j in 0..k {
        let orig_norm = q.column(j).dot(&q.column(j)).sqrt();
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-proj, &qi);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if !(norm > 1e-10 * orig_norm.max(1e-300)) {
            return Err(Error::DegenerateResult(format!(
                "column {j} is rank-deficient under orthonormalization"
            )));
        }
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Ok(q)
}

/// Generalized symmetric-definite eigenproblem B u = mu S u with S positive
/// definite, reduced by whitening: eigenpairs of S^{-1/2} B S^{-1/2} mapped
/// back through S^{-1/2}. Eigenvalues ascending; eigenvectors scaled to unit
/// Euclidean norm.
pub fn eigh_generalized_spd(
    b: &Array2<f64>,
    s: &Array2<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::NotSquare(b.nrows(), b.ncols()));
    }
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::ShapeMismatch {
            what: "pencil matrices",
            expected: format!("{n} x {n}"),
            got: format!("{} x {}", s.nrows(), s.ncols()),
        });
    }
    let (sw, sv) = eigh_full(s)?;
    if sw[0] <= 0.0 {
        return Err(Error::Eigensolver(format!(
            "pencil right-hand matrix not positive definite (min eigenvalue {:.3e})",
            sw[0]
        )));
    }
    let inv_sqrt = Array1::from_iter(sw.iter().map(|w| 1.0 / w.sqrt()));
    // S^{-1/2} = Q diag(w^{-1/2}) Q^T
    let mut scaled = sv.clone();
    for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| v * inv_sqrt[j]);
    }
    let s_inv_half = scaled.dot(&sv.t());
    let mut m = s_inv_half.dot(b).dot(&s_inv_half);
    symmetrize(&mut m);
    let (mu, y) = eigh_full(&m)?;
    let mut u = s_inv_half.dot(&y);
    for mut col in u.axis_iter_mut(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
    Ok((mu, u))
}

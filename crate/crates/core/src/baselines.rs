//! Reference methods the spectral extractor is compared against: canonical
//! correlation analysis on the raw feature matrices, and a two-graph
//! discriminant pencil in the Fukunaga-Koontz style.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::SVD;

use crate::differential::Modality;
use crate::error::{Error, Result};
use crate::graph::{PointCloud, SYMMETRY_TOL};
use crate::linalg::{canonicalize_signs, check_symmetric, eigh_full, eigh_generalized_spd, frobenius, orthonormalize_columns};

/// Ridge added to each covariance, relative to its mean diagonal entry.
pub const DEFAULT_CCA_RIDGE: f64 = 1e-9;

/// Relative ridge that makes the discriminant pencil denominator definite.
pub const FKT_RIDGE: f64 = 1e-8;

/// Canonical correlation model of a paired dataset.
#[derive(Debug, Clone)]
pub struct CcaModel {
    /// Orthonormal n x k basis of the estimated shared variation, built by
    /// averaging each pair of canonical variates.
    pub shared: Array2<f64>,
    /// Canonical correlations, strongest first.
    pub correlations: Array1<f64>,
}

fn center_columns(x: &Array2<f64>) -> Array2<f64> {
    let mut c = x.clone();
    let means = c.mean_axis(Axis(0)).expect("nonempty");
    for mut row in c.axis_iter_mut(Axis(0)) {
        row -= &means;
    }
    c
}

/// (C + ridge_rel * mean_diag * I)^{-1/2} for a symmetric PSD covariance.
fn inv_sqrt_ridged(c: &Array2<f64>, ridge_rel: f64) -> Result<Array2<f64>> {
    let d = c.nrows();
    let trace: f64 = c.diag().sum();
    if !(trace > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let mut ridged = c.clone();
    let ridge = ridge_rel * trace / d as f64;
    for i in 0..d {
        ridged[[i, i]] += ridge;
    }
    let (w, v) = eigh_full(&ridged)?;
    if w[0] <= 0.0 {
        return Err(Error::SingularCovariance);
    }
    let mut scaled = v.clone();
    for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        let f = 1.0 / w[j].sqrt();
        col.mapv_inplace(|x| x * f);
    }
    Ok(scaled.dot(&v.t()))
}

fn check_pair_shapes(xa: &PointCloud, xb: &PointCloud) -> Result<()> {
    if xa.n() != xb.n() {
        return Err(Error::ShapeMismatch {
            what: "paired sample counts",
            expected: format!("{}", xa.n()),
            got: format!("{}", xb.n()),
        });
    }
    Ok(())
}

/// Canonical correlation analysis between the two feature matrices, with a
/// small relative ridge on both covariances. The shared basis is the
/// orthonormalized average of each canonical variate pair.
pub fn cca_shared(xa: &PointCloud, xb: &PointCloud, k: usize, ridge: f64) -> Result<CcaModel> {
    check_pair_shapes(xa, xb)?;
    let n = xa.n();
    if n < 3 {
        return Err(Error::TooFewSamples { n, min: 3 });
    }
    let max_k = xa.dim().min(xb.dim()).min(n - 1);
    if k == 0 || k > max_k {
        return Err(Error::InvalidParameter(format!(
            "requested {k} canonical pairs, valid range is 1..={max_k}"
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter("ridge must be finite and nonnegative".into()));
    }
    let za = center_columns(xa.data());
    let zb = center_columns(xb.data());
    let denom = (n - 1) as f64;
    let ca = za.t().dot(&za) / denom;
    let cb = zb.t().dot(&zb) / denom;
    let cab = za.t().dot(&zb) / denom;
    let isa = inv_sqrt_ridged(&ca, ridge)?;
    let isb = inv_sqrt_ridged(&cb, ridge)?;
    let m = isa.dot(&cab).dot(&isb);
    let (u_opt, sigma, vt_opt) = m
        .svd(true, true)
        .map_err(|e| Error::Eigensolver(format!("svd in canonical analysis: {e}")))?;
    let (u, vt) = (u_opt.expect("requested"), vt_opt.expect("requested"));

    let mut shared = Array2::zeros((n, k));
    for i in 0..k {
        let wa = isa.dot(&u.column(i));
        let wb = isb.t().dot(&vt.row(i));
        let mut va = za.dot(&wa);
        let mut vb = zb.dot(&wb);
        let (na, nb) = (va.dot(&va).sqrt(), vb.dot(&vb).sqrt());
        if na <= 0.0 || nb <= 0.0 {
            return Err(Error::DegenerateResult(format!(
                "canonical variate {i} vanished"
            )));
        }
        va.mapv_inplace(|v| v / na);
        vb.mapv_inplace(|v| v / nb);
        // the decomposition aligns the pair up to floating point
        if va.dot(&vb) < 0.0 {
            vb.mapv_inplace(|v| -v);
        }
        let s = &va + &vb;
        shared.column_mut(i).assign(&s);
    }
    let shared = orthonormalize_columns(&shared.view())?;
    let correlations = Array1::from_iter(sigma.iter().take(k).copied());
    Ok(CcaModel { shared, correlations })
}

/// Differential estimate for one modality under the canonical correlation
/// model: project the centered features onto the orthogonal complement of
/// the shared basis and take the leading left singular direction of the
/// residual, computed through its feature-side Gram matrix.
pub fn cca_differential(
    xa: &PointCloud,
    xb: &PointCloud,
    modality: Modality,
    k: usize,
    ridge: f64,
) -> Result<Array1<f64>> {
    let model = cca_shared(xa, xb, k, ridge)?;
    let x = match modality {
        Modality::A => xa,
        Modality::B => xb,
    };
    let centered = center_columns(x.data());
    let coeffs = model.shared.t().dot(&centered);
    let resid = &centered - &model.shared.dot(&coeffs);
    let gram = resid.t().dot(&resid);
    let (_, vecs) = eigh_full(&gram)?;
    let top = vecs.column(vecs.ncols() - 1);
    let mut delta = resid.dot(&top);
    let norm = delta.dot(&delta).sqrt();
    if norm <= 1e-12 * frobenius(&centered.view()).max(1e-300) {
        return Err(Error::DegenerateResult(
            "no residual variation outside the shared basis".into(),
        ));
    }
    delta.mapv_inplace(|v| v / norm);
    let mut col = delta.insert_axis(Axis(1));
    canonicalize_signs(&mut col);
    Ok(col.remove_axis(Axis(1)))
}

/// Discriminant pencil result: vectors that are smooth on one graph and
/// rough on the other.
#[derive(Debug, Clone)]
pub struct FktResult {
    /// n x k, strongest separation first, unit norm, canonical signs.
    pub vectors: Array2<f64>,
    /// Generalized eigenvalue of each vector on the target pencil.
    pub mu: Array1<f64>,
    /// Rayleigh quotient of each vector on the complementary pencil; for a
    /// definite denominator mu + mu_other is 1 up to the ridge.
    pub mu_other: Array1<f64>,
}

fn unnormalized_laplacian(w: &ArrayView2<f64>) -> Array2<f64> {
    let n = w.nrows();
    let degrees = w.sum_axis(Axis(1));
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            l[[i, j]] = if i == j { degrees[i] - w[[i, i]] } else { -w[[i, j]] };
        }
    }
    l
}

fn check_affinity(w: &ArrayView2<f64>, what: &'static str) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(Error::NotSquare(w.nrows(), w.ncols()));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    if w.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(format!("{what} has negative entries")));
    }
    check_symmetric(w, SYMMETRY_TOL)
}

/// Differential directions for one modality as the top eigenvectors of the
/// pencil L_other u = mu (L_a + L_b + eps I) u on the unnormalized graph
/// Laplacians: mu near one means the direction is smooth on the modality's
/// own graph and rough on the other, which is exactly modality-specific
/// variation.
pub fn fkt_differential(
    affinity_a: &ArrayView2<f64>,
    affinity_b: &ArrayView2<f64>,
    modality: Modality,
    k: usize,
) -> Result<FktResult> {
    check_affinity(affinity_a, "affinity a")?;
    check_affinity(affinity_b, "affinity b")?;
    let n = affinity_a.nrows();
    if affinity_b.nrows() != n {
        return Err(Error::ShapeMismatch {
            what: "paired affinities",
            expected: format!("{n} x {n}"),
            got: format!("{} x {}", affinity_b.nrows(), affinity_b.ncols()),
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "requested {k} discriminant vectors, valid range is 1..={n}"
        )));
    }
    let la = unnormalized_laplacian(affinity_a);
    let lb = unnormalized_laplacian(affinity_b);
    let trace: f64 = la.diag().sum() + lb.diag().sum();
    if !(trace > 0.0) {
        return Err(Error::DegenerateGeometry("both graphs are empty".into()));
    }
    let eps = FKT_RIDGE * trace / n as f64;
    let mut s = &la + &lb;
    for i in 0..n {
        s[[i, i]] += eps;
    }
    let (numerator, complement) = match modality {
        Modality::A => (&lb, &la),
        Modality::B => (&la, &lb),
    };
    let (mu_all, u_all) = eigh_generalized_spd(numerator, &s)?;

    let mut vectors = Array2::zeros((n, k));
    let mut mu = Array1::zeros(k);
    let mut mu_other = Array1::zeros(k);
    for i in 0..k {
        let src = n - 1 - i;
        vectors.column_mut(i).assign(&u_all.column(src));
        mu[i] = mu_all[src];
        let u = u_all.column(src);
        let su = s.dot(&u);
        mu_other[i] = u.dot(&complement.dot(&u)) / u.dot(&su);
    }
    canonicalize_signs(&mut vectors);
    Ok(FktResult { vectors, mu, mu_other })
}

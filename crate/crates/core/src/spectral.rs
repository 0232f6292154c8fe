//! Spectral decompositions of graph operators, graph Fourier transforms, and
//! spectral filters.
//!
//! A filter is a matrix function H(L) = sum_i h(lambda_i) v_i v_i^T with
//! h: [0, 1] -> [0, 1] monotone non-decreasing. Eigenvalues are clamped to
//! [0, 1] before h is evaluated, so Laplacian modes above 1 behave like
//! lambda = 1. The threshold filter h(lambda) = 1 iff lambda > tau (strict)
//! yields an orthogonal projector; with a partial decomposition it is built
//! in identity-completion form H = I - V_low V_low^T, which passes every
//! unresolved mode.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpectrumSide};

/// Relative residual bound for accepting an eigendecomposition:
/// max_i ||A v_i - lambda_i v_i|| <= RESIDUAL_TOL * ||A||_F.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Symmetry tolerance for eigendecomposition inputs.
pub const EIGH_SYMMETRY_TOL: f64 = 1e-10;

/// How many leading Laplacian eigenvalues the automatic threshold rule scans.
pub const DEFAULT_GAP_SEARCH: usize = 25;

/// Partial eigendecomposition of a symmetric operator. Eigenvalues ascend
/// for `Smallest`, descend for `Largest`; eigenvector columns are orthonormal
/// with deterministic signs.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Array1<f64>,
    /// n x m, column i pairs with eigenvalues[i].
    pub eigenvectors: Array2<f64>,
    pub side: SpectrumSide,
    /// Human-readable origin of the decomposed matrix.
    pub source: String,
}

impl EigenSystem {
    pub fn n(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn m(&self) -> usize {
        self.eigenvectors.ncols()
    }

    pub fn is_full(&self) -> bool {
        self.n() == self.m()
    }
}

/// Resolve `m` eigenpairs of a symmetric matrix at the given end of the
/// spectrum. Rejects asymmetric input and decompositions whose residual
/// exceeds `RESIDUAL_TOL * ||A||_F`.
pub fn eigendecompose(
    a: &Array2<f64>,
    m: usize,
    side: SpectrumSide,
    source: impl Into<String>,
) -> Result<EigenSystem> {
    let n = a.nrows();
    linalg::check_symmetric(&a.view(), EIGH_SYMMETRY_TOL)?;
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "requested {m} eigenpairs of a {n} x {n} matrix"
        )));
    }
    let (eigenvalues, mut eigenvectors) = if m == n {
        let (vals, vecs) = linalg::eigh_full(a)?;
        match side {
            SpectrumSide::Smallest => (vals, vecs),
            SpectrumSide::Largest => {
                // flip to descending
                let idx: Vec<usize> = (0..n).rev().collect();
                let vals = Array1::from_iter(idx.iter().map(|&i| vals[i]));
                let vecs = vecs.select(ndarray::Axis(1), &idx);
                (vals, vecs)
            }
        }
    } else {
        linalg::eigh_partial(a, m, side)?
    };
    let resid = linalg::max_eig_residual(a, &eigenvalues, &eigenvectors);
    let scale = linalg::frobenius(&a.view()).max(f64::MIN_POSITIVE);
    if resid > RESIDUAL_TOL * scale {
        return Err(Error::Eigensolver(format!(
            "residual {resid:.3e} exceeds {RESIDUAL_TOL:.0e} * ||A||_F = {:.3e}",
            RESIDUAL_TOL * scale
        )));
    }
    linalg::canonicalize_signs(&mut eigenvectors);
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        side,
        source: source.into(),
    })
}

/// Graph Fourier transform: coefficients <v_i, s> against the resolved basis.
pub fn gft(es: &EigenSystem, s: &Array1<f64>) -> Result<Array1<f64>> {
    if s.len() != es.n() {
        return Err(Error::ShapeMismatch {
            what: "signal",
            expected: format!("{}", es.n()),
            got: format!("{}", s.len()),
        });
    }
    Ok(es.eigenvectors.t().dot(s))
}

/// Inverse transform: sum_i coeff_i v_i. With a partial basis this
/// reconstructs the projection onto the resolved subspace.
pub fn igft(es: &EigenSystem, coeffs: &Array1<f64>) -> Result<Array1<f64>> {
    if coeffs.len() != es.m() {
        return Err(Error::ShapeMismatch {
            what: "spectral coefficients",
            expected: format!("{}", es.m()),
            got: format!("{}", coeffs.len()),
        });
    }
    Ok(es.eigenvectors.dot(coeffs))
}

/// Spectral filter specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    /// h(lambda) = 1 iff clamp(lambda, 0, 1) > tau, else 0 (strict).
    Threshold { tau: f64 },
    /// Annihilate exactly the `count` lowest resolved modes; equivalent to a
    /// threshold placed at the count-th smallest eigenvalue.
    AnnihilateCount { count: usize },
    /// Explicit h(lambda_i) per resolved mode; requires a full basis and
    /// values in [0, 1], non-decreasing along the ascending spectrum.
    Tabulated { values: Vec<f64> },
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Number of leading modes a spec annihilates given the ascending spectrum.
fn annihilated_count(es: &EigenSystem, spec: &FilterSpec) -> Result<usize> {
    match spec {
        FilterSpec::Threshold { tau } => {
            if !tau.is_finite() || !(0.0..=1.0).contains(tau) {
                return Err(Error::InvalidFilter(format!(
                    "threshold tau must lie in [0, 1], got {tau}"
                )));
            }
            Ok(es
                .eigenvalues
                .iter()
                .take_while(|&&l| clamp_unit(l) <= *tau)
                .count())
        }
        FilterSpec::AnnihilateCount { count } => {
            if *count > es.m() {
                return Err(Error::InvalidFilter(format!(
                    "cannot annihilate {count} modes with only {} resolved",
                    es.m()
                )));
            }
            Ok(*count)
        }
        FilterSpec::Tabulated { .. } => unreachable!("tabulated handled separately"),
    }
}

/// Materialize the filter matrix H for the given decomposition of a
/// Laplacian (low end of the spectrum). Threshold and count filters use
/// identity completion, so they are exact projectors even for m < n.
pub fn filter_matrix(es: &EigenSystem, spec: &FilterSpec) -> Result<Array2<f64>> {
    if es.side != SpectrumSide::Smallest {
        return Err(Error::InvalidFilter(
            "filters are defined over the low end of the spectrum".into(),
        ));
    }
    let n = es.n();
    let mut h = match spec {
        FilterSpec::Tabulated { values } => {
            if !es.is_full() {
                return Err(Error::InvalidFilter(format!(
                    "tabulated filter needs a full basis ({} of {n} modes resolved)",
                    es.m()
                )));
            }
            if values.len() != n {
                return Err(Error::InvalidFilter(format!(
                    "tabulated filter has {} values for {n} modes",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidFilter(
                    "tabulated filter values must lie in [0, 1]".into(),
                ));
            }
            if values.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidFilter(
                    "tabulated filter must be non-decreasing along the spectrum".into(),
                ));
            }
            let mut scaled = es.eigenvectors.clone();
            for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
                col.mapv_inplace(|v| v * values[j]);
            }
            scaled.dot(&es.eigenvectors.t())
        }
        _ => {
            let k = annihilated_count(es, spec)?;
            if k == n {
                return Err(Error::InvalidFilter(
                    "filter annihilates the entire basis; the filtered operator would be zero"
                        .into(),
                ));
            }
            let mut h = Array2::eye(n);
            if k > 0 {
                let v_low = es.eigenvectors.slice(ndarray::s![.., ..k]);
                h -= &v_low.dot(&v_low.t());
            }
            h
        }
    };
    linalg::symmetrize(&mut h);
    Ok(h)
}

/// Low-pass diffusion operator P_tau = sum_{lambda_i <= tau} (1 - lambda_i)
/// v_i v_i^T from a Laplacian decomposition. Modes above tau (and unresolved
/// modes) are dropped entirely.
pub fn lowpass_operator(es: &EigenSystem, tau: f64) -> Result<Array2<f64>> {
    if es.side != SpectrumSide::Smallest {
        return Err(Error::InvalidFilter(
            "low-pass operator needs the low end of the spectrum".into(),
        ));
    }
    if !tau.is_finite() || !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidFilter(format!(
            "low-pass tau must lie in [0, 1], got {tau}"
        )));
    }
    let n = es.n();
    let kept: Vec<usize> = (0..es.m()).filter(|&i| es.eigenvalues[i] <= tau).collect();
    let mut p = Array2::zeros((n, n));
    if !kept.is_empty() {
        let v = es.eigenvectors.select(ndarray::Axis(1), &kept);
        let mut scaled = v.clone();
        for (idx, mut col) in scaled.columns_mut().into_iter().enumerate() {
            let w = 1.0 - es.eigenvalues[kept[idx]];
            col.mapv_inplace(|x| x * w);
        }
        p = scaled.dot(&v.t());
    }
    linalg::symmetrize(&mut p);
    Ok(p)
}

/// Automatic threshold: place tau in the middle of the largest consecutive
/// eigengap among the first `search` resolved eigenvalues. Returns
/// (tau, annihilated mode count). Ties resolve to the earliest gap.
pub fn threshold_from_eigengap(es: &EigenSystem, search: usize) -> Result<(f64, usize)> {
    if es.side != SpectrumSide::Smallest {
        return Err(Error::InvalidFilter(
            "eigengap threshold selection needs the low end of the spectrum".into(),
        ));
    }
    let limit = search.min(es.m());
    if limit < 2 {
        return Err(Error::InvalidParameter(format!(
            "eigengap search needs at least 2 eigenvalues, have {limit}"
        )));
    }
    let vals = &es.eigenvalues;
    let mut best_i = 1usize;
    let mut best_gap = f64::NEG_INFINITY;
    for i in 1..limit {
        let gap = vals[i] - vals[i - 1];
        if gap > best_gap {
            best_gap = gap;
            best_i = i;
        }
    }
    let tau = clamp_unit(0.5 * (vals[best_i - 1] + vals[best_i]));
    Ok((tau, best_i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphOperators, PointCloud};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_ops(n: usize, seed: u64) -> GraphOperators {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pc = PointCloud::new(Array2::from_shape_fn((n, 2), |_| rng.gen_range(-2.0..2.0)))
            .unwrap();
        GraphOperators::from_points(&pc, None).unwrap()
    }

    #[test]
    fn path_graph_spectrum() {
        // Path on 3 vertices with unit weights: normalized Laplacian
        // eigenvalues are exactly {0, 1, 2}.
        let adj = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let ops = GraphOperators::from_affinity(adj, None).unwrap();
        let es = eigendecompose(&ops.laplacian, 3, SpectrumSide::Smallest, "path").unwrap();
        assert!((es.eigenvalues[0] - 0.0).abs() < 1e-12);
        assert!((es.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert!((es.eigenvalues[2] - 2.0).abs() < 1e-12);
        // Null vector proportional to D^{1/2} 1 = (1, sqrt(2), 1).
        let v0 = es.eigenvectors.column(0);
        let expect = [0.5, 0.5 * 2.0_f64.sqrt(), 0.5];
        for i in 0..3 {
            assert!((v0[i] - expect[i]).abs() < 1e-12, "null vector entry {i}");
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut a = Array2::eye(4);
        a[[0, 1]] = 1e-6;
        assert!(matches!(
            eigendecompose(&a, 2, SpectrumSide::Smallest, "bad"),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn gft_round_trip_and_parseval() {
        let ops = random_ops(25, 42);
        let es = eigendecompose(&ops.laplacian, 25, SpectrumSide::Smallest, "l").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = Array1::from_shape_fn(25, |_| rng.gen_range(-1.0..1.0));
        let coeffs = gft(&es, &s).unwrap();
        let back = igft(&es, &coeffs).unwrap();
        let err = (&back - &s).mapv(f64::abs).sum();
        assert!(err < 1e-9 * s.mapv(f64::abs).sum().max(1.0));
        let parseval = (coeffs.dot(&coeffs) - s.dot(&s)).abs();
        assert!(parseval < 1e-10);
    }

    #[test]
    fn partial_basis_reconstructs_projection() {
        let ops = random_ops(20, 9);
        let es = eigendecompose(&ops.laplacian, 6, SpectrumSide::Smallest, "l").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = Array1::from_shape_fn(20, |_| rng.gen_range(-1.0..1.0));
        let back = igft(&es, &gft(&es, &s).unwrap()).unwrap();
        // back = V V^T s: verify idempotency of the implied projection
        let twice = igft(&es, &gft(&es, &back).unwrap()).unwrap();
        let err = (&twice - &back).mapv(f64::abs).sum();
        assert!(err < 1e-10);
    }

    #[test]
    fn threshold_filter_acts_as_indicator() {
        let ops = random_ops(15, 3);
        let es = eigendecompose(&ops.laplacian, 15, SpectrumSide::Smallest, "l").unwrap();
        let tau = 0.5 * (es.eigenvalues[2] + es.eigenvalues[3]);
        let h = filter_matrix(&es, &FilterSpec::Threshold { tau }).unwrap();
        for i in 0..15 {
            let v = es.eigenvectors.column(i).to_owned();
            let hv = h.dot(&v);
            let expect = if clamp_unit(es.eigenvalues[i]) > tau { 1.0 } else { 0.0 };
            let err = (&hv - &(expect * &v)).mapv(f64::abs).sum();
            assert!(err < 1e-10, "mode {i}: expected h = {expect}");
        }
    }

    #[test]
    fn partial_identity_completion_matches_full_filter() {
        let ops = random_ops(18, 5);
        let full = eigendecompose(&ops.laplacian, 18, SpectrumSide::Smallest, "l").unwrap();
        let part = eigendecompose(&ops.laplacian, 6, SpectrumSide::Smallest, "l").unwrap();
        // tau below the 6th eigenvalue so the annihilated set is resolved
        let tau = 0.5 * (full.eigenvalues[3] + full.eigenvalues[4]);
        let hf = filter_matrix(&full, &FilterSpec::Threshold { tau }).unwrap();
        let hp = filter_matrix(&part, &FilterSpec::Threshold { tau }).unwrap();
        let diff = (&hf - &hp).mapv(f64::abs).sum();
        assert!(diff < 1e-8, "identity completion diverged: {diff}");
    }

    #[test]
    fn annihilate_count_matches_threshold_at_kth_eigenvalue() {
        let ops = random_ops(12, 8);
        let es = eigendecompose(&ops.laplacian, 12, SpectrumSide::Smallest, "l").unwrap();
        let k = 4usize;
        let h_count = filter_matrix(&es, &FilterSpec::AnnihilateCount { count: k }).unwrap();
        let h_tau = filter_matrix(
            &es,
            &FilterSpec::Threshold { tau: clamp_unit(es.eigenvalues[k - 1]) },
        )
        .unwrap();
        let diff = (&h_count - &h_tau).mapv(f64::abs).sum();
        assert!(diff < 1e-10);
    }

    #[test]
    fn threshold_one_annihilates_whole_resolved_basis() {
        let ops = random_ops(10, 13);
        let es = eigendecompose(&ops.laplacian, 4, SpectrumSide::Smallest, "l").unwrap();
        let h = filter_matrix(&es, &FilterSpec::Threshold { tau: 1.0 }).unwrap();
        let v = es.eigenvectors.clone();
        let hv = h.dot(&v);
        assert!(hv.mapv(f64::abs).sum() < 1e-10, "resolved modes must vanish");
        // and H = I - V V^T exactly annihilates nothing else
        let expected = Array2::<f64>::eye(10) - v.dot(&v.t());
        assert!((&h - &expected).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn annihilating_the_full_basis_is_rejected() {
        let ops = random_ops(10, 14);
        let es = eigendecompose(&ops.laplacian, 10, SpectrumSide::Smallest, "l").unwrap();
        assert!(matches!(
            filter_matrix(&es, &FilterSpec::AnnihilateCount { count: 10 }),
            Err(Error::InvalidFilter(_))
        ));
    }

    #[test]
    fn filters_are_projectors() {
        let ops = random_ops(20, 21);
        let es = eigendecompose(&ops.laplacian, 20, SpectrumSide::Smallest, "l").unwrap();
        for spec in [
            FilterSpec::Threshold { tau: 0.3 },
            FilterSpec::AnnihilateCount { count: 5 },
        ] {
            let h = filter_matrix(&es, &spec).unwrap();
            let hh = h.dot(&h);
            let dev = crate::linalg::spectral_norm_sym(&(&hh - &h)).unwrap();
            assert!(dev <= 1e-8, "{spec:?}: ||H^2 - H|| = {dev:.3e}");
        }
    }

    #[test]
    fn tabulated_filter_validation_and_action() {
        let ops = random_ops(8, 30);
        let es = eigendecompose(&ops.laplacian, 8, SpectrumSide::Smallest, "l").unwrap();
        // non-monotone rejected
        let mut bad = vec![0.0; 8];
        bad[3] = 0.5;
        bad[4] = 0.4;
        assert!(matches!(
            filter_matrix(&es, &FilterSpec::Tabulated { values: bad }),
            Err(Error::InvalidFilter(_))
        ));
        // out of range rejected
        assert!(matches!(
            filter_matrix(&es, &FilterSpec::Tabulated { values: vec![1.5; 8] }),
            Err(Error::InvalidFilter(_))
        ));
        // partial basis rejected
        let part = eigendecompose(&ops.laplacian, 4, SpectrumSide::Smallest, "l").unwrap();
        assert!(matches!(
            filter_matrix(&part, &FilterSpec::Tabulated { values: vec![0.5; 4] }),
            Err(Error::InvalidFilter(_))
        ));
        // valid ramp acts as h(lambda_i) on each eigenvector
        let values: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let h = filter_matrix(&es, &FilterSpec::Tabulated { values: values.clone() }).unwrap();
        for i in 0..8 {
            let v = es.eigenvectors.column(i).to_owned();
            let hv = h.dot(&v);
            let err = (&hv - &(values[i] * &v)).mapv(f64::abs).sum();
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn lowpass_with_tau_one_reconstructs_operator() {
        let ops = random_ops(14, 17);
        let es = eigendecompose(&ops.laplacian, 14, SpectrumSide::Smallest, "l").unwrap();
        let p = lowpass_operator(&es, 1.0).unwrap();
        // sum over all modes of (1 - lambda) v v^T is exactly P when the
        // spectrum stays within [0, 1]
        if es.eigenvalues.iter().all(|&l| l <= 1.0) {
            let diff = (&p - &ops.operator).mapv(f64::abs).sum();
            assert!(diff < 1e-8, "full low-pass must rebuild P, diff = {diff}");
        }
        // action check regardless
        for i in 0..14 {
            let v = es.eigenvectors.column(i).to_owned();
            let pv = p.dot(&v);
            let w = if es.eigenvalues[i] <= 1.0 { 1.0 - es.eigenvalues[i] } else { 0.0 };
            let err = (&pv - &(w * &v)).mapv(f64::abs).sum();
            assert!(err < 1e-9);
        }
    }

    #[test]
    fn eigengap_threshold_picks_largest_gap() {
        // synthetic spectrum: gaps 0.05, 0.05, 0.5, 0.1 -> split after 3 modes
        let es = EigenSystem {
            eigenvalues: array![0.0, 0.05, 0.1, 0.6, 0.7],
            eigenvectors: Array2::eye(5),
            side: SpectrumSide::Smallest,
            source: "synthetic".into(),
        };
        let (tau, k) = threshold_from_eigengap(&es, 25).unwrap();
        assert_eq!(k, 3);
        assert!((tau - 0.35).abs() < 1e-15);
    }

    #[test]
    fn eigengap_search_window_is_respected() {
        // the huge gap sits outside the search window
        let es = EigenSystem {
            eigenvalues: array![0.0, 0.2, 0.25, 0.3, 0.9, 0.95],
            eigenvectors: Array2::eye(6),
            side: SpectrumSide::Smallest,
            source: "synthetic".into(),
        };
        let (_, k) = threshold_from_eigengap(&es, 4).unwrap();
        assert_eq!(k, 1, "gap search must stay within the window");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        // Full-basis round trip within 1e-9 relative error.
        #[test]
        fn gft_round_trip_property(seed in 0u64..3000, n in 4usize..24) {
            let ops = random_ops(n, seed);
            let es = eigendecompose(&ops.laplacian, n, SpectrumSide::Smallest, "l").unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
            let s = Array1::from_shape_fn(n, |_| rng.gen_range(-3.0..3.0));
            let back = igft(&es, &gft(&es, &s).unwrap()).unwrap();
            let num = (&back - &s).iter().map(|v| v * v).sum::<f64>().sqrt();
            let den = s.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            prop_assert!(num <= 1e-9 * den.max(1.0));
        }

        // Dirichlet energy equals the spectral quadratic form.
        #[test]
        fn dirichlet_energy_matches_spectrum(seed in 0u64..3000, n in 4usize..20) {
            let ops = random_ops(n, seed);
            let es = eigendecompose(&ops.laplacian, n, SpectrumSide::Smallest, "l").unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x99);
            let s = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
            let coeffs = gft(&es, &s).unwrap();
            let spectral: f64 = coeffs
                .iter()
                .zip(es.eigenvalues.iter())
                .map(|(c, l)| l * c * c)
                .sum();
            let quad = ops.dirichlet_energy(&s).unwrap();
            prop_assert!((quad - spectral).abs() <= 1e-9 * quad.abs().max(1.0));
        }
    }
}

//! Differential latent variable extraction for paired modalities.
//!
//! Two datasets X^A and X^B observe the same n samples. Variables shared
//! across modalities show up as aligned low-frequency eigenvectors of both
//! graph Laplacians. To isolate what is unique to one modality, the other
//! modality's low modes are projected out of its diffusion operator:
//!
//!   filtered B-operator = H(L^A) P^B H(L^A)
//!
//! with H a high-pass spectral filter on L^A. Leading eigenvectors of the
//! filtered operator are the differential vectors; they approximate the
//! smallest-frequency eigenfunctions of the modality that are constant in
//! the shared variables. The analyzed operator can optionally be replaced
//! by its low-pass restriction sum_{lambda <= tau} (1 - lambda) v v^T, which
//! sharpens the spectral separation at the cost of a second decomposition.
//!
//! For several exclusive variables per modality, extraction iterates: the
//! shared operator P^A P^B + P^B P^A supplies a basis for the common
//! structure, each recovered differential vector is appended to it, and the
//! augmented basis acts as a substitute point cloud for the opposite
//! modality on the next pass.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphOperators, PointCloud, DEFAULT_BANDWIDTH_SCALE};
use crate::linalg::{self, SpectrumSide};
use crate::spectral::{
    eigendecompose, filter_matrix, lowpass_operator, EigenSystem, FilterSpec,
};

/// Default number of Laplacian eigenpairs resolved per modality.
pub const DEFAULT_EIGENPAIRS: usize = 60;

/// Default cross-modality threshold. A variable exclusive to one modality
/// looks like noise to the other, so its spectral content sits in the
/// saturated top of the reference Laplacian's spectrum (eigenvalues near 1).
/// Annihilating every resolved reference mode at or below this cutoff
/// removes the shared structure while leaving that saturation bulk intact.
/// A per-spectrum eigengap rule is deliberately not the default: kernel
/// graphs of product manifolds have quadratic eigenvalue ladders whose
/// largest gap sits mid-ladder and flips between near-tied gaps from seed
/// to seed, leaving shared modes alive.
pub const DEFAULT_FILTER_TAU: f64 = 0.95;

/// Default search width for the shared-dimension eigengap estimate.
pub const DEFAULT_SHARED_KMAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    A,
    B,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::A => write!(f, "a"),
            Modality::B => write!(f, "b"),
        }
    }
}

/// Extraction parameters. `filter: None` applies a threshold filter at
/// [`DEFAULT_FILTER_TAU`], annihilating every resolved reference mode at or
/// below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialConfig {
    pub filter: Option<FilterSpec>,
    /// Kernel bandwidth per modality; None applies the median-distance rule.
    pub bandwidth_a: Option<f64>,
    pub bandwidth_b: Option<f64>,
    /// Scale for the median-distance rule.
    pub bandwidth_scale: f64,
    /// Laplacian eigenpairs resolved per modality; None -> min(n, 60).
    pub num_eigenpairs: Option<usize>,
    /// Analyze the low-pass restriction of the operator at this cutoff
    /// instead of the full operator.
    pub lowpass_tau: Option<f64>,
}

impl Default for DifferentialConfig {
    fn default() -> Self {
        Self {
            filter: None,
            bandwidth_a: None,
            bandwidth_b: None,
            bandwidth_scale: DEFAULT_BANDWIDTH_SCALE,
            num_eigenpairs: None,
            lowpass_tau: None,
        }
    }
}

/// Materialized details of one extraction, kept for result sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionInfo {
    pub method: String,
    /// Bandwidth of this modality's own graph (None for raw affinities).
    pub bandwidth: Option<f64>,
    /// Threshold actually applied by the cross-modality filter.
    pub filter_tau: Option<f64>,
    /// Modes the cross-modality filter annihilated.
    pub annihilated_modes: usize,
    pub num_eigenpairs: usize,
    pub lowpass_tau: Option<f64>,
    /// Estimated shared dimension (multi-pass extraction only).
    pub shared_dim: Option<usize>,
}

/// Differential vectors for one modality: unit columns, leading first,
/// paired with the (non-increasing) eigenvalues of the filtered operator.
#[derive(Debug, Clone)]
pub struct DifferentialResult {
    pub vectors: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub modality: Modality,
    pub iteration: usize,
    pub info: ExtractionInfo,
}

impl DifferentialResult {
    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn num_vectors(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn leading(&self) -> ArrayView1<'_, f64> {
        self.vectors.column(0)
    }
}

/// Results for both modalities from one pass.
#[derive(Debug, Clone)]
pub struct DifferentialPair {
    pub a: DifferentialResult,
    pub b: DifferentialResult,
}

/// Conjugate an operator by a filter: H P H, symmetrized.
pub fn filtered_operator(h: &ArrayView2<f64>, p: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::NotSquare(h.nrows(), h.ncols()));
    }
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::ShapeMismatch {
            what: "filtered operator factors",
            expected: format!("{n} x {n}"),
            got: format!("{} x {}", p.nrows(), p.ncols()),
        });
    }
    let mut out = h.dot(p).dot(h);
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// Anticommutator P^A P^B + P^B P^A, symmetrized. Eigenvectors aligned with
/// both diffusions (the shared structure) carry the largest eigenvalues.
pub fn shared_operator(pa: &ArrayView2<f64>, pb: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = pa.nrows();
    if pa.ncols() != n {
        return Err(Error::NotSquare(pa.nrows(), pa.ncols()));
    }
    if pb.nrows() != n || pb.ncols() != n {
        return Err(Error::ShapeMismatch {
            what: "shared operator factors",
            expected: format!("{n} x {n}"),
            got: format!("{} x {}", pb.nrows(), pb.ncols()),
        });
    }
    let ab = pa.dot(pb);
    let mut out = &ab + &ab.t();
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// Shared-dimension estimate: index of the largest consecutive drop among
/// the leading `k_max` eigenvalues of the shared operator (descending).
/// Ties resolve to the smallest index.
pub fn estimate_shared_dim(es: &EigenSystem, k_max: usize) -> Result<usize> {
    if es.side != SpectrumSide::Largest {
        return Err(Error::InvalidParameter(
            "shared-dimension estimate needs the top of the spectrum (descending)".into(),
        ));
    }
    if k_max < 2 || k_max > es.m() {
        return Err(Error::InvalidParameter(format!(
            "eigengap search width {k_max} outside [2, {}]",
            es.m()
        )));
    }
    let vals = &es.eigenvalues;
    let mut best = 1usize;
    let mut best_gap = f64::NEG_INFINITY;
    for i in 1..k_max {
        let gap = vals[i - 1] - vals[i];
        if gap > best_gap {
            best_gap = gap;
            best = i;
        }
    }
    Ok(best)
}

/// The filter a config resolves to for a given Laplacian spectrum, plus the
/// threshold and annihilated-mode count for provenance.
fn resolve_filter(
    es: &EigenSystem,
    cfg: &DifferentialConfig,
) -> Result<(FilterSpec, Option<f64>, usize)> {
    let spec = cfg
        .filter
        .clone()
        .unwrap_or(FilterSpec::Threshold { tau: DEFAULT_FILTER_TAU });
    match &spec {
        FilterSpec::Threshold { tau } => {
            let k = es
                .eigenvalues
                .iter()
                .take_while(|&&l| l.clamp(0.0, 1.0) <= *tau)
                .count();
            Ok((spec.clone(), Some(*tau), k))
        }
        FilterSpec::AnnihilateCount { count } => Ok((spec.clone(), None, *count)),
        FilterSpec::Tabulated { values } => {
            let k = values.iter().take_while(|&&v| v == 0.0).count();
            Ok((spec.clone(), None, k))
        }
    }
}

fn laplacian_eigensystem(
    ops: &GraphOperators,
    cfg: &DifferentialConfig,
    label: &str,
) -> Result<EigenSystem> {
    let n = ops.n();
    let m = cfg.num_eigenpairs.unwrap_or(DEFAULT_EIGENPAIRS).min(n);
    if m == 0 {
        return Err(Error::InvalidParameter("num_eigenpairs must be positive".into()));
    }
    eigendecompose(&ops.laplacian, m, SpectrumSide::Smallest, format!("laplacian:{label}"))
}

/// One side of the extraction: filter built from the opposite modality's
/// Laplacian spectrum, applied around this modality's operator.
fn extract_one_side(
    ops_own: &GraphOperators,
    es_own: &EigenSystem,
    es_other: &EigenSystem,
    cfg: &DifferentialConfig,
    num_vectors: usize,
    modality: Modality,
    iteration: usize,
) -> Result<DifferentialResult> {
    let n = ops_own.n();
    if num_vectors == 0 || num_vectors > n {
        return Err(Error::InvalidParameter(format!(
            "num_vectors {num_vectors} outside [1, {n}]"
        )));
    }
    let (spec, filter_tau, annihilated) = resolve_filter(es_other, cfg)?;
    let h = filter_matrix(es_other, &spec)?;
    let analyzed = match cfg.lowpass_tau {
        None => ops_own.operator.clone(),
        Some(tau) => {
            if !es_own.is_full() && *es_own.eigenvalues.last().unwrap() < tau {
                return Err(Error::InvalidFilter(format!(
                    "low-pass tau {tau} exceeds the resolved spectrum (max {:.4}); \
                     increase num_eigenpairs",
                    es_own.eigenvalues.last().unwrap()
                )));
            }
            lowpass_operator(es_own, tau)?
        }
    };
    let filtered = filtered_operator(&h.view(), &analyzed.view())?;
    let es_f = eigendecompose(
        &filtered,
        num_vectors,
        SpectrumSide::Largest,
        format!("filtered:{modality}"),
    )?;
    Ok(DifferentialResult {
        vectors: es_f.eigenvectors,
        eigenvalues: es_f.eigenvalues,
        modality,
        iteration,
        info: ExtractionInfo {
            method: "spectral".into(),
            bandwidth: ops_own.bandwidth,
            filter_tau,
            annihilated_modes: annihilated,
            num_eigenpairs: es_other.m(),
            lowpass_tau: cfg.lowpass_tau,
            shared_dim: None,
        },
    })
}

fn check_paired(n_a: usize, n_b: usize) -> Result<()> {
    if n_a != n_b {
        return Err(Error::ShapeMismatch {
            what: "paired modalities",
            expected: format!("{n_a} samples in both"),
            got: format!("{n_a} vs {n_b}"),
        });
    }
    Ok(())
}

/// Differential vectors of both modalities from prebuilt graph operators
/// (e.g. adjacency-derived graphs with no kernel bandwidth).
pub fn extract_single_from_operators(
    ops_a: &GraphOperators,
    ops_b: &GraphOperators,
    cfg: &DifferentialConfig,
    num_vectors: usize,
) -> Result<DifferentialPair> {
    check_paired(ops_a.n(), ops_b.n())?;
    let es_a = laplacian_eigensystem(ops_a, cfg, "a")?;
    let es_b = laplacian_eigensystem(ops_b, cfg, "b")?;
    let a = extract_one_side(ops_a, &es_a, &es_b, cfg, num_vectors, Modality::A, 0)?;
    let b = extract_one_side(ops_b, &es_b, &es_a, cfg, num_vectors, Modality::B, 0)?;
    Ok(DifferentialPair { a, b })
}

fn build_operators(
    pc: &PointCloud,
    bandwidth: Option<f64>,
    scale: f64,
) -> Result<GraphOperators> {
    let sigma = match bandwidth {
        Some(s) => s,
        None => crate::graph::median_bandwidth(pc, scale)?,
    };
    GraphOperators::from_points(pc, Some(sigma))
}

/// Differential vectors of both modalities for one paired dataset.
pub fn extract_single(
    xa: &PointCloud,
    xb: &PointCloud,
    cfg: &DifferentialConfig,
    num_vectors: usize,
) -> Result<DifferentialPair> {
    check_paired(xa.n(), xb.n())?;
    let ops_a = build_operators(xa, cfg.bandwidth_a, cfg.bandwidth_scale)?;
    let ops_b = build_operators(xb, cfg.bandwidth_b, cfg.bandwidth_scale)?;
    extract_single_from_operators(&ops_a, &ops_b, cfg, num_vectors)
}

/// Iterated extraction of several variables exclusive to the first
/// modality. Pass 0 reproduces `extract_single`'s result for that modality;
/// pass i >= 1 substitutes [shared basis | recovered vectors] for the other
/// modality and reruns the single-pass extraction against it.
///
/// `k0` overrides the shared-dimension estimate; `k_max` bounds its
/// eigengap search.
pub fn extract_multi(
    xa: &PointCloud,
    xb: &PointCloud,
    iterations: usize,
    cfg: &DifferentialConfig,
    k0: Option<usize>,
    k_max: usize,
) -> Result<Vec<DifferentialResult>> {
    check_paired(xa.n(), xb.n())?;
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    let n = xa.n();
    let ops_a = build_operators(xa, cfg.bandwidth_a, cfg.bandwidth_scale)?;
    let ops_b = build_operators(xb, cfg.bandwidth_b, cfg.bandwidth_scale)?;
    let es_a = laplacian_eigensystem(&ops_a, cfg, "a")?;
    let es_b = laplacian_eigensystem(&ops_b, cfg, "b")?;

    let first = extract_one_side(&ops_a, &es_a, &es_b, cfg, 1, Modality::A, 0)?;
    let mut results = vec![first];
    if iterations == 1 {
        return Ok(results);
    }

    let theta = shared_operator(&ops_a.operator.view(), &ops_b.operator.view())?;
    let resolve = (k_max.max(k0.unwrap_or(0)) + 1).min(n);
    let es_theta = eigendecompose(&theta, resolve, SpectrumSide::Largest, "shared")?;
    let k0 = match k0 {
        Some(k) => {
            if k == 0 || k > n {
                return Err(Error::InvalidParameter(format!(
                    "shared dimension override {k} outside [1, {n}]"
                )));
            }
            k
        }
        None => estimate_shared_dim(&es_theta, k_max)?,
    };
    if k0 + iterations > n {
        return Err(Error::InvalidParameter(format!(
            "shared dimension {k0} plus {iterations} iterations exceeds n = {n}"
        )));
    }
    results[0].info.shared_dim = Some(k0);

    // Substitute coordinates: shared basis, then one column per recovered
    // differential vector.
    let mut basis = Array2::zeros((n, k0 + iterations - 1));
    basis
        .slice_mut(ndarray::s![.., ..k0])
        .assign(&es_theta.eigenvectors.slice(ndarray::s![.., ..k0]));
    basis.column_mut(k0).assign(&results[0].vectors.column(0));

    for i in 1..iterations {
        let cols = k0 + i;
        let sub = PointCloud::new(basis.slice(ndarray::s![.., ..cols]).to_owned())?;
        // The substitute cloud always gets the median-rule bandwidth; the
        // configured per-modality overrides refer to the original clouds.
        let ops_sub = build_operators(&sub, None, cfg.bandwidth_scale)?;
        let es_sub = laplacian_eigensystem(&ops_sub, cfg, &format!("substitute:{i}"))?;
        let mut res = extract_one_side(&ops_a, &es_a, &es_sub, cfg, 1, Modality::A, i)?;
        res.info.shared_dim = Some(k0);
        if i + 1 < iterations {
            basis.column_mut(cols).assign(&res.vectors.column(0));
        }
        results.push(res);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(Array2::from_shape_fn((n, dim), |_| rng.gen_range(-2.0..2.0))).unwrap()
    }

    #[test]
    fn filtered_operator_small_oracle() {
        // H removes the first coordinate direction; conjugation zeroes the
        // first row and column.
        let h = array![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let p = array![[0.9, 0.2, 0.1], [0.2, 0.8, 0.3], [0.1, 0.3, 0.7]];
        let f = filtered_operator(&h.view(), &p.view()).unwrap();
        for j in 0..3 {
            assert_eq!(f[[0, j]], 0.0);
            assert_eq!(f[[j, 0]], 0.0);
        }
        assert_eq!(f[[1, 1]], 0.8);
        assert_eq!(f[[1, 2]], 0.3);
    }

    #[test]
    fn shared_operator_is_symmetric_anticommutator() {
        let a = array![[1.0, 2.0], [2.0, 0.5]];
        let b = array![[0.0, 1.0], [1.0, 3.0]];
        let s = shared_operator(&a.view(), &b.view()).unwrap();
        // P^A P^B + P^B P^A computed by hand
        let ab = a.dot(&b);
        let expect = &ab + &ab.t();
        assert!((&s - &expect).mapv(f64::abs).sum() < 1e-14);
        assert_eq!(s[[0, 1]], s[[1, 0]]);
    }

    fn descending_system(vals: Vec<f64>) -> EigenSystem {
        let m = vals.len();
        EigenSystem {
            eigenvalues: Array1::from_vec(vals),
            eigenvectors: Array2::eye(m),
            side: SpectrumSide::Largest,
            source: "synthetic".into(),
        }
    }

    #[test]
    fn shared_dim_picks_largest_drop() {
        let es = descending_system(vec![2.0, 1.9, 1.8, 0.2, 0.1]);
        assert_eq!(estimate_shared_dim(&es, 4).unwrap(), 3);
        let es = descending_system(vec![1.0, 0.0, 0.0]);
        assert_eq!(estimate_shared_dim(&es, 2).unwrap(), 1);
    }

    #[test]
    fn shared_dim_tie_resolves_low() {
        let es = descending_system(vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(estimate_shared_dim(&es, 4).unwrap(), 1);
    }

    #[test]
    fn identical_modalities_bound_leading_eigenvalue() {
        // With X^A = X^B and a threshold filter, every surviving mode of the
        // filtered operator has P-eigenvalue 1 - lambda with lambda > tau,
        // so the leading eigenvalue is at most 1 - tau.
        let pc = random_cloud(40, 2, 77);
        let tau = 0.4;
        let cfg = DifferentialConfig {
            filter: Some(FilterSpec::Threshold { tau }),
            ..Default::default()
        };
        let pair = extract_single(&pc, &pc, &cfg, 1).unwrap();
        for res in [&pair.a, &pair.b] {
            assert!(
                res.eigenvalues[0] <= 1.0 - tau + 1e-6,
                "leading eigenvalue {} above 1 - tau",
                res.eigenvalues[0]
            );
        }
    }

    #[test]
    fn identical_modalities_leave_no_smooth_differential() {
        // Both sensors observing the same rectangle leaves no exclusive
        // variable, so the differential vector must not align with any
        // smooth mode of the shared geometry.
        use std::f64::consts::PI;
        let ds = crate::datasets::line_rectangle(400, 2.0, 1.0, 31).unwrap();
        let pair = extract_single(&ds.xb, &ds.xb, &DifferentialConfig::default(), 1).unwrap();
        let delta = pair.b.leading();
        for m in 1..=4 {
            let target = ds.latents.theta.mapv(|t| (PI * m as f64 * t / 2.0).cos());
            let c = crate::metrics::ground_truth_correlation(delta, target.view()).unwrap();
            assert!(c < 0.5, "|corr| {c:.3} with shared cosine frequency {m}");
        }
        let private = ds.latents.psi_b.column(0).mapv(|p| (PI * p).cos());
        let c = crate::metrics::ground_truth_correlation(delta, private.view()).unwrap();
        assert!(c < 0.5, "|corr| {c:.3} with the former private cosine");
    }

    #[test]
    fn multi_first_pass_equals_single() {
        let xa = random_cloud(35, 2, 5);
        let xb = random_cloud(35, 1, 6);
        let cfg = DifferentialConfig::default();
        let single = extract_single(&xa, &xb, &cfg, 1).unwrap();
        let multi = extract_multi(&xa, &xb, 1, &cfg, None, DEFAULT_SHARED_KMAX).unwrap();
        assert_eq!(multi.len(), 1);
        let diff = (&multi[0].vectors - &single.a.vectors).mapv(f64::abs).sum();
        assert!(diff < 1e-12, "first pass must match single extraction");
        assert_eq!(multi[0].iteration, 0);
    }

    #[test]
    fn multi_rejects_oversized_shared_dim() {
        let xa = random_cloud(8, 1, 1);
        let xb = random_cloud(8, 2, 2);
        let cfg = DifferentialConfig::default();
        let err = extract_multi(&xa, &xb, 5, &cfg, Some(4), DEFAULT_SHARED_KMAX);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn mismatched_sample_counts_rejected() {
        let xa = random_cloud(10, 1, 1);
        let xb = random_cloud(11, 1, 2);
        assert!(matches!(
            extract_single(&xa, &xb, &DifferentialConfig::default(), 1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn lowpass_beyond_resolved_spectrum_rejected() {
        let xa = random_cloud(30, 2, 3);
        let xb = random_cloud(30, 2, 4);
        let cfg = DifferentialConfig {
            // resolve only 3 pairs; their eigenvalues sit far below 1
            num_eigenpairs: Some(3),
            lowpass_tau: Some(1.0),
            filter: Some(FilterSpec::AnnihilateCount { count: 1 }),
            ..Default::default()
        };
        assert!(matches!(
            extract_single(&xa, &xb, &cfg, 1),
            Err(Error::InvalidFilter(_))
        ));
    }

    #[test]
    fn results_are_unit_norm_descending() {
        let xa = random_cloud(30, 2, 8);
        let xb = random_cloud(30, 2, 9);
        let pair = extract_single(&xa, &xb, &DifferentialConfig::default(), 3).unwrap();
        for res in [pair.a, pair.b] {
            for j in 0..3 {
                let c = res.vectors.column(j);
                assert!((c.dot(&c) - 1.0).abs() < 1e-10);
            }
            assert!(res.eigenvalues[0] >= res.eigenvalues[1]);
            assert!(res.eigenvalues[1] >= res.eigenvalues[2]);
        }
    }
}

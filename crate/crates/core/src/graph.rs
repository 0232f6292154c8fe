//! Graph construction over point clouds.
//!
//! A point cloud becomes a dense weighted graph through a Gaussian kernel,
//! and the graph is summarized by the degree-normalized symmetric operator
//! P = D^{-1/2} W D^{-1/2} together with its Laplacian L = I - P. The
//! Laplacian is positive semidefinite with spectrum in [0, 2]; its null
//! direction is D^{1/2} 1. The Dirichlet energy s^T L s equals
//! (1/2) sum_ij W_ij (s_i / sqrt(d_i) - s_j / sqrt(d_j))^2.
//!
//! The pairwise-distance and kernel maps are the O(n^2) hot paths; with the
//! `parallel` feature they fan out across rows via rayon, and the serial
//! variants stay available for comparison.

use ndarray::{Array1, Array2, ArrayView1};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default bandwidth: this multiple of the median pairwise distance.
pub const DEFAULT_BANDWIDTH_SCALE: f64 = 0.5;

/// Tolerance for accepting externally supplied affinity matrices as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// An n x dim sample matrix with finite entries, one observation per row.
#[derive(Debug, Clone)]
pub struct PointCloud {
    data: Array2<f64>,
}

impl PointCloud {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::ShapeMismatch {
                what: "point cloud",
                expected: "at least 1 x 1".into(),
                got: format!("{} x {}", data.nrows(), data.ncols()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

#[inline]
fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn fill_sq_distance_row(row: &mut [f64], i: usize, data: &Array2<f64>) {
    let xi = data.row(i);
    for (j, slot) in row.iter_mut().enumerate() {
        *slot = if i == j { 0.0 } else { sq_dist(xi, data.row(j)) };
    }
}

/// Dense matrix of squared Euclidean distances. Exactly symmetric and zero
/// on the diagonal: entry (i, j) and (j, i) run the same arithmetic.
pub fn pairwise_sq_distances(pc: &PointCloud) -> Array2<f64> {
    #[cfg(feature = "parallel")]
    {
        pairwise_sq_distances_parallel(pc)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairwise_sq_distances_serial(pc)
    }
}

pub fn pairwise_sq_distances_serial(pc: &PointCloud) -> Array2<f64> {
    let n = pc.n();
    let mut out = Array2::zeros((n, n));
    let slice = out.as_slice_mut().expect("freshly allocated row-major");
    for (i, row) in slice.chunks_mut(n).enumerate() {
        fill_sq_distance_row(row, i, pc.data());
    }
    out
}

#[cfg(feature = "parallel")]
pub fn pairwise_sq_distances_parallel(pc: &PointCloud) -> Array2<f64> {
    let n = pc.n();
    let mut out = Array2::zeros((n, n));
    let slice = out.as_slice_mut().expect("freshly allocated row-major");
    slice
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| fill_sq_distance_row(row, i, pc.data()));
    out
}

/// Median of the off-diagonal pairwise Euclidean distances, times `scale`.
/// Even counts average the two middle order statistics.
pub fn median_bandwidth(pc: &PointCloud, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bandwidth scale must be positive and finite, got {scale}"
        )));
    }
    let n = pc.n();
    if n < 2 {
        return Err(Error::TooFewSamples { n, min: 2 });
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(pc.data().row(i), pc.data().row(j)).sqrt());
        }
    }
    let m = dists.len();
    let median = if m % 2 == 1 {
        let (_, mid, _) = dists.select_nth_unstable_by(m / 2, f64::total_cmp);
        *mid
    } else {
        let (_, hi, _) = dists.select_nth_unstable_by(m / 2, f64::total_cmp);
        let hi = *hi;
        let (_, lo, _) = dists.select_nth_unstable_by(m / 2 - 1, f64::total_cmp);
        0.5 * (*lo + hi)
    };
    if median <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "median pairwise distance is zero (coincident points)".into(),
        ));
    }
    Ok(scale * median)
}

fn exp_kernel_rows(d2: &mut Array2<f64>, inv_two_sigma_sq: f64) {
    let n = d2.ncols();
    let slice = d2.as_slice_mut().expect("row-major distance matrix");
    let apply = |row: &mut [f64]| {
        for v in row.iter_mut() {
            *v = (-*v * inv_two_sigma_sq).exp();
        }
    };
    #[cfg(feature = "parallel")]
    slice.par_chunks_mut(n).for_each(apply);
    #[cfg(not(feature = "parallel"))]
    slice.chunks_mut(n).for_each(apply);
}

/// Gaussian affinity W_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)). Diagonal is
/// exactly 1, off-diagonal entries lie in (0, 1].
pub fn gaussian_affinity(pc: &PointCloud, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bandwidth sigma must be positive and finite, got {sigma}"
        )));
    }
    let mut w = pairwise_sq_distances(pc);
    exp_kernel_rows(&mut w, 1.0 / (2.0 * sigma * sigma));
    Ok(w)
}

/// Affinity matrix with its degree-normalized operators.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    /// Symmetric nonnegative affinity W.
    pub affinity: Array2<f64>,
    /// Row sums of W (all strictly positive).
    pub degrees: Array1<f64>,
    /// P = D^{-1/2} W D^{-1/2}, exactly symmetric.
    pub operator: Array2<f64>,
    /// L = I - P.
    pub laplacian: Array2<f64>,
    /// Kernel bandwidth when built from points; None for raw affinities.
    pub bandwidth: Option<f64>,
}

impl GraphOperators {
    /// Build from a raw affinity matrix (e.g. an adjacency matrix). The
    /// matrix must be square, symmetric within `SYMMETRY_TOL`, nonnegative,
    /// and free of zero-degree vertices.
    pub fn from_affinity(affinity: Array2<f64>, bandwidth: Option<f64>) -> Result<Self> {
        let n = affinity.nrows();
        if affinity.ncols() != n {
            return Err(Error::NotSquare(n, affinity.ncols()));
        }
        if affinity.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("affinity matrix"));
        }
        if affinity.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(
                "affinity matrix has negative entries".into(),
            ));
        }
        crate::linalg::check_symmetric(&affinity.view(), SYMMETRY_TOL)?;
        let mut w = affinity;
        // Make symmetry exact so downstream spectra are real to round-off.
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (w[[i, j]] + w[[j, i]]);
                w[[i, j]] = m;
                w[[j, i]] = m;
            }
        }
        let degrees = w.sum_axis(ndarray::Axis(1));
        for (i, &d) in degrees.iter().enumerate() {
            if !(d > 0.0) {
                return Err(Error::DisconnectedVertex(i));
            }
        }
        let inv_sqrt: Array1<f64> = degrees.mapv(|d| 1.0 / d.sqrt());
        let mut operator = Array2::zeros((n, n));
        let mut laplacian = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let p = w[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
                operator[[i, j]] = p;
                operator[[j, i]] = p;
                let l = if i == j { 1.0 - p } else { -p };
                laplacian[[i, j]] = l;
                laplacian[[j, i]] = l;
            }
        }
        Ok(Self {
            affinity: w,
            degrees,
            operator,
            laplacian,
            bandwidth,
        })
    }

    /// Build from a point cloud with a Gaussian kernel. `sigma = None`
    /// applies the median-distance rule at `DEFAULT_BANDWIDTH_SCALE`.
    pub fn from_points(pc: &PointCloud, sigma: Option<f64>) -> Result<Self> {
        let sigma = match sigma {
            Some(s) => s,
            None => median_bandwidth(pc, DEFAULT_BANDWIDTH_SCALE)?,
        };
        let w = gaussian_affinity(pc, sigma)?;
        Self::from_affinity(w, Some(sigma))
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    /// Dirichlet energy s^T L s of a signal on the graph.
    pub fn dirichlet_energy(&self, s: &Array1<f64>) -> Result<f64> {
        if s.len() != self.n() {
            return Err(Error::ShapeMismatch {
                what: "signal",
                expected: format!("{}", self.n()),
                got: format!("{}", s.len()),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal"));
        }
        Ok(s.dot(&self.laplacian.dot(s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use ndarray::{array, Axis};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(Array2::from_shape_fn((n, dim), |_| rng.gen_range(-2.0..2.0))).unwrap()
    }

    #[test]
    fn two_point_kernel_value() {
        let pc = PointCloud::new(array![[0.0], [1.0]]).unwrap();
        let d2 = pairwise_sq_distances(&pc);
        assert_eq!(d2[[0, 1]], 1.0);
        assert_eq!(d2[[0, 0]], 0.0);
        let w = gaussian_affinity(&pc, 1.0).unwrap();
        // exp(-1/2), fixed reference value
        assert!((w[[0, 1]] - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert_eq!(w[[0, 0]], 1.0);
        assert_eq!(w[[1, 1]], 1.0);
    }

    #[test]
    fn serial_and_parallel_distances_agree_exactly() {
        let pc = random_cloud(37, 3, 7);
        let a = pairwise_sq_distances(&pc);
        let b = pairwise_sq_distances_serial(&pc);
        assert_eq!(a, b);
        // exact symmetry by construction
        for i in 0..37 {
            for j in 0..37 {
                assert_eq!(a[[i, j]], a[[j, i]]);
            }
        }
    }

    #[test]
    fn median_bandwidth_even_count() {
        // distances {1, 3, 7, 2, 6, 4} -> sorted {1, 2, 3, 4, 6, 7} -> median 3.5
        let pc = PointCloud::new(array![[0.0], [1.0], [3.0], [7.0]]).unwrap();
        let sigma = median_bandwidth(&pc, 0.5).unwrap();
        assert!((sigma - 1.75).abs() < 1e-15);
    }

    #[test]
    fn median_bandwidth_odd_count() {
        // distances {1, 3, 2} -> median 2
        let pc = PointCloud::new(array![[0.0], [1.0], [3.0]]).unwrap();
        let sigma = median_bandwidth(&pc, 1.0).unwrap();
        assert!((sigma - 2.0).abs() < 1e-15);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let pc = PointCloud::new(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(
            median_bandwidth(&pc, 0.5),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn three_point_operator_oracle() {
        // Hand-computed P entries for points {0, 1, 2} on a line, sigma = 1:
        // W01 = W12 = exp(-1/2), W02 = exp(-2),
        // d0 = d2 = 1 + exp(-1/2) + exp(-2), d1 = 1 + 2 exp(-1/2).
        let pc = PointCloud::new(array![[0.0], [1.0], [2.0]]).unwrap();
        let ops = GraphOperators::from_points(&pc, Some(1.0)).unwrap();
        let w01 = 0.606_530_659_712_633_4_f64;
        let w02 = 0.135_335_283_236_612_7_f64;
        let d0 = 1.0 + w01 + w02;
        let d1 = 1.0 + 2.0 * w01;
        assert!((ops.degrees[0] - d0).abs() < 1e-14);
        assert!((ops.degrees[1] - d1).abs() < 1e-14);
        assert!((ops.operator[[0, 1]] - w01 / (d0 * d1).sqrt()).abs() < 1e-14);
        assert!((ops.operator[[0, 2]] - w02 / d0).abs() < 1e-14);
        assert!((ops.operator[[0, 0]] - 1.0 / d0).abs() < 1e-14);
        assert!((ops.laplacian[[0, 1]] + w01 / (d0 * d1).sqrt()).abs() < 1e-14);
        assert!((ops.laplacian[[0, 0]] - (1.0 - 1.0 / d0)).abs() < 1e-14);
    }

    #[test]
    fn laplacian_spectrum_in_range_with_degree_null_vector() {
        let pc = random_cloud(40, 2, 11);
        let ops = GraphOperators::from_points(&pc, None).unwrap();
        let (vals, _) = linalg::eigh_full(&ops.laplacian).unwrap();
        assert!(vals[0] > -1e-8, "Laplacian must be PSD, got {}", vals[0]);
        assert!(vals[0] < 1e-8, "smallest eigenvalue must be ~0");
        assert!(vals[39] <= 2.0 + 1e-8, "spectrum bounded by 2");
        // D^{1/2} 1 spans the null space.
        let null = ops.degrees.mapv(f64::sqrt);
        let energy = ops.dirichlet_energy(&null).unwrap();
        assert!(energy.abs() < 1e-10 * null.dot(&null));
    }

    #[test]
    fn disconnected_vertex_is_reported() {
        let mut w = Array2::zeros((3, 3));
        w[[0, 1]] = 1.0;
        w[[1, 0]] = 1.0;
        // vertex 2 isolated
        match GraphOperators::from_affinity(w, None) {
            Err(Error::DisconnectedVertex(2)) => {}
            other => panic!("expected DisconnectedVertex(2), got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_affinity_rejected() {
        let mut w = Array2::eye(3);
        w[[0, 1]] = 0.5;
        w[[1, 0]] = 0.25;
        assert!(matches!(
            GraphOperators::from_affinity(w, None),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn negative_affinity_rejected() {
        let mut w = Array2::eye(2);
        w[[0, 1]] = -0.1;
        w[[1, 0]] = -0.1;
        assert!(matches!(
            GraphOperators::from_affinity(w, None),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn zero_diagonal_adjacency_is_accepted() {
        // Adjacency-style input: 0/1 entries, zero diagonal.
        let w = array![[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let ops = GraphOperators::from_affinity(w, None).unwrap();
        assert_eq!(ops.bandwidth, None);
        assert!((ops.degrees[0] - 2.0).abs() < 1e-15);
        // P_01 = 1 / sqrt(2 * 1)
        assert!((ops.operator[[0, 1]] - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn permuting_points_permutes_distances_exactly() {
        let pc = random_cloud(23, 3, 3);
        let d = pairwise_sq_distances(&pc);
        let perm: Vec<usize> = (0..23).rev().collect();
        let permuted = PointCloud::new(pc.data().select(Axis(0), &perm)).unwrap();
        let dp = pairwise_sq_distances(&permuted);
        for i in 0..23 {
            for j in 0..23 {
                assert_eq!(dp[[i, j]], d[[perm[i], perm[j]]]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        // s^T L s must match the weighted edge-difference sum.
        #[test]
        fn dirichlet_identity(seed in 0u64..5000, n in 5usize..30, dim in 1usize..4) {
            let pc = random_cloud(n, dim, seed);
            let ops = GraphOperators::from_points(&pc, None).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let s = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
            let quad = ops.dirichlet_energy(&s).unwrap();
            let mut edge_sum = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let di = ops.degrees[i].sqrt();
                    let dj = ops.degrees[j].sqrt();
                    let diff = s[i] / di - s[j] / dj;
                    edge_sum += 0.5 * ops.affinity[[i, j]] * diff * diff;
                }
            }
            let scale = quad.abs().max(1.0);
            prop_assert!((quad - edge_sum).abs() <= 1e-9 * scale);
        }

        // Affinities stay in (0, 1] with unit diagonal for any bandwidth.
        #[test]
        fn affinity_range(seed in 0u64..5000, n in 2usize..20, sigma in 0.05f64..4.0) {
            let pc = random_cloud(n, 2, seed);
            let w = gaussian_affinity(&pc, sigma).unwrap();
            for i in 0..n {
                prop_assert_eq!(w[[i, i]], 1.0);
                for j in 0..n {
                    prop_assert!(w[[i, j]] > 0.0 && w[[i, j]] <= 1.0);
                }
            }
        }
    }
}

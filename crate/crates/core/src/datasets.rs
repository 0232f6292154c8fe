//! Synthetic paired datasets with known latent structure.
//!
//! Every generator draws n samples of a shared latent plus per-modality
//! exclusive latents, embeds them into the two observation spaces, and
//! returns the latents alongside the clouds so experiments can score
//! recovered vectors against ground truth. Generation is deterministic in
//! the seed (ChaCha8).

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::PointCloud;

pub const DEFAULT_RECTANGLE_SIDES: (f64, f64) = (2.0, 1.0);
pub const DEFAULT_CUBE_SIDES: (f64, f64, f64) = (4.0, 2.0, 1.0);
/// Torus radii (ring radius, tube radius); ratio 3:1 keeps the exclusive
/// tube mode well inside the leading spectrum.
pub const DEFAULT_TORUS_RADII: (f64, f64) = (3.0, 1.0);
pub const DEFAULT_DISK_RADIUS: f64 = 1.0;
pub const DEFAULT_SBM_BLOCKS_A: [usize; 4] = [200, 200, 200, 200];
pub const DEFAULT_SBM_BLOCKS_B: [usize; 5] = [100, 100, 200, 200, 200];
pub const DEFAULT_SBM_P: f64 = 0.33;
pub const DEFAULT_SBM_Q: f64 = 0.05;

/// Ground-truth latents for one paired draw. `theta` is the shared latent;
/// the psi matrices hold each modality's exclusive latents (possibly zero
/// columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub theta: Array1<f64>,
    pub psi_a: Array2<f64>,
    pub psi_b: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct PairedDataset {
    pub xa: PointCloud,
    pub xb: PointCloud,
    pub latents: Latents,
    pub name: String,
    pub params: serde_json::Value,
}

fn check_n(n: usize) -> Result<()> {
    if n < 4 {
        return Err(Error::TooFewSamples { n, min: 4 });
    }
    Ok(())
}

/// Shared coordinate on a segment of length `a`; modality B adds an
/// independent coordinate on a segment of length `b`.
pub fn line_rectangle(n: usize, a: f64, b: f64, seed: u64) -> Result<PairedDataset> {
    check_n(n)?;
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "segment lengths must be positive, got a = {a}, b = {b}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..a));
    let psi = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..b));
    let xa = Array2::from_shape_fn((n, 1), |(i, _)| theta[i]);
    let xb = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { theta[i] } else { psi[i] });
    Ok(PairedDataset {
        xa: PointCloud::new(xa)?,
        xb: PointCloud::new(xb)?,
        latents: Latents {
            theta,
            psi_a: Array2::zeros((n, 0)),
            psi_b: psi.insert_axis(ndarray::Axis(1)).to_owned(),
        },
        name: "line_rectangle".into(),
        params: json!({"n": n, "a": a, "b": b, "seed": seed}),
    })
}

/// Two rectangles sharing the first coordinate (segment of length `a`);
/// each modality draws its own independent second coordinate, on segments
/// of lengths `b_a` and `b_b`. Choose side lengths so that no exclusive
/// mode frequency collides with a shared one, or the colliding eigenspaces
/// mix and the shared/exclusive split becomes solver-dependent.
pub fn rectangle_pair(n: usize, a: f64, b_a: f64, b_b: f64, seed: u64) -> Result<PairedDataset> {
    check_n(n)?;
    if !(a > 0.0 && b_a > 0.0 && b_b > 0.0) || !a.is_finite() || !b_a.is_finite() || !b_b.is_finite()
    {
        return Err(Error::InvalidParameter(format!(
            "segment lengths must be positive, got a = {a}, b_a = {b_a}, b_b = {b_b}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..a));
    let psi_a = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..b_a));
    let psi_b = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..b_b));
    let xa = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { theta[i] } else { psi_a[i] });
    let xb = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { theta[i] } else { psi_b[i] });
    Ok(PairedDataset {
        xa: PointCloud::new(xa)?,
        xb: PointCloud::new(xb)?,
        latents: Latents {
            theta,
            psi_a: psi_a.insert_axis(ndarray::Axis(1)).to_owned(),
            psi_b: psi_b.insert_axis(ndarray::Axis(1)).to_owned(),
        },
        name: "rectangle_pair".into(),
        params: json!({"n": n, "a": a, "b_a": b_a, "b_b": b_b, "seed": seed}),
    })
}

/// Shared coordinate on a segment of length `a`; modality B adds two
/// independent coordinates on segments `b` and `c`. Side lengths must be
/// strictly decreasing so the exclusive modes appear in a fixed order.
pub fn line_cube(n: usize, a: f64, b: f64, c: f64, seed: u64) -> Result<PairedDataset> {
    check_n(n)?;
    if !(a > b && b > c && c > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cube sides must satisfy a > b > c > 0, got ({a}, {b}, {c})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..a));
    let psi1 = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..b));
    let psi2 = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..c));
    let xa = Array2::from_shape_fn((n, 1), |(i, _)| theta[i]);
    let xb = Array2::from_shape_fn((n, 3), |(i, j)| match j {
        0 => theta[i],
        1 => psi1[i],
        _ => psi2[i],
    });
    let mut psi_b = Array2::zeros((n, 2));
    psi_b.column_mut(0).assign(&psi1);
    psi_b.column_mut(1).assign(&psi2);
    Ok(PairedDataset {
        xa: PointCloud::new(xa)?,
        xb: PointCloud::new(xb)?,
        latents: Latents {
            theta,
            psi_a: Array2::zeros((n, 0)),
            psi_b,
        },
        name: "line_cube".into(),
        params: json!({"n": n, "a": a, "b": b, "c": c, "seed": seed}),
    })
}

/// Shared angle on a circle of radius `big_r`; modality B wraps a tube of
/// radius `small_r` around it (torus of revolution). The exclusive latent
/// is the tube angle.
pub fn circle_torus(n: usize, big_r: f64, small_r: f64, seed: u64) -> Result<PairedDataset> {
    check_n(n)?;
    if !(big_r > small_r && small_r > 0.0) || !big_r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "torus radii must satisfy R > r > 0, got ({big_r}, {small_r})"
        )));
    }
    let tau = std::f64::consts::TAU;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..tau));
    let psi = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..tau));
    let xa = Array2::from_shape_fn((n, 2), |(i, j)| {
        if j == 0 { big_r * theta[i].cos() } else { big_r * theta[i].sin() }
    });
    let xb = Array2::from_shape_fn((n, 3), |(i, j)| {
        let ring = big_r + small_r * psi[i].cos();
        match j {
            0 => ring * theta[i].cos(),
            1 => ring * theta[i].sin(),
            _ => small_r * psi[i].sin(),
        }
    });
    Ok(PairedDataset {
        xa: PointCloud::new(xa)?,
        xb: PointCloud::new(xb)?,
        latents: Latents {
            theta,
            psi_a: Array2::zeros((n, 0)),
            psi_b: psi.insert_axis(ndarray::Axis(1)).to_owned(),
        },
        name: "circle_torus".into(),
        params: json!({"n": n, "R": big_r, "r": small_r, "seed": seed}),
    })
}

/// Shared radius, independent rotation per modality: both clouds are disks
/// of radius `radius`, but each sample's angle is drawn separately for A
/// and B. Only the radius survives as common structure.
pub fn disk_rotation(n: usize, radius: f64, seed: u64) -> Result<PairedDataset> {
    check_n(n)?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "disk radius must be positive, got {radius}"
        )));
    }
    let tau = std::f64::consts::TAU;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..radius));
    let psi_a = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..tau));
    let psi_b = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..tau));
    let xa = Array2::from_shape_fn((n, 2), |(i, j)| {
        if j == 0 { r[i] * psi_a[i].cos() } else { r[i] * psi_a[i].sin() }
    });
    let xb = Array2::from_shape_fn((n, 2), |(i, j)| {
        if j == 0 { r[i] * psi_b[i].cos() } else { r[i] * psi_b[i].sin() }
    });
    Ok(PairedDataset {
        xa: PointCloud::new(xa)?,
        xb: PointCloud::new(xb)?,
        latents: Latents {
            theta: r,
            psi_a: psi_a.insert_axis(ndarray::Axis(1)).to_owned(),
            psi_b: psi_b.insert_axis(ndarray::Axis(1)).to_owned(),
        },
        name: "disk_rotation".into(),
        params: json!({"n": n, "radius": radius, "seed": seed}),
    })
}

/// Additive iid Gaussian noise on every coordinate.
pub fn add_noise(pc: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise level must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(pc.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = pc.data().mapv(|v| v + normal.sample(&mut rng));
    PointCloud::new(noisy)
}

/// A pair of stochastic block model graphs over one node set, where the
/// second partition refines the first. Differential structure lives in the
/// refined (split) community.
#[derive(Debug, Clone)]
pub struct SbmPair {
    pub adjacency_a: Array2<f64>,
    pub adjacency_b: Array2<f64>,
    pub labels_a: Vec<usize>,
    pub labels_b: Vec<usize>,
    /// Nodes of the first community that the B-partition splits.
    pub split_indices: Vec<usize>,
    /// Binary sub-community labels on `split_indices`.
    pub split_labels: Vec<usize>,
    pub params: serde_json::Value,
}

fn block_labels(sizes: &[usize]) -> Vec<usize> {
    let mut labels = Vec::with_capacity(sizes.iter().sum());
    for (k, &s) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(k).take(s));
    }
    labels
}

fn prefix_sums(sizes: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    sizes
        .iter()
        .map(|&s| {
            acc += s;
            acc
        })
        .collect()
}

fn draw_adjacency(
    labels: &[usize],
    p: f64,
    q: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let n = labels.len();
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = if labels[i] == labels[j] { p } else { q };
            if rng.gen_bool(prob) {
                adj[[i, j]] = 1.0;
                adj[[j, i]] = 1.0;
            }
        }
    }
    adj
}

fn has_isolated_vertex(adj: &Array2<f64>) -> bool {
    adj.sum_axis(ndarray::Axis(1)).iter().any(|&d| d == 0.0)
}

/// Draw the block-model pair. `sizes_b` must refine `sizes_a` (same total,
/// every A-community boundary also a B-community boundary, at least one
/// community actually split). Within-community edge probability `p`,
/// cross-community `q`, with 0 < q < p <= 1. Draws with an isolated vertex
/// are rejected and retried with an incremented sub-seed.
pub fn sbm_pair(
    sizes_a: &[usize],
    sizes_b: &[usize],
    p: f64,
    q: f64,
    seed: u64,
) -> Result<SbmPair> {
    if sizes_a.iter().any(|&s| s == 0) || sizes_b.iter().any(|&s| s == 0) {
        return Err(Error::InvalidParameter("empty community".into()));
    }
    let n: usize = sizes_a.iter().sum();
    if n < 4 {
        return Err(Error::TooFewSamples { n, min: 4 });
    }
    if sizes_b.iter().sum::<usize>() != n {
        return Err(Error::InvalidParameter(format!(
            "community sizes disagree: {} vs {} nodes",
            n,
            sizes_b.iter().sum::<usize>()
        )));
    }
    let bounds_a = prefix_sums(sizes_a);
    let bounds_b = prefix_sums(sizes_b);
    if !bounds_a.iter().all(|b| bounds_b.contains(b)) {
        return Err(Error::InvalidParameter(
            "second partition does not refine the first".into(),
        ));
    }
    if sizes_b.len() == sizes_a.len() {
        return Err(Error::InvalidParameter(
            "refinement must split at least one community".into(),
        ));
    }
    if !(q > 0.0 && q < p && p <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "edge probabilities must satisfy 0 < q < p <= 1, got p = {p}, q = {q}"
        )));
    }

    let labels_a = block_labels(sizes_a);
    let labels_b = block_labels(sizes_b);

    // First A-community that spans more than one B-community.
    let mut split_range = None;
    let mut start = 0;
    for &end in &bounds_a {
        if labels_b[start] != labels_b[end - 1] {
            split_range = Some((start, end));
            break;
        }
        start = end;
    }
    let (split_start, split_end) =
        split_range.expect("refinement check guarantees a split community");
    let split_indices: Vec<usize> = (split_start..split_end).collect();
    let first_sub = labels_b[split_start];
    let split_labels: Vec<usize> = split_indices
        .iter()
        .map(|&i| if labels_b[i] == first_sub { 0 } else { 1 })
        .collect();

    const MAX_ATTEMPTS: u64 = 32;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let adjacency_a = draw_adjacency(&labels_a, p, q, &mut rng);
        let adjacency_b = draw_adjacency(&labels_b, p, q, &mut rng);
        if has_isolated_vertex(&adjacency_a) || has_isolated_vertex(&adjacency_b) {
            continue;
        }
        return Ok(SbmPair {
            adjacency_a,
            adjacency_b,
            labels_a,
            labels_b,
            split_indices,
            split_labels,
            params: json!({
                "sizes_a": sizes_a, "sizes_b": sizes_b,
                "p": p, "q": q, "seed": seed, "attempt": attempt,
            }),
        });
    }
    Err(Error::DegenerateGeometry(format!(
        "block model kept an isolated vertex after {MAX_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_in_seed() {
        let d1 = line_rectangle(50, 2.0, 1.0, 9).unwrap();
        let d2 = line_rectangle(50, 2.0, 1.0, 9).unwrap();
        assert_eq!(d1.xb.data(), d2.xb.data());
        let d3 = line_rectangle(50, 2.0, 1.0, 10).unwrap();
        assert_ne!(d1.xb.data(), d3.xb.data());
    }

    #[test]
    fn rectangle_embeds_shared_coordinate() {
        let d = line_rectangle(100, 2.0, 1.0, 3).unwrap();
        assert_eq!(d.xa.dim(), 1);
        assert_eq!(d.xb.dim(), 2);
        for i in 0..100 {
            assert_eq!(d.xa.data()[[i, 0]], d.xb.data()[[i, 0]]);
            let th = d.latents.theta[i];
            assert!((0.0..2.0).contains(&th));
            let psi = d.latents.psi_b[[i, 0]];
            assert!((0.0..1.0).contains(&psi));
            assert_eq!(d.xb.data()[[i, 1]], psi);
        }
        assert_eq!(d.latents.psi_a.ncols(), 0);
    }

    #[test]
    fn rectangle_pair_shares_first_coordinate_only() {
        let d = rectangle_pair(80, 2.0, 0.55, 0.45, 5).unwrap();
        assert_eq!(d.xa.dim(), 2);
        assert_eq!(d.xb.dim(), 2);
        for i in 0..80 {
            assert_eq!(d.xa.data()[[i, 0]], d.xb.data()[[i, 0]]);
            assert_eq!(d.xa.data()[[i, 1]], d.latents.psi_a[[i, 0]]);
            assert_eq!(d.xb.data()[[i, 1]], d.latents.psi_b[[i, 0]]);
            assert!((0.0..0.55).contains(&d.latents.psi_a[[i, 0]]));
            assert!((0.0..0.45).contains(&d.latents.psi_b[[i, 0]]));
        }
        assert_ne!(d.latents.psi_a, d.latents.psi_b);
        assert!(rectangle_pair(80, 0.0, 1.0, 1.0, 5).is_err());
        assert!(rectangle_pair(3, 2.0, 1.0, 1.0, 5).is_err());
    }

    #[test]
    fn cube_side_ordering_enforced() {
        assert!(line_cube(50, 2.0, 2.0, 1.0, 0).is_err());
        assert!(line_cube(50, 4.0, 2.0, 0.0, 0).is_err());
        let d = line_cube(50, 4.0, 2.0, 1.0, 0).unwrap();
        assert_eq!(d.xb.dim(), 3);
        assert_eq!(d.latents.psi_b.ncols(), 2);
    }

    #[test]
    fn torus_points_satisfy_surface_identity() {
        let (big_r, small_r) = DEFAULT_TORUS_RADII;
        let d = circle_torus(200, big_r, small_r, 5).unwrap();
        for i in 0..200 {
            let xa = d.xa.data().row(i);
            assert!((xa.dot(&xa).sqrt() - big_r).abs() < 1e-12, "circle radius");
            let row = d.xb.data().row(i);
            let ring = (row[0] * row[0] + row[1] * row[1]).sqrt();
            let surf = (ring - big_r).powi(2) + row[2] * row[2];
            assert!((surf - small_r * small_r).abs() < 1e-12, "torus identity");
        }
    }

    #[test]
    fn disk_pair_shares_radius_only() {
        let d = disk_rotation(150, 1.0, 8).unwrap();
        for i in 0..150 {
            let ra = d.xa.data().row(i).dot(&d.xa.data().row(i)).sqrt();
            let rb = d.xb.data().row(i).dot(&d.xb.data().row(i)).sqrt();
            assert!((ra - rb).abs() < 1e-12);
            assert!((ra - d.latents.theta[i]).abs() < 1e-12);
        }
        // angles differ (independent draws)
        assert_ne!(d.latents.psi_a, d.latents.psi_b);
    }

    #[test]
    fn noise_is_unbiased_and_seeded() {
        let d = line_rectangle(400, 2.0, 1.0, 1).unwrap();
        let noisy = add_noise(&d.xb, 0.1, 42).unwrap();
        let same = add_noise(&d.xb, 0.1, 42).unwrap();
        assert_eq!(noisy.data(), same.data());
        let diff = noisy.data() - d.xb.data();
        let mean = diff.sum() / diff.len() as f64;
        assert!(mean.abs() < 0.02, "noise mean {mean} too far from zero");
        let var = diff.mapv(|v| v * v).sum() / diff.len() as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.02, "noise sd {}", var.sqrt());
        // sigma = 0 is the identity
        let clean = add_noise(&d.xb, 0.0, 7).unwrap();
        assert_eq!(clean.data(), d.xb.data());
    }

    #[test]
    fn sbm_structure_and_split_info() {
        let pair = sbm_pair(&[30, 30], &[15, 15, 30], 0.6, 0.1, 11).unwrap();
        let n = 60;
        assert_eq!(pair.adjacency_a.nrows(), n);
        for i in 0..n {
            assert_eq!(pair.adjacency_a[[i, i]], 0.0, "no self loops");
            for j in 0..n {
                let v = pair.adjacency_a[[i, j]];
                assert!(v == 0.0 || v == 1.0);
                assert_eq!(v, pair.adjacency_a[[j, i]]);
            }
        }
        assert_eq!(pair.split_indices, (0..30).collect::<Vec<_>>());
        assert_eq!(&pair.split_labels[..15], &[0; 15]);
        assert_eq!(&pair.split_labels[15..], &[1; 15]);
        assert_eq!(pair.labels_a[29], 0);
        assert_eq!(pair.labels_a[30], 1);
        assert_eq!(pair.labels_b[14], 0);
        assert_eq!(pair.labels_b[15], 1);
    }

    #[test]
    fn sbm_edge_rates_follow_block_structure() {
        let pair = sbm_pair(&[100, 100], &[50, 50, 100], 0.5, 0.1, 3).unwrap();
        let adj = &pair.adjacency_a;
        let mut within = 0.0;
        let mut within_n = 0.0;
        let mut cross = 0.0;
        let mut cross_n = 0.0;
        for i in 0..200 {
            for j in (i + 1)..200 {
                if pair.labels_a[i] == pair.labels_a[j] {
                    within += adj[[i, j]];
                    within_n += 1.0;
                } else {
                    cross += adj[[i, j]];
                    cross_n += 1.0;
                }
            }
        }
        let within_rate = within / within_n;
        let cross_rate = cross / cross_n;
        assert!((within_rate - 0.5).abs() < 0.05, "within rate {within_rate}");
        assert!((cross_rate - 0.1).abs() < 0.03, "cross rate {cross_rate}");
    }

    #[test]
    fn sbm_rejects_non_refinements() {
        // different totals
        assert!(sbm_pair(&[30, 30], &[15, 15, 40], 0.5, 0.1, 0).is_err());
        // boundaries cross
        assert!(sbm_pair(&[30, 30], &[20, 20, 20], 0.5, 0.1, 0).is_err());
        // nothing split
        assert!(sbm_pair(&[30, 30], &[30, 30], 0.5, 0.1, 0).is_err());
        // bad probabilities
        assert!(sbm_pair(&[30, 30], &[15, 15, 30], 0.1, 0.5, 0).is_err());
        assert!(sbm_pair(&[30, 30], &[15, 15, 30], 0.5, 0.0, 0).is_err());
    }

    #[test]
    fn sbm_gives_up_when_graphs_stay_disconnected() {
        // Edge probabilities this small leave isolated vertices in every
        // attempt.
        let err = sbm_pair(&[3, 3], &[1, 2, 3], 1e-9, 1e-10, 0);
        assert!(matches!(err, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn sbm_deterministic_per_seed() {
        let p1 = sbm_pair(&[20, 20], &[10, 10, 20], 0.6, 0.2, 5).unwrap();
        let p2 = sbm_pair(&[20, 20], &[10, 10, 20], 0.6, 0.2, 5).unwrap();
        assert_eq!(p1.adjacency_a, p2.adjacency_a);
        assert_eq!(p1.adjacency_b, p2.adjacency_b);
    }
}

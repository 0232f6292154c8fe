//! Empirical verification of the method's continuum-limit behavior:
//! eigenvector convergence to sampled manifold eigenfunctions, near
//! orthogonality of eigenvectors across modalities, recovery through the
//! low-pass variant of the extraction, and randomized checks of the matrix
//! perturbation inequalities the analysis rests on.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::line_rectangle;
use crate::differential::extract_single;
use crate::differential::DifferentialConfig;
use crate::error::{Error, Result};
use crate::graph::{GraphOperators, PointCloud};
use crate::linalg::{
    eigh_extreme_values, eigh_full, orthonormalize_columns, spectral_norm_rect,
    spectral_norm_sym, symmetrize, SpectrumSide,
};
use crate::metrics::ground_truth_correlation;
use crate::spectral::{eigendecompose, filter_matrix, gft, igft, FilterSpec};

/// Additive slack when asserting the perturbation inequalities.
pub const PERTURBATION_SLACK: f64 = 1e-9;

/// The kernel bandwidth in the convergence runs decays like
/// (ln n / n) to this power, slow enough that each graph eigenvector stays
/// well resolved while the diffusion scale still shrinks.
pub const BANDWIDTH_DECAY_EXPONENT: f64 = 1.0 / 6.0;

fn mix(seed: u64, salt: u64) -> u64 {
    (seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// One-dimensional model spaces with known Laplacian eigenfunctions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifold {
    Circle { radius: f64 },
    Interval { length: f64 },
}

impl Manifold {
    fn validate(&self) -> Result<()> {
        let p = match self {
            Manifold::Circle { radius } => *radius,
            Manifold::Interval { length } => *length,
        };
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "manifold size must be positive and finite, got {p}"
            )));
        }
        Ok(())
    }

    fn label(&self) -> String {
        match self {
            Manifold::Circle { radius } => format!("circle r={radius}"),
            Manifold::Interval { length } => format!("interval l={length}"),
        }
    }
}

/// Per-sample-count record of an error that should shrink as n grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub description: String,
    pub n_values: Vec<usize>,
    /// Diffusion scale (half the squared kernel bandwidth) used per n.
    pub bandwidths: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares coefficient magnitude per n; near one when the graph
    /// eigenvector matches the sampled eigenfunction in scale.
    pub alphas: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.n_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_values.is_empty()
    }

    pub fn errors_strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn errors_non_increasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] <= w[0])
    }
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::InvalidParameter("empty sample-count grid".into()));
    }
    if !n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter(
            "sample-count grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Bandwidth schedule for the convergence runs: a manifold-sized constant
/// times (ln n / n)^{1/6}.
pub fn convergence_bandwidth(manifold: &Manifold, n: usize) -> f64 {
    let scale = match manifold {
        Manifold::Circle { radius } => *radius,
        Manifold::Interval { length } => 0.5 * length,
    };
    let nf = n as f64;
    scale * (nf.ln() / nf).powf(BANDWIDTH_DECAY_EXPONENT)
}

fn sample_manifold(
    manifold: &Manifold,
    n: usize,
    seed: u64,
) -> Result<(PointCloud, Array1<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match manifold {
        Manifold::Circle { radius } => {
            let t = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..std::f64::consts::TAU));
            let data = Array2::from_shape_fn((n, 2), |(i, j)| {
                if j == 0 {
                    radius * t[i].cos()
                } else {
                    radius * t[i].sin()
                }
            });
            Ok((PointCloud::new(data)?, t))
        }
        Manifold::Interval { length } => {
            let x = Array1::from_shape_fn(n, |_| rng.gen_range(0.0..*length));
            let data = x.clone().insert_axis(Axis(1));
            Ok((PointCloud::new(data)?, x))
        }
    }
}

/// Sampled eigenfunctions spanning the target eigenspace for one mode, in
/// the 1/sqrt(pn) scaling that makes their norms approach one.
fn sampled_eigenfunctions(
    manifold: &Manifold,
    mode: usize,
    latent: &Array1<f64>,
) -> Vec<Array1<f64>> {
    let n = latent.len() as f64;
    match manifold {
        Manifold::Circle { .. } => {
            if mode == 0 {
                vec![Array1::from_elem(latent.len(), 1.0 / n.sqrt())]
            } else {
                let k = mode as f64;
                let c = (2.0 / n).sqrt();
                vec![
                    latent.mapv(|t| c * (k * t).cos()),
                    latent.mapv(|t| c * (k * t).sin()),
                ]
            }
        }
        Manifold::Interval { length } => {
            if mode == 0 {
                vec![Array1::from_elem(latent.len(), 1.0 / n.sqrt())]
            } else {
                let f = std::f64::consts::PI * mode as f64 / length;
                let c = (2.0 / n).sqrt();
                vec![latent.mapv(|x| c * (f * x).cos())]
            }
        }
    }
}

/// Distance between a computed eigenspace and its analytic target: the sine
/// of the largest principal angle, plus the least-squares coefficient
/// magnitude farthest from one across the computed columns.
fn eigenspace_error(vectors: ArrayView2<f64>, targets: &[Array1<f64>]) -> Result<(f64, f64)> {
    let p = targets.len();
    if vectors.ncols() != p || p == 0 || p > 2 {
        return Err(Error::InvalidParameter(format!(
            "eigenspace comparison needs one or two matched columns, got {} vs {p}",
            vectors.ncols()
        )));
    }
    let n = vectors.nrows();
    let mut phi = Array2::zeros((n, p));
    for (j, t) in targets.iter().enumerate() {
        phi.column_mut(j).assign(t);
    }
    let phi_o = orthonormalize_columns(&phi.view())?;
    let cross = vectors.t().dot(&phi_o);
    let gram = cross.t().dot(&cross);
    let (w, _) = eigh_full(&gram)?;
    let sin_max = (1.0 - w[0].clamp(0.0, 1.0)).max(0.0).sqrt();

    // least-squares coefficients against the raw (unorthonormalized) targets
    let g = phi.t().dot(&phi);
    let mut worst_alpha = 1.0f64;
    for j in 0..vectors.ncols() {
        let rhs = phi.t().dot(&vectors.column(j));
        let alpha = if p == 1 {
            (rhs[0] / g[[0, 0]]).abs()
        } else {
            let det = g[[0, 0]] * g[[1, 1]] - g[[0, 1]] * g[[1, 0]];
            if det.abs() <= 1e-14 * g[[0, 0]].abs().max(g[[1, 1]].abs()) {
                return Err(Error::DegenerateResult(
                    "target eigenfunctions are numerically dependent".into(),
                ));
            }
            let c0 = (rhs[0] * g[[1, 1]] - rhs[1] * g[[0, 1]]) / det;
            let c1 = (g[[0, 0]] * rhs[1] - g[[1, 0]] * rhs[0]) / det;
            (c0 * c0 + c1 * c1).sqrt()
        };
        if (alpha - 1.0).abs() > (worst_alpha - 1.0).abs() {
            worst_alpha = alpha;
        }
    }
    Ok((sin_max, worst_alpha))
}

/// For each n, samples the manifold, builds the normalized Laplacian with
/// the scheduled bandwidth, and measures how far the eigenvectors of the
/// requested mode are from the sampled analytic eigenfunctions. Degenerate
/// circle modes are matched as two-dimensional subspaces.
pub fn eigenvector_convergence(
    manifold: Manifold,
    mode: usize,
    n_grid: &[usize],
    seed: u64,
) -> Result<ConvergenceTrace> {
    manifold.validate()?;
    check_grid(n_grid)?;
    let needed = match manifold {
        Manifold::Circle { .. } => {
            if mode == 0 {
                1
            } else {
                2 * mode + 1
            }
        }
        Manifold::Interval { .. } => mode + 1,
    };
    let mut trace = ConvergenceTrace {
        description: format!("{} mode {mode} eigenvector alignment", manifold.label()),
        n_values: n_grid.to_vec(),
        bandwidths: Vec::with_capacity(n_grid.len()),
        errors: Vec::with_capacity(n_grid.len()),
        alphas: Vec::with_capacity(n_grid.len()),
    };
    for &n in n_grid {
        if n < 16 || n < 2 * needed {
            return Err(Error::TooFewSamples { n, min: 16.max(2 * needed) });
        }
        let (pc, latent) = sample_manifold(&manifold, n, mix(seed, n as u64))?;
        let sigma = convergence_bandwidth(&manifold, n);
        let ops = GraphOperators::from_points(&pc, Some(sigma))?;
        let es = eigendecompose(
            &ops.laplacian,
            needed,
            SpectrumSide::Smallest,
            format!("convergence n={n}"),
        )?;
        let cols = match manifold {
            Manifold::Circle { .. } if mode > 0 => {
                es.eigenvectors.slice(s![.., 2 * mode - 1..=2 * mode])
            }
            _ => es.eigenvectors.slice(s![.., mode..=mode]),
        };
        let targets = sampled_eigenfunctions(&manifold, mode, &latent);
        let (err, alpha) = eigenspace_error(cols, &targets)?;
        trace.bandwidths.push(0.5 * sigma * sigma);
        trace.errors.push(err);
        trace.alphas.push(alpha);
    }
    Ok(trace)
}

/// Leading k eigenvectors (constant mode included) of one modality's
/// normalized Laplacian under the median bandwidth rule.
pub fn modality_eigenvectors(x: &PointCloud, k: usize) -> Result<Array2<f64>> {
    if k == 0 || k > x.n() {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenvectors for {} samples",
            x.n()
        )));
    }
    let ops = GraphOperators::from_points(x, None)?;
    let es = eigendecompose(&ops.laplacian, k, SpectrumSide::Smallest, "cross-modality")?;
    Ok(es.eigenvectors)
}

/// k x k matrix of |<v_i^a, v_j^b>| between the two modalities' leading
/// Laplacian eigenvectors. Entries near one mark eigenvectors the modalities
/// share; independent modes give entries near zero.
pub fn cross_orthogonality(xa: &PointCloud, xb: &PointCloud, k: usize) -> Result<Array2<f64>> {
    if xa.n() != xb.n() {
        return Err(Error::ShapeMismatch {
            what: "paired modalities",
            expected: format!("{}", xa.n()),
            got: format!("{}", xb.n()),
        });
    }
    let va = modality_eigenvectors(xa, k)?;
    let vb = modality_eigenvectors(xb, k)?;
    Ok(va.t().dot(&vb).mapv(f64::abs))
}

/// Labels each eigenvector column by the frequency of the shared-coordinate
/// cosine it correlates with: Some(0) for the constant mode, Some(m) when
/// |corr| with cos(pi m theta / length) reaches `min_correlation`, None for
/// modes driven by anything else.
pub fn classify_theta_modes(
    vectors: &ArrayView2<f64>,
    theta: ArrayView1<f64>,
    length: f64,
    max_freq: usize,
    min_correlation: f64,
) -> Result<Vec<Option<usize>>> {
    if vectors.nrows() != theta.len() {
        return Err(Error::ShapeMismatch {
            what: "eigenvectors vs latent",
            expected: format!("{}", vectors.nrows()),
            got: format!("{}", theta.len()),
        });
    }
    if !(length > 0.0) || max_freq == 0 || !(0.0..=1.0).contains(&min_correlation) {
        return Err(Error::InvalidParameter(
            "classification needs positive length, max_freq >= 1, threshold in [0, 1]".into(),
        ));
    }
    let n = vectors.nrows() as f64;
    let mut labels = Vec::with_capacity(vectors.ncols());
    for col in vectors.axis_iter(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        // Cosine against the flat vector. The discrete constant mode carries
        // degree weighting, so it is near 1 but not exactly 1; genuinely
        // oscillatory interval modes integrate to zero and land near 0.
        let mean_mass = col.sum().abs() / (n.sqrt() * norm.max(1e-300));
        if mean_mass >= 0.9 {
            labels.push(Some(0));
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for m in 1..=max_freq {
            let f = std::f64::consts::PI * m as f64 / length;
            let target = theta.mapv(|t| (f * t).cos());
            let corr = ground_truth_correlation(col, target.view())?;
            if best.map_or(true, |(_, c)| corr > c) {
                best = Some((m, corr));
            }
        }
        labels.push(match best {
            Some((m, c)) if c >= min_correlation => Some(m),
            _ => None,
        });
    }
    Ok(labels)
}

/// Runs the low-pass variant of the extraction on the line-vs-rectangle
/// pair over a grid of sample counts and traces the squared distance of the
/// second modality's differential vector from the sampled private cosine.
pub fn lowpass_recovery_trace(
    a: f64,
    b: f64,
    tau: f64,
    n_grid: &[usize],
    seed: u64,
) -> Result<ConvergenceTrace> {
    check_grid(n_grid)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "low-pass cutoff must lie in (0, 1), got {tau}"
        )));
    }
    let cfg = DifferentialConfig {
        filter: Some(FilterSpec::Threshold { tau }),
        lowpass_tau: Some(tau),
        ..DifferentialConfig::default()
    };
    let mut trace = ConvergenceTrace {
        description: format!("low-pass differential recovery a={a} b={b} tau={tau}"),
        n_values: n_grid.to_vec(),
        bandwidths: Vec::with_capacity(n_grid.len()),
        errors: Vec::with_capacity(n_grid.len()),
        alphas: Vec::with_capacity(n_grid.len()),
    };
    for &n in n_grid {
        let ds = line_rectangle(n, a, b, mix(seed, n as u64))?;
        let pair = extract_single(&ds.xa, &ds.xb, &cfg, 1)?;
        let delta = pair.b.leading();
        let c = (2.0 / n as f64).sqrt();
        let f = std::f64::consts::PI / b;
        let phi = ds.latents.psi_b.column(0).mapv(|psi| c * (f * psi).cos());
        let alpha = delta.dot(&phi) / phi.dot(&phi);
        let resid = &delta.to_owned() - &(alpha * &phi);
        let sigma = pair.b.info.bandwidth.unwrap_or(f64::NAN);
        trace.bandwidths.push(0.5 * sigma * sigma);
        trace.errors.push(resid.dot(&resid));
        trace.alphas.push(alpha.abs());
    }
    Ok(trace)
}

/// Outcome of one randomized inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub trials: usize,
    /// Trials whose margin fell below -PERTURBATION_SLACK.
    pub violations: usize,
    /// Smallest (bound - observed) over all trials; the inequality holds
    /// when this stays above -PERTURBATION_SLACK.
    pub worst_margin: f64,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn summarize(name: &str, margins: &[f64]) -> BoundCheck {
    BoundCheck {
        name: name.to_string(),
        trials: margins.len(),
        violations: margins.iter().filter(|&&m| m < -PERTURBATION_SLACK).count(),
        worst_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

fn run_trials<F>(trials: usize, seed: u64, salt: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let one = |t: usize| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, salt), t as u64));
        f(&mut rng)
    };
    #[cfg(feature = "parallel")]
    return (0..trials).into_par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    (0..trials).map(one).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    loop {
        let v = Array1::<f64>::from_shape_fn(n, |_| StandardNormal.sample(rng));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Result<Array2<f64>> {
    let g = Array2::<f64>::from_shape_fn((n, k), |_| StandardNormal.sample(rng));
    orthonormalize_columns(&g.view())
}

/// Two unit vectors that are perturbations of a common unit vector keep
/// overlap at least 1 - (|e_a| + |e_b| + |e_a||e_b|), with the perturbations
/// measured after normalization.
fn aligned_overlap_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(5..=60);
    let u = random_unit(rng, n);
    let make = |rng: &mut ChaCha8Rng| {
        let delta = rng.gen_range(0.0..0.3);
        let g = random_unit(rng, n);
        let raw = &u + &(delta * &g);
        let norm = raw.dot(&raw).sqrt();
        raw / norm
    };
    let va = make(rng);
    let vb = make(rng);
    let ea = {
        let d = &va - &u;
        d.dot(&d).sqrt()
    };
    let eb = {
        let d = &vb - &u;
        d.dot(&d).sqrt()
    };
    let lhs = va.dot(&vb).abs();
    let bound = 1.0 - (ea + eb + ea * eb);
    Ok(lhs - bound)
}

/// Orthonormal frames aligned column by column (v_i' u_i >= 1 - eps) differ
/// by at most 2 K eps in squared spectral norm.
fn near_identity_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(10..=100);
    let k = rng.gen_range(1..=8usize.min(n - 2));
    let u = random_orthonormal(rng, n, k)?;
    let delta = rng.gen_range(0.0..0.25);
    let noise = Array2::from_shape_fn((n, k), |_| {
        let g: f64 = StandardNormal.sample(rng);
        delta / (n as f64).sqrt() * g
    });
    let mut v = orthonormalize_columns(&(&u + &noise).view())?;
    let mut eps = 0.0f64;
    for i in 0..k {
        if v.column(i).dot(&u.column(i)) < 0.0 {
            v.column_mut(i).mapv_inplace(|x| -x);
        }
        eps = eps.max(1.0 - v.column(i).dot(&u.column(i)));
    }
    let diff = &v - &u;
    let lhs = spectral_norm_rect(&diff.view())?.powi(2);
    let bound = 2.0 * k as f64 * eps;
    Ok(bound - lhs)
}

/// Projecting a PSD matrix onto the orthogonal complement of K directions
/// that have overlap at most eps with every eigenvector changes it by at
/// most K eps^2 times the eigenvalue sum. The directions are drawn inside
/// the null space and then perturbed, which keeps eps near its 1/sqrt(n)
/// floor while the hypothesis stays exact.
fn projected_energy_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(20..=100);
    let r = rng.gen_range(n / 5..=n / 3);
    let k = rng.gen_range(1..=8);
    let basis = random_orthonormal(rng, n, n)?;
    let u_top = basis.slice(s![.., ..r]);
    let lambda = Array1::from_shape_fn(r, |_| rng.gen_range(0.1..2.0));
    let mut scaled = u_top.to_owned();
    for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|x| x * lambda[j]);
    }
    let mut a = scaled.dot(&u_top.t());
    symmetrize(&mut a);

    let null_basis = basis.slice(s![.., r..]);
    let mixer = random_orthonormal(rng, n - r, k)?;
    let v0 = null_basis.dot(&mixer);
    let eta = rng.gen_range(0.3..1.0);
    let noise = Array2::from_shape_fn((n, k), |_| {
        let g: f64 = StandardNormal.sample(rng);
        eta / (n as f64).sqrt() * g
    });
    let v = orthonormalize_columns(&(&v0 + &noise).view())?;

    let overlaps = v.t().dot(&basis);
    let eps = overlaps
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1.0 / (n as f64).sqrt());
    let q = Array2::eye(n) - v.dot(&v.t());
    let diff = &a - &q.dot(&a).dot(&q);
    let lhs = spectral_norm_sym(&diff)?;
    let bound = k as f64 * eps * eps * lambda.sum();
    Ok(bound - lhs)
}

/// Swapping the orthonormal frame in a two-sided complement projection of a
/// PSD matrix moves the result by at most 4 |M| |U - V|.
fn projection_swap_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(10..=100);
    let k = rng.gen_range(1..=8usize.min(n - 2));
    let g = Array2::<f64>::from_shape_fn((n, n), |_| StandardNormal.sample(rng));
    let mut m = g.t().dot(&g) / n as f64;
    symmetrize(&mut m);
    let u = random_orthonormal(rng, n, k)?;
    let delta = rng.gen_range(0.0..1.5);
    let noise = Array2::from_shape_fn((n, k), |_| {
        let g: f64 = StandardNormal.sample(rng);
        delta / (n as f64).sqrt() * g
    });
    let v = orthonormalize_columns(&(&u + &noise).view())?;
    let qu = Array2::eye(n) - u.dot(&u.t());
    let qv = Array2::eye(n) - v.dot(&v.t());
    let diff = &qu.dot(&m).dot(&qu) - &qv.dot(&m).dot(&qv);
    let lhs = spectral_norm_sym(&diff)?;
    let du = &u - &v;
    let bound = 4.0 * spectral_norm_sym(&m)? * spectral_norm_rect(&du.view())?;
    Ok(bound - lhs)
}

/// Randomized verification of the four perturbation inequalities. Each
/// check reports its trial count, violations beyond the slack, and the
/// worst margin (bound minus observed quantity).
pub fn perturbation_bound_suite(trials: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let checks: [(&str, fn(&mut ChaCha8Rng) -> Result<f64>); 4] = [
        ("aligned_vector_overlap", aligned_overlap_margin),
        ("near_identity_frames", near_identity_margin),
        ("projected_energy", projected_energy_margin),
        ("projection_swap", projection_swap_margin),
    ];
    let mut out = Vec::with_capacity(checks.len());
    for (salt, (name, f)) in checks.into_iter().enumerate() {
        let margins = run_trials(trials, seed, salt as u64 + 1, f)?;
        out.push(summarize(name, &margins));
    }
    Ok(out)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Result<PointCloud> {
    PointCloud::new(Array2::<f64>::from_shape_fn((n, dim), |_| StandardNormal.sample(rng)))
}

fn gft_round_trip_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(12..=40);
    let pc = random_cloud(rng, n, 2)?;
    let ops = GraphOperators::from_points(&pc, None)?;
    let es = eigendecompose(&ops.laplacian, n, SpectrumSide::Smallest, "round trip")?;
    let s = Array1::<f64>::from_shape_fn(n, |_| StandardNormal.sample(rng));
    let back = igft(&es, &gft(&es, &s)?)?;
    let diff = &back - &s;
    let rel = diff.dot(&diff).sqrt() / s.dot(&s).sqrt().max(1e-300);
    Ok(1e-9 - rel)
}

fn filter_idempotent_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(12..=40);
    let pc = random_cloud(rng, n, 2)?;
    let ops = GraphOperators::from_points(&pc, None)?;
    let es = eigendecompose(&ops.laplacian, n, SpectrumSide::Smallest, "idempotency")?;
    let tau = rng.gen_range(0.1..0.9);
    let h = filter_matrix(&es, &FilterSpec::Threshold { tau })?;
    let hh = h.dot(&h);
    let lhs = spectral_norm_sym(&(&hh - &h))?;
    Ok(1e-8 - lhs)
}

fn laplacian_psd_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(12..=40);
    let pc = random_cloud(rng, n, 3)?;
    let ops = GraphOperators::from_points(&pc, None)?;
    let (lo, _) = eigh_extreme_values(&ops.laplacian)?;
    Ok(1e-8 - lo.abs())
}

fn dirichlet_identity_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(12..=40);
    let pc = random_cloud(rng, n, 2)?;
    let ops = GraphOperators::from_points(&pc, None)?;
    let s = Array1::<f64>::from_shape_fn(n, |_| StandardNormal.sample(rng));
    let quad = s.dot(&ops.laplacian.dot(&s));
    let sum_form = ops.dirichlet_energy(&s)?;
    let rel = (quad - sum_form).abs() / quad.abs().max(1e-12);
    Ok(1e-9 - rel)
}

fn permutation_equivariance_margin(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = 40;
    let ds = line_rectangle(n, 2.0, 1.0, rng.gen())?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let permute = |pc: &PointCloud| PointCloud::new(pc.data().select(Axis(0), &perm));
    let cfg = DifferentialConfig::default();
    let base = extract_single(&ds.xa, &ds.xb, &cfg, 1)?;
    let shuffled = extract_single(&permute(&ds.xa)?, &permute(&ds.xb)?, &cfg, 1)?;
    let mut worst = 0.0f64;
    for (orig, perm_res) in [(&base.a, &shuffled.a), (&base.b, &shuffled.b)] {
        let expected = Array1::from_shape_fn(n, |i| orig.leading()[perm[i]]);
        let got = perm_res.leading();
        let sign = if got.dot(&expected) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            worst = worst.max((sign * got[i] - expected[i]).abs());
        }
    }
    Ok(1e-8 - worst)
}

/// Randomized checks of the library's numerical contracts: transform round
/// trips, filter idempotency, Laplacian positive semidefiniteness, the
/// Dirichlet-energy identity, and permutation equivariance of the full
/// extraction. Margins are (tolerance - observed error).
pub fn numerical_invariant_suite(trials: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let checks: [(&str, fn(&mut ChaCha8Rng) -> Result<f64>); 5] = [
        ("gft_round_trip", gft_round_trip_margin),
        ("filter_idempotent", filter_idempotent_margin),
        ("laplacian_psd", laplacian_psd_margin),
        ("dirichlet_identity", dirichlet_identity_margin),
        ("permutation_equivariance", permutation_equivariance_margin),
    ];
    let mut out = Vec::with_capacity(checks.len());
    for (salt, (name, f)) in checks.into_iter().enumerate() {
        let margins = run_trials(trials, seed, 0x100 + salt as u64, f)?;
        out.push(summarize(name, &margins));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_constant_mode_tracks_flat_eigenfunction() {
        // The discrete mode is the degree-scaled constant; kernel mass lost
        // at the interval ends bends it away from flat within one bandwidth
        // of each boundary, which bounds the achievable error at this n.
        let trace = eigenvector_convergence(
            Manifold::Interval { length: 1.0 },
            0,
            &[1000],
            7,
        )
        .unwrap();
        assert!(trace.errors[0] <= 0.15, "constant-mode error {}", trace.errors[0]);
    }

    #[test]
    fn convergence_trace_is_reproducible() {
        let m = Manifold::Circle { radius: 1.0 };
        let t1 = eigenvector_convergence(m, 1, &[200, 300], 99).unwrap();
        let t2 = eigenvector_convergence(m, 1, &[200, 300], 99).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.len(), 2);
        assert!(t1.errors.iter().all(|e| e.is_finite()));
    }

    #[test]
    fn convergence_rejects_bad_grids() {
        let m = Manifold::Circle { radius: 1.0 };
        assert!(eigenvector_convergence(m, 1, &[], 0).is_err());
        assert!(eigenvector_convergence(m, 1, &[300, 200], 0).is_err());
        assert!(eigenvector_convergence(m, 1, &[10], 0).is_err());
        assert!(eigenvector_convergence(Manifold::Circle { radius: -1.0 }, 1, &[100], 0).is_err());
    }

    #[test]
    fn identical_modalities_have_identity_cross_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pc = random_cloud(&mut rng, 200, 2).unwrap();
        let gram = cross_orthogonality(&pc, &pc, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[[i, j]] - want).abs() < 1e-8,
                    "entry ({i},{j}) = {}",
                    gram[[i, j]]
                );
            }
        }
    }

    #[test]
    fn cross_gram_entries_stay_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pa = random_cloud(&mut rng, 150, 2).unwrap();
        let pb = random_cloud(&mut rng, 150, 3).unwrap();
        let gram = cross_orthogonality(&pa, &pb, 5).unwrap();
        for &g in gram.iter() {
            assert!((0.0..=1.0 + 1e-9).contains(&g), "entry {g}");
        }
    }

    #[test]
    fn theta_classification_finds_low_shared_modes() {
        // shared side long, private side short: the first nontrivial modes
        // vary along theta only
        let ds = line_rectangle(400, 2.0, 0.5, 12).unwrap();
        let vecs = modality_eigenvectors(&ds.xb, 4).unwrap();
        let labels = classify_theta_modes(
            &vecs.view(),
            ds.latents.theta.view(),
            2.0,
            4,
            0.8,
        )
        .unwrap();
        assert_eq!(labels[0], Some(0), "constant mode");
        assert_eq!(labels[1], Some(1), "first shared mode, got {labels:?}");
        assert_eq!(labels[2], Some(2), "second shared mode, got {labels:?}");
    }

    #[test]
    fn perturbation_suite_has_no_violations() {
        let checks = perturbation_bound_suite(20, 42).unwrap();
        assert_eq!(checks.len(), 4);
        for c in &checks {
            assert_eq!(c.violations, 0, "{} worst margin {}", c.name, c.worst_margin);
            assert!(c.worst_margin >= -PERTURBATION_SLACK);
            assert_eq!(c.trials, 20);
        }
    }

    #[test]
    fn exactly_orthogonal_directions_leave_psd_matrix_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20;
        let basis = random_orthonormal(&mut rng, n, n).unwrap();
        let r = 4;
        let u_top = basis.slice(s![.., ..r]);
        let mut scaled = u_top.to_owned();
        for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|x| x * (1.0 + j as f64));
        }
        let a = scaled.dot(&u_top.t());
        let v = basis.slice(s![.., r..r + 3]).to_owned();
        let q = Array2::eye(n) - v.dot(&v.t());
        let diff = &a - &q.dot(&a).dot(&q);
        let lhs = spectral_norm_sym(&diff).unwrap();
        let scale = spectral_norm_sym(&a).unwrap();
        assert!(lhs <= 1e-10 * scale, "lhs {lhs}");
    }

    #[test]
    fn identical_frames_give_zero_left_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        let u = random_orthonormal(&mut rng, n, 4).unwrap();
        let diff = &u - &u;
        assert_eq!(spectral_norm_rect(&diff.view()).unwrap(), 0.0);
        let g = Array2::<f64>::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
        let m = g.t().dot(&g) / n as f64;
        let q = Array2::eye(n) - u.dot(&u.t());
        let d2 = &q.dot(&m).dot(&q) - &q.dot(&m).dot(&q);
        assert_eq!(spectral_norm_sym(&d2).unwrap(), 0.0);
    }

    #[test]
    fn invariant_suite_has_no_violations() {
        let checks = numerical_invariant_suite(5, 17).unwrap();
        assert_eq!(checks.len(), 5);
        for c in &checks {
            assert_eq!(c.violations, 0, "{} worst margin {}", c.name, c.worst_margin);
            assert!(c.passed());
        }
    }

    #[test]
    fn lowpass_recovery_runs_at_small_scale() {
        // tau must clear the private cosine's Laplacian eigenvalue (~0.52
        // under the median bandwidth) or the low-pass band drops the very
        // mode the trace measures.
        let trace = lowpass_recovery_trace(2.0, 1.0, 0.7, &[400], 23).unwrap();
        assert!(trace.errors[0].is_finite());
        assert!(trace.errors[0] < 1.0, "squared error {}", trace.errors[0]);
        assert!(trace.alphas[0].is_finite());
        assert!(trace.bandwidths[0] > 0.0);
    }

    #[test]
    fn lowpass_recovery_validates_cutoff() {
        assert!(lowpass_recovery_trace(2.0, 1.0, 0.0, &[200], 1).is_err());
        assert!(lowpass_recovery_trace(2.0, 1.0, 1.0, &[200], 1).is_err());
    }

    #[test]
    fn lowpass_recovery_error_is_small_at_scale() {
        let trace = lowpass_recovery_trace(2.0, 1.0, 0.7, &[2000], 0).unwrap();
        assert!(
            trace.errors[0] <= 0.2,
            "squared error {} at n=2000 exceeds 0.2",
            trace.errors[0]
        );
        assert!((trace.alphas[0].abs() - 1.0).abs() <= 0.2, "alpha {}", trace.alphas[0]);
    }
}

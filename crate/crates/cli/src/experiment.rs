//! Turns a validated config into a deterministic results table: one scored
//! row per (sweep value, seed, method, metric, pass).

use std::f64::consts::PI;
use std::path::Path;

use difflatent::baselines::{cca_differential, fkt_differential};
use difflatent::datasets::{self, PairedDataset, SbmPair};
use difflatent::differential::extract_single_from_operators;
use difflatent::graph::{gaussian_affinity, median_bandwidth, GraphOperators};
use difflatent::io::ScoreRow;
use difflatent::metrics::{default_snr_window, ground_truth_correlation, sbm_split_accuracy, snr};
use difflatent::{extract_multi, extract_single, Error, Modality, PointCloud, Result};
use ndarray::Array1;

use crate::config::{GeneratorSpec, NoiseTarget, RunConfig};

/// One sweep point; jobs are independent and safe to run concurrently.
#[derive(Debug, Clone, Copy)]
pub struct Job {
    pub sigma: f64,
    pub seed: u64,
}

pub fn jobs(cfg: &RunConfig) -> Vec<Job> {
    let mut out = Vec::with_capacity(cfg.sigmas.len() * cfg.seeds.len());
    for &sigma in &cfg.sigmas {
        for &seed in &cfg.seeds {
            out.push(Job { sigma, seed });
        }
    }
    out
}

fn noise_seed(job: Job) -> u64 {
    job.seed ^ job.sigma.to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Geometry latent targets for modality B, one per extraction pass: the raw
/// coordinate and the first Laplace eigenfunction on its factor manifold.
fn targets(spec: &GeneratorSpec, ds: &PairedDataset) -> Vec<(Array1<f64>, Array1<f64>)> {
    let col = |i: usize| ds.latents.psi_b.column(i).to_owned();
    match spec {
        GeneratorSpec::LineRectangle { b, .. } => {
            let raw = col(0);
            let eig = raw.mapv(|p| (PI * p / b).cos());
            vec![(raw, eig)]
        }
        GeneratorSpec::RectanglePair { b_b, .. } => {
            let raw = col(0);
            let eig = raw.mapv(|p| (PI * p / b_b).cos());
            vec![(raw, eig)]
        }
        GeneratorSpec::LineCube { b, c, .. } => {
            let raw1 = col(0);
            let eig1 = raw1.mapv(|p| (PI * p / b).cos());
            let raw2 = col(1);
            let eig2 = raw2.mapv(|p| (PI * p / c).cos());
            vec![(raw1, eig1), (raw2, eig2)]
        }
        // Angles live on circles, so the eigenfunction is plain cosine.
        GeneratorSpec::CircleTorus { .. } | GeneratorSpec::DiskRotation { .. } => {
            let raw = col(0);
            let eig = raw.mapv(f64::cos);
            vec![(raw, eig)]
        }
        GeneratorSpec::SbmPair { .. } => Vec::new(),
    }
}

fn generate_geometry(spec: &GeneratorSpec, seed: u64) -> Result<PairedDataset> {
    match *spec {
        GeneratorSpec::LineRectangle { n, a, b } => datasets::line_rectangle(n, a, b, seed),
        GeneratorSpec::RectanglePair { n, a, b_a, b_b } => {
            datasets::rectangle_pair(n, a, b_a, b_b, seed)
        }
        GeneratorSpec::LineCube { n, a, b, c } => datasets::line_cube(n, a, b, c, seed),
        GeneratorSpec::CircleTorus { n, big_r, small_r } => {
            datasets::circle_torus(n, big_r, small_r, seed)
        }
        GeneratorSpec::DiskRotation { n, radius } => datasets::disk_rotation(n, radius, seed),
        GeneratorSpec::SbmPair { .. } => Err(Error::InvalidParameter(
            "block-model pairs are not point clouds".into(),
        )),
    }
}

fn generate_sbm(spec: &GeneratorSpec, q: f64, seed: u64) -> Result<SbmPair> {
    match spec {
        GeneratorSpec::SbmPair { sizes_a, sizes_b, p } => {
            datasets::sbm_pair(sizes_a, sizes_b, *p, q, seed)
        }
        _ => Err(Error::InvalidParameter("not a block-model generator".into())),
    }
}

fn score_geometry(
    cfg: &RunConfig,
    method: &str,
    vectors: &[Array1<f64>],
    targets: &[(Array1<f64>, Array1<f64>)],
    job: Job,
    hash: &str,
    rows: &mut Vec<ScoreRow>,
) -> Result<()> {
    let multi = cfg.iterations > 1;
    for (pass, (delta, (raw, eig))) in vectors.iter().zip(targets).enumerate() {
        for metric in &cfg.metrics {
            let value = match metric.as_str() {
                "correlation" => ground_truth_correlation(delta.view(), eig.view())?,
                "raw_correlation" => ground_truth_correlation(delta.view(), raw.view())?,
                "snr" => snr(delta.view(), raw.view(), default_snr_window(delta.len()))?,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "metric '{other}' not available here"
                    )))
                }
            };
            let score_name = if multi {
                format!("{metric}_{pass}")
            } else {
                metric.clone()
            };
            rows.push(ScoreRow {
                experiment: cfg.output_prefix.clone(),
                method: method.to_string(),
                sigma: job.sigma,
                seed: job.seed,
                score_name,
                value,
                params_hash: hash.to_string(),
            });
        }
    }
    Ok(())
}

/// Differential vectors of modality B under the named method. Geometry
/// datasets get noise injected here, per the configured target.
fn run_method_geometry(cfg: &RunConfig, method: &str, job: Job) -> Result<Vec<Array1<f64>>> {
    let ds = generate_geometry(&cfg.experiment, job.seed)?;
    let (xa, xb) = apply_noise(cfg, &ds, job)?;
    match method {
        "spectral" => {
            if cfg.iterations > 1 {
                let results = extract_multi(
                    &xb,
                    &xa,
                    cfg.iterations,
                    &cfg.extraction,
                    None,
                    difflatent::differential::DEFAULT_SHARED_KMAX,
                )?;
                Ok(results.iter().map(|r| r.leading().to_owned()).collect())
            } else {
                let pair = extract_single(&xa, &xb, &cfg.extraction, 1)?;
                Ok(vec![pair.b.leading().to_owned()])
            }
        }
        "cca" => {
            let delta = cca_differential(&xa, &xb, Modality::B, cfg.cca_shared_k, cfg.cca_ridge)?;
            Ok(vec![delta])
        }
        "fkt" => {
            let wa = gaussian_affinity(&xa, median_bandwidth(&xa, cfg.extraction.bandwidth_scale)?)?;
            let wb = gaussian_affinity(&xb, median_bandwidth(&xb, cfg.extraction.bandwidth_scale)?)?;
            let res = fkt_differential(&wa.view(), &wb.view(), Modality::B, cfg.iterations)?;
            Ok((0..cfg.iterations)
                .map(|i| res.vectors.column(i).to_owned())
                .collect())
        }
        other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
    }
}

fn apply_noise(cfg: &RunConfig, ds: &PairedDataset, job: Job) -> Result<(PointCloud, PointCloud)> {
    let s = noise_seed(job);
    let (mut xa, mut xb) = (ds.xa.clone(), ds.xb.clone());
    if job.sigma > 0.0 {
        match cfg.noise_target {
            NoiseTarget::A => xa = datasets::add_noise(&xa, job.sigma, s)?,
            NoiseTarget::B => xb = datasets::add_noise(&xb, job.sigma, s)?,
            NoiseTarget::Both => {
                xa = datasets::add_noise(&xa, job.sigma, s)?;
                xb = datasets::add_noise(&xb, job.sigma, s.wrapping_add(1))?;
            }
        }
    }
    Ok((xa, xb))
}

fn run_method_sbm(
    cfg: &RunConfig,
    method: &str,
    sbm: &SbmPair,
) -> Result<Array1<f64>> {
    match method {
        "spectral" => {
            let ops_a = GraphOperators::from_affinity(sbm.adjacency_a.clone(), None)?;
            let ops_b = GraphOperators::from_affinity(sbm.adjacency_b.clone(), None)?;
            let pair = extract_single_from_operators(&ops_a, &ops_b, &cfg.extraction, 1)?;
            Ok(pair.b.leading().to_owned())
        }
        // Adjacency rows act as features for the linear baseline.
        "cca" => {
            let xa = PointCloud::new(sbm.adjacency_a.clone())?;
            let xb = PointCloud::new(sbm.adjacency_b.clone())?;
            cca_differential(&xa, &xb, Modality::B, cfg.cca_shared_k, cfg.cca_ridge)
        }
        "fkt" => {
            let res = fkt_differential(
                &sbm.adjacency_a.view(),
                &sbm.adjacency_b.view(),
                Modality::B,
                1,
            )?;
            Ok(res.vectors.column(0).to_owned())
        }
        other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
    }
}

/// All rows for one sweep point, methods in config order.
pub fn run_job(cfg: &RunConfig, job: Job, hash: &str) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    if cfg.experiment.is_sbm() {
        let sbm = generate_sbm(&cfg.experiment, job.sigma, job.seed)?;
        for method in &cfg.methods {
            let delta = run_method_sbm(cfg, method, &sbm)?;
            let acc = sbm_split_accuracy(delta.view(), &sbm.split_indices, &sbm.split_labels)?;
            rows.push(ScoreRow {
                experiment: cfg.output_prefix.clone(),
                method: method.clone(),
                sigma: job.sigma,
                seed: job.seed,
                score_name: "accuracy".to_string(),
                value: acc,
                params_hash: hash.to_string(),
            });
        }
    } else {
        let ds = generate_geometry(&cfg.experiment, job.seed)?;
        let tg = targets(&cfg.experiment, &ds);
        for method in &cfg.methods {
            let vectors = run_method_geometry(cfg, method, job)?;
            score_geometry(cfg, method, &vectors, &tg, job, hash, &mut rows)?;
        }
    }
    Ok(rows)
}

/// Canonical table order; makes run and sweep byte-identical per config.
pub fn sort_rows(rows: &mut [ScoreRow]) {
    rows.sort_by(|x, y| {
        x.sigma
            .total_cmp(&y.sigma)
            .then(x.seed.cmp(&y.seed))
            .then(x.method.cmp(&y.method))
            .then(x.score_name.cmp(&y.score_name))
    });
}

/// Writes the sorted table (fresh file) plus the materialized-config meta
/// sidecar; only the sidecar carries the timestamp.
pub fn write_outputs(cfg: &RunConfig, out_dir: &Path, rows: &mut Vec<ScoreRow>) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    sort_rows(rows);
    let table = out_dir.join(format!("{}_scores.csv", cfg.output_prefix));
    if table.exists() {
        std::fs::remove_file(&table)?;
    }
    difflatent::io::append_score_rows(&table, rows)?;

    let meta = serde_json::json!({
        "config": cfg,
        "params_hash": cfg.params_hash()?,
        "rows": rows.len(),
        "unix_timestamp": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    });
    difflatent::io::write_json(&out_dir.join(format!("{}_meta.json", cfg.output_prefix)), &meta)
}


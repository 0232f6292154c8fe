//! Non-sweep subcommands: dataset generation, the validation suites, and
//! score-table aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use difflatent::datasets;
use difflatent::io::{read_score_rows, write_json, write_matrix_csv, ScoreRow};
use difflatent::validation::{
    eigenvector_convergence, lowpass_recovery_trace, numerical_invariant_suite,
    perturbation_bound_suite, BoundCheck, ConvergenceTrace, Manifold,
};
use difflatent::{Error, Result};
use serde::Serialize;

use crate::config::{GeneratorSpec, RunConfig};
use crate::experiment;

/// Writes one clean dataset (no noise) for the config's first seed, or the
/// explicit seed override.
pub fn generate(cfg: &RunConfig, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(cfg.seeds[0]);
    std::fs::create_dir_all(out_dir)?;
    let dir = out_dir.join(format!("{}_dataset", cfg.output_prefix));
    match &cfg.experiment {
        GeneratorSpec::SbmPair { sizes_a, sizes_b, p } => {
            let q = cfg.sigmas[0];
            let sbm = datasets::sbm_pair(sizes_a, sizes_b, *p, q, seed)?;
            std::fs::create_dir_all(&dir)?;
            write_matrix_csv(&dir.join("adjacency_a.csv"), &sbm.adjacency_a.view())?;
            write_matrix_csv(&dir.join("adjacency_b.csv"), &sbm.adjacency_b.view())?;
            let labels = serde_json::json!({
                "labels_a": sbm.labels_a,
                "labels_b": sbm.labels_b,
                "split_indices": sbm.split_indices,
                "split_labels": sbm.split_labels,
                "params": sbm.params,
            });
            write_json(&dir.join("labels.json"), &labels)?;
        }
        spec => {
            let ds = generate_geometry_for(spec, seed)?;
            difflatent::io::export_dataset(&dir, &ds)?;
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn generate_geometry_for(spec: &GeneratorSpec, seed: u64) -> Result<datasets::PairedDataset> {
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
        GeneratorSpec::SbmPair { .. } => unreachable!("handled by the caller"),
    }
}

#[derive(Debug, Serialize)]
struct TraceReport {
    #[serde(flatten)]
    trace: ConvergenceTrace,
    error_decreased_overall: bool,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    level: String,
    seed: u64,
    bound_checks: Vec<BoundCheck>,
    convergence: Vec<TraceReport>,
    passed: bool,
}

/// Runs the numerical suites ("fast") plus, at level "full", eigenvector
/// convergence traces at growing sample counts. Returns whether everything
/// passed; the caller maps failure to its own exit code.
pub fn validate(level: &str, seed: u64, out_dir: &Path) -> Result<bool> {
    let full = match level {
        "fast" => false,
        "full" => true,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown validation level '{other}' (expected fast or full)"
            )))
        }
    };
    let mut bound_checks = perturbation_bound_suite(100, seed)?;
    bound_checks.extend(numerical_invariant_suite(50, seed.wrapping_add(1))?);
    for c in &bound_checks {
        println!(
            "{}: {} ({} trials, worst margin {:.3e})",
            c.name,
            if c.passed() { "pass" } else { "FAIL" },
            c.trials,
            c.worst_margin
        );
    }

    let mut convergence = Vec::new();
    if full {
        let grid = [300usize, 600, 1200];
        let traces = [
            eigenvector_convergence(Manifold::Circle { radius: 1.0 }, 1, &grid, seed)?,
            eigenvector_convergence(Manifold::Interval { length: 2.0 }, 1, &grid, seed)?,
            // tau = 0.7 keeps the private cosine (lambda ~ 0.52 under the
            // median bandwidth) inside the analyzed low-pass band.
            lowpass_recovery_trace(2.0, 1.0, 0.7, &[300, 600], seed)?,
        ];
        for trace in traces {
            let decreased = match (trace.errors.first(), trace.errors.last()) {
                (Some(first), Some(last)) => {
                    last <= first && trace.errors.iter().all(|e| e.is_finite())
                }
                _ => false,
            };
            println!(
                "{}: {} (errors {:?})",
                trace.description,
                if decreased { "pass" } else { "FAIL" },
                trace.errors
            );
            convergence.push(TraceReport { trace, error_decreased_overall: decreased });
        }
    }

    let passed = bound_checks.iter().all(BoundCheck::passed)
        && convergence.iter().all(|t| t.error_decreased_overall);
    let report = ValidationReport {
        level: level.to_string(),
        seed,
        bound_checks,
        convergence,
        passed,
    };
    std::fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("validation.json"), &report)?;
    println!("validation: {}", if passed { "pass" } else { "FAIL" });
    Ok(passed)
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    experiment: String,
    method: String,
    sigma: f64,
    score_name: String,
    count: usize,
    median: f64,
    mean: f64,
}

fn median_of(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Aggregates every *_scores.csv under the output directory into one
/// summary table with per-(experiment, method, sigma, score) medians.
pub fn report(out_dir: &Path) -> Result<()> {
    let mut rows: Vec<ScoreRow> = Vec::new();
    let mut inputs = 0usize;
    for entry in std::fs::read_dir(out_dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if name.ends_with("_scores.csv") {
            rows.extend(read_score_rows(&path)?);
            inputs += 1;
        }
    }
    if inputs == 0 {
        return Err(Error::InvalidParameter(format!(
            "no *_scores.csv tables under {}",
            out_dir.display()
        )));
    }

    let mut groups: BTreeMap<(String, String, u64, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.experiment, r.method, r.sigma.to_bits(), r.score_name))
            .or_default()
            .push(r.value);
    }
    let mut summary = Vec::with_capacity(groups.len());
    for ((experiment, method, sigma_bits, score_name), mut values) in groups {
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        summary.push(SummaryRow {
            experiment,
            method,
            sigma: f64::from_bits(sigma_bits),
            score_name,
            count: values.len(),
            median: median_of(&values),
            mean,
        });
    }
    summary.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.method.cmp(&b.method))
            .then(a.score_name.cmp(&b.score_name))
    });

    let path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Format(e.to_string()))?;
    for row in &summary {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    println!("wrote {} ({} groups from {} tables)", path.display(), summary.len(), inputs);
    Ok(())
}

/// Sequential table build (the sweep command adds worker parallelism).
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let hash = cfg.params_hash()?;
    let mut rows = Vec::new();
    for job in experiment::jobs(cfg) {
        rows.extend(experiment::run_job(cfg, job, &hash)?);
    }
    experiment::write_outputs(cfg, out_dir, &mut rows)?;
    println!(
        "wrote {} rows to {}",
        rows.len(),
        out_dir.join(format!("{}_scores.csv", cfg.output_prefix)).display()
    );
    Ok(())
}

/// Same table as `run`, with sweep points dispatched to a worker pool and
/// per-point progress on stderr.
pub fn sweep(cfg: &RunConfig, out_dir: &Path, workers: usize) -> Result<()> {
    use rayon::prelude::*;

    let hash = cfg.params_hash()?;
    let jobs = experiment::jobs(cfg);
    let total = jobs.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Result<Vec<ScoreRow>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&job| {
                let t0 = std::time::Instant::now();
                let rows = experiment::run_job(cfg, job, &hash);
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                eprintln!(
                    "[{k}/{total}] sigma={} seed={} ({:.1}s)",
                    job.sigma,
                    job.seed,
                    t0.elapsed().as_secs_f64()
                );
                rows
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    experiment::write_outputs(cfg, out_dir, &mut rows)?;
    println!(
        "wrote {} rows to {}",
        rows.len(),
        out_dir.join(format!("{}_scores.csv", cfg.output_prefix)).display()
    );
    Ok(())
}

//! TOML experiment configuration: parsing, validation, and the fully
//! materialized form written next to every results table so no run depends
//! on implicit defaults.

use std::path::Path;

use difflatent::baselines::DEFAULT_CCA_RIDGE;
use difflatent::{DifferentialConfig, Error, FilterSpec, Result};
use serde::{Deserialize, Serialize};

pub const GENERATORS: &[&str] = &[
    "line_rectangle",
    "rectangle_pair",
    "line_cube",
    "circle_torus",
    "disk_rotation",
    "sbm_pair",
];
pub const METHODS: &[&str] = &["spectral", "cca", "fkt"];
pub const METRICS: &[&str] = &["correlation", "raw_correlation", "snr", "accuracy"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    methods: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    metrics: Option<Vec<String>>,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    extraction: RawExtraction,
    #[serde(default)]
    cca: RawCca,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    generator: String,
    n: Option<usize>,
    a: Option<f64>,
    b: Option<f64>,
    c: Option<f64>,
    b_a: Option<f64>,
    b_b: Option<f64>,
    big_r: Option<f64>,
    small_r: Option<f64>,
    radius: Option<f64>,
    sizes_a: Option<Vec<usize>>,
    sizes_b: Option<Vec<usize>>,
    p: Option<f64>,
    q: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    target: Option<String>,
    sigmas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExtraction {
    bandwidth_a: Option<f64>,
    bandwidth_b: Option<f64>,
    bandwidth_scale: Option<f64>,
    num_eigenpairs: Option<usize>,
    lowpass_tau: Option<f64>,
    iterations: Option<usize>,
    filter: Option<FilterSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCca {
    shared_k: Option<usize>,
    ridge: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    prefix: Option<String>,
}

/// Dataset generator with every parameter resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorSpec {
    LineRectangle { n: usize, a: f64, b: f64 },
    RectanglePair { n: usize, a: f64, b_a: f64, b_b: f64 },
    LineCube { n: usize, a: f64, b: f64, c: f64 },
    CircleTorus { n: usize, big_r: f64, small_r: f64 },
    DiskRotation { n: usize, radius: f64 },
    SbmPair { sizes_a: Vec<usize>, sizes_b: Vec<usize>, p: f64 },
}

impl GeneratorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::LineRectangle { .. } => "line_rectangle",
            GeneratorSpec::RectanglePair { .. } => "rectangle_pair",
            GeneratorSpec::LineCube { .. } => "line_cube",
            GeneratorSpec::CircleTorus { .. } => "circle_torus",
            GeneratorSpec::DiskRotation { .. } => "disk_rotation",
            GeneratorSpec::SbmPair { .. } => "sbm_pair",
        }
    }

    pub fn is_sbm(&self) -> bool {
        matches!(self, GeneratorSpec::SbmPair { .. })
    }

    /// Number of modality-B exclusive latent coordinates, which bounds the
    /// multi-pass iteration count.
    pub fn exclusive_latents(&self) -> usize {
        match self {
            GeneratorSpec::LineCube { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseTarget {
    A,
    B,
    Both,
}

/// Validated configuration with all defaults applied; serialized verbatim
/// into the run's meta sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: GeneratorSpec,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub metrics: Vec<String>,
    pub noise_target: NoiseTarget,
    /// Swept values: Gaussian noise levels, except for the block-model
    /// generator where they are cross-community edge probabilities.
    pub sigmas: Vec<f64>,
    pub extraction: DifferentialConfig,
    /// Multi-pass extraction count (1 = single pass).
    pub iterations: usize,
    pub cca_shared_k: usize,
    pub cca_ridge: f64,
    /// How the cross-modality filter is chosen when none is given.
    pub filter_rule: String,
    /// How kernel bandwidths are chosen when none are given.
    pub bandwidth_rule: String,
    /// Score-table sliding-window rule for the smoothness score.
    pub snr_window_rule: String,
    pub output_prefix: String,
}

impl RunConfig {
    /// Identifies the run in every results row; timestamp excluded so
    /// logically equal configs collide.
    pub fn params_hash(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(difflatent::io::params_hash(&value))
    }
}

fn bad(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn or_default<T: Copy>(v: Option<T>, d: T) -> T {
    v.unwrap_or(d)
}

fn resolve_generator(raw: &RawExperiment) -> Result<GeneratorSpec> {
    let g = raw.generator.as_str();
    let allowed: &[&str] = match g {
        "line_rectangle" => &["n", "a", "b"],
        "rectangle_pair" => &["n", "a", "b_a", "b_b"],
        "line_cube" => &["n", "a", "b", "c"],
        "circle_torus" => &["n", "big_r", "small_r"],
        "disk_rotation" => &["n", "radius"],
        // The cross probability q is the swept value, not a fixed parameter.
        "sbm_pair" => &["sizes_a", "sizes_b", "p"],
        other => {
            return Err(bad(format!(
                "unknown generator '{other}' (expected one of {GENERATORS:?})"
            )))
        }
    };
    let present = [
        ("n", raw.n.is_some()),
        ("a", raw.a.is_some()),
        ("b", raw.b.is_some()),
        ("c", raw.c.is_some()),
        ("b_a", raw.b_a.is_some()),
        ("b_b", raw.b_b.is_some()),
        ("big_r", raw.big_r.is_some()),
        ("small_r", raw.small_r.is_some()),
        ("radius", raw.radius.is_some()),
        ("sizes_a", raw.sizes_a.is_some()),
        ("sizes_b", raw.sizes_b.is_some()),
        ("p", raw.p.is_some()),
        ("q", raw.q.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            return Err(bad(format!("key '{key}' does not apply to generator '{g}'")));
        }
    }
    Ok(match g {
        "line_rectangle" => GeneratorSpec::LineRectangle {
            n: or_default(raw.n, 2000),
            a: or_default(raw.a, 2.0),
            b: or_default(raw.b, 1.0),
        },
        "rectangle_pair" => GeneratorSpec::RectanglePair {
            n: or_default(raw.n, 2000),
            a: or_default(raw.a, 2.0),
            b_a: or_default(raw.b_a, 0.55),
            b_b: or_default(raw.b_b, 0.45),
        },
        "line_cube" => GeneratorSpec::LineCube {
            n: or_default(raw.n, 2000),
            a: or_default(raw.a, 4.0),
            b: or_default(raw.b, 2.0),
            c: or_default(raw.c, 1.0),
        },
        "circle_torus" => GeneratorSpec::CircleTorus {
            n: or_default(raw.n, 2000),
            big_r: or_default(raw.big_r, 3.0),
            small_r: or_default(raw.small_r, 1.0),
        },
        "disk_rotation" => GeneratorSpec::DiskRotation {
            n: or_default(raw.n, 2000),
            radius: or_default(raw.radius, 1.0),
        },
        _ => GeneratorSpec::SbmPair {
            sizes_a: raw.sizes_a.clone().unwrap_or_else(|| vec![200; 4]),
            sizes_b: raw
                .sizes_b
                .clone()
                .unwrap_or_else(|| vec![100, 100, 200, 200, 200]),
            p: or_default(raw.p, 0.33),
        },
    })
}

fn check_subset(kind: &str, values: &[String], allowed: &[&str]) -> Result<()> {
    if values.is_empty() {
        return Err(bad(format!("at least one {kind} is required")));
    }
    for v in values {
        if !allowed.contains(&v.as_str()) {
            return Err(bad(format!(
                "unknown {kind} '{v}' (expected one of {allowed:?})"
            )));
        }
    }
    Ok(())
}

/// Parses and validates a config file, materializing every default.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| bad(format!("config {}: {e}", path.display())))?;
    let experiment = resolve_generator(&raw.experiment)?;

    let methods = raw
        .methods
        .unwrap_or_else(|| vec!["spectral".to_string()]);
    check_subset("method", &methods, METHODS)?;

    let seeds = raw.seeds.unwrap_or_else(|| (0..5).collect());
    if seeds.is_empty() {
        return Err(bad("at least one seed is required".into()));
    }

    let metrics = raw.metrics.unwrap_or_else(|| {
        if experiment.is_sbm() {
            vec!["accuracy".to_string()]
        } else {
            vec!["correlation".to_string(), "raw_correlation".to_string(), "snr".to_string()]
        }
    });
    check_subset("metric", &metrics, METRICS)?;
    for m in &metrics {
        let geometry_only = m != "accuracy";
        if experiment.is_sbm() && geometry_only {
            return Err(bad(format!(
                "metric '{m}' does not apply to generator 'sbm_pair'"
            )));
        }
        if !experiment.is_sbm() && !geometry_only {
            return Err(bad(format!(
                "metric 'accuracy' does not apply to generator '{}'",
                experiment.name()
            )));
        }
    }

    let noise_target = match raw.noise.target.as_deref() {
        None | Some("b") => NoiseTarget::B,
        Some("a") => NoiseTarget::A,
        Some("both") => NoiseTarget::Both,
        Some(other) => {
            return Err(bad(format!(
                "unknown noise target '{other}' (expected a, b, or both)"
            )))
        }
    };
    let sigmas = raw
        .noise
        .sigmas
        .unwrap_or_else(|| if experiment.is_sbm() { vec![0.05] } else { vec![0.0] });
    if sigmas.is_empty() {
        return Err(bad("the sweep grid needs at least one value".into()));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(bad("sweep values must be finite and non-negative".into()));
    }
    if sigmas.windows(2).any(|w| w[0] > w[1]) {
        return Err(bad("sweep values must be ascending".into()));
    }
    if let GeneratorSpec::SbmPair { p, .. } = &experiment {
        if sigmas.iter().any(|q| !(*q > 0.0 && q < p)) {
            return Err(bad(format!(
                "block-model sweep values are cross-community probabilities and must lie in (0, p = {p})"
            )));
        }
    }

    let iterations = raw.extraction.iterations.unwrap_or(1);
    if iterations == 0 {
        return Err(bad("iterations must be at least 1".into()));
    }
    if iterations > experiment.exclusive_latents() {
        return Err(bad(format!(
            "generator '{}' has {} exclusive latent(s); cannot score {} passes",
            experiment.name(),
            experiment.exclusive_latents(),
            iterations
        )));
    }
    if experiment.is_sbm() && raw.extraction.bandwidth_scale.is_some() {
        return Err(bad(
            "block-model graphs take adjacency as affinity; bandwidth keys do not apply".into(),
        ));
    }

    let defaults = DifferentialConfig::default();
    let extraction = DifferentialConfig {
        filter: raw.extraction.filter,
        bandwidth_a: raw.extraction.bandwidth_a,
        bandwidth_b: raw.extraction.bandwidth_b,
        bandwidth_scale: raw
            .extraction
            .bandwidth_scale
            .unwrap_or(defaults.bandwidth_scale),
        num_eigenpairs: raw.extraction.num_eigenpairs,
        lowpass_tau: raw.extraction.lowpass_tau,
    };
    if !(extraction.bandwidth_scale > 0.0) || !extraction.bandwidth_scale.is_finite() {
        return Err(bad("bandwidth_scale must be positive".into()));
    }

    let cca_shared_k = raw.cca.shared_k.unwrap_or(1);
    if cca_shared_k == 0 {
        return Err(bad("cca shared_k must be at least 1".into()));
    }
    let cca_ridge = raw.cca.ridge.unwrap_or(DEFAULT_CCA_RIDGE);
    if !(cca_ridge >= 0.0) || !cca_ridge.is_finite() {
        return Err(bad("cca ridge must be finite and non-negative".into()));
    }

    let filter_rule = match &extraction.filter {
        Some(f) => format!("explicit: {}", serde_json::to_string(f)?),
        None => format!(
            "threshold at tau = {}, annihilating every resolved reference mode at or below it",
            difflatent::differential::DEFAULT_FILTER_TAU
        ),
    };
    let bandwidth_rule = format!(
        "{} x median pairwise distance unless set explicitly",
        extraction.bandwidth_scale
    );
    let snr_window_rule = "max(10, n / 100)".to_string();

    Ok(RunConfig {
        output_prefix: raw
            .output
            .prefix
            .unwrap_or_else(|| experiment.name().to_string()),
        experiment,
        methods,
        seeds,
        metrics,
        noise_target,
        sigmas,
        extraction,
        iterations,
        cca_shared_k,
        cca_ridge,
        filter_rule,
        bandwidth_rule,
        snr_window_rule,
    })
}

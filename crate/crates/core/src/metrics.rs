//! Scores for recovered differential vectors against ground-truth latents.

use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// Default smoothing window for `snr`: max(10, n / 100).
pub fn default_snr_window(n: usize) -> usize {
    (n / 100).max(10)
}

fn variance_terms(x: ArrayView1<f64>) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss)
}

/// Absolute Pearson correlation between a recovered vector and a
/// ground-truth latent target. Errors when either side is (numerically)
/// constant, since the correlation is undefined there.
pub fn ground_truth_correlation(delta: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64> {
    if delta.len() != target.len() {
        return Err(Error::ShapeMismatch {
            what: "correlation inputs",
            expected: format!("{}", delta.len()),
            got: format!("{}", target.len()),
        });
    }
    if delta.len() < 2 {
        return Err(Error::TooFewSamples { n: delta.len(), min: 2 });
    }
    if delta.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation inputs"));
    }
    let (md, ssd) = variance_terms(delta);
    let (mt, sst) = variance_terms(target);
    let scale_d = delta.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let scale_t = target.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    if ssd.sqrt() <= 1e-12 * scale_d * (delta.len() as f64).sqrt() {
        return Err(Error::DegenerateResult("constant vector in correlation".into()));
    }
    if sst.sqrt() <= 1e-12 * scale_t * (target.len() as f64).sqrt() {
        return Err(Error::DegenerateResult("constant target in correlation".into()));
    }
    let cov = delta
        .iter()
        .zip(target.iter())
        .map(|(d, t)| (d - md) * (t - mt))
        .sum::<f64>();
    Ok((cov / (ssd.sqrt() * sst.sqrt())).abs().min(1.0))
}

/// Signal-to-noise ratio of a recovered vector along a latent ordering.
///
/// Entries are sorted by the latent (stable, so ties keep sample order).
/// Over every full sliding window of `window + 1` entries ending at l, the
/// window mean s_l is the signal and the root mean square deviation n_l
/// (normalized by `window`) is the noise; the score is
/// sum s_l^2 / sum n_l^2. A noiseless (locally constant) vector yields
/// +infinity.
pub fn snr(delta: ArrayView1<f64>, latent: ArrayView1<f64>, window: usize) -> Result<f64> {
    let n = delta.len();
    if latent.len() != n {
        return Err(Error::ShapeMismatch {
            what: "snr inputs",
            expected: format!("{n}"),
            got: format!("{}", latent.len()),
        });
    }
    if window == 0 {
        return Err(Error::InvalidParameter("snr window must be positive".into()));
    }
    if n < window + 1 {
        return Err(Error::TooFewSamples { n, min: window + 1 });
    }
    if delta.iter().chain(latent.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("snr inputs"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| latent[i].total_cmp(&latent[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| delta[i]).collect();

    let k = window;
    let mut signal = 0.0;
    let mut noise = 0.0;
    for l in k..n {
        let win = &sorted[l - k..=l];
        let s = win.iter().sum::<f64>() / (k as f64 + 1.0);
        let dev = win.iter().map(|v| (v - s) * (v - s)).sum::<f64>() / k as f64;
        signal += s * s;
        noise += dev;
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(signal / noise)
}

/// Classification accuracy of a recovered vector on a split community:
/// restrict to the given indices, threshold at the median, and score against
/// the binary labels, taking the better of the two label assignments.
pub fn sbm_split_accuracy(
    delta: ArrayView1<f64>,
    split_indices: &[usize],
    split_labels: &[usize],
) -> Result<f64> {
    if split_indices.len() != split_labels.len() {
        return Err(Error::ShapeMismatch {
            what: "split community",
            expected: format!("{}", split_indices.len()),
            got: format!("{}", split_labels.len()),
        });
    }
    if split_indices.len() < 2 {
        return Err(Error::TooFewSamples { n: split_indices.len(), min: 2 });
    }
    if split_labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidParameter("split labels must be 0 or 1".into()));
    }
    if !(split_labels.contains(&0) && split_labels.contains(&1)) {
        return Err(Error::InvalidParameter(
            "split community needs both sub-communities present".into(),
        ));
    }
    let mut restricted = Vec::with_capacity(split_indices.len());
    for &i in split_indices {
        match delta.get(i) {
            Some(v) if v.is_finite() => restricted.push(*v),
            Some(_) => return Err(Error::NonFinite("split values")),
            None => {
                return Err(Error::InvalidParameter(format!(
                    "split index {i} out of range for n = {}",
                    delta.len()
                )))
            }
        }
    }
    let mut sorted = restricted.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    let mut hits = 0usize;
    for (v, &label) in restricted.iter().zip(split_labels.iter()) {
        let predicted = usize::from(*v > median);
        if predicted == label {
            hits += 1;
        }
    }
    let acc = hits as f64 / m as f64;
    Ok(acc.max(1.0 - acc))
}

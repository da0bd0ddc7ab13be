//! Small robust-statistics helpers shared by the novelty and segmentation code.

/// Stabilizer used wherever a denominator could vanish.
pub const EPS: f64 = 1e-8;

/// `1 / Φ⁻¹(0.75)`: scales the MAD into a consistent estimate of σ for Gaussian data.
pub const MAD_SCALE: f64 = 1.4826;

/// Median with the two-middle average for even lengths. Returns 0 for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Median absolute deviation around the median (unscaled).
pub fn mad(values: &[f64]) -> f64 {
    let med = median(values);
    let deviations: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    median(&deviations)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance, summed in sequence order.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Centered moving average of width `window`, averaging over the in-range
/// part of the window at the sequence ends.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    (0..n)
        .map(|r| {
            let lo = r.saturating_sub(half);
            let hi = (r + half).min(n.saturating_sub(1));
            let slice = &values[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Linear-interpolation quantile (type 7). `q` is clamped to [0, 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `1 − ⟨a,b⟩ / (‖a‖‖b‖ + ε)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - dot(a, b) / (norm(a) * norm(b) + EPS)
}

/// `v / (‖v‖ + ε)`; the zero vector maps to itself.
pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v) + EPS;
    v.iter().map(|x| x / n).collect()
}

/// Rescale to [0, 1]. A constant input maps to all ones.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![1.0; values.len()];
    }
    values.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

//! Multi-scale pooling of the novelty curve and penalized ℓ2 segmentation (PELT).

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::novelty::NoveltySignal;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Pelt,
    Ssm,
    Kts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCandidate {
    pub time: f64,
    pub strength: f64,
    pub head: Head,
    /// Pooling resolution of the PELT run that produced it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
}

impl BoundaryCandidate {
    pub fn new(time: f64, strength: f64, head: Head) -> Self {
        Self {
            time,
            strength,
            head,
            resolution: None,
            penalty: None,
        }
    }
}

/// Time, then head, then strength descending.
pub fn sort_candidates(candidates: &mut [BoundaryCandidate]) {
    candidates.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.head.cmp(&b.head))
            .then(b.strength.total_cmp(&a.strength))
    });
}

/// `time,strength,head,resolution,penalty` rows.
pub fn candidates_csv(candidates: &[BoundaryCandidate]) -> String {
    let mut out = String::from("time,strength,head,resolution,penalty\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in candidates {
        let head = match c.head {
            Head::Pelt => "pelt",
            Head::Ssm => "ssm",
            Head::Kts => "kts",
        };
        out.push_str(&format!(
            "{},{},{head},{},{}\n",
            c.time,
            c.strength,
            opt(c.resolution),
            opt(c.penalty)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledSignal {
    pub resolution: f64,
    pub bin_centers: Vec<f64>,
    pub values: Vec<f64>,
}

/// Max-pool the curve into bins of width `resolution` starting at the first
/// midpoint. The last bin is closed on the right; empty bins repeat the
/// previous value.
pub fn pool(signal: &NoveltySignal, resolution: f64) -> PooledSignal {
    assert!(resolution > 0.0, "resolution must be positive");
    let tau = &signal.midpoints;
    if tau.is_empty() {
        return PooledSignal {
            resolution,
            bin_centers: Vec::new(),
            values: Vec::new(),
        };
    }
    let start = tau[0];
    let span = tau[tau.len() - 1] - start;
    let bins = ((span / resolution).ceil() as usize).max(1);
    let mut values = vec![f64::NEG_INFINITY; bins];
    for (&t, &v) in tau.iter().zip(&signal.values) {
        let j = (((t - start) / resolution).floor() as usize).min(bins - 1);
        values[j] = values[j].max(v);
    }
    let first = values
        .iter()
        .copied()
        .find(|v| v.is_finite())
        .unwrap_or(0.0);
    let mut prev = first;
    for v in values.iter_mut() {
        if v.is_finite() {
            prev = *v;
        } else {
            *v = prev;
        }
    }
    let bin_centers = (0..bins)
        .map(|j| start + (j as f64 + 0.5) * resolution)
        .collect();
    PooledSignal {
        resolution,
        bin_centers,
        values,
    }
}

/// Segment cost as the sum of squared deviations from the segment mean,
/// O(1) per query from prefix sums.
struct L2Cost {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl L2Cost {
    fn new(values: &[f64]) -> Self {
        let mut sum = Vec::with_capacity(values.len() + 1);
        let mut sum_sq = Vec::with_capacity(values.len() + 1);
        sum.push(0.0);
        sum_sq.push(0.0);
        for v in values {
            sum.push(sum.last().unwrap() + v);
            sum_sq.push(sum_sq.last().unwrap() + v * v);
        }
        Self { sum, sum_sq }
    }

    /// Cost of `values[start..end]`.
    fn cost(&self, start: usize, end: usize) -> f64 {
        let n = (end - start) as f64;
        let s = self.sum[end] - self.sum[start];
        let sq = self.sum_sq[end] - self.sum_sq[start];
        (sq - s * s / n).max(0.0)
    }
}

/// Change indices (first index of each new segment) minimizing total ℓ2 cost
/// plus `penalty` per change, with every segment at least `min_segment` long.
///
/// Exact PELT: a candidate last-change `s` is retired only once the pruning
/// inequality against `t` holds *and* `t` itself has become a legal
/// last-change, so the minimum-length constraint never invalidates pruning.
pub fn pelt_segment(values: &[f64], penalty: f64, min_segment: usize) -> Vec<usize> {
    let n = values.len();
    let m = min_segment.max(1);
    if n < 2 * m {
        return Vec::new();
    }
    let cost = L2Cost::new(values);
    let mut best = vec![f64::INFINITY; n + 1];
    let mut last = vec![0usize; n + 1];
    best[0] = -penalty;
    // (candidate, first t at which it is no longer usable)
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for t in 1..=n {
        if t >= m && best[t - m].is_finite() {
            candidates.push((t - m, usize::MAX));
        }
        candidates.retain(|&(_, expiry)| t < expiry);
        let mut value = f64::INFINITY;
        let mut arg = 0;
        for &(s, _) in &candidates {
            let v = best[s] + cost.cost(s, t) + penalty;
            if v < value {
                value = v;
                arg = s;
            }
        }
        best[t] = value;
        last[t] = arg;
        if value.is_finite() {
            for (s, expiry) in candidates.iter_mut() {
                if *expiry == usize::MAX && best[*s] + cost.cost(*s, t) > value {
                    *expiry = t + m;
                }
            }
        }
    }
    let mut changes = Vec::new();
    let mut t = n;
    while t > 0 {
        let s = last[t];
        if s > 0 {
            changes.push(s);
        }
        t = s;
    }
    changes.reverse();
    changes
}

/// Total ℓ2 cost plus penalty of a given change set.
pub fn segmentation_objective(values: &[f64], changes: &[usize], penalty: f64) -> f64 {
    let cost = L2Cost::new(values);
    let mut edges = vec![0];
    edges.extend_from_slice(changes);
    edges.push(values.len());
    edges.windows(2).map(|w| cost.cost(w[0], w[1])).sum::<f64>() + penalty * changes.len() as f64
}

/// `|mean(values[k..k+W]) − mean(values[k−W..k])|`, windows truncated at the ends.
pub fn boundary_strength(values: &[f64], index: usize, window: usize) -> f64 {
    let w = window.max(1);
    let n = values.len();
    if index == 0 || index >= n {
        return 0.0;
    }
    let after = &values[index..(index + w).min(n)];
    let before = &values[index.saturating_sub(w)..index];
    (stats::mean(after) - stats::mean(before)).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeltConfig {
    pub resolutions: Vec<f64>,
    /// Penalties are these multiples of the pooled signal variance.
    pub penalty_multipliers: Vec<f64>,
    pub strength_quantile: f64,
}

impl Default for PeltConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![0.25, 0.5, 1.0],
            penalty_multipliers: vec![0.5, 1.0, 2.0, 4.0],
            strength_quantile: 0.6,
        }
    }
}

/// One (resolution, penalty) run on an already pooled signal.
pub fn pelt_run(
    pooled: &PooledSignal,
    penalty: f64,
    min_segment_seconds: f64,
    strength_quantile: f64,
    duration: f64,
) -> Vec<BoundaryCandidate> {
    let delta = pooled.resolution;
    let min_bins = ((min_segment_seconds / delta).ceil() as usize).max(1);
    let window = ((min_segment_seconds / delta).round() as usize).max(1);
    let changes = pelt_segment(&pooled.values, penalty, min_bins);
    if changes.is_empty() {
        return Vec::new();
    }
    let strengths: Vec<f64> = changes
        .iter()
        .map(|&k| boundary_strength(&pooled.values, k, window))
        .collect();
    let threshold = stats::quantile(&strengths, strength_quantile);
    changes
        .iter()
        .zip(&strengths)
        .filter(|(_, &s)| s >= threshold)
        .map(|(&k, &strength)| BoundaryCandidate {
            time: pooled.bin_centers[k],
            strength,
            head: Head::Pelt,
            resolution: Some(delta),
            penalty: Some(penalty),
        })
        .filter(|c| c.time > 0.0 && c.time < duration)
        .collect()
}

/// All resolutions × penalties, merged in deterministic order.
pub fn pelt_head(
    signal: &NoveltySignal,
    min_segment_seconds: f64,
    duration: f64,
    config: &PeltConfig,
    exec: Exec,
) -> Vec<BoundaryCandidate> {
    if signal.is_empty() {
        return Vec::new();
    }
    let pooled: Vec<PooledSignal> = config.resolutions.iter().map(|&d| pool(signal, d)).collect();
    let runs: Vec<(usize, f64)> = pooled
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            let var = stats::variance(&p.values);
            config
                .penalty_multipliers
                .iter()
                .filter(move |_| var > 0.0)
                .map(move |mult| (i, mult * var))
        })
        .collect();
    let mut out: Vec<BoundaryCandidate> = exec
        .map(&runs, |&(i, penalty)| {
            pelt_run(
                &pooled[i],
                penalty,
                min_segment_seconds,
                config.strength_quantile,
                duration,
            )
        })
        .into_iter()
        .flatten()
        .collect();
    sort_candidates(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn signal(midpoints: Vec<f64>, values: Vec<f64>) -> NoveltySignal {
        NoveltySignal {
            midpoints,
            values,
            fusion_weights: [0.25; 4],
        }
    }

    /// Exhaustive minimum over every legal cut set.
    fn brute_force(values: &[f64], penalty: f64, m: usize) -> f64 {
        fn go(values: &[f64], start: usize, penalty: f64, m: usize, acc: f64, best: &mut f64) {
            let n = values.len();
            for end in (start + m)..=n {
                if end != n && n - end < m {
                    continue;
                }
                let seg = &values[start..end];
                let mu = seg.iter().sum::<f64>() / seg.len() as f64;
                let c: f64 = seg.iter().map(|x| (x - mu) * (x - mu)).sum();
                if end == n {
                    *best = best.min(acc + c);
                } else {
                    go(values, end, penalty, m, acc + c + penalty, best);
                }
            }
        }
        let mut best = f64::INFINITY;
        if values.len() < 2 * m {
            let mu = stats::mean(values);
            return values.iter().map(|x| (x - mu) * (x - mu)).sum();
        }
        go(values, 0, penalty, m, 0.0, &mut best);
        best
    }

    #[test]
    fn pool_one_hertz() {
        let tau: Vec<f64> = (0..10).map(|i| i as f64 + 0.5).collect();
        let vals = vec![1.0, 3.0, 2.0, 5.0, 4.0, 0.0, 7.0, 6.0, 8.0, 9.0];
        let p = pool(&signal(tau.clone(), vals.clone()), 1.0);
        // oracle: enumerate bins directly
        let bins = 9;
        for j in 0..bins {
            let lo = 0.5 + j as f64;
            let hi = lo + 1.0;
            let want = tau
                .iter()
                .zip(&vals)
                .filter(|(t, _)| **t >= lo && (**t < hi || (j == bins - 1 && **t <= hi)))
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(p.values[j], want, "bin {j}");
        }
        assert_eq!(p.values.len(), bins);
    }

    #[test]
    fn pool_wide_bin_holds_global_max() {
        let p = pool(&signal(vec![0.5, 1.0, 1.5], vec![2.0, 9.0, 1.0]), 10.0);
        assert_eq!(p.values, vec![9.0]);
    }

    #[test]
    fn pool_fills_empty_bins() {
        let p = pool(&signal(vec![0.0, 3.0], vec![1.0, 2.0]), 1.0);
        assert_eq!(p.values, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn pelt_constant_and_huge_penalty() {
        assert!(pelt_segment(&[3.0; 30], 0.1, 1).is_empty());
        let step: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 5.0 }).collect();
        assert!(pelt_segment(&step, 1e9, 1).is_empty());
    }

    #[test]
    fn pelt_two_level_step() {
        let step: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 5.0 }).collect();
        assert_eq!(pelt_segment(&step, 1.0, 1), vec![10]);
        assert_eq!(brute_force(&step, 1.0, 1), 1.0);
    }

    #[test]
    fn strength_cases() {
        assert_eq!(boundary_strength(&[0.0, 0.0, 4.0, 4.0, 4.0], 2, 2), 4.0);
        assert_eq!(boundary_strength(&[1.0; 8], 3, 2), 0.0);
        let step: Vec<f64> = (0..12).map(|i| if i < 6 { 1.0 } else { 3.5 }).collect();
        assert_eq!(boundary_strength(&step, 6, 3), 2.5);
    }

    #[test]
    fn clean_step_gives_one_candidate_per_run() {
        let tau: Vec<f64> = (0..240).map(|i| 0.05 + i as f64 * 0.125).collect();
        let vals: Vec<f64> = tau.iter().map(|&t| if t < 15.0 { 0.0 } else { 2.0 }).collect();
        let sig = signal(tau, vals);
        for &d in &[0.25, 0.5, 1.0] {
            let p = pool(&sig, d);
            let var = stats::variance(&p.values);
            for mult in [0.5, 1.0, 2.0, 4.0] {
                let c = pelt_run(&p, mult * var, 2.0, 0.6, 30.0);
                assert_eq!(c.len(), 1, "Δ={d} λ={mult}σ²");
                assert!((c[0].time - 15.0).abs() <= d, "{}", c[0].time);
            }
        }
        let all = pelt_head(&sig, 2.0, 30.0, &PeltConfig::default(), Exec::Parallel);
        assert!(all.iter().all(|c| (c.time - 15.0).abs() <= 1.0));
    }

    #[test]
    fn white_noise_keeps_few_candidates() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(&[11]);
        let tau: Vec<f64> = (0..199).map(|i| 0.45 + i as f64 * 0.9).collect();
        let vals: Vec<f64> = tau.iter().map(|_| rng.random::<f64>() - 0.5).collect();
        let sig = signal(tau, vals);
        let bins = pool(&sig, 0.25).values.len();
        let c = pelt_head(&sig, 12.0, 180.0, &PeltConfig::default(), Exec::Sequential);
        assert!(c.len() * 10 <= bins, "{} candidates over {bins} bins", c.len());
    }

    proptest! {
        #[test]
        fn pelt_matches_brute_force(
            values in proptest::collection::vec(-5.0f64..5.0, 1..14),
            penalty in 0.0f64..6.0,
            m in 1usize..4,
        ) {
            let changes = pelt_segment(&values, penalty, m);
            let got = segmentation_objective(&values, &changes, penalty);
            let want = brute_force(&values, penalty, m);
            prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
            let mut edges = vec![0];
            edges.extend(&changes);
            edges.push(values.len());
            if !changes.is_empty() {
                prop_assert!(edges.windows(2).all(|w| w[1] - w[0] >= m));
            }
        }

        #[test]
        fn pool_preserves_monotone(n in 2usize..60, d in 0.1f64..3.0) {
            let tau: Vec<f64> = (0..n).map(|i| i as f64 * 0.37).collect();
            let vals: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
            let p = pool(&signal(tau, vals), d);
            prop_assert!(p.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

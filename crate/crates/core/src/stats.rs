//! Small numeric helpers shared across modules.

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Weighted quantile with linear interpolation.
///
/// Weights are treated as relative frequencies scaled so that the lightest
/// observation counts once; with integer weights this is exactly the
/// linear-interpolation quantile of the weight-expanded sample (the common
/// "type 7" definition). Returns `None` on empty input.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Option<f64> {
    assert_eq!(values.len(), weights.len());
    if values.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let w_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let freqs: Vec<f64> = order.iter().map(|&i| weights[i] / w_min).collect();
    let total = neumaier_sum(freqs.iter().copied());
    let h = q * (total - 1.0);

    let mut start = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        let end = start + freqs[pos] - 1.0;
        if h <= end {
            return Some(values[i]);
        }
        let next_start = start + freqs[pos];
        if h < next_start {
            let Some(&next) = order.get(pos + 1) else {
                return Some(values[i]);
            };
            let frac = h - end;
            return Some(values[i] + frac * (values[next] - values[i]));
        }
        start = next_start;
    }
    order.last().map(|&i| values[i])
}

/// Population standard deviation of a slice.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Deterministic uniform draw in [0, 1) keyed by `(seed, id)` (splitmix64).
pub fn keyed_uniform(seed: u64, id: u64) -> f64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(id)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linear-interpolation quantile of an unweighted sample.
    fn type7(sorted: &[f64], q: f64) -> f64 {
        let h = q * (sorted.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(sorted.len() - 1);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }

    #[test]
    fn unit_weights_match_unweighted_definition() {
        let xs = [-100.0, 0.0, 10.0, 1e9];
        let w = [1.0; 4];
        for q in [0.0, 0.01, 0.3, 0.5, 0.99, 1.0] {
            let got = weighted_quantile(&xs, &w, q).unwrap();
            assert!((got - type7(&xs, q)).abs() <= 1e-6 * got.abs().max(1.0));
        }
    }

    #[test]
    fn integer_weights_match_expansion() {
        let xs = [5.0, 1.0, 3.0];
        let w = [2.0, 1.0, 3.0];
        let mut expanded = vec![5.0, 5.0, 1.0, 3.0, 3.0, 3.0];
        expanded.sort_by(f64::total_cmp);
        for q in [0.0, 0.1, 0.25, 0.5, 0.77, 1.0] {
            let got = weighted_quantile(&xs, &w, q).unwrap();
            assert!((got - type7(&expanded, q)).abs() < 1e-12, "q={q}");
        }
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let vals = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(vals), 2.0);
    }

    #[test]
    fn keyed_uniform_is_in_range_and_stable() {
        for id in 0..1000 {
            let u = keyed_uniform(7, id);
            assert!((0.0..1.0).contains(&u));
            assert_eq!(u, keyed_uniform(7, id));
        }
        assert_ne!(keyed_uniform(7, 1), keyed_uniform(8, 1));
    }
}

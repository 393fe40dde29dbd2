//! Correlation and moment helpers shared by the analyses.
//!
//! NaN values mark missing tensor cells (skipped windows) and are excluded
//! from moments. Correlations use the population formula.

/// Mean and population variance over the non-NaN values, with the count of
/// contributing values. Returns NaN moments when nothing contributes.
pub fn nan_mean_var<I: IntoIterator<Item = f64>>(values: I) -> (f64, f64, usize) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    for v in values {
        if v.is_nan() {
            continue;
        }
        sum += v;
        sum_sq += v * v;
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    (mean, var, n)
}

/// Pearson correlation over paired samples; `None` when either side has
/// (numerically) zero variance, where the coefficient is undefined.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a < 1e-30 || var_b < 1e-30 {
        return None;
    }
    Some(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Average ranks (1-based), ties averaged.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg_rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (average ranks, then Pearson).
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nan_values_are_excluded_from_moments() {
        let (mean, var, n) = nan_mean_var([1.0, f64::NAN, 3.0]);
        assert_abs_diff_eq!(mean, 2.0);
        assert_abs_diff_eq!(var, 1.0);
        assert_eq!(n, 2);
        let (mean, _, n) = nan_mean_var([f64::NAN]);
        assert!(mean.is_nan());
        assert_eq!(n, 0);
    }

    #[test]
    fn pearson_perfect_linear_relation() {
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[-2.0, -4.0, -6.0]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pearson_zero_variance_is_undefined() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn spearman_is_rank_based() {
        // A monotone but non-linear relation still ranks perfectly.
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 10.0, 100.0, 1000.0];
        assert_abs_diff_eq!(spearman(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        // Ties are averaged.
        let c = [1.0, 1.0, 2.0];
        let r = ranks(&c);
        assert_eq!(r, vec![1.5, 1.5, 3.0]);
    }
}

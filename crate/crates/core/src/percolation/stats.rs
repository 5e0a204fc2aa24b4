//! Exact (Clopper–Pearson) binomial confidence bounds.

use statrs::function::beta::beta_reg;

/// Inverse of the regularised incomplete beta function `I_x(a, b)` in `x`.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided Clopper–Pearson interval at `confidence` for `k` successes in `n`.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(k <= n && n > 0, "need 0 <= k <= n and n > 0");
    let alpha = 1.0 - confidence;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 { 0.0 } else { beta_quantile(kf, nf - kf + 1.0, alpha / 2.0) };
    let hi = if k == n { 1.0 } else { beta_quantile(kf + 1.0, nf - kf, 1.0 - alpha / 2.0) };
    (lo, hi)
}

/// One-sided upper Clopper–Pearson bound at `confidence`.
pub fn binomial_upper_bound(k: u64, n: u64, confidence: f64) -> f64 {
    assert!(k <= n && n > 0, "need 0 <= k <= n and n > 0");
    if k == n {
        return 1.0;
    }
    if k == 0 {
        return 1.0 - (1.0 - confidence).powf(1.0 / n as f64);
    }
    beta_quantile(k as f64 + 1.0, (n - k) as f64, confidence)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_successes_closed_form() {
        let (lo, hi) = clopper_pearson(0, 50, 0.99);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.005f64.powf(1.0 / 50.0))).abs() < 1e-12);
    }

    #[test]
    fn reference_interval() {
        // 7 of 40 at 99%: values from an independent implementation
        // (scipy.stats.beta.ppf).
        let (lo, hi) = clopper_pearson(7, 40, 0.99);
        assert!((lo - 0.05367051693556134).abs() < 1e-9, "{lo}");
        assert!((hi - 0.3763230565903955).abs() < 1e-9, "{hi}");
    }

    proptest::proptest! {
        #[test]
        fn brackets_point_estimate(n in 1u64..400, frac in 0.0f64..=1.0) {
            let k = ((n as f64) * frac).floor() as u64;
            let (lo, hi) = clopper_pearson(k, n, 0.99);
            let p = k as f64 / n as f64;
            proptest::prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        }

        #[test]
        fn upper_bound_nonincreasing_in_n(m in 1u64..60, k in 0u64..3) {
            let a = binomial_upper_bound(k * m, 10 * m, 0.95);
            let b = binomial_upper_bound(2 * k * m, 20 * m, 0.95);
            proptest::prop_assert!(b <= a + 1e-12);
        }
    }
}

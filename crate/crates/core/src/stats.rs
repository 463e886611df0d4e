//! Descriptive helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the n - 1 divisor; 0 for fewer than two values.
pub fn sample_var(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn sample_sd(x: &[f64]) -> f64 {
    sample_var(x).sqrt()
}

/// Quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty slice");
    if n == 1 || q <= 0.0 {
        return sorted[0];
    }
    if q >= 1.0 {
        return sorted[n - 1];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, q)
}

/// Two-sided critical value for a (1 - alpha) interval. Infinite `df`
/// gives the normal value.
pub fn critical_value(alpha: f64, df: f64) -> f64 {
    let p = 1.0 - alpha / 2.0;
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(p);
    if !(df.is_finite() && df > 0.0) {
        return z;
    }
    if df > 1e4 {
        // statrs' inverse t loses accuracy (and can stall) for huge df;
        // the Cornish-Fisher series is exact to ~1e-15 here.
        let (z3, z5) = (z.powi(3), z.powi(5));
        return z + (z3 + z) / (4.0 * df) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * df * df);
    }
    StudentsT::new(0.0, 1.0, df).map(|t| t.inverse_cdf(p)).unwrap_or(z)
}

#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_hand_values() {
        let x = [1.0, 1.0, 1.0, 1.0, 10.0];
        assert!((quantile(&x, 0.8) - 2.8).abs() < 1e-12);
        assert_eq!(quantile(&x, 1.0), 10.0);
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.5);
    }

    #[test]
    fn normal_critical_value() {
        assert!((critical_value(0.05, f64::INFINITY) - 1.959964).abs() < 1e-5);
        assert!(critical_value(0.05, 4.0) > 2.7);
        // continuous across the switch to the series
        assert!((critical_value(0.05, 1e4) - critical_value(0.05, 1e4 + 1e-6)).abs() < 1e-7);
        assert!((critical_value(0.05, 1e7) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0);
        assert!(logistic(800.0) <= 1.0);
    }
}

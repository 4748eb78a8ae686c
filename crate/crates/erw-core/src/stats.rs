//! Statistical test helpers: chi-square goodness of fit with merged tail
//! bins, the chi-square quantile (via the regularized incomplete gamma
//! function), and binomial confidence half-widths.

/// z-value for two-sided 95% normal confidence intervals.
pub const Z_95: f64 = 1.959963984540054;

/// Half-width of the normal-approximation 95% interval for a binomial
/// fraction estimated from `successes` out of `trials`.
pub fn binomial_half_width_95(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    let p = successes as f64 / trials as f64;
    Z_95 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// ln Gamma(x) for x > 0 (Lanczos, g = 7, 9 coefficients).
#[allow(clippy::excessive_precision)] // canonical published table
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // Series expansion.
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut k = a;
        for _ in 0..500 {
            k += 1.0;
            term *= x / k;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // Continued fraction for Q(a, x) (modified Lentz).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (-x + a * x.ln() - ln_gamma(a)).exp() * h;
        1.0 - q
    }
}

/// Quantile of the chi-square distribution with `df` degrees of freedom:
/// the x with P(df/2, x/2) = prob. Bisection; accurate to ~1e-10.
pub fn chi_square_quantile(prob: f64, df: u64) -> f64 {
    assert!((0.0..1.0).contains(&prob) && df >= 1);
    let a = df as f64 / 2.0;
    let mut hi = df as f64 + 10.0 * (2.0 * df as f64).sqrt() + 50.0;
    while regularized_lower_gamma(a, hi / 2.0) < prob {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if regularized_lower_gamma(a, mid / 2.0) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub bins: usize,
    pub threshold: f64,
    pub passed: bool,
}

/// Chi-square goodness of fit of observed counts against expected counts,
/// merging adjacent bins (left to right) until every bin's expectation is at
/// least `min_expected`. The final bin absorbs whatever remains. Rejects at
/// significance `alpha`.
pub fn chi_square_gof(
    observed: &[f64],
    expected: &[f64],
    min_expected: f64,
    alpha: f64,
) -> ChiSquareOutcome {
    assert_eq!(observed.len(), expected.len());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        acc_obs += o;
        acc_exp += e;
        if acc_exp >= min_expected {
            merged.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = merged.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            merged.push((acc_obs, acc_exp));
        }
    }
    let statistic: f64 = merged
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else { 0.0 })
        .sum();
    let bins = merged.len();
    let df = bins.saturating_sub(1).max(1) as u64;
    let threshold = chi_square_quantile(1.0 - alpha, df);
    ChiSquareOutcome { statistic, bins, threshold, passed: statistic <= threshold }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-12);
        assert!((ln_gamma(2.0)).abs() < 1e-12);
        // Gamma(5) = 24.
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        // Gamma(1/2) = sqrt(pi).
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn chi_square_quantile_tabulated() {
        // Standard table values.
        assert!((chi_square_quantile(0.99, 5) - 15.086272).abs() < 1e-4);
        assert!((chi_square_quantile(0.99, 10) - 23.209251).abs() < 1e-4);
        assert!((chi_square_quantile(0.95, 3) - 7.814728).abs() < 1e-4);
        assert!((chi_square_quantile(0.5, 1) - 0.454936).abs() < 1e-4);
    }

    #[test]
    fn chi_square_quantile_agrees_with_wilson_hilferty() {
        // Large-df cross-check against the Wilson-Hilferty cube approximation.
        for df in [30u64, 55, 120] {
            let z99 = 2.3263478740408408;
            let k = df as f64;
            let wh = k * (1.0 - 2.0 / (9.0 * k) + z99 * (2.0 / (9.0 * k)).sqrt()).powi(3);
            let exact = chi_square_quantile(0.99, df);
            assert!((exact - wh).abs() / exact < 5e-3, "df {df}: {exact} vs {wh}");
        }
    }

    #[test]
    fn gof_accepts_exact_match_and_rejects_gross_mismatch() {
        let expected: Vec<f64> = (0..20).map(|m| 1e5 * 0.5f64.powi(m + 1)).collect();
        let outcome = chi_square_gof(&expected, &expected, 5.0, 0.01);
        assert!(outcome.passed);
        assert!(outcome.statistic < 1e-12);

        let mut shifted = expected.clone();
        shifted.rotate_right(1);
        let outcome = chi_square_gof(&shifted, &expected, 5.0, 0.01);
        assert!(!outcome.passed);
    }

    #[test]
    fn gof_merges_sparse_tail() {
        let expected = [1000.0, 3.0, 1.0, 0.5, 0.5];
        let observed = [1000.0, 2.0, 1.0, 1.0, 1.0];
        let outcome = chi_square_gof(&observed, &expected, 5.0, 0.01);
        // Everything past the first bin merges into a single tail bin.
        assert_eq!(outcome.bins, 2);

        // A leftover below the minimum folds into the previous bin.
        let expected = [1000.0, 2.0, 1.0, 0.5];
        let observed = [1000.0, 2.0, 1.0, 0.5];
        let outcome = chi_square_gof(&observed, &expected, 5.0, 0.01);
        assert_eq!(outcome.bins, 1);
    }

    #[test]
    fn binomial_half_width_example() {
        let hw = binomial_half_width_95(500, 1000);
        assert!((hw - Z_95 * (0.25f64 / 1000.0).sqrt()).abs() < 1e-12);
    }
}

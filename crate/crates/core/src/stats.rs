//! Small statistics helpers shared by the Monte Carlo estimators.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean.
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Delete-one jackknife standard error of `stat` over replica-level records.
pub fn jackknife_stderr<T>(records: &[T], stat: impl Fn(&[&T]) -> f64) -> f64 {
    let n = records.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut leave_out = Vec::with_capacity(n);
    let mut buf: Vec<&T> = Vec::with_capacity(n - 1);
    for skip in 0..n {
        buf.clear();
        buf.extend(records.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, r)| r));
        leave_out.push(stat(&buf));
    }
    let m = mean(&leave_out);
    let ss: f64 = leave_out.iter().map(|v| (v - m) * (v - m)).sum();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root mean square residual.
    pub residual: f64,
}

/// Ordinary least squares `y ~ intercept + slope x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit { slope, intercept, r_squared, residual: (ss_res / n).sqrt() }
}

/// Fit of `y ~ c x^slope` in log-log coordinates; nonpositive entries are skipped.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).unzip();
    linear_fit(&lx, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converging,
    Diverging,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Converging => "converging",
            Verdict::Diverging => "diverging",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Decay exponent below which the dyadic tail counts as summable.
pub const DECAY_EXPONENT: f64 = -0.2;
/// Floor that, held over the last dyads, counts as non-summable.
pub const DIVERGENCE_FLOOR: f64 = 0.5;
pub const TAIL_TERMS: usize = 3;

/// Judge summability of a nonnegative dyadic series from its last terms.
///
/// Returns the verdict and the fitted per-dyad decay exponent (slope of
/// `log2 term` against the dyad index over the tail).
pub fn dyadic_verdict(terms: &[f64]) -> (Verdict, f64) {
    if terms.len() < TAIL_TERMS {
        return (Verdict::Inconclusive, f64::NAN);
    }
    let tail = &terms[terms.len() - TAIL_TERMS..];
    let scale = terms.iter().copied().fold(0.0f64, f64::max).max(1e-300);
    let negligible = |t: f64| t <= 1e-10 * scale;
    if negligible(tail[TAIL_TERMS - 1]) {
        return (Verdict::Converging, f64::NEG_INFINITY);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = tail
        .iter()
        .enumerate()
        .filter(|(_, t)| !negligible(**t))
        .map(|(k, t)| (k as f64, t.log2()))
        .unzip();
    let exponent = if xs.len() >= 2 { linear_fit(&xs, &ys).slope } else { f64::NAN };
    if exponent < DECAY_EXPONENT {
        (Verdict::Converging, exponent)
    } else if tail.iter().all(|&t| t >= DIVERGENCE_FLOOR) {
        (Verdict::Diverging, exponent)
    } else {
        (Verdict::Inconclusive, exponent)
    }
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lam = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lam))
}

// Q(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2)
fn kolmogorov_q(lam: f64) -> f64 {
    if lam < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let t = (-2.0 * kf * kf * lam * lam).exp();
        sum += if k % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys);
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jackknife_of_mean_matches_stderr() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let jk = jackknife_stderr(&xs, |s| s.iter().map(|x| **x).sum::<f64>() / s.len() as f64);
        assert!((jk - stderr_of_mean(&xs)).abs() < 1e-12);
    }

    #[test]
    fn verdicts() {
        assert_eq!(dyadic_verdict(&[1.0; 6]).0, Verdict::Diverging);
        let geo: Vec<f64> = (0..6).map(|n| 0.5f64.powi(n)).collect();
        let (v, e) = dyadic_verdict(&geo);
        assert_eq!(v, Verdict::Converging);
        assert!((e + 1.0).abs() < 1e-12);
        assert_eq!(dyadic_verdict(&[3.0, 1.0, 0.0, 0.0, 0.0]).0, Verdict::Converging);
        assert_eq!(dyadic_verdict(&[0.3, 0.3, 0.3, 0.3]).0, Verdict::Inconclusive);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..400).map(|k| (k as f64 * 0.618).fract()).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).1 < 1e-6);
        // scipy.stats.kstwobign.sf(1.0)
        assert!((kolmogorov_q(1.0) - 0.26999967167735456).abs() < 1e-12);
    }
}

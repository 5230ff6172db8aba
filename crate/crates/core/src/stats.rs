//! Small statistics helpers used by the diagnostics.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear-interpolation sample quantile (the usual "type 7" definition).
pub fn sample_quantile(xs: &[f64], p: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    sample_quantile(xs, 0.5)
}

pub fn iqr(xs: &[f64]) -> f64 {
    sample_quantile(xs, 0.75) - sample_quantile(xs, 0.25)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Pearson correlation with its large-sample standard error `√((1 − r²)/(n − 2))`.
pub fn correlation_with_stderr(a: &[f64], b: &[f64]) -> (f64, f64) {
    let r = pearson(a, b);
    let n = a.len() as f64;
    (r, ((1.0 - r * r) / (n - 2.0)).sqrt())
}

/// Ranks starting at 1, ties replaced by their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && xs[idx[e + 1]] == xs[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            out[i] = avg;
        }
        k = e + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// One-sided p-value for an increasing trend, `P(ρ ≥ ρ_obs)` under
/// exchangeability. Exact by enumerating permutations for `n ≤ 8`, Student-t
/// approximation otherwise.
pub fn spearman_increasing_p(x: &[f64], y: &[f64]) -> (f64, f64) {
    let rho = spearman(x, y);
    let n = x.len();
    if n <= 8 {
        let rx = ranks(x);
        let ry = ranks(y);
        let mut perm: Vec<usize> = (0..n).collect();
        let (mut hit, mut total) = (0u64, 0u64);
        loop {
            let permuted: Vec<f64> = perm.iter().map(|&i| ry[i]).collect();
            if pearson(&rx, &permuted) >= rho - 1e-12 {
                hit += 1;
            }
            total += 1;
            if !next_permutation(&mut perm) {
                break;
            }
        }
        (rho, hit as f64 / total as f64)
    } else {
        let df = n as f64 - 2.0;
        let t = rho * (df / (1.0 - rho * rho).max(1e-300)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid df");
        (rho, 1.0 - dist.cdf(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub critical: f64,
    pub alpha: f64,
    pub rejected: bool,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic critical value
/// `√(−ln(α/2)/2) · √((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsTest {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let critical = (-(alpha / 2.0).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt();
    KsTest { statistic: d, critical, alpha, rejected: d > critical }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_and_spread() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(sample_quantile(&xs, 0.0), 1.0);
        assert_eq!(sample_quantile(&xs, 1.0), 4.0);
        assert!((iqr(&xs) - 1.5).abs() < 1e-12);
        let (m, se) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_exact_p_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (rho, p) = spearman_increasing_p(&x, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((rho - 1.0).abs() < 1e-12);
        assert!((p - 1.0 / 120.0).abs() < 1e-12);
        let (rho, p) = spearman_increasing_p(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]);
        assert!((rho + 1.0).abs() < 1e-12);
        assert_eq!(p, 1.0);
        // One adjacent swap gives rho = 0.9, matched by the identity and the four adjacent swaps.
        let (rho, p) = spearman_increasing_p(&x, &[2.0, 1.0, 3.0, 4.0, 5.0]);
        assert!((rho - 0.9).abs() < 1e-12);
        assert!((p - 5.0 / 120.0).abs() < 1e-12);
    }

    #[test]
    fn ks_statistic() {
        let a = [1.0, 2.0, 3.0];
        let t = ks_two_sample(&a, &a, 0.001);
        assert_eq!(t.statistic, 0.0);
        assert!(!t.rejected);
        let t = ks_two_sample(&[0.0, 0.1], &[5.0, 6.0], 0.05);
        assert_eq!(t.statistic, 1.0);
        let shifted: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let other: Vec<f64> = (0..500).map(|i| i as f64 + 250.0).collect();
        assert!(ks_two_sample(&shifted, &other, 0.001).rejected);
    }
}

//! Significance statistics for experiment reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Largest `n * m` for which the exact two-sample null distribution is used.
pub const EXACT_KS_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub r: f64,
    pub p_value: f64,
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("NaN in sample"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `max |count_a(x) * m - count_b(x) * n|` over all pooled values: the KS
/// statistic scaled by `n * m`, kept integral so the exact route compares
/// lattice points without rounding.
fn scaled_statistic(a: &[f64], b: &[f64]) -> usize {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut best) = (0usize, 0usize, 0usize);
    while i < n || j < m {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        best = best.max((i * m).abs_diff(j * n));
    }
    best
}

/// Kolmogorov limiting survival function `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value with the effective-size correction
/// `λ = (√ne + 0.12 + 0.11/√ne) · D`, `ne = nm/(n+m)`.
pub fn ks_asymptotic_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    let s = ne.sqrt();
    kolmogorov_survival((s + 0.12 + 0.11 / s) * d)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
        - statrs::function::gamma::ln_gamma(k as f64 + 1.0)
        - statrs::function::gamma::ln_gamma((n - k) as f64 + 1.0)
}

/// Exact `P(D >= d)` under the null for continuous data, by counting
/// monotone lattice paths from (0,0) to (n,m) that stay strictly inside
/// the band `|i·m − j·n| < scaled_d`.
pub fn ks_exact_pvalue(scaled_d: usize, n: usize, m: usize) -> f64 {
    if scaled_d == 0 {
        return 1.0;
    }
    // The count is symmetric in (n, m); fix an order so results are too.
    let (n, m) = (n.min(m), n.max(m));
    let inside = |i: usize, j: usize| (i * m).abs_diff(j * n) < scaled_d;
    // Counts are rescaled per row to stay in range; the running log scale
    // is restored at the end.
    let mut row = vec![0.0f64; m + 1];
    let mut log_scale = 0.0;
    for i in 0..=n {
        for j in 0..=m {
            if !inside(i, j) {
                row[j] = 0.0;
                continue;
            }
            if i == 0 && j == 0 {
                row[j] = 1.0;
                continue;
            }
            let up = if i > 0 { row[j] } else { 0.0 };
            let left = if j > 0 { row[j - 1] } else { 0.0 };
            row[j] = up + left;
        }
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak > 1e100 {
            row.iter_mut().for_each(|v| *v /= peak);
            log_scale += peak.ln();
        }
    }
    let inside_paths = row[m];
    if inside_paths == 0.0 {
        return 1.0;
    }
    let frac = (inside_paths.ln() + log_scale - ln_binomial(n + m, n)).exp();
    (1.0 - frac).clamp(0.0, 1.0)
}

/// Two-sided two-sample Kolmogorov–Smirnov test.
///
/// Small samples (`n·m <= EXACT_KS_LIMIT`) use the exact null
/// distribution; larger ones the corrected asymptotic distribution.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("Kolmogorov-Smirnov sample"));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n, m) = (a.len(), b.len());
    let scaled = scaled_statistic(&a, &b);
    let statistic = scaled as f64 / (n * m) as f64;
    let p_value = if n * m <= EXACT_KS_LIMIT {
        ks_exact_pvalue(scaled, n, m)
    } else {
        ks_asymptotic_pvalue(statistic, n, m)
    };
    Ok(KsResult { statistic, p_value })
}

/// KS test forced onto the asymptotic distribution regardless of size.
pub fn ks_two_sample_asymptotic(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("Kolmogorov-Smirnov sample"));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let statistic = scaled_statistic(&a, &b) as f64 / (a.len() * b.len()) as f64;
    Ok(KsResult {
        statistic,
        p_value: ks_asymptotic_pvalue(statistic, a.len(), b.len()),
    })
}

/// Permutation p-value: the fraction of all `C(n+m, n)` relabelings of the
/// pooled sample whose statistic reaches the observed one.
pub fn ks_permutation_pvalue(a: &[f64], b: &[f64]) -> Result<f64> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput("Kolmogorov-Smirnov sample"));
    }
    if n + m > 24 {
        return Err(Error::invalid("permutation KS limited to n + m <= 24"));
    }
    let observed = scaled_statistic(&sorted(a)?, &sorted(b)?);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let total = n + m;
    let (mut hits, mut count) = (0u64, 0u64);
    let (mut xa, mut xb) = (Vec::with_capacity(n), Vec::with_capacity(m));
    for mask in 0u32..(1u32 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        xa.clear();
        xb.clear();
        for (k, &v) in pooled.iter().enumerate() {
            if mask & (1 << k) != 0 {
                xa.push(v);
            } else {
                xb.push(v);
            }
        }
        count += 1;
        if scaled_statistic(&xa, &xb) >= observed {
            hits += 1;
        }
    }
    Ok(hits as f64 / count as f64)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for a single value.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<PearsonResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::invalid("Pearson correlation needs at least 3 points"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (x.len() - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(PearsonResult { r, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceVerdict {
    pub mean_a: f64,
    pub std_a: f64,
    pub mean_b: f64,
    pub std_b: f64,
    pub ks: KsResult,
    pub alpha: f64,
    pub significant: bool,
}

pub fn aggregate_runs(f1_a: &[f64], f1_b: &[f64], alpha: f64) -> Result<SignificanceVerdict> {
    let ks = ks_two_sample(f1_a, f1_b)?;
    Ok(SignificanceVerdict {
        mean_a: mean(f1_a),
        std_a: std_dev(f1_a),
        mean_b: mean(f1_b),
        std_b: std_dev(f1_b),
        ks,
        alpha,
        significant: ks.p_value < alpha,
    })
}

//! Small statistical helpers shared by the simulator and the test suites.

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and
/// the continuous CDF `cdf`. Sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov distance. Sorts both inputs.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
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
    d
}

/// Standard normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Half-width of the Wilson score interval for `k` successes in `n` trials.
pub fn wilson_halfwidth(k: usize, n: usize, z: f64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf)
}

/// Wilson score interval `(lo, hi)`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let z2 = z * z;
    let center = (k as f64 / nf + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let h = wilson_halfwidth(k, n, z);
    ((center - h).max(0.0), (center + h).min(1.0))
}

/// Chi-square goodness-of-fit p-value of integer `counts` against a Poisson
/// law with the given mean. Cells with expected count below 5 are pooled into
/// the tails.
pub fn poisson_gof_pvalue(counts: &[usize], mean: f64) -> f64 {
    let n = counts.len() as f64;
    let law = Poisson::new(mean).expect("positive mean");
    let sd = mean.sqrt();
    let lo = (mean - 5.0 * sd).floor().max(0.0) as u64;
    let hi = (mean + 5.0 * sd).ceil() as u64;
    // Cells: (-inf, lo], lo+1, ..., hi-1, [hi, inf)
    let mut edges: Vec<(u64, u64)> = Vec::new();
    let mut start = 0u64;
    let mut acc = 0.0;
    for k in 0..=hi {
        acc += law.pmf(k);
        if k >= lo && acc * n >= 5.0 {
            edges.push((start, k));
            start = k + 1;
            acc = 0.0;
        }
    }
    if let Some(last) = edges.last_mut() {
        last.1 = u64::MAX;
    }
    let expected: Vec<f64> = edges
        .iter()
        .map(|&(a, b)| {
            let upper = if b == u64::MAX { 1.0 } else { statrs::distribution::DiscreteCDF::cdf(&law, b) };
            let lower = if a == 0 { 0.0 } else { statrs::distribution::DiscreteCDF::cdf(&law, a - 1) };
            n * (upper - lower)
        })
        .collect();
    let mut observed = vec![0.0; edges.len()];
    for &c in counts {
        let c = c as u64;
        let idx = edges.partition_point(|&(_, b)| b < c);
        observed[idx.min(edges.len() - 1)] += 1.0;
    }
    let chi2: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = (edges.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).expect("positive dof").cdf(chi2)
}

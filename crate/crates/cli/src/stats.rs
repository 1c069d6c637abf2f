//! Small statistics helpers shared by the experiment drivers.

/// Gumbel CDF `x -> exp(-exp(-x))`.
pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max(((i + 1) as f64 / n - f).abs());
    }
    sup
}

/// Total-variation distance between an empirical histogram (`counts[k]` hits
/// of value `k` out of `total`) and a pmf on the nonnegative integers; mass
/// of the pmf beyond the histogram range counts in full.
pub fn tv_histogram<F: Fn(usize) -> f64>(counts: &[u64], total: u64, pmf: F) -> f64 {
    let mut acc = 0.0;
    let mut pmf_covered = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        let q = pmf(k);
        pmf_covered += q;
        acc += (c as f64 / total as f64 - q).abs();
    }
    0.5 * (acc + (1.0 - pmf_covered).max(0.0))
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(samples: &[f64]) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Binomial standard error of an empirical probability.
pub fn mc_error(p_hat: f64, reps: usize) -> f64 {
    (p_hat * (1.0 - p_hat) / reps as f64).sqrt()
}

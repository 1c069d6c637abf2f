//! Probability-distribution kernel layer: tuple-length laws, derived laws
//! (size-biased, tilted), compound Poisson pmf/sampling and distances.
//!
//! Infinite-support laws are materialized as truncated tables. The raw mass
//! dropped by the truncation is recorded in `truncation_defect` and the table
//! is renormalized, so every table sums to 1 up to rounding.

use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::Rng;

const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// PmfVector: a sub-probability vector on {0, 1, ..., K} with recorded defect.
// ---------------------------------------------------------------------------

/// A pmf on the nonnegative integers, truncated at some `K`, together with the
/// probability mass that the truncation dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfVector {
    probs: Vec<f64>,
    defect: f64,
}

impl PmfVector {
    /// Builds a pmf from raw probabilities; the defect is `1 - sum`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| !(-1e-12..=1.0 + 1e-12).contains(&p)) {
            return Err(Error::InvalidDistribution(
                "pmf entries must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if sum > 1.0 + 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "pmf mass {sum} exceeds 1"
            )));
        }
        let probs = probs.into_iter().map(|p| p.max(0.0)).collect();
        Ok(Self {
            probs,
            defect: (1.0 - sum).max(0.0),
        })
    }

    /// The point mass at `k`.
    pub fn dirac(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self { probs, defect: 0.0 }
    }

    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Largest index carried by the table.
    pub fn k_max(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// i-th factorial moment `Σ k(k-1)...(k-i+1) pmf(k)`.
    pub fn factorial_moment(&self, i: u32) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| falling_factorial(k as f64, i) * p)
            .sum()
    }

    /// Probability generating function `Σ pmf(k) s^k` for `s` in `[0, 1]`.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("pgf argument {s} outside [0, 1]")));
        }
        // Horner from the top index.
        let mut acc = 0.0;
        for &p in self.probs.iter().rev() {
            acc = acc * s + p;
        }
        Ok(acc)
    }

    /// Moment generating function `Σ pmf(k) e^{θk}` (finite: truncated table).
    pub fn mgf(&self, theta: f64) -> f64 {
        let z = theta.exp();
        let mut acc = 0.0;
        for &p in self.probs.iter().rev() {
            acc = acc * z + p;
        }
        acc
    }

    /// gcd of the positive support; the lattice span used by the local CLT.
    pub fn span(&self) -> usize {
        let mut g = 0usize;
        for (k, &p) in self.probs.iter().enumerate() {
            if k > 0 && p > 0.0 {
                g = gcd(g, k);
            }
        }
        g.max(1)
    }

    /// Inverse-cdf sampler over the (renormalized) table.
    pub fn sampler(&self) -> DiscreteCdf {
        DiscreteCdf::from_probs(&self.probs)
    }

    /// Total variation distance; tables are zero-padded to a common range and
    /// half the defect difference magnitude is added.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        let n = self.probs.len().max(other.probs.len());
        let mut acc = 0.0;
        for k in 0..n {
            acc += (self.get(k) - other.get(k)).abs();
        }
        0.5 * acc + 0.5 * (self.defect - other.defect).abs()
    }
}

fn falling_factorial(k: f64, i: u32) -> f64 {
    let mut acc = 1.0;
    for j in 0..i {
        acc *= k - j as f64;
    }
    acc
}

fn gcd(a: usize, b: usize) -> usize {
    if a == 0 {
        b
    } else {
        gcd(b % a, a)
    }
}

// ---------------------------------------------------------------------------
// Inverse-cdf sampling.
// ---------------------------------------------------------------------------

/// Cumulative table for sampling a discrete law supported on {0, ..., K}.
#[derive(Debug, Clone)]
pub struct DiscreteCdf {
    cum: Vec<f64>,
}

impl DiscreteCdf {
    fn from_probs(probs: &[f64]) -> Self {
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in probs {
            acc += p;
            cum.push(acc);
        }
        Self { cum }
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let total = *self.cum.last().expect("empty cdf");
        let u: f64 = rng.random::<f64>() * total;
        self.cum.partition_point(|&c| c < u).min(self.cum.len() - 1)
    }
}

// ---------------------------------------------------------------------------
// LengthDistribution: tuple-length law on the positive integers.
// ---------------------------------------------------------------------------

/// Tag describing how a length law was constructed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthKind {
    Dirac(usize),
    Logarithmic(f64),
    /// `p(k) ∝ k^{-alpha-1}` so the tail `Σ_{j>k} p(j)` decays like `k^{-alpha}`.
    PowerLaw(f64),
    Table,
}

/// A probability distribution on `{1, 2, ...}` with `p(1) < 1`, stored as a
/// truncated, renormalized table.
#[derive(Debug, Clone)]
pub struct LengthDistribution {
    /// `probs[k] = p(k)`; index 0 is unused and zero.
    probs: Vec<f64>,
    kind: LengthKind,
    tail_tolerance: f64,
    truncation_defect: f64,
}

impl LengthDistribution {
    /// The Dirac mass at `d >= 2`.
    pub fn dirac(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDistribution(
                "dirac length must be >= 2 (p(1) < 1 is required)".into(),
            ));
        }
        let mut probs = vec![0.0; d + 1];
        probs[d] = 1.0;
        Ok(Self {
            probs,
            kind: LengthKind::Dirac(d),
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            truncation_defect: 0.0,
        })
    }

    /// The logarithmic distribution `p(k) = c a^k / k` with `c = -1/log(1-a)`.
    pub fn logarithmic(a: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&a) || a == 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "logarithmic parameter {a} must lie in (0, 1)"
            )));
        }
        let c = -1.0 / (1.0 - a).ln();
        let tol = DEFAULT_TAIL_TOLERANCE;
        let mut probs = vec![0.0];
        let mut power = a; // a^k at k = 1
        let mut k = 1usize;
        loop {
            probs.push(c * power / k as f64);
            // Tail bound: Σ_{j>k} c a^j / j <= c a^{k+1} / ((k+1)(1-a)).
            let tail = c * power * a / ((k as f64 + 1.0) * (1.0 - a));
            if tail < tol {
                break;
            }
            power *= a;
            k += 1;
        }
        Self::finish_table(probs, LengthKind::Logarithmic(a), tol)
    }

    /// `p(k) ∝ k^{-alpha-1}` truncated at `k_max` (or at the default tail
    /// tolerance) and renormalized.
    pub fn power_law(alpha: f64, k_max: Option<usize>) -> Result<Self> {
        if alpha <= 1.0 {
            return Err(Error::InvalidDistribution(format!(
                "power-law index {alpha} must exceed 1"
            )));
        }
        let tol = DEFAULT_TAIL_TOLERANCE;
        let k_max = k_max.unwrap_or_else(|| {
            // Raw tail beyond K is ~ K^{-alpha} / alpha (before normalization).
            let k = (1.0 / (alpha * tol)).powf(1.0 / alpha).ceil() as usize;
            k.clamp(64, 5_000_000)
        });
        let mut probs = vec![0.0; k_max + 1];
        for (k, p) in probs.iter_mut().enumerate().skip(1) {
            *p = (k as f64).powf(-alpha - 1.0);
        }
        Self::finish_table(probs, LengthKind::PowerLaw(alpha), tol)
    }

    /// A law given by an explicit table of `(k, p(k))` pairs.
    pub fn from_table(pairs: &[(usize, f64)]) -> Result<Self> {
        let k_max = pairs.iter().map(|&(k, _)| k).max().unwrap_or(0);
        let mut probs = vec![0.0; k_max + 1];
        for &(k, p) in pairs {
            if k == 0 {
                return Err(Error::InvalidDistribution(
                    "length laws live on positive integers".into(),
                ));
            }
            probs[k] += p;
        }
        Self::finish_table(probs, LengthKind::Table, DEFAULT_TAIL_TOLERANCE)
    }

    /// Reads a `k<TAB>p(k)` table file.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let where_ = format!("table line {}", lineno + 1);
            let (ks, ps) = match (it.next(), it.next()) {
                (Some(k), Some(p)) => (k, p),
                _ => {
                    return Err(Error::BadSpec(where_, "expected `k<TAB>p(k)`".into()));
                }
            };
            let k: usize = ks
                .parse()
                .map_err(|e| Error::BadSpec(where_.clone(), format!("{e}")))?;
            let p: f64 = ps
                .parse()
                .map_err(|e| Error::BadSpec(where_.clone(), format!("{e}")))?;
            pairs.push((k, p));
        }
        Self::from_table(&pairs)
    }

    fn finish_table(mut probs: Vec<f64>, kind: LengthKind, tol: f64) -> Result<Self> {
        if probs.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
            return Err(Error::InvalidDistribution(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidDistribution("zero total mass".into()));
        }
        let raw_defect = 1.0 - sum;
        if matches!(kind, LengthKind::Table | LengthKind::Logarithmic(_)) && raw_defect.abs() > tol.max(1e-6) {
            return Err(Error::InvalidDistribution(format!(
                "table mass {sum} is not within tolerance of 1"
            )));
        }
        for p in &mut probs {
            *p /= sum;
        }
        let out = Self {
            probs,
            kind,
            tail_tolerance: tol,
            truncation_defect: raw_defect.max(0.0),
        };
        if out.p(1) >= 1.0 - 1e-12 {
            return Err(Error::InvalidDistribution(
                "p(1) = 1 is rejected: the reduced moment m* would vanish".into(),
            ));
        }
        Ok(out)
    }

    pub fn p(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn kind(&self) -> LengthKind {
        self.kind
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    /// Raw mass dropped (and renormalized away) by the truncation.
    pub fn truncation_defect(&self) -> f64 {
        self.truncation_defect
    }

    pub fn support_max(&self) -> usize {
        self.probs.len() - 1
    }

    /// `G_p(s) = Σ p(k) s^k` for `s` in `[0, 1]`.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("pgf argument {s} outside [0, 1]")));
        }
        let mut acc = 0.0;
        for &p in self.probs.iter().rev() {
            acc = acc * s + p;
        }
        Ok(acc)
    }

    /// i-th factorial moment `m_{p,i}`; `+∞` when the untruncated law is known
    /// to have a divergent moment of that order.
    pub fn factorial_moment(&self, i: u32) -> f64 {
        if i == 0 {
            return 1.0;
        }
        if let LengthKind::PowerLaw(alpha) = self.kind {
            if i as f64 >= alpha {
                return f64::INFINITY;
            }
        }
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| falling_factorial(k as f64, i) * p)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.factorial_moment(1)
    }

    /// The reduced first moment `m* = m_{p,1} - p(1)`.
    pub fn m_star(&self) -> f64 {
        self.factorial_moment(1) - self.p(1)
    }

    /// Size-biased law `p̃(k) = (k+1) p(k+1) / m*` on the positive integers,
    /// returned as a pmf vector indexed from 0 (with zero mass at 0).
    pub fn size_biased(&self) -> Result<PmfVector> {
        let m_star = self.m_star();
        if !(m_star > 0.0) || !m_star.is_finite() {
            return Err(Error::Domain(
                "size-biasing needs finite m* > 0".into(),
            ));
        }
        let mut probs = vec![0.0; self.probs.len().saturating_sub(1)];
        for (k, slot) in probs.iter_mut().enumerate().skip(1) {
            *slot = (k as f64 + 1.0) * self.p(k + 1) / m_star;
        }
        PmfVector::new(probs)
    }

    /// Tilted law `p̂_a(k) = a^k p(k) / G_p(a)` for `a` in `(0, 1]`.
    pub fn tilt(&self, a: f64) -> Result<Self> {
        if !(0.0 < a && a <= 1.0) {
            return Err(Error::Domain(format!("tilt parameter {a} outside (0, 1]")));
        }
        let g = self.pgf(a)?;
        if g <= 0.0 {
            return Err(Error::Domain("G_p(a) = 0".into()));
        }
        let mut probs = self.probs.clone();
        let mut power = 1.0;
        for (k, p) in probs.iter_mut().enumerate() {
            if k > 0 {
                power *= a;
                *p *= power / g;
            }
        }
        let kind = match self.kind {
            LengthKind::Dirac(d) => LengthKind::Dirac(d),
            _ if a == 1.0 => self.kind,
            _ => LengthKind::Table,
        };
        // The tilt of a normalized table is normalized by construction.
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Ok(Self {
            probs,
            kind,
            tail_tolerance: self.tail_tolerance,
            truncation_defect: self.truncation_defect,
        })
    }

    pub fn sampler(&self) -> DiscreteCdf {
        DiscreteCdf::from_probs(&self.probs)
    }

    /// The length table viewed as a pmf on the nonnegative integers.
    pub fn as_pmf(&self) -> PmfVector {
        PmfVector {
            probs: self.probs.clone(),
            defect: 0.0,
        }
    }
}

/// Parses the distribution mini-language:
/// `dirac:<d>`, `log:<a>`, `powerlaw:<alpha>[:<kmax>]`, `table:<path>`.
pub fn parse_length_spec(spec: &str) -> Result<LengthDistribution> {
    let bad = |msg: &str| Error::BadSpec(spec.to_string(), msg.to_string());
    let mut parts = spec.splitn(2, ':');
    let head = parts.next().unwrap_or("");
    let rest = parts.next().ok_or_else(|| bad("missing parameter"))?;
    match head {
        "dirac" => {
            let d: usize = rest.parse().map_err(|_| bad("dirac wants an integer"))?;
            LengthDistribution::dirac(d)
        }
        "log" => {
            let a: f64 = rest.parse().map_err(|_| bad("log wants a real in (0,1)"))?;
            LengthDistribution::logarithmic(a)
        }
        "powerlaw" => {
            let mut it = rest.splitn(2, ':');
            let alpha: f64 = it
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|_| bad("powerlaw wants a real index"))?;
            let k_max = match it.next() {
                Some(s) => Some(s.parse().map_err(|_| bad("kmax wants an integer"))?),
                None => None,
            };
            LengthDistribution::power_law(alpha, k_max)
        }
        "table" => LengthDistribution::from_table_file(Path::new(rest)),
        _ => Err(bad("unknown distribution kind")),
    }
}

// ---------------------------------------------------------------------------
// Compound Poisson.
// ---------------------------------------------------------------------------

/// Parameters `(λ, ν)` of a compound Poisson law `CPois(λ, ν)`.
#[derive(Debug, Clone)]
pub struct CompoundPoissonSpec {
    rate: f64,
    jump: PmfVector,
}

impl CompoundPoissonSpec {
    pub fn new(rate: f64, jump: PmfVector) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "compound Poisson rate {rate} must be a nonnegative real"
            )));
        }
        let total = jump.sum() + jump.defect();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "jump law mass {total} is not 1"
            )));
        }
        Ok(Self { rate, jump })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn jump(&self) -> &PmfVector {
        &self.jump
    }

    /// Mean `λ · mean(ν)`.
    pub fn mean(&self) -> f64 {
        self.rate * self.jump.mean()
    }

    /// First factorial moment of the CPois law itself (equals the mean).
    pub fn m1(&self) -> f64 {
        self.mean()
    }

    /// Second factorial moment of the CPois law:
    /// `λ m_{ν,2} + λ² m_{ν,1}²`.
    pub fn m2(&self) -> f64 {
        self.rate * self.jump.factorial_moment(2)
            + (self.rate * self.jump.factorial_moment(1)).powi(2)
    }

    /// Exact mass of `CPois(λ, ν)` at 0: `e^{-λ(1 - ν(0))}`.
    pub fn mass_at_zero(&self) -> f64 {
        (-self.rate * (1.0 - self.jump.get(0))).exp()
    }

    /// Moment generating function `exp(λ (M_ν(θ) - 1))`.
    pub fn mgf(&self, theta: f64) -> f64 {
        (self.rate * (self.jump.mgf(theta) - 1.0)).exp()
    }

    /// Generating function `exp(λ (G_ν(s) - 1))` for `s` in `[0, 1]`.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        Ok((self.rate * (self.jump.pgf(s)? - 1.0)).exp())
    }

    /// Tilted spec `(λ G_ν(a), ν̂_a)` with `ν̂_a(k) = a^k ν(k) / G_ν(a)`.
    pub fn tilted(&self, a: f64) -> Result<Self> {
        if !(0.0 < a && a <= 1.0) {
            return Err(Error::Domain(format!("tilt parameter {a} outside (0, 1]")));
        }
        let g = self.jump.pgf(a)?;
        let mut probs = Vec::with_capacity(self.jump.probs().len());
        let mut power = 1.0;
        for (k, &p) in self.jump.probs().iter().enumerate() {
            if k > 0 {
                power *= a;
            }
            probs.push(p * power / g);
        }
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Self::new(self.rate * g, PmfVector::new(probs)?)
    }

    /// Exact pmf of `CPois(λ, ν)` on `{0, ..., k_max}` by the truncated
    /// expansion `e^{-λ} Σ_j λ^j / j! ν^{*j}`, with early stopping once the
    /// remaining Poisson weight is negligible.
    pub fn pmf(&self, k_max: usize) -> PmfVector {
        cpois_pmf_into(self.rate, &self.jump, k_max)
    }

    /// Draws `N ~ Poisson(λ)` then sums `N` iid jumps.
    pub fn sample(&self, sampler: &DiscreteCdf, rng: &mut Rng) -> u64 {
        let n = poisson_sample(self.rate, rng);
        let mut total = 0u64;
        for _ in 0..n {
            total += sampler.sample(rng) as u64;
        }
        total
    }
}

/// Truncated compound Poisson pmf; shared by `CompoundPoissonSpec::pmf` and
/// the Dwass evaluation in the `bgw` module.
pub fn cpois_pmf_into(rate: f64, jump: &PmfVector, k_max: usize) -> PmfVector {
    let mut out = vec![0.0; k_max + 1];
    // Poisson weights in log space so large rates do not underflow at j = 0.
    let ln_rate = if rate > 0.0 { rate.ln() } else { f64::NEG_INFINITY };
    let mut ln_fact = 0.0f64;
    let mut covered = 0.0; // Σ_{i<=j} e^{-λ} λ^i / i!
    out[0] = (-rate).exp();
    covered += out[0];
    // conv = ν^{*j} truncated at k_max, updated in place.
    let mut conv = vec![0.0; k_max + 1];
    conv[0] = 1.0;
    let jump_probs = jump.probs();
    let mut j = 0u64;
    while covered < 1.0 - 1e-16 {
        j += 1;
        ln_fact += (j as f64).ln();
        let ln_weight = -rate + j as f64 * ln_rate - ln_fact;
        let weight = ln_weight.exp();
        covered += weight;
        convolve_in_place(&mut conv, jump_probs);
        if weight > 0.0 {
            for (o, &c) in out.iter_mut().zip(conv.iter()) {
                *o += weight * c;
            }
        }
        // The convolution support may leave the window entirely.
        if jump.get(0) == 0.0 && j as usize > k_max {
            break;
        }
        // Past the mode with negligible weight left: done.
        if j as f64 > rate && ln_weight < -60.0 {
            break;
        }
    }
    PmfVector::new(out).expect("cpois pmf is a sub-probability vector")
}

/// Replaces `acc` by `acc * kernel` (discrete convolution truncated to the
/// window of `acc`).
fn convolve_in_place(acc: &mut [f64], kernel: &[f64]) {
    let n = acc.len();
    let mut out = vec![0.0; n];
    for (i, &a) in acc.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &k) in kernel.iter().enumerate() {
            if i + j >= n {
                break;
            }
            out[i + j] += a * k;
        }
    }
    acc.copy_from_slice(&out);
}

/// Poisson sampling by cdf inversion; large rates are split in halves so the
/// running term never underflows.
pub fn poisson_sample(rate: f64, rng: &mut Rng) -> u64 {
    if rate == 0.0 {
        return 0;
    }
    if rate > 60.0 {
        return poisson_sample(rate / 2.0, rng) + poisson_sample(rate / 2.0, rng);
    }
    let u: f64 = rng.random();
    let mut p = (-rate).exp();
    let mut cum = p;
    let mut k = 0u64;
    while u > cum && k < 10_000 {
        k += 1;
        p *= rate / k as f64;
        cum += p;
    }
    k
}

/// The infinite-variance stress law `p(k) = 4 / (k (k+1) (k+2))`, truncated
/// at `k_max`.
pub fn heavy_tail_example(k_max: usize) -> LengthDistribution {
    let pairs: Vec<(usize, f64)> = (1..=k_max)
        .map(|k| {
            let kf = k as f64;
            (k, 4.0 / (kf * (kf + 1.0) * (kf + 2.0)))
        })
        .collect();
    LengthDistribution::from_table(&pairs).expect("valid table")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn pgf_examples() {
        let d2 = LengthDistribution::dirac(2).unwrap();
        assert_eq!(d2.pgf(0.5).unwrap(), 0.25);
        assert!((d2.pgf(1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(d2.pgf(1.5).is_err());
        assert!(d2.pgf(-0.1).is_err());

        // Direct series summation oracle for the heavy-tailed example law,
        // cross-checked against its closed-form pgf
        // G(z) = 1 + 2(z-1) + 2 (z-1)^2 z^{-2} (-log(1-z) - z).
        let p = heavy_tail_example(400_000);
        let z: f64 = 0.5;
        let series: f64 = (1..=400_000usize)
            .map(|k| {
                let kf = k as f64;
                4.0 / (kf * (kf + 1.0) * (kf + 2.0)) * z.powi(k as i32)
            })
            .sum();
        let closed =
            1.0 + 2.0 * (z - 1.0) + 2.0 * (z - 1.0).powi(2) / (z * z) * (-(1.0 - z).ln() - z);
        assert!((series - closed).abs() < 1e-12);
        assert!((p.pgf(z).unwrap() - 0.3862944).abs() < 1e-6);
        assert!((p.pgf(z).unwrap() - closed).abs() < 1e-9);
    }

    #[test]
    fn pgf_monotone_in_s() {
        for p in [
            LengthDistribution::dirac(3).unwrap(),
            LengthDistribution::logarithmic(0.5).unwrap(),
            LengthDistribution::power_law(3.5, Some(4000)).unwrap(),
        ] {
            let mut last = 0.0;
            for i in 0..=20 {
                let s = i as f64 / 20.0;
                let g = p.pgf(s).unwrap();
                assert!(g >= last - 1e-15);
                last = g;
            }
        }
    }

    #[test]
    fn factorial_moments() {
        let d2 = LengthDistribution::dirac(2).unwrap();
        assert_eq!(d2.factorial_moment(1), 2.0);
        assert_eq!(d2.factorial_moment(2), 2.0);
        for d in [2usize, 3, 5] {
            let p = LengthDistribution::dirac(d).unwrap();
            assert!((p.factorial_moment(2) - (d * (d - 1)) as f64).abs() < 1e-12);
        }
        // Logarithmic m* = -a^2 / ((1-a) log(1-a)) at a = 0.5.
        let a: f64 = 0.5;
        let logd = LengthDistribution::logarithmic(a).unwrap();
        let closed = -a * a / ((1.0 - a) * (1.0 - a).ln());
        assert!((closed - 0.7213475).abs() < 1e-6);
        assert!((logd.m_star() - closed).abs() < 1e-9);
        // Power-law with tail index alpha = 3.5: moments of order < 3.5 are
        // finite, higher ones diverge.
        let pl = LengthDistribution::power_law(3.5, Some(4000)).unwrap();
        assert!(pl.factorial_moment(3).is_finite());
        assert!(pl.factorial_moment(4).is_infinite());
        let pl2 = LengthDistribution::power_law(1.5, Some(4000)).unwrap();
        assert!(pl2.factorial_moment(2).is_infinite());
    }

    #[test]
    fn size_biased_examples() {
        let d2 = LengthDistribution::dirac(2).unwrap();
        let sb = d2.size_biased().unwrap();
        assert!((sb.get(1) - 1.0).abs() < 1e-14);
        let d5 = LengthDistribution::dirac(5).unwrap();
        assert!((d5.size_biased().unwrap().get(4) - 1.0).abs() < 1e-14);

        // Logarithmic a: size-biased is geometric on {1, 2, ...} with ratio a.
        let a = 0.5;
        let sb = LengthDistribution::logarithmic(a).unwrap().size_biased().unwrap();
        for k in 1..30 {
            let ratio = sb.get(k + 1) / sb.get(k);
            assert!((ratio - a).abs() < 1e-9, "ratio {ratio} at k={k}");
        }
        assert!((sb.get(1) - (1.0 - a)).abs() < 1e-9);
    }

    #[test]
    fn size_biased_mean_is_m2_over_m_star() {
        for p in [
            LengthDistribution::dirac(4).unwrap(),
            LengthDistribution::from_table(&[(1, 0.2), (2, 0.3), (5, 0.5)]).unwrap(),
        ] {
            let sb = p.size_biased().unwrap();
            assert!((sb.mean() - p.factorial_moment(2) / p.m_star()).abs() < 1e-12);
        }
    }

    #[test]
    fn tilt_examples() {
        let p = LengthDistribution::from_table(&[(1, 0.2), (2, 0.3), (5, 0.5)]).unwrap();
        let t1 = p.tilt(1.0).unwrap();
        for k in 0..=5 {
            assert!((t1.p(k) - p.p(k)).abs() < 1e-14);
        }
        let d3 = LengthDistribution::dirac(3).unwrap();
        assert!((d3.tilt(0.4).unwrap().p(3) - 1.0).abs() < 1e-14);

        // Logarithmic u tilted by a is logarithmic au (pmf ratio check).
        let u = 0.7;
        let a = 0.6;
        let tilted = LengthDistribution::logarithmic(u).unwrap().tilt(a).unwrap();
        let target = LengthDistribution::logarithmic(u * a).unwrap();
        for k in 1..40 {
            assert!((tilted.p(k) - target.p(k)).abs() < 1e-10, "k={k}");
        }
        assert!(p.tilt(0.0).is_err());
        assert!(p.tilt(1.5).is_err());
    }

    #[test]
    fn tilt_composes() {
        let p = LengthDistribution::from_table(&[(1, 0.1), (3, 0.4), (7, 0.5)]).unwrap();
        let ab = p.tilt(0.8).unwrap().tilt(0.5).unwrap();
        let direct = p.tilt(0.4).unwrap();
        for k in 0..=7 {
            assert!((ab.p(k) - direct.p(k)).abs() < 1e-13);
        }
    }

    #[test]
    fn cpois_pmf_examples() {
        // k = 0 mass is e^{-λ} when ν charges only positives.
        let spec = CompoundPoissonSpec::new(1.3, PmfVector::dirac(2)).unwrap();
        let pmf = spec.pmf(40);
        assert!((pmf.get(0) - (-1.3f64).exp()).abs() < 1e-14);

        // ν = δ_1 reduces to a plain Poisson law.
        let spec = CompoundPoissonSpec::new(2.0, PmfVector::dirac(1)).unwrap();
        let pmf = spec.pmf(60);
        let expected = (-2.0f64).exp() * 8.0 / 6.0;
        assert!((pmf.get(3) - expected).abs() < 1e-12);
        assert!((expected - 0.1804470).abs() < 1e-6);
        assert!(pmf.defect() < 1e-12);
    }

    #[test]
    fn cpois_polya_aeppli_closed_form() {
        // CPois(λ, geometric with ratio au on {1,2,...}) has the
        // Pólya–Aeppli pmf  e^{-λ} (au)^k Σ_j (1/j!) C(k-1, j-1) (λ(1-au)/au)^j.
        let lambda = 1.0;
        let au: f64 = 0.3;
        let k_max = 20usize;
        let mut geo = vec![0.0; 200];
        for (k, g) in geo.iter_mut().enumerate().skip(1) {
            *g = (1.0 - au) * au.powi(k as i32 - 1);
        }
        let jump = PmfVector::new(geo).unwrap();
        let spec = CompoundPoissonSpec::new(lambda, jump).unwrap();
        let pmf = spec.pmf(k_max);
        for k in 0..=k_max {
            let closed = if k == 0 {
                (-lambda).exp()
            } else {
                let mut s = 0.0;
                for j in 1..=k {
                    s += (lambda * (1.0 - au) / au).powi(j as i32) / fact(j)
                        * binom(k - 1, j - 1);
                }
                (-lambda).exp() * au.powi(k as i32) * s
            };
            assert!(
                (pmf.get(k) - closed).abs() < 1e-12,
                "k={k}: {} vs {}",
                pmf.get(k),
                closed
            );
        }
    }

    // Small helpers for the closed-form oracle above.
    fn fact(j: usize) -> f64 {
        (1..=j).map(|i| i as f64).product()
    }
    fn binom(n: usize, k: usize) -> f64 {
        if k > n {
            return 0.0;
        }
        let mut acc = 1.0;
        for i in 0..k {
            acc *= (n - i) as f64 / (k - i) as f64;
        }
        acc
    }
    #[test]
    fn cpois_defect_shrinks_with_k_max() {
        let spec = CompoundPoissonSpec::new(1.5, PmfVector::dirac(2)).unwrap();
        let d1 = spec.pmf(4).defect();
        let d2 = spec.pmf(12).defect();
        let d3 = spec.pmf(40).defect();
        assert!(d1 > d2 && d2 > d3);
        assert!(d3 < 1e-12);
        // sum + defect = 1 within 1e-12.
        let pmf = spec.pmf(25);
        assert!((pmf.sum() + pmf.defect() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cpois_sampling_matches_pmf() {
        let mut rng = rng_from(11);
        let spec = CompoundPoissonSpec::new(0.0, PmfVector::dirac(3)).unwrap();
        let sampler = spec.jump().sampler();
        for _ in 0..50 {
            assert_eq!(spec.sample(&sampler, &mut rng), 0);
        }

        let spec = CompoundPoissonSpec::new(1.0, PmfVector::dirac(2)).unwrap();
        let sampler = spec.jump().sampler();
        let reps = 1_000_000usize;
        let mut counts = vec![0u64; 101];
        let mut total = 0.0;
        for _ in 0..reps {
            let x = spec.sample(&sampler, &mut rng) as usize;
            counts[x.min(100)] += 1;
            total += x as f64;
        }
        // Mean within 3σ of λ mean(ν) = 2; Var(X) = λ E[ν²] = 4.
        let mean = total / reps as f64;
        let sigma = (4.0 / reps as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sigma, "mean {mean}");
        // Empirical pmf TV against exact pmf below 0.005.
        let exact = spec.pmf(100);
        let tv: f64 = 0.5
            * (0..=100)
                .map(|k| (counts[k] as f64 / reps as f64 - exact.get(k)).abs())
                .sum::<f64>();
        assert!(tv < 0.005, "tv {tv}");
    }

    #[test]
    fn tv_distance_examples() {
        let a = PmfVector::dirac(1);
        let b = PmfVector::dirac(2);
        assert_eq!(a.tv_distance(&a), 0.0);
        assert_eq!(a.tv_distance(&b), 1.0);
    }

    #[test]
    fn tv_coupling_bound_on_cpois_grid() {
        // TV(CPois(λ1,p1), CPois(λ2,p2)) <= 1 - e^{-(λ2-λ1)} + λ1 TV(p1,p2).
        let p1 = PmfVector::new(vec![0.0, 0.5, 0.3, 0.2]).unwrap();
        let p2 = PmfVector::new(vec![0.0, 0.4, 0.4, 0.2]).unwrap();
        let tv_jump = p1.tv_distance(&p2);
        for &l1 in &[0.3, 0.8, 1.5] {
            for &dl in &[0.0, 0.2, 0.7] {
                let l2 = l1 + dl;
                let c1 = CompoundPoissonSpec::new(l1, p1.clone()).unwrap().pmf(400);
                let c2 = CompoundPoissonSpec::new(l2, p2.clone()).unwrap().pmf(400);
                let bound = 1.0 - (-(l2 - l1) as f64).exp() + l1 * tv_jump;
                assert!(
                    c1.tv_distance(&c2) <= bound + 1e-9,
                    "λ1={l1} λ2={l2}: {} > {}",
                    c1.tv_distance(&c2),
                    bound
                );
            }
        }
    }

    #[test]
    fn pgf_inequality_grid() {
        // (m1 - 1 + ν(0)) (s-1)^2 <= G_ν(s) - 1 - (s-1) m1 <= m2 (s-1)^2 / 2
        // for laws with ν(0) + ν(1) < 1 and finite m2.
        let laws = test_law_family();
        for nu in &laws {
            assert!(nu.get(0) + nu.get(1) < 1.0);
            let m1 = nu.factorial_moment(1);
            let m2 = nu.factorial_moment(2);
            for i in 0..=20 {
                let s = i as f64 / 20.0;
                let mid = nu.pgf(s).unwrap() - 1.0 - (s - 1.0) * m1;
                let low = (m1 - 1.0 + nu.get(0)) * (s - 1.0).powi(2);
                let high = 0.5 * m2 * (s - 1.0).powi(2);
                assert!(low <= mid + 1e-12 && mid <= high + 1e-12, "s={s}");
            }
        }
    }

    /// Ten laws with ν(0)+ν(1) < 1 for the inequality grids.
    fn test_law_family() -> Vec<PmfVector> {
        let mut laws = vec![
            PmfVector::dirac(2),
            PmfVector::dirac(3),
            PmfVector::new(vec![0.2, 0.2, 0.6]).unwrap(),
            PmfVector::new(vec![0.0, 0.3, 0.3, 0.4]).unwrap(),
            PmfVector::new(vec![0.1, 0.1, 0.3, 0.3, 0.2]).unwrap(),
            PmfVector::new(vec![0.4, 0.0, 0.6]).unwrap(),
        ];
        for d in [3usize, 4] {
            laws.push(
                LengthDistribution::dirac(d)
                    .unwrap()
                    .size_biased()
                    .unwrap(),
            );
        }
        laws.push(LengthDistribution::logarithmic(0.4).unwrap().size_biased().unwrap());
        laws.push(
            LengthDistribution::power_law(3.5, Some(2000))
                .unwrap()
                .size_biased()
                .unwrap(),
        );
        laws
    }

    #[test]
    fn rejects_degenerate_laws() {
        assert!(LengthDistribution::dirac(1).is_err());
        assert!(LengthDistribution::from_table(&[(1, 1.0)]).is_err());
        assert!(LengthDistribution::from_table(&[(0, 0.3), (2, 0.7)]).is_err());
    }

    #[test]
    fn parses_spec_strings() {
        assert!(matches!(
            parse_length_spec("dirac:4").unwrap().kind(),
            LengthKind::Dirac(4)
        ));
        assert!(matches!(
            parse_length_spec("log:0.5").unwrap().kind(),
            LengthKind::Logarithmic(_)
        ));
        let pl = parse_length_spec("powerlaw:3.5:500").unwrap();
        assert_eq!(pl.support_max(), 500);
        assert!(parse_length_spec("nope:1").is_err());
        assert!(parse_length_spec("dirac:x").is_err());
    }

    #[test]
    fn span_detection() {
        assert_eq!(PmfVector::dirac(1).span(), 1);
        assert_eq!(PmfVector::dirac(2).span(), 2);
        assert_eq!(PmfVector::new(vec![0.0, 0.0, 0.5, 0.0, 0.5]).unwrap().span(), 2);
        assert_eq!(PmfVector::new(vec![0.0, 0.0, 0.5, 0.5]).unwrap().span(), 1);
    }
}

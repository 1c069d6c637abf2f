//! Branching processes with compound Poisson offspring: exact total-progeny
//! laws via the Dwass identity, random-walk simulation, extinction
//! probabilities, survival bounds, dual and tilted processes, Cramér rates
//! and a local central limit theorem check.

use crate::dist::{cpois_pmf_into, CompoundPoissonSpec, PmfVector};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// A branching process: `ancestors` independent roots, each individual
/// reproducing according to the compound Poisson `offspring` law.
#[derive(Debug, Clone)]
pub struct BGWSpec {
    pub ancestors: u32,
    pub offspring: CompoundPoissonSpec,
}

impl BGWSpec {
    pub fn new(ancestors: u32, offspring: CompoundPoissonSpec) -> Result<Self> {
        if ancestors == 0 {
            return Err(Error::Domain("need at least one ancestor".into()));
        }
        Ok(Self {
            ancestors,
            offspring,
        })
    }
}

/// Exact law of the total progeny `T`, truncated at some `K`.
///
/// The mass splits as `Σ_k P(T=k) + truncation = q^u` (extinction mass) and
/// `non_extinction_defect = 1 - q^u`; the two defects are reported
/// separately.
#[derive(Debug, Clone)]
pub struct ProgenyPmf {
    pub u: u32,
    /// `probs[k] = P(T = k)`; zero below `u`.
    pub probs: Vec<f64>,
    /// `q^u`, the probability that the process dies out.
    pub extinction: f64,
    /// `1 - q^u`, mass escaping to infinity.
    pub non_extinction_defect: f64,
    /// `q^u - Σ probs`: finite mass beyond the truncation point.
    pub truncation: f64,
}

impl ProgenyPmf {
    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `P(k < T < ∞)` within the truncation window.
    pub fn tail(&self, k: usize) -> f64 {
        let inside: f64 = self.probs.iter().skip(k + 1).sum();
        inside + self.truncation
    }

    /// CSV rows `k,P(T=k)` preceded by `#` metadata lines.
    pub fn write_csv<W: std::io::Write>(
        &self,
        w: &mut W,
        lambda: f64,
        jump_desc: &str,
    ) -> std::io::Result<()> {
        writeln!(
            w,
            "# u={} lambda={} jump={} extinction={} truncation={}",
            self.u, lambda, jump_desc, self.extinction, self.truncation
        )?;
        writeln!(w, "k,P(T=k)")?;
        for (k, &p) in self.probs.iter().enumerate().skip(self.u as usize) {
            writeln!(w, "{k},{p}")?;
        }
        Ok(())
    }
}

/// Exact total-progeny pmf by the Dwass identity:
/// `P(T = u) = e^{-uλ}` and, for `k > u`,
/// `P(T = k) = (u/k) P(S_k = k-u)` with `S_k ~ CPois(kλ, ν)`.
///
/// All `k` share the convolution powers `ν^{*j}`, so the whole table costs
/// `O(K² · support(ν))`.
pub fn total_progeny_pmf(spec: &BGWSpec, k_max: usize) -> Result<ProgenyPmf> {
    let u = spec.ancestors as usize;
    if k_max < u {
        return Err(Error::Domain(format!("k_max = {k_max} below u = {u}")));
    }
    let lambda = spec.offspring.rate();
    let nu = spec.offspring.jump();
    let ln_lambda_k: Vec<f64> = (0..=k_max)
        .map(|k| {
            if k == 0 {
                f64::NEG_INFINITY
            } else {
                (k as f64 * lambda).ln()
            }
        })
        .collect();

    let mut probs = vec![0.0f64; k_max + 1];
    // j = 0 term: only k = u gets conv[0] = 1.
    probs[u] = (-(u as f64) * lambda).exp();

    let mut conv = vec![0.0f64; k_max + 1 - u];
    conv[0] = 1.0;
    let nu_zero = nu.get(0);
    let j_cap = if nu_zero == 0.0 {
        k_max - u
    } else {
        let top = k_max as f64 * lambda;
        (top + 20.0 * top.sqrt() + 60.0) as usize
    };
    let mut ln_fact = 0.0f64;
    for j in 1..=j_cap {
        ln_fact += (j as f64).ln();
        convolve_in_place(&mut conv, nu.probs());
        let k_start = if nu_zero == 0.0 { u + j } else { u };
        if k_start > k_max {
            break;
        }
        for k in k_start..=k_max {
            let c = conv[k - u];
            if c == 0.0 {
                continue;
            }
            let ln_w = -(k as f64) * lambda + j as f64 * ln_lambda_k[k] - ln_fact;
            if ln_w < -45.0 {
                continue;
            }
            probs[k] += u as f64 / k as f64 * ln_w.exp() * c;
        }
    }
    for p in &mut probs {
        *p = p.max(0.0);
    }

    let q = extinction_prob(&spec.offspring)?;
    let extinction = q.powi(u as i32);
    let sum: f64 = probs.iter().sum();
    Ok(ProgenyPmf {
        u: spec.ancestors,
        probs,
        extinction,
        non_extinction_defect: 1.0 - extinction,
        truncation: (extinction - sum).max(0.0),
    })
}

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

/// Outcome of one simulated family tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progeny {
    Finite(u64),
    /// The running population exceeded the cap.
    Overflow,
}

/// Simulates the total progeny as the hitting time of the associated random
/// walk: explore individuals one by one, each adding `CPois(λ, ν)` children.
pub fn simulate_progeny(spec: &BGWSpec, cap: u64, rng: &mut Rng) -> Progeny {
    let sampler = spec.offspring.jump().sampler();
    let mut total = spec.ancestors as u64;
    let mut explored = 0u64;
    while explored < total {
        explored += 1;
        total += spec.offspring.sample(&sampler, rng);
        if total > cap {
            return Progeny::Overflow;
        }
    }
    Progeny::Finite(total)
}

/// Extinction probability: the smallest root of
/// `exp(λ (G_ν(x) - 1)) = x` in `(0, 1]`.
///
/// Returns 1 in the (sub)critical case; otherwise fixed-point iteration from
/// 0 with a bisection fallback, to residual below 1e-12.
pub fn extinction_prob(offspring: &CompoundPoissonSpec) -> Result<f64> {
    if offspring.mean() <= 1.0 {
        return Ok(1.0);
    }
    let f = |x: f64| -> f64 {
        (offspring.rate() * (offspring.jump().pgf(x).expect("x in [0,1]") - 1.0)).exp()
    };
    let mut x = 0.0f64;
    for _ in 0..100_000 {
        let next = f(x);
        if (next - x).abs() < 1e-15 {
            x = next;
            break;
        }
        x = next;
    }
    if (f(x) - x).abs() > 1e-12 {
        // Bisection on g(x) = f(x) - x over [x, 1); g(x) >= 0, g(1-) < 0.
        let (mut lo, mut hi) = (x, 1.0 - 1e-9);
        if f(hi) - hi > 0.0 {
            return Err(Error::NoConvergence(
                "no supercritical extinction root below 1".into(),
            ));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) - mid >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x = 0.5 * (lo + hi);
    }
    if (f(x) - x).abs() > 1e-12 {
        return Err(Error::NoConvergence(format!(
            "extinction residual {}",
            (f(x) - x).abs()
        )));
    }
    Ok(x)
}

/// Survival-probability bounds `2(m1-1)/m2 <= 1-q <= (m1-1)/(m1-1+w0)`,
/// where `m1, m2` are the first two factorial moments of the offspring law
/// and `w0` its mass at zero.
pub fn survival_bounds(offspring: &CompoundPoissonSpec) -> Result<(f64, f64)> {
    let m1 = offspring.m1();
    let m2 = offspring.m2();
    if m1 <= 1.0 {
        return Err(Error::Domain(format!(
            "survival bounds need supercritical mean, got {m1}"
        )));
    }
    let w0 = offspring.mass_at_zero();
    Ok((2.0 * (m1 - 1.0) / m2, (m1 - 1.0) / (m1 - 1.0 + w0)))
}

/// Offspring law of the process conditioned on extinction:
/// `(λ G_ν(q), ν̂_q)` with `ν̂_q(k) = q^k ν(k) / G_ν(q)`.
pub fn dual_spec(offspring: &CompoundPoissonSpec) -> Result<CompoundPoissonSpec> {
    if offspring.mean() <= 1.0 {
        return Err(Error::Domain(
            "dual process requires a supercritical offspring law".into(),
        ));
    }
    let q = extinction_prob(offspring)?;
    offspring.tilted(q)
}

/// Maximum residual of the change-of-measure identity
/// `P(T̂_a = k) = a^{k-u} e^{kλ(1-G_ν(a))} P(T = k)` over `k <= k_max`,
/// where `T̂_a` is the total progeny under the tilted offspring law.
pub fn tilted_progeny_check(spec: &BGWSpec, a: f64, k_max: usize) -> Result<f64> {
    if !(0.0 < a && a <= 1.0) {
        return Err(Error::Domain(format!("tilt parameter {a} outside (0, 1]")));
    }
    let tilted = BGWSpec::new(spec.ancestors, spec.offspring.tilted(a)?)?;
    let lhs = total_progeny_pmf(&tilted, k_max)?;
    let rhs_base = total_progeny_pmf(spec, k_max)?;
    let lambda = spec.offspring.rate();
    let g = spec.offspring.jump().pgf(a)?;
    let u = spec.ancestors as i32;
    let mut worst = 0.0f64;
    for k in spec.ancestors as usize..=k_max {
        let factor = a.powi(k as i32 - u) * ((k as f64) * lambda * (1.0 - g)).exp();
        let diff = (lhs.get(k) - factor * rhs_base.get(k)).abs();
        worst = worst.max(diff);
    }
    Ok(worst)
}

/// Large-deviation rate at 1 of the offspring law:
/// `h = sup_{θ>0} (θ - log L(θ))` with `L(θ) = exp(λ(M_ν(θ)-1))`.
pub fn cramer_rate(offspring: &CompoundPoissonSpec) -> Result<f64> {
    let mean = offspring.mean();
    if mean >= 1.0 {
        return Err(Error::Domain(format!(
            "Cramér rate at 1 needs offspring mean < 1, got {mean}"
        )));
    }
    let lambda = offspring.rate();
    let nu = offspring.jump();
    let objective = |theta: f64| theta - lambda * (nu.mgf(theta) - 1.0);
    let slope = |theta: f64| {
        // d/dθ λ M_ν(θ) = λ Σ k ν(k) e^{θk}
        let z = theta.exp();
        let mut acc = 0.0;
        for (k, &p) in nu.probs().iter().enumerate().rev() {
            acc = acc * z + k as f64 * p;
        }
        acc * lambda
    };
    // Bracket: objective increases at 0; grow until the mgf slope exceeds 1.
    let support = nu.probs().len() as f64;
    let theta_cap = 650.0 / support;
    let mut hi = 1.0f64.min(theta_cap);
    while slope(hi) < 1.0 && hi < theta_cap {
        hi = (2.0 * hi).min(theta_cap);
    }
    // Golden-section maximization of the concave objective on [0, hi].
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = objective(d);
        }
        if b - a < 1e-13 {
            break;
        }
    }
    Ok(objective(0.5 * (a + b)).max(0.0))
}

/// Worst deviation, over a rate grid `λ ∈ [lo, hi]` and all lattice points,
/// of the exact `CPois(nλ, ν)` pmf from its Gaussian local approximation:
/// `sup √n |P(S_n = kr) - (r/√(2πnλ(m2+m1))) e^{-(kr-nλm1)²/(2nλ(m2+m1))}|`
/// with `r` the lattice span of `ν`.
pub fn local_clt_error(nu: &PmfVector, lo: f64, hi: f64, n: usize) -> Result<f64> {
    if !(0.0 < lo && lo <= hi) {
        return Err(Error::Domain(format!("bad rate range [{lo}, {hi}]")));
    }
    let r = nu.span();
    let m1 = nu.factorial_moment(1);
    let m2 = nu.factorial_moment(2);
    let grid = 7usize;
    let mut worst = 0.0f64;
    for i in 0..grid {
        let lambda = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        let rate = n as f64 * lambda;
        let var = rate * (m2 + m1);
        let mean = rate * m1;
        let k_top = (mean + 10.0 * var.sqrt()).ceil() as usize + r;
        let pmf = cpois_pmf_into(rate, nu, k_top);
        let norm = r as f64 / (2.0 * std::f64::consts::PI * var).sqrt();
        let mut k = 0usize;
        while k * r <= k_top {
            let x = (k * r) as f64;
            let gauss = norm * (-(x - mean).powi(2) / (2.0 * var)).exp();
            let dev = (n as f64).sqrt() * (pmf.get(k * r) - gauss).abs();
            worst = worst.max(dev);
            k += 1;
        }
    }
    Ok(worst)
}

/// The lattice span used by [`local_clt_error`].
pub fn lattice_span(nu: &PmfVector) -> usize {
    nu.span()
}

//! Monte Carlo experiment drivers: coalescence-threshold statistics, the
//! block-size law, the hydrodynamic limit and the phase-transition regimes.

use std::collections::BTreeMap;

use coalkit_core::{
    closed_form_rho, cramer_rate, derive_seed, extinction_prob, parse_length_spec, simulate,
    total_progeny_pmf, BGWSpec, CompoundPoissonSpec, Error, LengthDistribution, LengthKind,
    Result, SimOptions, StopRule,
};
use rayon::prelude::*;

use crate::report::{ExperimentReport, Meta, Record, Verdict};
use crate::stats::{gumbel_cdf, ks_statistic, median, tv_histogram};

/// Shared configuration for all experiments. Every field is echoed into the
/// report meta so reruns are reproducible from the output alone.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Population sizes; single-n experiments use the first entry, sweeps
    /// use all of them.
    pub n: Vec<usize>,
    /// Length-law spec string (`dirac:2`, `powerlaw:3.5`, ...).
    pub dist: String,
    /// Time parameter on the hydrodynamic scale (simulated horizon `n t`).
    pub t: Option<f64>,
    /// Critical-window parameter for `t_n = (1/m2)(1 + theta n^{-1/3})`.
    pub theta: Option<f64>,
    /// Offset in the threshold schedule `t = (n/m*)(log n + a)`.
    pub a: Option<f64>,
    pub reps: usize,
    pub k_max: usize,
    pub seed: u64,
    /// Phase regime: subcritical | supercritical | critical | powerlaw.
    pub regime: Option<String>,
    /// Worker threads (default: rayon's global pool).
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(experiment: &str, n: usize, dist: &str, reps: usize, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            n: vec![n],
            dist: dist.into(),
            t: None,
            theta: None,
            a: None,
            reps,
            k_max: 30,
            seed,
            regime: None,
            threads: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Domain("need at least one replication".into()));
        }
        if self.n.is_empty() || self.n.iter().any(|&n| n < 2) {
            return Err(Error::Domain("population sizes must be at least 2".into()));
        }
        Ok(())
    }

    fn length_law(&self) -> Result<LengthDistribution> {
        parse_length_spec(&self.dist)
    }

    fn meta(&self) -> Meta {
        Meta {
            version: env!("CARGO_PKG_VERSION").into(),
            experiment: self.experiment.clone(),
            seed: self.seed,
            config: serde_json::to_value(self).unwrap_or(serde_json::Value::Null),
        }
    }

    fn required_t(&self) -> Result<f64> {
        self.t
            .ok_or_else(|| Error::Domain("this experiment needs --t".into()))
    }
}

/// Runs `reps` jobs on a worker pool, seeding each from (master seed, rep).
/// Output order is by rep index regardless of scheduling.
fn run_reps<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let job = || -> Result<Vec<T>> {
        (0..cfg.reps)
            .into_par_iter()
            .map(|rep| f(rep, derive_seed(cfg.seed, rep as u64)))
            .collect()
    };
    match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

fn offspring_at(p: &LengthDistribution, t: f64) -> Result<CompoundPoissonSpec> {
    CompoundPoissonSpec::new(t * p.m_star(), p.size_biased()?)
}

/// Coalescence-threshold experiment: centered coalescence times against the
/// Gumbel law, the singleton count against its Poisson limit, and the
/// one-block-plus-singletons shape of the partition near the threshold.
pub fn exp_threshold(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let p = cfg.length_law()?;
    let n = cfg.n[0];
    let nf = n as f64;
    let m_star = p.m_star();
    let a_sing = cfg.a.unwrap_or(0.0);
    let t_sing = nf / m_star * (nf.ln() + a_sing);
    let t_one = nf / m_star * (nf.ln() + 1.0);
    let mut cps = vec![t_sing, t_one];
    cps.sort_by(|x, y| x.partial_cmp(y).unwrap());

    struct Run {
        t_singleton: Option<f64>,
        t_coal: Option<f64>,
        singletons_at_a: usize,
        one_block: bool,
        truncated: bool,
    }
    let runs = run_reps(cfg, |_rep, seed| {
        let opts = SimOptions {
            skip_trivial: true,
            checkpoints: cps.clone(),
            ..Default::default()
        };
        let out = simulate(n, &p, StopRule::UntilCoalescence { cap: None }, seed, &opts)?;
        let at = |time: f64| {
            out.obs
                .checkpoints
                .iter()
                .find(|c| c.time == time)
                .expect("checkpoint recorded")
                .clone()
        };
        let cp_sing = at(t_sing);
        let cp_one = at(t_one);
        Ok(Run {
            t_singleton: out.obs.t_singleton,
            t_coal: out.obs.t_coal,
            singletons_at_a: cp_sing.singleton_count,
            one_block: cp_one.block_count == cp_one.singleton_count + 1
                && cp_one.largest == n - cp_one.singleton_count,
            truncated: out.obs.truncated,
        })
    })?;

    let mut records = Vec::new();
    let mut ts_stats = Vec::new();
    let mut tc_stats = Vec::new();
    let mut singleton_counts = Vec::new();
    let mut one_block_hits = 0usize;
    let mut truncated = 0usize;
    for (rep, run) in runs.iter().enumerate() {
        if run.truncated {
            truncated += 1;
            continue;
        }
        let ts = run.t_singleton.unwrap_or(f64::NAN);
        let tc = run.t_coal.unwrap_or(f64::NAN);
        let ts_stat = m_star * ts / nf - nf.ln();
        let tc_stat = m_star * tc / nf - nf.ln();
        ts_stats.push(ts_stat);
        tc_stats.push(tc_stat);
        singleton_counts.push(run.singletons_at_a);
        one_block_hits += run.one_block as usize;
        let mut rec = Record::new();
        rec.insert("rep".into(), rep as f64);
        rec.insert("t_singleton".into(), ts);
        rec.insert("t_coal".into(), tc);
        rec.insert("ts_stat".into(), ts_stat);
        rec.insert("tc_stat".into(), tc_stat);
        rec.insert("singletons_at_a".into(), run.singletons_at_a as f64);
        rec.insert("one_block_plus_singletons".into(), run.one_block as u8 as f64);
        records.push(rec);
    }
    let kept = records.len();
    if kept == 0 {
        return Err(Error::NoConvergence("every run hit the time cap".into()));
    }

    let ks_ts = ks_statistic(&ts_stats, gumbel_cdf);
    let ks_tc = ks_statistic(&tc_stats, gumbel_cdf);
    let max_count = singleton_counts.iter().max().copied().unwrap_or(0);
    let mut hist = vec![0u64; max_count + 1];
    for &c in &singleton_counts {
        hist[c] += 1;
    }
    // Limit law of the singleton count at offset a: Poisson(e^{-a}).
    let rate = (-a_sing).exp();
    let mut ln_fact = 0.0;
    let poisson: Vec<f64> = (0..=max_count.max(30))
        .map(|k| {
            if k > 0 {
                ln_fact += (k as f64).ln();
            }
            (-rate + k as f64 * rate.ln() - ln_fact).exp()
        })
        .collect();
    let tv_singleton = tv_histogram(&hist, kept as u64, |k| {
        poisson.get(k).copied().unwrap_or(0.0)
    });
    let frac_one_block = one_block_hits as f64 / kept as f64;

    let summary = BTreeMap::from([
        ("ks_t_singleton".to_string(), ks_ts),
        ("ks_t_coal".to_string(), ks_tc),
        ("tv_singleton_poisson".to_string(), tv_singleton),
        ("frac_one_block_plus_singletons".to_string(), frac_one_block),
        ("kept".to_string(), kept as f64),
        ("truncated".to_string(), truncated as f64),
    ]);
    let verdicts = vec![
        Verdict::at_most("ks_t_singleton_gumbel", ks_ts, 0.06),
        Verdict::at_most("ks_t_coal_gumbel", ks_tc, 0.06),
        Verdict::at_most("tv_singleton_poisson", tv_singleton, 0.05),
        Verdict::at_least("frac_one_block_plus_singletons", frac_one_block, 0.90),
    ];
    Ok(ExperimentReport {
        meta: cfg.meta(),
        records,
        summary,
        verdicts,
    })
}

/// Block-size-law experiment: the size of a tagged element's block at time
/// `n t` against the exact total-progeny law, with the explicit coupling
/// bound, plus the two-block product law.
pub fn exp_blocksize(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let p = cfg.length_law()?;
    let n = cfg.n[0];
    let t = cfg.required_t()?;
    let k_max = cfg.k_max;
    let m2 = p.factorial_moment(2);
    let m3 = p.factorial_moment(3);

    let runs = run_reps(cfg, |_rep, seed| {
        let opts = SimOptions {
            skip_trivial: true,
            ..Default::default()
        };
        let mut out = simulate(n, &p, StopRule::Horizon(n as f64 * t), seed, &opts)?;
        let (r1, s1) = out.partition.block_of(1);
        let (r2, s2) = out.partition.block_of(2);
        Ok((s1, s2, r1 == r2))
    })?;

    let oracle = total_progeny_pmf(&BGWSpec::new(1, offspring_at(&p, t)?)?, 4 * k_max + 64)?;
    let reps = cfg.reps as f64;

    let mut records = Vec::new();
    let mut cdf_counts = vec![0u64; k_max + 1];
    let mut both_singletons = 0u64;
    for (rep, &(s1, s2, same)) in runs.iter().enumerate() {
        for (k, slot) in cdf_counts.iter_mut().enumerate().skip(1) {
            *slot += (s1 <= k) as u64;
        }
        both_singletons += (s1 == 1 && s2 == 1) as u64;
        let mut rec = Record::new();
        rec.insert("rep".into(), rep as f64);
        rec.insert("block_size_1".into(), s1 as f64);
        rec.insert("block_size_2".into(), s2 as f64);
        rec.insert("same_block".into(), same as u8 as f64);
        records.push(rec);
    }

    let mut sup_delta = 0.0f64;
    let mut max_excess = f64::NEG_INFINITY;
    let mut oracle_cdf = 0.0;
    let mut summary = BTreeMap::new();
    for k in 1..=k_max {
        oracle_cdf += oracle.get(k);
        let emp = cdf_counts[k] as f64 / reps;
        let delta = (emp - oracle_cdf).abs();
        sup_delta = sup_delta.max(delta);
        // Explicit coupling constant from the tagged-block comparison.
        let kf = k as f64;
        let bound = kf * t / (2.0 * n as f64)
            * (m2 * m2 * (kf - 1.0 + t) + m2 * (kf + 4.0) + m3 + 1.0);
        let mc = 3.0 * (emp * (1.0 - emp) / reps).sqrt();
        max_excess = max_excess.max(delta - bound - mc);
    }
    summary.insert("sup_cdf_delta".into(), sup_delta);
    summary.insert("max_excess_over_bound".into(), max_excess);

    let p_both = both_singletons as f64 / reps;
    let target_both = oracle.get(1) * oracle.get(1);
    summary.insert("p_both_singletons".into(), p_both);
    summary.insert("p_both_singletons_target".into(), target_both);

    let verdicts = vec![
        Verdict::at_most("cdf_within_explicit_bound", max_excess, 0.0),
        Verdict::near("two_block_product_law", p_both, target_both, 0.01),
    ];
    Ok(ExperimentReport {
        meta: cfg.meta(),
        records,
        summary,
        verdicts,
    })
}

/// Hydrodynamic-limit experiment: empirical block-size densities against the
/// closed-form solution of the coagulation equations, over an n-sweep.
pub fn exp_hydro(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let p = cfg.length_law()?;
    let t = cfg.required_t()?;
    let k_max = cfg.k_max;
    let rho = closed_form_rho(&p, t, k_max)?;
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    ns.dedup();

    let mut records = Vec::new();
    let mut summary = BTreeMap::new();
    let mut l2_means = Vec::new();
    let mut mean_rho_largest = vec![0.0; k_max + 1];
    for (ni, &n) in ns.iter().enumerate() {
        let sub = ExperimentConfig {
            seed: derive_seed(cfg.seed, 1_000_000 + ni as u64),
            ..cfg.clone()
        };
        let runs = run_reps(&sub, |_rep, seed| {
            let opts = SimOptions {
                skip_trivial: true,
                ..Default::default()
            };
            let out = simulate(n, &p, StopRule::Horizon(n as f64 * t), seed, &opts)?;
            let mut dens = vec![0.0f64; k_max + 1];
            for (&size, &count) in out.partition.size_histogram() {
                if size <= k_max {
                    dens[size] = count as f64 / n as f64;
                }
            }
            Ok(dens)
        })?;
        let mut l2_acc = 0.0;
        for (rep, dens) in runs.iter().enumerate() {
            let l2: f64 = (1..=k_max).map(|k| (dens[k] - rho[k]).powi(2)).sum();
            l2_acc += l2;
            let mut rec = Record::new();
            rec.insert("rep".into(), rep as f64);
            rec.insert("n".into(), n as f64);
            rec.insert("l2_error".into(), l2);
            for k in 1..=k_max {
                rec.insert(format!("rho_{k:03}"), dens[k]);
            }
            records.push(rec);
            if ni + 1 == ns.len() {
                for k in 1..=k_max {
                    mean_rho_largest[k] += dens[k] / runs.len() as f64;
                }
            }
        }
        let l2_mean = l2_acc / runs.len() as f64;
        summary.insert(format!("l2_mean_n{n}"), l2_mean);
        l2_means.push(l2_mean);
    }

    let max_abs_err = (1..=k_max)
        .map(|k| (mean_rho_largest[k] - rho[k]).abs())
        .fold(0.0f64, f64::max);
    summary.insert("max_mean_density_error".into(), max_abs_err);

    let mut verdicts = vec![Verdict::at_most(
        "mean_density_near_closed_form",
        max_abs_err,
        0.005,
    )];
    if l2_means.len() >= 2 {
        verdicts.push(Verdict::at_most(
            "l2_decreases_along_n_sweep",
            l2_means.last().unwrap() - l2_means[0],
            0.0,
        ));
    }
    Ok(ExperimentReport {
        meta: cfg.meta(),
        records,
        summary,
        verdicts,
    })
}

/// Phase-transition experiment; the regime is validated against `t m2`.
pub fn exp_phase(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let regime = cfg
        .regime
        .clone()
        .ok_or_else(|| Error::Domain("phase experiment needs --regime".into()))?;
    let p = cfg.length_law()?;
    let n = cfg.n[0];
    let nf = n as f64;
    let m2 = p.factorial_moment(2);

    // Largest and second-largest block at horizon n*t for each rep.
    let run_at = |cfg: &ExperimentConfig, t: f64| -> Result<Vec<(usize, usize)>> {
        run_reps(cfg, |_rep, seed| {
            let opts = SimOptions {
                skip_trivial: true,
                ..Default::default()
            };
            let out = simulate(n, &p, StopRule::Horizon(nf * t), seed, &opts)?;
            Ok((out.partition.largest(), out.partition.second_largest()))
        })
    };
    let base_records = |runs: &[(usize, usize)]| -> Vec<Record> {
        runs.iter()
            .enumerate()
            .map(|(rep, &(b1, b2))| {
                Record::from([
                    ("rep".to_string(), rep as f64),
                    ("largest".to_string(), b1 as f64),
                    ("second_largest".to_string(), b2 as f64),
                ])
            })
            .collect()
    };

    let mut summary = BTreeMap::new();
    let (records, verdicts) = match regime.as_str() {
        "subcritical" => {
            let t = cfg.required_t()?;
            if t * m2 >= 1.0 {
                return Err(Error::Domain(format!(
                    "subcritical regime needs t m2 < 1, got {}",
                    t * m2
                )));
            }
            let h = cramer_rate(&offspring_at(&p, t)?)?;
            let threshold = 2.0 / h * nf.ln();
            let runs = run_at(cfg, t)?;
            let ok = runs.iter().filter(|&&(b1, _)| (b1 as f64) <= threshold).count();
            let frac = ok as f64 / runs.len() as f64;
            summary.insert("cramer_rate".into(), h);
            summary.insert("log_n_threshold".into(), threshold);
            summary.insert("frac_below_threshold".into(), frac);
            (
                base_records(&runs),
                vec![Verdict::at_least(
                    "largest_below_2_over_h_log_n",
                    frac,
                    0.98,
                )],
            )
        }
        "supercritical" => {
            let t = cfg.required_t()?;
            if t * m2 <= 1.0 {
                return Err(Error::Domain(format!(
                    "supercritical regime needs t m2 > 1, got {}",
                    t * m2
                )));
            }
            let q = extinction_prob(&offspring_at(&p, t)?)?;
            let survival = 1.0 - q;
            let b2_cap = 30.0 * nf.ln();
            let runs = run_at(cfg, t)?;
            let ok = runs
                .iter()
                .filter(|&&(b1, b2)| {
                    (b1 as f64 / nf - survival).abs() < 0.02 && (b2 as f64) <= b2_cap
                })
                .count();
            let frac = ok as f64 / runs.len() as f64;
            summary.insert("survival_probability".into(), survival);
            summary.insert("frac_giant_and_small_second".into(), frac);
            (
                base_records(&runs),
                vec![Verdict::at_least(
                    "giant_component_matches_survival",
                    frac,
                    0.98,
                )],
            )
        }
        "critical" => {
            let theta = cfg.theta.unwrap_or(0.0);
            let t_n = (1.0 + theta * nf.powf(-1.0 / 3.0)) / m2;
            let runs = run_at(cfg, t_n)?;
            let ratios: Vec<f64> = runs
                .iter()
                .map(|&(b1, _)| b1 as f64 / nf.powf(2.0 / 3.0))
                .collect();
            let med = median(&ratios);
            summary.insert("t_n".into(), t_n);
            summary.insert("median_b1_over_n23".into(), med);
            let pass = (0.1..=10.0).contains(&med);
            (
                base_records(&runs),
                vec![Verdict {
                    name: "critical_scaling_median".into(),
                    statistic: med,
                    target: 1.0,
                    tolerance: 10.0,
                    pass,
                }],
            )
        }
        "powerlaw" => {
            let alpha = match p.kind() {
                LengthKind::PowerLaw(alpha) => alpha,
                _ => {
                    return Err(Error::Domain(
                        "powerlaw regime needs a power-law length spec".into(),
                    ))
                }
            };
            let t = cfg.t.unwrap_or(0.8 / m2);
            if t * m2 >= 1.0 {
                return Err(Error::Domain(format!(
                    "powerlaw regime runs below criticality, got t m2 = {}",
                    t * m2
                )));
            }
            // Heavy-tail lower bound: blocks of polynomial size already
            // below criticality, with exponent 1/(1 + alpha + 1/2).
            let threshold = nf.powf(1.0 / (1.0 + alpha + 0.5));
            let runs = run_at(cfg, t)?;
            let ok = runs.iter().filter(|&&(b1, _)| b1 as f64 > threshold).count();
            let frac = ok as f64 / runs.len() as f64;
            summary.insert("poly_threshold".into(), threshold);
            summary.insert("frac_above_threshold".into(), frac);
            (
                base_records(&runs),
                vec![Verdict::at_least(
                    "polynomial_block_below_criticality",
                    frac,
                    0.9,
                )],
            )
        }
        other => {
            return Err(Error::Domain(format!(
                "unknown regime `{other}`; use subcritical|supercritical|critical|powerlaw"
            )))
        }
    };

    Ok(ExperimentReport {
        meta: cfg.meta(),
        records,
        summary,
        verdicts,
    })
}

/// Dispatches by `cfg.experiment`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.experiment.as_str() {
        "threshold" => exp_threshold(cfg),
        "blocksize" => exp_blocksize(cfg),
        "hydro" => exp_hydro(cfg),
        "phase" => exp_phase(cfg),
        other => Err(Error::Domain(format!(
            "unknown experiment `{other}`; use threshold|blocksize|hydro|phase"
        ))),
    }
}

//! Event engine for the tuple-draw coalescent: Poisson event times, uniform
//! tuple draws, union-find partition dynamics, and the exact finite-n
//! formulas (merge rates, semigroup, singleton pmf, restriction factor).

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng as _;

use crate::dist::LengthDistribution;
use crate::error::{Error, Result};
use crate::seed::{rng_from, Rng};

// ---------------------------------------------------------------------------
// Partition.
// ---------------------------------------------------------------------------

/// Partition of `{1..n}` backed by a union-find forest (union by size, path
/// compression), with incrementally maintained block statistics.
#[derive(Debug, Clone)]
pub struct Partition {
    parent: Vec<u32>,
    size: Vec<u32>,
    block_count: usize,
    singleton_count: usize,
    /// Multiset of block sizes: size -> number of blocks of that size.
    size_counts: BTreeMap<usize, usize>,
}

impl Partition {
    /// All-singletons partition of `{1..n}`.
    pub fn singletons(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("n = {n} must be at least 2")));
        }
        let mut size_counts = BTreeMap::new();
        size_counts.insert(1, n);
        Ok(Self {
            parent: (0..=n as u32).collect(),
            size: vec![1; n + 1],
            block_count: n,
            singleton_count: n,
            size_counts,
        })
    }

    /// Builds a partition from explicit blocks; unlisted elements stay
    /// singletons.
    pub fn from_blocks(n: usize, blocks: &[&[usize]]) -> Result<Self> {
        let mut part = Self::singletons(n)?;
        for block in blocks {
            if block.len() >= 2 {
                let mut tuple: Vec<u32> = block.iter().map(|&x| x as u32).collect();
                tuple.sort_unstable();
                part.merge_tuple(&tuple);
            }
        }
        Ok(part)
    }

    pub fn n(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn singleton_count(&self) -> usize {
        self.singleton_count
    }

    /// Size of the largest block.
    pub fn largest(&self) -> usize {
        self.size_counts
            .last_key_value()
            .map(|(&s, _)| s)
            .unwrap_or(0)
    }

    /// Size of the second-largest block (0 when only one block exists).
    pub fn second_largest(&self) -> usize {
        let mut it = self.size_counts.iter().rev();
        match it.next() {
            Some((&s, &c)) if c >= 2 => s,
            Some(_) => it.next().map(|(&s, _)| s).unwrap_or(0),
            None => 0,
        }
    }

    /// Root of the block of `x`, with path compression.
    pub fn find(&mut self, x: usize) -> usize {
        debug_assert!(x >= 1 && x < self.parent.len());
        let mut r = x as u32;
        while self.parent[r as usize] != r {
            r = self.parent[r as usize];
        }
        let mut cur = x as u32;
        while self.parent[cur as usize] != r {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = r;
            cur = next;
        }
        r as usize
    }

    /// Root of the block of `x` without mutating the forest.
    pub fn root(&self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] as usize != r {
            r = self.parent[r] as usize;
        }
        r
    }

    /// Returns `(root, block size)` for `x`.
    pub fn block_of(&mut self, x: usize) -> (usize, usize) {
        let r = self.find(x);
        (r, self.size[r] as usize)
    }

    /// Merges every block touched by the tuple; returns the number of
    /// distinct blocks the tuple touched.
    pub fn merge_tuple(&mut self, tuple: &[u32]) -> usize {
        let mut roots: Vec<u32> = Vec::with_capacity(tuple.len());
        for &x in tuple {
            let r = self.find(x as usize) as u32;
            if !roots.contains(&r) {
                roots.push(r);
            }
        }
        if roots.len() < 2 {
            return roots.len();
        }
        // Merge all into the biggest root.
        let (big_idx, _) = roots
            .iter()
            .enumerate()
            .max_by_key(|&(_, &r)| self.size[r as usize])
            .unwrap();
        let big = roots[big_idx];
        let mut total = 0usize;
        for &r in &roots {
            let s = self.size[r as usize] as usize;
            total += s;
            self.remove_size(s);
            if s == 1 {
                self.singleton_count -= 1;
            }
        }
        for &r in &roots {
            if r != big {
                self.parent[r as usize] = big;
            }
        }
        self.size[big as usize] = total as u32;
        self.add_size(total);
        self.block_count -= roots.len() - 1;
        roots.len()
    }

    fn remove_size(&mut self, s: usize) {
        match self.size_counts.get_mut(&s) {
            Some(c) if *c > 1 => *c -= 1,
            Some(_) => {
                self.size_counts.remove(&s);
            }
            None => unreachable!("size multiset out of sync"),
        }
    }

    fn add_size(&mut self, s: usize) {
        *self.size_counts.entry(s).or_insert(0) += 1;
    }

    /// Sizes of all blocks (unordered).
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.block_count);
        for (&s, &c) in &self.size_counts {
            out.extend(std::iter::repeat(s).take(c));
        }
        out
    }

    /// `size -> number of blocks of that size`.
    pub fn size_histogram(&self) -> &BTreeMap<usize, usize> {
        &self.size_counts
    }

    /// True when every block of `self` is contained in a block of `other`.
    pub fn finer_than(&self, other: &Self) -> bool {
        if self.n() != other.n() {
            return false;
        }
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        for x in 1..=self.n() {
            let a = self.root(x);
            let b = other.root(x);
            match map.get(&a) {
                Some(&prev) if prev != b => return false,
                Some(_) => {}
                None => {
                    map.insert(a, b);
                }
            }
        }
        true
    }
}

// ---------------------------------------------------------------------------
// Events and trajectories.
// ---------------------------------------------------------------------------

/// One Poisson event: a tuple drawn at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleEvent {
    pub time: f64,
    pub tuple: Vec<u32>,
}

impl TupleEvent {
    /// A tuple is nontrivial when it contains at least two distinct elements.
    pub fn is_nontrivial(&self) -> bool {
        self.tuple.iter().any(|&x| x != self.tuple[0])
    }
}

/// A realized event stream with its generation metadata.
#[derive(Debug, Clone)]
pub struct TupleEventLog {
    pub n: usize,
    pub horizon: f64,
    pub seed: u64,
    pub events: Vec<TupleEvent>,
}

impl TupleEventLog {
    /// CSV rows `time,length,e1,e2,...` (variable width).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "time,length,elements")?;
        for ev in &self.events {
            write!(w, "{},{}", ev.time, ev.tuple.len())?;
            for &e in &ev.tuple {
                write!(w, ",{e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Events with `time <= t`.
    pub fn up_to(&self, t: f64) -> &[TupleEvent] {
        let end = self.events.partition_point(|ev| ev.time <= t);
        &self.events[..end]
    }
}

/// Partition snapshot taken at a requested checkpoint time.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub time: f64,
    pub block_count: usize,
    pub singleton_count: usize,
    pub largest: usize,
    pub second_largest: usize,
}

/// Per-event observable series and the two hitting times.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryObservables {
    pub times: Vec<f64>,
    pub block_count: Vec<usize>,
    pub singleton_count: Vec<usize>,
    pub largest: Vec<usize>,
    pub second_largest: Vec<usize>,
    /// First time the partition has no singleton.
    pub t_singleton: Option<f64>,
    /// First time the partition is a single block.
    pub t_coal: Option<f64>,
    /// Set when a run-until-coalescence run hit its cap first.
    pub truncated: bool,
    pub checkpoints: Vec<Checkpoint>,
}

impl TrajectoryObservables {
    /// CSV rows `time,block_count,singleton_count,largest,second_largest`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "time,block_count,singleton_count,largest,second_largest")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.times[i],
                self.block_count[i],
                self.singleton_count[i],
                self.largest[i],
                self.second_largest[i]
            )?;
        }
        Ok(())
    }

    fn push(&mut self, t: f64, part: &Partition) {
        self.times.push(t);
        self.block_count.push(part.block_count());
        self.singleton_count.push(part.singleton_count());
        self.largest.push(part.largest());
        self.second_largest.push(part.second_largest());
    }
}

/// When to stop a simulation.
#[derive(Debug, Clone, Copy)]
pub enum StopRule {
    /// Run to a fixed time.
    Horizon(f64),
    /// Run until a single block remains, capped at the given time
    /// (default `10 n log n / m*`).
    UntilCoalescence { cap: Option<f64> },
}

/// Simulation switches.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Thin the event stream to nontrivial tuples (rate `1 - n G_p(1/n)`).
    pub skip_trivial: bool,
    /// Keep the full event list (off for large sweeps).
    pub record_events: bool,
    /// Keep the per-event observable series.
    pub record_series: bool,
    /// Sorted times at which to snapshot the partition.
    pub checkpoints: Vec<f64>,
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: TupleEventLog,
    pub obs: TrajectoryObservables,
    pub partition: Partition,
}

/// Draws one tuple: length from `p`, coordinates iid uniform on `{1..n}`.
pub fn sample_tuple(n: usize, sampler: &crate::dist::DiscreteCdf, rng: &mut Rng) -> Vec<u32> {
    let len = sampler.sample(rng);
    (0..len)
        .map(|_| rng.random_range(1..=n as u32))
        .collect()
}

/// Runs the coalescent from all singletons.
///
/// Events occur at the points of a unit-rate Poisson process; each event
/// draws a tuple and merges every block it touches. With `skip_trivial` the
/// stream is thinned to nontrivial tuples at rate `1 - n G_p(1/n)` by
/// rejection sampling; both paths have the same partition law.
pub fn simulate(
    n: usize,
    p: &LengthDistribution,
    stop: StopRule,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimOutput> {
    let mut part = Partition::singletons(n)?;
    let mut rng = rng_from(seed);
    let sampler = p.sampler();

    let horizon = match stop {
        StopRule::Horizon(h) => {
            if !(h > 0.0) {
                return Err(Error::Domain(format!("horizon {h} must be positive")));
            }
            h
        }
        StopRule::UntilCoalescence { cap } => {
            cap.unwrap_or_else(|| 10.0 * n as f64 * (n as f64).ln() / p.m_star())
        }
    };
    let until_coalescence = matches!(stop, StopRule::UntilCoalescence { .. });

    let rate = if opts.skip_trivial {
        let r = 1.0 - n as f64 * p.pgf(1.0 / n as f64)?;
        if !(r > 0.0) {
            return Err(Error::Domain(
                "nontrivial-event rate is not positive".into(),
            ));
        }
        r
    } else {
        1.0
    };

    let mut obs = TrajectoryObservables::default();
    if opts.record_series {
        obs.push(0.0, &part);
    }
    let mut events = Vec::new();
    let mut cp_iter = opts.checkpoints.iter().copied().peekable();
    let mut t = 0.0f64;

    loop {
        let u: f64 = rng.random();
        let next = t - (1.0 - u).ln() / rate;
        // Flush checkpoints passed before the next event (or the horizon).
        while let Some(&cp) = cp_iter.peek() {
            if cp < next.min(horizon) || (next > horizon && cp <= horizon) {
                obs.checkpoints.push(Checkpoint {
                    time: cp,
                    block_count: part.block_count(),
                    singleton_count: part.singleton_count(),
                    largest: part.largest(),
                    second_largest: part.second_largest(),
                });
                cp_iter.next();
            } else {
                break;
            }
        }
        if next > horizon {
            if until_coalescence && part.block_count() > 1 {
                obs.truncated = true;
            }
            break;
        }
        t = next;
        let tuple = if opts.skip_trivial {
            loop {
                let cand = sample_tuple(n, &sampler, &mut rng);
                if cand.iter().any(|&x| x != cand[0]) {
                    break cand;
                }
            }
        } else {
            sample_tuple(n, &sampler, &mut rng)
        };
        let had_singletons = part.singleton_count() > 0;
        let touched = part.merge_tuple(&tuple);
        if opts.record_events {
            events.push(TupleEvent { time: t, tuple });
        }
        if touched >= 2 {
            if opts.record_series {
                obs.push(t, &part);
            }
            if had_singletons && part.singleton_count() == 0 {
                obs.t_singleton = Some(t);
            }
            if part.block_count() == 1 {
                obs.t_coal = Some(t);
                if until_coalescence {
                    break;
                }
            }
        }
    }
    // Checkpoints at or before the horizon that no event preceded.
    for cp in cp_iter {
        if cp <= horizon {
            obs.checkpoints.push(Checkpoint {
                time: cp,
                block_count: part.block_count(),
                singleton_count: part.singleton_count(),
                largest: part.largest(),
                second_largest: part.second_largest(),
            });
        }
    }

    Ok(SimOutput {
        log: TupleEventLog {
            n,
            horizon,
            seed,
            events,
        },
        obs,
        partition: part,
    })
}

// ---------------------------------------------------------------------------
// Exact finite-n formulas.
// ---------------------------------------------------------------------------

/// Rate of the transition merging exactly the blocks with the given sizes,
/// by inclusion-exclusion: `Σ_{H ⊆ J} (-1)^{|H|} G_p(|B_{J∖H}|/n)`.
pub fn merge_rate(block_sizes: &[usize], n: usize, p: &LengthDistribution) -> Result<f64> {
    let j = block_sizes.len();
    if j < 2 {
        return Err(Error::Domain(format!(
            "merge rate needs at least 2 blocks, got {j}"
        )));
    }
    if j > 30 {
        return Err(Error::Domain("too many blocks for subset enumeration".into()));
    }
    let total: usize = block_sizes.iter().sum();
    if total > n {
        return Err(Error::Domain("block sizes exceed n".into()));
    }
    let mut rate = 0.0;
    for mask in 0u32..(1 << j) {
        // mask selects H, the blocks excluded from the union.
        let mut kept = 0usize;
        for (i, &b) in block_sizes.iter().enumerate() {
            if mask & (1 << i) == 0 {
                kept += b;
            }
        }
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        rate += sign * p.pgf(kept as f64 / n as f64)?;
    }
    Ok(rate.max(0.0))
}

/// Semigroup probability that the partition at time `t`, started from `pi0`,
/// is finer than `pi`: `exp(-t (1 - Σ_i G_p(|B_i|/n))) 1{pi0 finer pi}`
/// where the `B_i` are the blocks of `pi`.
pub fn finer_than_prob(
    pi0: &Partition,
    pi: &Partition,
    p: &LengthDistribution,
    t: f64,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("time {t} must be nonnegative")));
    }
    if !pi0.finer_than(pi) {
        return Ok(0.0);
    }
    let n = pi.n() as f64;
    let mut sum = 0.0;
    for (&s, &c) in pi.size_histogram() {
        sum += c as f64 * p.pgf(s as f64 / n)?;
    }
    Ok((-t * (1.0 - sum)).exp())
}

const SINGLETON_PMF_MAX_N: usize = 60;

/// Exact pmf of the singleton count at time `t`, as a vector over
/// `k = 0..=n`, by the alternating inclusion-exclusion sum. Limited to
/// `n <= 60`; beyond that the sum loses precision and Monte Carlo should be
/// used instead.
pub fn singleton_count_pmf(n: usize, p: &LengthDistribution, t: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Domain(format!("n = {n} must be at least 2")));
    }
    if n > SINGLETON_PMF_MAX_N {
        return Err(Error::Unstable(format!(
            "singleton pmf is limited to n <= {SINGLETON_PMF_MAX_N} in double \
             precision; use Monte Carlo simulation instead"
        )));
    }
    if t < 0.0 {
        return Err(Error::Domain(format!("time {t} must be nonnegative")));
    }
    let nf = n as f64;
    // ln k! table.
    let mut lnfact = vec![0.0f64; n + 1];
    for k in 1..=n {
        lnfact[k] = lnfact[k - 1] + (k as f64).ln();
    }
    let g_single = p.pgf(1.0 / nf)?;
    let mut pmf = vec![0.0f64; n + 1];
    for (k, slot) in pmf.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..=(n - k) {
            let kj = k + j;
            let ln_multinom = lnfact[n] - lnfact[k] - lnfact[j] - lnfact[n - kj];
            let exponent =
                -t * (1.0 - p.pgf(1.0 - kj as f64 / nf)? - kj as f64 * g_single);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (ln_multinom + exponent).exp();
        }
        *slot = acc.max(0.0);
    }
    Ok(pmf)
}

/// Restriction factor
/// `H_p(t,n,m,k) = (Π_{i=1}^{k-1} (m-i)/(n-i)) ·
///  exp(t (1 - G_p(1-k/n) - G_p(m/n) + G_p((m-k)/n)))`,
/// zero when `k >= m+1`. Its expectation over `k = |Π^{(x)}(t)|` equals 1.
pub fn restriction_factor(
    p: &LengthDistribution,
    t: f64,
    n: usize,
    m: usize,
    k: usize,
) -> Result<f64> {
    if !(1..=n).contains(&k) || !(1..=n).contains(&m) {
        return Err(Error::Domain(format!(
            "need 1 <= k={k} <= n and 1 <= m={m} <= n={n}"
        )));
    }
    if k > m {
        return Ok(0.0);
    }
    let nf = n as f64;
    let mut prefactor = 1.0;
    for i in 1..k {
        prefactor *= (m - i) as f64 / (n - i) as f64;
    }
    let exponent = t
        * (1.0 - p.pgf(1.0 - k as f64 / nf)? - p.pgf(m as f64 / nf)?
            + p.pgf((m - k) as f64 / nf)?);
    Ok(prefactor * exponent.exp())
}

//! Breadth-first exploration of one block of the coalescent, producing the
//! per-step walk ξ and the dominating counts (ζ⁽¹⁾, ζ⁽²⁾) that couple the
//! block size to a branching-process total progeny.

use std::collections::BTreeSet;
use std::io::Write;

use crate::coalescent::TupleEvent;
use crate::error::{Error, Result};

/// Full record of one exploration run.
#[derive(Debug, Clone, Default)]
pub struct ExplorationTrace {
    /// Explored elements `x_1..x_T` in exploration order.
    pub explored: Vec<u32>,
    /// New active elements discovered at each step.
    pub xi: Vec<usize>,
    /// `Σ (ℓ(w)-1)` over nontrivial tuples containing `x_k` that avoid the
    /// previously explored set.
    pub zeta1: Vec<usize>,
    /// Same sum over nontrivial tuples containing `x_k` that meet the
    /// previously explored set.
    pub zeta2: Vec<usize>,
    /// `|A_k|` after each step.
    pub active_size: Vec<usize>,
}

impl ExplorationTrace {
    /// Number of steps, which equals the block size.
    pub fn block_size(&self) -> usize {
        self.explored.len()
    }

    /// The explored block, sorted.
    pub fn block(&self) -> Vec<u32> {
        let mut b = self.explored.clone();
        b.sort_unstable();
        b
    }

    /// CSV rows `step,x_k,xi,zeta1,zeta2,active_size`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "step,x_k,xi,zeta1,zeta2,active_size")?;
        for k in 0..self.explored.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                k + 1,
                self.explored[k],
                self.xi[k],
                self.zeta1[k],
                self.zeta2[k],
                self.active_size[k]
            )?;
        }
        Ok(())
    }
}

/// Per-element index of nontrivial tuples, built once per event set.
struct TupleIndex {
    tuples: Vec<Vec<u32>>,
    /// element -> indices of nontrivial tuples containing it (deduplicated).
    by_element: Vec<Vec<u32>>,
}

impl TupleIndex {
    fn build(n: usize, events: &[TupleEvent]) -> Self {
        let mut tuples = Vec::new();
        let mut by_element = vec![Vec::new(); n + 1];
        for ev in events {
            if !ev.is_nontrivial() {
                continue;
            }
            let id = tuples.len() as u32;
            for &x in &ev.tuple {
                let list = &mut by_element[x as usize];
                if list.last() != Some(&id) {
                    list.push(id);
                }
            }
            tuples.push(ev.tuple.clone());
        }
        Self { tuples, by_element }
    }
}

/// Explores the block of `x` given the tuples drawn up to the time of
/// interest (pass `log.up_to(t)`).
///
/// Steps pick the smallest active element; a tuple extends the neighbourhood
/// of `x_k` only if it lies entirely outside the explored set. An element
/// occurring twice in one tuple is counted once for ξ (set semantics) but the
/// tuple still contributes its full `ℓ(w)-1` to ζ (count semantics).
pub fn explore_block(x: usize, n: usize, events: &[TupleEvent]) -> Result<ExplorationTrace> {
    if !(1..=n).contains(&x) {
        return Err(Error::Domain(format!("element {x} outside 1..={n}")));
    }
    let index = TupleIndex::build(n, events);
    let mut trace = ExplorationTrace::default();
    let mut explored = vec![false; n + 1];
    let mut active_flag = vec![false; n + 1];
    let mut active: BTreeSet<u32> = BTreeSet::new();
    active.insert(x as u32);
    active_flag[x] = true;

    while let Some(&xk) = active.iter().next() {
        active.remove(&xk);
        active_flag[xk as usize] = false;
        let mut xi = 0usize;
        let mut zeta1 = 0usize;
        let mut zeta2 = 0usize;
        for &tid in &index.by_element[xk as usize] {
            let tuple = &index.tuples[tid as usize];
            if tuple.iter().any(|&y| explored[y as usize]) {
                zeta2 += tuple.len() - 1;
                continue;
            }
            zeta1 += tuple.len() - 1;
            for &y in tuple {
                if y != xk && !active_flag[y as usize] {
                    active_flag[y as usize] = true;
                    active.insert(y);
                    xi += 1;
                }
            }
        }
        explored[xk as usize] = true;
        trace.explored.push(xk);
        trace.xi.push(xi);
        trace.zeta1.push(zeta1);
        trace.zeta2.push(zeta2);
        trace.active_size.push(active.len());
    }
    Ok(trace)
}

/// The dominating-walk increments `(ζ⁽¹⁾_k, ζ⁽²⁾_k)` along the exploration
/// of the block of `x`.
pub fn dominating_walk(x: usize, n: usize, events: &[TupleEvent]) -> Result<Vec<(usize, usize)>> {
    let trace = explore_block(x, n, events)?;
    Ok(trace.zeta1.into_iter().zip(trace.zeta2).collect())
}

/// `|𝒩_x|`: the number of elements, other than `x`, sharing a tuple with `x`
/// among the tuples that avoid the forbidden set entirely.
pub fn neighbour_count(
    x: usize,
    n: usize,
    forbidden: &[usize],
    events: &[TupleEvent],
) -> Result<usize> {
    if !(1..=n).contains(&x) {
        return Err(Error::Domain(format!("element {x} outside 1..={n}")));
    }
    if forbidden.contains(&x) {
        return Err(Error::Domain("x must not be forbidden".into()));
    }
    let mut banned = vec![false; n + 1];
    for &f in forbidden {
        banned[f] = true;
    }
    let mut seen = vec![false; n + 1];
    let mut count = 0usize;
    for ev in events {
        if !ev.tuple.contains(&(x as u32)) {
            continue;
        }
        if ev.tuple.iter().any(|&y| banned[y as usize]) {
            continue;
        }
        for &y in &ev.tuple {
            if y as usize != x && !seen[y as usize] {
                seen[y as usize] = true;
                count += 1;
            }
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalescent::{simulate, SimOptions, StopRule, TupleEvent};
    use crate::dist::{CompoundPoissonSpec, LengthDistribution, PmfVector};
    use crate::seed::derive_seed;

    fn worked_example() -> Vec<TupleEvent> {
        let tuples: Vec<Vec<u32>> = vec![
            vec![1, 2, 3, 4],
            vec![2, 5, 2, 3],
            vec![3, 6, 4],
            vec![6, 7],
            vec![8, 10],
        ];
        tuples
            .into_iter()
            .enumerate()
            .map(|(i, tuple)| TupleEvent {
                time: i as f64 + 1.0,
                tuple,
            })
            .collect()
    }

    #[test]
    fn worked_example_trace() {
        let events = worked_example();
        let trace = explore_block(1, 10, &events).unwrap();
        assert_eq!(trace.block_size(), 7);
        assert_eq!(trace.block(), vec![1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(trace.xi, vec![3, 1, 1, 0, 0, 1, 0]);
        assert_eq!(trace.explored, vec![1, 2, 3, 4, 5, 6, 7]);
        let walk = dominating_walk(1, 10, &events).unwrap();
        assert_eq!(walk[0], (3, 0));
        assert_eq!(walk[1], (3, 3));
        assert_eq!(walk[2], (2, 6));
    }

    #[test]
    fn isolated_element() {
        let events = worked_example();
        let trace = explore_block(9, 10, &events).unwrap();
        assert_eq!(trace.block_size(), 1);
        assert_eq!(trace.block(), vec![9]);
        assert_eq!(trace.xi, vec![0]);
        let trace = explore_block(4, 10, &[]).unwrap();
        assert_eq!(trace.block_size(), 1);
    }

    #[test]
    fn neighbour_count_examples() {
        let events = worked_example();
        assert_eq!(neighbour_count(1, 10, &[], &events).unwrap(), 3);
        assert_eq!(neighbour_count(1, 10, &[], &[]).unwrap(), 0);
        // Forbidding 4 removes the whole first tuple.
        assert_eq!(neighbour_count(1, 10, &[4], &events).unwrap(), 0);
        assert_eq!(neighbour_count(2, 10, &[1], &events).unwrap(), 2);
        assert!(neighbour_count(1, 10, &[1], &events).is_err());
    }

    #[test]
    fn trace_invariants_and_cross_oracle() {
        // Block equals the union-find block; walk identities hold.
        let n = 50;
        let p = LengthDistribution::dirac(3).unwrap();
        for rep in 0..10_000u64 {
            let mut out = simulate(
                n,
                &p,
                StopRule::Horizon(10.0),
                derive_seed(42, rep),
                &SimOptions {
                    record_events: true,
                    ..Default::default()
                },
            )
            .unwrap();
            let x = (rep % n as u64) as usize + 1;
            let trace = explore_block(x, n, &out.log.events).unwrap();
            let (root, size) = out.partition.block_of(x);
            assert_eq!(trace.block_size(), size, "rep {rep} x {x}");
            for &y in &trace.block() {
                assert_eq!(out.partition.block_of(y as usize).0, root);
            }
            // ξ_k ≤ ζ1_k + ζ2_k; |A_k| recursion; hitting-time identity.
            let t = trace.block_size();
            let mut sum = 0usize;
            let mut prev_active = 1usize;
            for k in 0..t {
                assert!(trace.xi[k] <= trace.zeta1[k] + trace.zeta2[k]);
                assert_eq!(trace.active_size[k], prev_active + trace.xi[k] - 1);
                prev_active = trace.active_size[k];
                sum += trace.xi[k];
                let stopped = sum <= k;
                assert_eq!(stopped, k + 1 == t, "rep {rep} step {k}");
            }
            assert!(t <= n);
        }
    }

    #[test]
    fn first_step_zeta_is_compound_poisson() {
        // ζ1_1 + ζ2_1 at time nt follows CPois(nt β_n, ν_n) with
        // β_n = 1 - G_p(1-1/n) - G_p(1/n),
        // ν_n(j) ∝ p(j+1) (1 - (1-1/n)^{j+1} - (1/n)^{j+1}).
        let n = 100usize;
        let p = LengthDistribution::dirac(2).unwrap();
        let t = 0.4;
        let nf = n as f64;
        let beta = 1.0 - p.pgf(1.0 - 1.0 / nf).unwrap() - p.pgf(1.0 / nf).unwrap();
        let mut nu = vec![0.0; p.support_max()];
        for (j, slot) in nu.iter_mut().enumerate().skip(1) {
            let l = (j + 1) as f64;
            *slot = p.p(j + 1)
                * (1.0 - (1.0 - 1.0 / nf).powf(l) - (1.0 / nf).powf(l))
                / beta;
        }
        let spec =
            CompoundPoissonSpec::new(nf * t * beta, PmfVector::new(nu).unwrap()).unwrap();
        let exact = spec.pmf(200);

        let reps = 100_000u64;
        let mut hist = vec![0u32; 201];
        for rep in 0..reps {
            let out = simulate(
                n,
                &p,
                StopRule::Horizon(nf * t),
                derive_seed(7, rep),
                &SimOptions {
                    record_events: true,
                    ..Default::default()
                },
            )
            .unwrap();
            let mut z = 0usize;
            for ev in &out.log.events {
                if ev.is_nontrivial() && ev.tuple.contains(&1) {
                    z += ev.tuple.len() - 1;
                }
            }
            hist[z.min(200)] += 1;
        }
        let tv: f64 = 0.5
            * (0..=200)
                .map(|k| (hist[k] as f64 / reps as f64 - exact.get(k)).abs())
                .sum::<f64>();
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn neighbour_law_approaches_compound_poisson() {
        // |𝒩_1(nt, complement of V)| is close to CPois(t m*, p̃) in total
        // variation, within the explicit bound
        // 2 t m2 (|V|/n + 1/(2n)) + (t/2n)(1 + m2 + m3 + t m2²)
        // plus Monte Carlo noise.
        let n = 2000usize;
        let p = LengthDistribution::dirac(2).unwrap();
        let t = 0.4;
        let forbidden: Vec<usize> = (n - 9..=n).collect();
        let v = forbidden.len() as f64;
        let (m2, m3) = (p.factorial_moment(2), p.factorial_moment(3));
        let bound = 2.0 * t * m2 * (v / n as f64 + 0.5 / n as f64)
            + t / (2.0 * n as f64) * (1.0 + m2 + m3 + t * m2 * m2);

        let spec = CompoundPoissonSpec::new(t * p.m_star(), p.size_biased().unwrap()).unwrap();
        let exact = spec.pmf(60);

        let reps = 40_000u64;
        let mut hist = vec![0u32; 61];
        for rep in 0..reps {
            let out = simulate(
                n,
                &p,
                StopRule::Horizon(n as f64 * t),
                derive_seed(99, rep),
                &SimOptions {
                    record_events: true,
                    ..Default::default()
                },
            )
            .unwrap();
            let c = neighbour_count(1, n, &forbidden, &out.log.events).unwrap();
            hist[c.min(60)] += 1;
        }
        let mut tv = 0.0;
        let mut noise = 0.0;
        for k in 0..=60 {
            let q = exact.get(k);
            tv += (hist[k] as f64 / reps as f64 - q).abs();
            noise += (q * (1.0 - q) / reps as f64).sqrt();
        }
        tv *= 0.5;
        assert!(tv < bound + 1.5 * noise, "tv {tv}, bound {bound}, noise {noise}");
    }

    #[test]
    fn trace_csv_export() {
        let events = worked_example();
        let trace = explore_block(1, 10, &events).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,x_k,xi,zeta1,zeta2,active_size\n"));
        assert_eq!(text.lines().count(), 8);
        assert!(text.contains("\n1,1,3,3,0,3\n"));
    }
}

//! Experiment report model and serialization.
//!
//! JSON layout: `{meta, records[], summary, verdicts[]}`. CSV is the
//! flattened records table with the meta echoed in `#` comment lines.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

/// One replication's numeric outputs, keyed by column name.
pub type Record = BTreeMap<String, f64>;

/// Run provenance embedded in every output.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

/// A pass/fail gate with its raw statistic and tolerance beside it.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub statistic: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    /// `|statistic - target| <= tolerance`.
    pub fn near(name: &str, statistic: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            target,
            tolerance,
            pass: (statistic - target).abs() <= tolerance,
        }
    }

    /// `statistic <= bound`; `target` records the bound.
    pub fn at_most(name: &str, statistic: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            target: bound,
            tolerance: 0.0,
            pass: statistic <= bound,
        }
    }

    /// `statistic >= bound`; `target` records the bound.
    pub fn at_least(name: &str, statistic: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            target: bound,
            tolerance: 0.0,
            pass: statistic >= bound,
        }
    }
}

/// Full experiment output: per-replication records, aggregate summary and
/// the pass/fail verdicts, all auditable from the recorded numbers.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub meta: Meta,
    pub records: Vec<Record>,
    pub summary: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn write_json<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut *w, self)?;
        writeln!(w)
    }

    /// Flattened records table; meta, summary and verdicts ride along as
    /// `#` comment lines so a single file stays auditable.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "# version={} experiment={} seed={}",
            self.meta.version, self.meta.experiment, self.meta.seed
        )?;
        writeln!(w, "# config={}", self.meta.config)?;
        for (k, v) in &self.summary {
            writeln!(w, "# summary {k}={v}")?;
        }
        for v in &self.verdicts {
            writeln!(
                w,
                "# verdict {} statistic={} target={} tolerance={} pass={}",
                v.name, v.statistic, v.target, v.tolerance, v.pass
            )?;
        }
        let mut columns: Vec<String> = Vec::new();
        for rec in &self.records {
            for k in rec.keys() {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
        columns.sort();
        writeln!(w, "{}", columns.join(","))?;
        for rec in &self.records {
            let row: Vec<String> = columns
                .iter()
                .map(|c| rec.get(c).map(|v| v.to_string()).unwrap_or_default())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

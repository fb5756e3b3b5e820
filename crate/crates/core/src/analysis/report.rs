//! Splitting extraction and the report formats.
//!
//! Text report columns (one record per line after the `#` header):
//! `n,kind,pair,measured_mhz,theory_mhz,percent_bias,sigma_mhz`, where `kind`
//! is `hyperfine` or `fine_structure`. Overlap flags follow as
//! `# overlap n=<n> position_mhz=<x> pathways=<a>|<b>` lines.
//!
//! JSON summary fields: `records[]` with `n`, `kind`, `pair`,
//! `measured_mhz`, `theory_mhz`, `percent_bias`, `sigma_mhz`; `overlaps[]`
//! with `n`, `position_mhz`, `pathways`; `failures[]` with `n`, `error`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::analysis::assign::Assignment;
use crate::analysis::fit::PeakFit;
use crate::atomdata::{AtomData, FPrime, Series};
use crate::error::{Error, Result};
use crate::ladder::LadderSystem;
use crate::velocitymap::PathwaySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Hyperfine,
    FineStructure,
}

impl IntervalKind {
    pub fn label(self) -> &'static str {
        match self {
            IntervalKind::Hyperfine => "hyperfine",
            IntervalKind::FineStructure => "fine_structure",
        }
    }
}

impl fmt::Display for IntervalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingRecord {
    pub n: u32,
    pub kind: IntervalKind,
    /// e.g. `F'5-F'4@S1/2` or `D5/2-D3/2@F'5`.
    pub pair: String,
    pub measured_mhz: f64,
    pub theory_mhz: f64,
    pub percent_bias: f64,
    pub sigma_mhz: f64,
}

impl SplittingRecord {
    pub fn new(n: u32, kind: IntervalKind, pair: String, measured_mhz: f64, theory_mhz: f64, sigma_mhz: f64) -> Self {
        Self {
            n,
            kind,
            pair,
            measured_mhz,
            theory_mhz,
            percent_bias: percent_bias(measured_mhz, theory_mhz),
            sigma_mhz,
        }
    }
}

pub fn percent_bias(measured: f64, theory: f64) -> f64 {
    100.0 * (measured - theory) / theory
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapFlag {
    pub n: u32,
    pub position_mhz: f64,
    pub pathways: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub n: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplittingReport {
    pub records: Vec<SplittingRecord>,
    pub overlaps: Vec<OverlapFlag>,
    pub failures: Vec<RunFailure>,
}

const TEXT_HEADER: &str = "n,kind,pair,measured_mhz,theory_mhz,percent_bias,sigma_mhz";

impl SplittingReport {
    /// Concatenates reports, ordering everything by n.
    pub fn merge(reports: impl IntoIterator<Item = SplittingReport>) -> Self {
        let mut out = Self::default();
        for r in reports {
            out.records.extend(r.records);
            out.overlaps.extend(r.overlaps);
            out.failures.extend(r.failures);
        }
        out.records
            .sort_by(|a, b| a.n.cmp(&b.n).then(a.kind.cmp(&b.kind)).then(a.pair.cmp(&b.pair)));
        out.overlaps
            .sort_by(|a, b| a.n.cmp(&b.n).then(a.position_mhz.total_cmp(&b.position_mhz)));
        out.failures.sort_by_key(|f| f.n);
        out
    }

    pub fn find(&self, n: u32, kind: IntervalKind, pair: &str) -> Option<&SplittingRecord> {
        self.records
            .iter()
            .find(|r| r.n == n && r.kind == kind && r.pair == pair)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# splitting report\n");
        out.push_str(&format!("# {TEXT_HEADER}\n"));
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n, r.kind, r.pair, r.measured_mhz, r.theory_mhz, r.percent_bias, r.sigma_mhz
            );
        }
        for o in &self.overlaps {
            let _ = writeln!(
                out,
                "# overlap n={} position_mhz={} pathways={}",
                o.n,
                o.position_mhz,
                o.pathways.join("|")
            );
        }
        for f in &self.failures {
            let _ = writeln!(out, "# failure n={} error={}", f.n, f.error);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Blocks of `n value` rows separated by two blank lines, one block per
    /// (interval, measured|theory) series, ready for line plotting.
    pub fn plot_data(&self) -> String {
        let mut series: BTreeMap<(IntervalKind, String), Vec<&SplittingRecord>> = BTreeMap::new();
        for r in &self.records {
            series.entry((r.kind, r.pair.clone())).or_default().push(r);
        }
        let mut out = String::new();
        for ((kind, pair), rows) in &series {
            for which in ["measured", "theory"] {
                if !out.is_empty() {
                    out.push_str("\n\n");
                }
                let _ = writeln!(out, "# series={kind}:{pair}:{which}");
                out.push_str("# n,interval_mhz\n");
                for r in rows {
                    let v = if which == "measured" {
                        r.measured_mhz
                    } else {
                        r.theory_mhz
                    };
                    let _ = writeln!(out, "{},{}", r.n, v);
                }
            }
        }
        out
    }
}

/// Converts assigned peak fits into interval records.
///
/// Hyperfine intervals come from adjacent-F' pairs within one Rydberg
/// component and are divided by `|1 − λp/λc|`; fine-structure intervals come
/// from the D5/2/D3/2 pair sharing one F' and are taken as-is. Pathways whose
/// peak was merged with another are skipped and reported as overlaps.
pub fn extract_splittings(
    fits: &[PeakFit],
    assignment: &Assignment,
    pathways: &PathwaySet,
    atom: &AtomData,
    sys: &LadderSystem,
) -> Result<SplittingReport> {
    if assignment.peak_of_pathway.len() != pathways.len() {
        return Err(Error::domain("assignment does not match the pathway set"));
    }
    let scale = sys.mismatch_factor().abs();
    let find = |f: FPrime, s: Series| -> Option<&PeakFit> {
        let i = pathways.iter().position(|p| p.f_prime == f && p.series == s)?;
        if assignment.is_merged(i) {
            return None;
        }
        assignment.peak_of_pathway[i].map(|k| &fits[k])
    };
    let n = pathways.0[0].n;
    let mut report = SplittingReport::default();

    let series: Vec<Series> = {
        let mut s: Vec<Series> = pathways.iter().map(|p| p.series).collect();
        s.sort();
        s.dedup();
        s
    };
    for &s in &series {
        for (upper, lower) in [(FPrime::F5, FPrime::F4), (FPrime::F4, FPrime::F3)] {
            if let (Some(a), Some(b)) = (find(upper, s), find(lower, s)) {
                let measured = (a.center - b.center).abs() / scale;
                let theory = atom.hyperfine.offset(upper) - atom.hyperfine.offset(lower);
                let sigma = (a.covariance_diag[0] + b.covariance_diag[0]).sqrt() / scale;
                report.records.push(SplittingRecord::new(
                    n,
                    IntervalKind::Hyperfine,
                    format!("F'{}-F'{}@{}", upper, lower, s),
                    measured,
                    theory,
                    sigma,
                ));
            }
        }
    }
    if series.contains(&Series::D32) && series.contains(&Series::D52) {
        let theory = atom.fine_structure_splitting(n)?;
        for f in [FPrime::F5, FPrime::F4, FPrime::F3] {
            if let (Some(a), Some(b)) = (find(f, Series::D52), find(f, Series::D32)) {
                let sigma = (a.covariance_diag[0] + b.covariance_diag[0]).sqrt();
                report.records.push(SplittingRecord::new(
                    n,
                    IntervalKind::FineStructure,
                    format!("D5/2-D3/2@F'{f}"),
                    a.center - b.center,
                    theory,
                    sigma,
                ));
            }
        }
    }
    for group in &assignment.merged {
        let members: Vec<_> = group.iter().map(|&i| &pathways.0[i]).collect();
        let k = assignment.peak_of_pathway[group[0]].expect("merged pathways are assigned");
        report.overlaps.push(OverlapFlag {
            n,
            position_mhz: fits[k].center + assignment.offset,
            pathways: crate::analysis::assign::describe(&members),
        });
    }
    Ok(report)
}

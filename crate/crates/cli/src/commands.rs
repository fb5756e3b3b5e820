//! The four verbs. Each renders all of its outputs in memory and returns them
//! as artifacts; nothing touches the disk until the whole computation has
//! succeeded.

use std::path::Path;

use rayon::prelude::*;
use rydberg_eit::analysis::{analyze_trace, RunFailure, SplittingReport};
use rydberg_eit::spectrum::{add_noise, apply_sidebands, distort_axis, grid_around, linear_grid, synthesize_trace};
use rydberg_eit::velocitymap::overlap_principal_quantum_number;
use rydberg_eit::{Error, PathwaySet, Result, Series, SpectrumTrace};
use serde::Serialize;

use crate::config::{GridSpec, RunConfig};
use crate::output::Artifact;
use crate::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.txt";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const PLOT_DATA: &str = "plot_data.txt";

pub fn trace_name(n: u32) -> String {
    format!("trace_n{n}.txt")
}

pub fn pathway_table_name(n: u32) -> String {
    format!("pathways_n{n}.csv")
}

pub fn predict_peaks(cfg: &RunConfig) -> std::result::Result<Vec<Artifact>, CliError> {
    let set = pathways(cfg, cfg.n, &cfg.series).map_err(CliError::from_core)?;
    Ok(vec![
        Artifact::new(
            pathway_table_name(cfg.n),
            format!("{}{}", digest_line(cfg), set.to_table()),
        ),
        resolved(cfg),
    ])
}

pub fn simulate(cfg: &RunConfig) -> std::result::Result<Vec<Artifact>, CliError> {
    let (_, trace) = synthesize(cfg, cfg.n).map_err(CliError::from_core)?;
    Ok(vec![Artifact::new(trace_name(cfg.n), trace.to_text()), resolved(cfg)])
}

/// Analyses each trace file against the pathways its metadata names (`n`,
/// `series`), falling back to the configured values.
pub fn analyze(cfg: &RunConfig, files: &[impl AsRef<Path>]) -> std::result::Result<Vec<Artifact>, CliError> {
    let mut reports = Vec::with_capacity(files.len());
    for file in files {
        let path = file.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let trace = SpectrumTrace::parse(&text).map_err(|e| CliError::in_file(path, e))?;
        reports.push(analyze_one(cfg, &trace).map_err(|e| CliError::in_file(path, e))?);
    }
    let report = SplittingReport::merge(reports);
    Ok(report_artifacts(cfg, &report, None))
}

/// Outputs of a sweep and how many n values failed.
pub struct SweepOutcome {
    pub artifacts: Vec<Artifact>,
    pub failed: usize,
    pub total: usize,
}

/// Simulates and analyses every n of the configured range in parallel. A
/// failing n is recorded in the report and the batch continues.
pub fn sweep_n(cfg: &RunConfig) -> SweepOutcome {
    let ns = cfg.sweep_values();
    let runs: Vec<(u32, Result<(SpectrumTrace, SplittingReport)>)> = ns
        .par_iter()
        .map(|&n| {
            let run = synthesize(cfg, n).and_then(|(_, trace)| {
                let report = analyze_one(cfg, &trace)?;
                Ok((trace, report))
            });
            (n, run)
        })
        .collect();

    let mut artifacts = Vec::new();
    let mut reports = Vec::new();
    let mut failed = 0;
    for (n, run) in runs {
        match run {
            Ok((trace, report)) => {
                artifacts.push(Artifact::new(trace_name(n), trace.to_text()));
                reports.push(report);
            }
            Err(e) => {
                failed += 1;
                reports.push(SplittingReport {
                    failures: vec![RunFailure {
                        n,
                        error: e.to_string(),
                    }],
                    ..Default::default()
                });
            }
        }
    }
    let report = SplittingReport::merge(reports);
    let overlap = overlap_principal_quantum_number(&cfg.atom, cfg.atom.hyperfine.span(), &cfg.system);
    artifacts.extend(report_artifacts(cfg, &report, Some(overlap)));
    SweepOutcome {
        artifacts,
        failed,
        total: ns.len(),
    }
}

pub fn pathways(cfg: &RunConfig, n: u32, series: &[Series]) -> Result<PathwaySet> {
    PathwaySet::predict(
        &cfg.atom,
        n,
        series,
        &cfg.f_primes,
        &cfg.strengths,
        &cfg.system,
        &cfg.ensemble,
    )
}

/// Pathways → Doppler-averaged spectrum → sidebands → distortion → noise.
pub fn synthesize(cfg: &RunConfig, n: u32) -> Result<(PathwaySet, SpectrumTrace)> {
    let set = pathways(cfg, n, &cfg.series)?;
    let grid = match cfg.grid {
        GridSpec::Auto { margin, step } => grid_around(&set, margin, step)?,
        GridSpec::Linear { start, stop, points } => linear_grid(start, stop, points)?,
    };
    let mut trace = synthesize_trace(
        &grid,
        &set,
        &cfg.system,
        &cfg.ensemble,
        &cfg.quadrature,
        cfg.cell_length_mm,
    )?;
    if let Some(sb) = &cfg.sidebands {
        trace = apply_sidebands(&trace, sb)?;
    }
    if !cfg.distortion.is_identity() {
        trace = distort_axis(&trace, &cfg.distortion)?;
    }
    if cfg.noise_sigma > 0.0 {
        trace = add_noise(&trace, cfg.noise_sigma, noise_seed(cfg.seed, n))?;
    }
    Ok((set, trace.with_metadata("config_sha256", cfg.digest())))
}

/// Each n of a sweep draws an independent, reproducible noise stream.
fn noise_seed(seed: u64, n: u32) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(n as u64)
}

fn analyze_one(cfg: &RunConfig, trace: &SpectrumTrace) -> Result<SplittingReport> {
    let n = match trace.metadata.get("n") {
        Some(v) => v.parse().map_err(|_| Error::Config {
            key: "n".into(),
            message: format!("trace metadata `n = {v}` must be a single principal quantum number"),
        })?,
        None => cfg.n,
    };
    let series = match trace.metadata.get("series") {
        Some(v) => v.split_whitespace().map(str::parse).collect::<Result<Vec<Series>>>()?,
        None => cfg.series.clone(),
    };
    let set = pathways(cfg, n, &series)?;
    let mut opts = cfg.analysis;
    if let Some(rf) = trace_rf(trace)? {
        opts.rf_frequency = Some(rf);
    }
    Ok(analyze_trace(trace, &set, &cfg.atom, &cfg.system, &opts)?.report)
}

/// RF frequency recorded by the sideband stage, if the trace carries sidebands.
fn trace_rf(trace: &SpectrumTrace) -> Result<Option<f64>> {
    let Some(desc) = trace.metadata.get("sideband") else {
        return Ok(None);
    };
    if desc == "none" {
        return Ok(None);
    }
    desc.split_whitespace()
        .find_map(|kv| kv.strip_prefix("rf_mhz="))
        .map(|v| v.parse().map(Some))
        .unwrap_or(Ok(None))
        .map_err(|_| Error::Config {
            key: "sideband".into(),
            message: format!("unreadable trace metadata `{desc}`"),
        })
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    config_sha256: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_overlap_n: Option<Option<u32>>,
    #[serde(flatten)]
    report: &'a SplittingReport,
}

fn report_artifacts(cfg: &RunConfig, report: &SplittingReport, overlap: Option<Option<u32>>) -> Vec<Artifact> {
    let mut text = digest_line(cfg);
    if let Some(o) = overlap {
        let shown = o.map_or("none".to_string(), |n| n.to_string());
        text.push_str(&format!("# predicted_overlap_n={shown}\n"));
    }
    text.push_str(&report.to_text());
    let doc = ReportDocument {
        config_sha256: cfg.digest(),
        predicted_overlap_n: overlap,
        report,
    };
    let mut json = serde_json::to_string_pretty(&doc).expect("report serialises");
    json.push('\n');
    vec![
        Artifact::new(REPORT_TEXT, text),
        Artifact::new(REPORT_JSON, json),
        Artifact::new(PLOT_DATA, format!("{}{}", digest_line(cfg), report.plot_data())),
        resolved(cfg),
    ]
}

fn digest_line(cfg: &RunConfig) -> String {
    format!("# config_sha256={}\n", cfg.digest())
}

fn resolved(cfg: &RunConfig) -> Artifact {
    Artifact::new(
        RESOLVED_CONFIG,
        format!("{}# config_sha256={}\n", cfg.resolved_text(), cfg.digest()),
    )
}

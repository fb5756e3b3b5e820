//! Inverse pipeline: detect → calibrate → fit → assign → extract.

pub mod assign;
pub mod calibrate;
pub mod detect;
pub mod fit;
pub mod report;

use serde::{Deserialize, Serialize};

pub use assign::{assign_peaks, Assignment};
pub use calibrate::{calibrate_axis, pair_sidebands, CalibrationModel, SidebandTriplet};
pub use detect::{detect_peaks, PeakCandidate};
pub use fit::{fit_peak, LineModel, PeakFit};
pub use report::{extract_splittings, IntervalKind, OverlapFlag, RunFailure, SplittingRecord, SplittingReport};

use crate::atomdata::AtomData;
use crate::error::{Error, Result};
use crate::ladder::LadderSystem;
use crate::spectrum::{AxisKind, SpectrumTrace};
use crate::velocitymap::PathwaySet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Minimum peak prominence in transmission.
    pub prominence: f64,
    /// Minimum peak separation, axis units.
    pub min_separation: f64,
    /// RF frequency of the calibration sidebands, when present.
    pub rf_frequency: Option<f64>,
    /// Expected scan units per MHz, used only to gate sideband spacings on a raw axis.
    pub scan_scale: f64,
    pub calibration_degree: usize,
    pub model: LineModel,
    /// Fit window half-width in units of the candidate's half-prominence width.
    pub window_factor: f64,
    /// Assignment gate in fitted linewidths.
    pub gate_linewidths: f64,
    /// A fit whose relative residual exceeds this multiple of the median
    /// single-line fit in the trace is flagged as unresolved.
    pub unresolved_factor: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            prominence: 3e-5,
            min_separation: 20.0,
            rf_frequency: None,
            scan_scale: 1.0,
            calibration_degree: 3,
            model: LineModel::Lorentzian,
            window_factor: 1.5,
            gate_linewidths: 3.0,
            unresolved_factor: 3.0,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.prominence > 0.0) {
            return Err(Error::config("detect_prominence", "must be positive"));
        }
        if !(self.min_separation > 0.0) {
            return Err(Error::config("detect_min_separation", "must be positive"));
        }
        if let Some(rf) = self.rf_frequency {
            if !(rf > 0.0) {
                return Err(Error::config("sideband_rf_mhz", "must be positive"));
            }
        }
        if !(self.scan_scale > 0.0) {
            return Err(Error::config("scan_scale", "must be positive"));
        }
        if !(1..=3).contains(&self.calibration_degree) {
            return Err(Error::config("calibration_degree", "must be 1, 2 or 3"));
        }
        if !(self.window_factor > 0.0 && self.gate_linewidths > 0.0 && self.unresolved_factor > 1.0) {
            return Err(Error::config(
                "fit_window_factor",
                "window, gate and unresolved factors must be positive",
            ));
        }
        Ok(())
    }
}

/// One fitted carrier peak and the pathways assigned to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedPeak {
    pub fit: PeakFit,
    pub pathways: Vec<String>,
    pub unresolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAnalysis {
    pub candidates: Vec<PeakCandidate>,
    pub calibration: Option<CalibrationModel>,
    pub sidebands: Vec<SidebandTriplet>,
    pub peaks: Vec<AssignedPeak>,
    pub assignment: Assignment,
    pub report: SplittingReport,
}

impl TraceAnalysis {
    /// True when some peak holds more than one predicted pathway or its fit
    /// residual marks it as a blend.
    pub fn has_unresolved(&self) -> bool {
        !self.report.overlaps.is_empty() || self.peaks.iter().any(|p| p.unresolved)
    }
}

/// Runs the full inverse pipeline on one trace against its predicted pathways.
pub fn analyze_trace(
    trace: &SpectrumTrace,
    pathways: &PathwaySet,
    atom: &AtomData,
    sys: &LadderSystem,
    opts: &AnalysisOptions,
) -> Result<TraceAnalysis> {
    opts.validate()?;
    let raw = trace.axis_kind() == AxisKind::RawScanUnits;

    let (calibrated, calibration, sidebands) = match opts.rf_frequency {
        Some(rf) => {
            let spacing = if raw { rf * opts.scan_scale } else { rf };
            let min_sep = if raw {
                opts.min_separation * opts.scan_scale
            } else {
                opts.min_separation
            };
            let first = detect_peaks(trace, opts.prominence, min_sep);
            let positions: Vec<f64> = first.iter().map(|c| refine(trace, c, opts)).collect();
            let triplets = pair_sidebands(&positions, spacing);
            let validity = (trace.scan()[0], trace.scan()[trace.len() - 1]);
            let model = calibrate_axis(&triplets, rf, opts.calibration_degree, validity)?;
            let mapped = model.apply(trace)?;
            let sidebands = triplets
                .iter()
                .map(|t| SidebandTriplet {
                    lower: model.map(t.lower),
                    carrier: model.map(t.carrier),
                    upper: model.map(t.upper),
                })
                .collect();
            (mapped, Some(model), sidebands)
        }
        None if raw => {
            return Err(Error::Calibration(
                "a raw-axis trace needs RF sidebands for calibration".into(),
            ))
        }
        None => (trace.clone(), None, Vec::new()),
    };

    let candidates = detect_peaks(&calibrated, opts.prominence, opts.min_separation);
    let is_sideband = |x: f64| {
        sidebands.iter().any(|t: &SidebandTriplet| {
            (t.lower - x).abs() < 0.5 * opts.min_separation || (t.upper - x).abs() < 0.5 * opts.min_separation
        })
    };
    let carriers: Vec<&PeakCandidate> = candidates.iter().filter(|c| !is_sideband(c.position)).collect();

    let mut fits = Vec::with_capacity(carriers.len());
    for c in &carriers {
        let half = opts.window_factor * c.width;
        fits.push(fit_peak(
            &calibrated,
            (c.position - half, c.position + half),
            opts.model,
        )?);
    }
    let linewidth = median(fits.iter().map(|f| f.fwhm).collect());
    let centers: Vec<f64> = fits.iter().map(|f| f.center).collect();
    let assignment = assign_peaks(&centers, pathways, opts.gate_linewidths * linewidth)?;
    let mut report = extract_splittings(&fits, &assignment, pathways, atom, sys)?;

    let reference = median(
        fits.iter()
            .enumerate()
            .filter(|(k, _)| assignment.pathways_of_peak(*k).len() == 1)
            .map(|(_, f)| f.relative_residual())
            .collect(),
    );
    let n = pathways.0[0].n;
    let peaks: Vec<AssignedPeak> = fits
        .into_iter()
        .enumerate()
        .map(|(k, fit)| {
            let members = assignment.pathways_of_peak(k);
            let unresolved = members.len() > 1
                || (reference.is_finite() && fit.relative_residual() > opts.unresolved_factor * reference);
            let labels = members.iter().map(|&i| pathways.0[i].label()).collect();
            AssignedPeak {
                fit,
                pathways: labels,
                unresolved,
            }
        })
        .collect();
    for p in &peaks {
        if p.unresolved && p.pathways.len() == 1 {
            report.overlaps.push(OverlapFlag {
                n,
                position_mhz: p.fit.center + assignment.offset,
                pathways: p.pathways.clone(),
            });
        }
    }

    Ok(TraceAnalysis {
        candidates,
        calibration,
        sidebands,
        peaks,
        assignment,
        report,
    })
}

/// Sub-sample peak position from a line fit, falling back to the sample
/// maximum when the fit fails.
fn refine(trace: &SpectrumTrace, c: &PeakCandidate, opts: &AnalysisOptions) -> f64 {
    let half = opts.window_factor * c.width;
    fit_peak(trace, (c.position - half, c.position + half), opts.model).map_or(c.position, |f| f.center)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

//! Coupling-scan transmission traces: synthesis, RF sidebands, scan
//! nonlinearity, measurement noise and the text trace format.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doppler::{doppler_averaged_susceptibility, QuadratureSpec, ThermalEnsemble};
use crate::error::{Error, Result};
use crate::ladder::{optical_depth_factor, LadderSystem};
use crate::velocitymap::PathwaySet;

pub const TRACE_FORMAT: &str = "rydberg_eit_trace_v1";
const COLUMN_HEADER: &str = "scan_coordinate,transmission";
/// Transmission floor applied after additive noise.
const MIN_TRANSMISSION: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    CalibratedMhz,
    RawScanUnits,
}

impl AxisKind {
    pub fn label(self) -> &'static str {
        match self {
            AxisKind::CalibratedMhz => "calibrated_mhz",
            AxisKind::RawScanUnits => "raw_scan_units",
        }
    }
}

impl fmt::Display for AxisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AxisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calibrated_mhz" => Ok(AxisKind::CalibratedMhz),
            "raw_scan_units" => Ok(AxisKind::RawScanUnits),
            other => Err(Error::config("axis_kind", format!("unknown axis kind `{other}`"))),
        }
    }
}

/// Sampled transmission versus scan coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTrace {
    scan: Vec<f64>,
    transmission: Vec<f64>,
    axis_kind: AxisKind,
    pub metadata: BTreeMap<String, String>,
}

impl SpectrumTrace {
    pub fn new(scan: Vec<f64>, transmission: Vec<f64>, axis_kind: AxisKind) -> Result<Self> {
        if scan.len() != transmission.len() {
            return Err(Error::domain(format!(
                "scan has {} samples but transmission has {}",
                scan.len(),
                transmission.len()
            )));
        }
        if scan.len() < 2 {
            return Err(Error::domain("a trace needs at least two samples"));
        }
        check_increasing(&scan)?;
        if let Some(bad) = transmission.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::domain(format!("transmission {bad} outside (0, 1]")));
        }
        Ok(Self {
            scan,
            transmission,
            axis_kind,
            metadata: BTreeMap::new(),
        })
    }

    pub fn scan(&self) -> &[f64] {
        &self.scan
    }

    pub fn transmission(&self) -> &[f64] {
        &self.transmission
    }

    pub fn axis_kind(&self) -> AxisKind {
        self.axis_kind
    }

    pub fn len(&self) -> usize {
        self.scan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scan.is_empty()
    }

    /// Absorbance `−ln T` at every sample.
    pub fn optical_depth(&self) -> Vec<f64> {
        self.transmission.iter().map(|t| -t.ln()).collect()
    }

    pub fn with_metadata(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn from_optical_depth(scan: Vec<f64>, od: &[f64], axis_kind: AxisKind) -> Result<Self> {
        let transmission = od.iter().map(|d| (-d).exp()).collect();
        Self::new(scan, transmission, axis_kind)
    }

    /// Serialises to the text trace format. Floats use shortest round-trip
    /// formatting, so parse/serialise is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * self.len() + 256);
        let _ = writeln!(out, "# format={TRACE_FORMAT}");
        let _ = writeln!(out, "# axis_kind={}", self.axis_kind);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(COLUMN_HEADER);
        out.push('\n');
        for (s, t) in self.scan.iter().zip(&self.transmission) {
            let _ = writeln!(out, "{s},{t}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut metadata = BTreeMap::new();
        let mut axis_kind = None;
        let mut format_seen = false;
        let mut header_seen = false;
        let mut scan = Vec::new();
        let mut transmission = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| Error::Format { line, message };
            let raw = raw.trim_end_matches('\r');
            if let Some(meta) = raw.strip_prefix('#') {
                if header_seen {
                    return Err(err("metadata after the column header".into()));
                }
                let Some((k, v)) = meta.trim().split_once('=') else {
                    return Err(err(format!("metadata line without `=`: `{raw}`")));
                };
                let (k, v) = (k.trim(), v.trim());
                match k {
                    "format" => {
                        if v != TRACE_FORMAT {
                            return Err(err(format!("unsupported trace format `{v}`")));
                        }
                        format_seen = true;
                    }
                    "axis_kind" => axis_kind = Some(v.parse::<AxisKind>().map_err(|e| err(e.to_string()))?),
                    _ => {
                        metadata.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if !format_seen {
                    return Err(err(format!("missing `# format={TRACE_FORMAT}` header")));
                }
                if raw.trim() != COLUMN_HEADER {
                    return Err(err(format!("expected column header `{COLUMN_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let Some((a, b)) = raw.split_once(',') else {
                return Err(err("expected two comma-separated columns".into()));
            };
            let s: f64 = a.trim().parse().map_err(|_| err(format!("invalid scan value `{a}`")))?;
            let t: f64 = b
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid transmission `{b}`")))?;
            if !s.is_finite() || !(t > 0.0 && t <= 1.0) {
                return Err(err(format!("sample ({s}, {t}) out of range")));
            }
            if let Some(&prev) = scan.last() {
                if s <= prev {
                    return Err(err("scan coordinate not strictly increasing".into()));
                }
            }
            scan.push(s);
            transmission.push(t);
        }
        let last = text.lines().count().max(1);
        if !header_seen {
            return Err(Error::Format {
                line: last,
                message: "missing column header".into(),
            });
        }
        let axis_kind = axis_kind.ok_or_else(|| Error::Format {
            line: last,
            message: "missing `axis_kind` metadata".into(),
        })?;
        if scan.len() < 2 {
            return Err(Error::Format {
                line: last,
                message: "a trace needs at least two samples".into(),
            });
        }
        let mut trace = Self::new(scan, transmission, axis_kind)?;
        trace.metadata = metadata;
        Ok(trace)
    }
}

fn check_increasing(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite scan coordinate"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("scan coordinate must be strictly increasing"));
    }
    Ok(())
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(stop > start) {
        return Err(Error::config("grid", "need stop > start and at least two points"));
    }
    let step = (stop - start) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { stop } else { start + i as f64 * step })
        .collect())
}

/// Grid with spacing `step` covering every pathway's predicted peak with
/// `margin` MHz on either side.
pub fn grid_around(pathways: &PathwaySet, margin: f64, step: f64) -> Result<Vec<f64>> {
    if pathways.is_empty() {
        return Err(Error::config("pathways", "at least one pathway is required"));
    }
    if !(step > 0.0 && margin >= 0.0) {
        return Err(Error::config(
            "grid_step_mhz",
            "step must be positive and margin non-negative",
        ));
    }
    let lo = pathways.iter().map(|p| p.peak_position).fold(f64::INFINITY, f64::min) - margin;
    let hi = pathways
        .iter()
        .map(|p| p.peak_position)
        .fold(f64::NEG_INFINITY, f64::max)
        + margin;
    let start = (lo / step).floor() * step;
    let points = ((hi - start) / step).ceil() as usize + 1;
    Ok((0..points).map(|i| start + i as f64 * step).collect())
}

/// Absorbance `(2πL/λp)·Σ strength·Im χ` on `grid` (coupling detuning, MHz)
/// with the probe locked to the reference resonance. Pathways add
/// incoherently; each enters the Doppler integral through its effective
/// detunings so the velocity selection emerges from the integral itself.
pub fn optical_depth_profile(
    grid: &[f64],
    pathways: &PathwaySet,
    sys: &LadderSystem,
    ens: &ThermalEnsemble,
    quad: &QuadratureSpec,
    cell_length_mm: f64,
) -> Result<Vec<f64>> {
    if grid.len() < 2 {
        return Err(Error::domain("grid needs at least two points"));
    }
    check_increasing(grid)?;
    if pathways.is_empty() {
        return Err(Error::config("pathways", "at least one pathway is required"));
    }
    if !(cell_length_mm > 0.0) {
        return Err(Error::config("cell_length_mm", "must be positive"));
    }
    sys.validate()?;
    ens.validate()?;
    quad.validate()?;
    let reach = 3.0 * sys.nominal_linewidth();
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    for p in pathways.iter() {
        if p.peak_position - reach < lo || p.peak_position + reach > hi {
            return Err(Error::Window(format!(
                "grid [{lo}, {hi}] MHz does not cover {} at {:.3} MHz ± {reach:.1} MHz",
                p.label(),
                p.peak_position
            )));
        }
    }
    let factor = optical_depth_factor(cell_length_mm, sys.lambda_probe_nm);
    grid.par_iter()
        .map(|&dc| {
            let mut chi = 0.0;
            for p in pathways.iter() {
                let (dp_eff, dc_eff) = p.effective_detunings(0.0, dc);
                chi += p.strength * doppler_averaged_susceptibility(dp_eff, dc_eff, sys, ens, quad)?.imag();
            }
            Ok(factor * chi)
        })
        .collect()
}

/// Full coupling-scan transmission trace on a calibrated MHz axis.
pub fn synthesize_trace(
    grid: &[f64],
    pathways: &PathwaySet,
    sys: &LadderSystem,
    ens: &ThermalEnsemble,
    quad: &QuadratureSpec,
    cell_length_mm: f64,
) -> Result<SpectrumTrace> {
    let od = optical_depth_profile(grid, pathways, sys, ens, quad, cell_length_mm)?;
    let mut trace = SpectrumTrace::from_optical_depth(grid.to_vec(), &od, AxisKind::CalibratedMhz)?;
    let mut series: Vec<_> = pathways.iter().map(|p| p.series).collect();
    series.sort();
    series.dedup();
    let series: Vec<String> = series.iter().map(|s| s.to_string()).collect();
    let mut ns: Vec<u32> = pathways.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let m = &mut trace.metadata;
    m.insert(
        "axis_convention".into(),
        "increasing_coupling_detuning_relative_to_f5_reference".into(),
    );
    m.insert("lambda_probe_nm".into(), sys.lambda_probe_nm.to_string());
    m.insert("lambda_coupling_nm".into(), sys.lambda_coupling_nm.to_string());
    m.insert("geometry".into(), sys.geometry.to_string());
    m.insert("n".into(), join(&ns));
    m.insert("series".into(), series.join(" "));
    m.insert("pathways".into(), pathways.len().to_string());
    m.insert("cell_length_mm".into(), cell_length_mm.to_string());
    m.insert("sideband".into(), "none".into());
    m.insert("distortion".into(), "none".into());
    Ok(trace)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Phase-modulation sidebands on the coupling laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandSpec {
    pub rf_frequency: f64,
    pub modulation_index: f64,
    pub max_order: u32,
}

impl Default for SidebandSpec {
    fn default() -> Self {
        Self {
            rf_frequency: 50.0,
            modulation_index: 0.5,
            max_order: 1,
        }
    }
}

impl SidebandSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rf_frequency.is_finite() && self.rf_frequency > 0.0) {
            return Err(Error::config("sideband_rf_mhz", "must be positive"));
        }
        if !(self.modulation_index.is_finite() && self.modulation_index >= 0.0) {
            return Err(Error::config("sideband_beta", "must be non-negative"));
        }
        Ok(())
    }

    /// Power fraction `J_k(β)²` of order `k`.
    pub fn order_weight(&self, k: i32) -> f64 {
        let j = libm::jn(k, self.modulation_index);
        j * j
    }

    /// Total power kept in orders `|k| ≤ max_order`.
    pub fn retained_power(&self) -> f64 {
        let k = self.max_order as i32;
        (-k..=k).map(|o| self.order_weight(o)).sum()
    }
}

/// Linear interpolation on an increasing grid, clamped at the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// Resynthesises the trace as Bessel-weighted replicas of its absorbance
/// displaced by multiples of the RF frequency.
pub fn apply_sidebands(trace: &SpectrumTrace, sb: &SidebandSpec) -> Result<SpectrumTrace> {
    sb.validate()?;
    if trace.axis_kind != AxisKind::CalibratedMhz {
        return Err(Error::domain("sidebands are applied on a calibrated MHz axis"));
    }
    if sb.modulation_index == 0.0 || sb.max_order == 0 {
        return Ok(trace.clone());
    }
    let span = trace.scan[trace.len() - 1] - trace.scan[0];
    let reach = sb.max_order as f64 * sb.rf_frequency;
    if reach >= span {
        return Err(Error::Window(format!(
            "sideband displacement {reach} MHz exceeds the {span} MHz scan"
        )));
    }
    let od = trace.optical_depth();
    let k = sb.max_order as i32;
    let weights: Vec<(f64, f64)> = (-k..=k)
        .map(|o| (o as f64 * sb.rf_frequency, sb.order_weight(o)))
        .collect();
    let shifted: Vec<f64> = trace
        .scan
        .iter()
        .map(|&x| {
            weights
                .iter()
                .map(|&(d, w)| w * interpolate(&trace.scan, &od, x - d))
                .sum()
        })
        .collect();
    let mut out = SpectrumTrace::from_optical_depth(trace.scan.clone(), &shifted, trace.axis_kind)?;
    out.metadata = trace.metadata.clone();
    out.metadata.insert(
        "sideband".into(),
        format!(
            "rf_mhz={} beta={} max_order={}",
            sb.rf_frequency, sb.modulation_index, sb.max_order
        ),
    );
    Ok(out)
}

/// Piezo scan nonlinearity `s = c1·f + c2·f² + c3·f³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanDistortion {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for ScanDistortion {
    fn default() -> Self {
        Self::identity()
    }
}

impl ScanDistortion {
    pub fn identity() -> Self {
        Self {
            c1: 1.0,
            c2: 0.0,
            c3: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn map(&self, f: f64) -> f64 {
        f * (self.c1 + f * (self.c2 + f * self.c3))
    }

    pub fn derivative(&self, f: f64) -> f64 {
        self.c1 + f * (2.0 * self.c2 + 3.0 * self.c3 * f)
    }
}

/// Replaces the calibrated axis with raw scan units; transmission is untouched.
pub fn distort_axis(trace: &SpectrumTrace, d: &ScanDistortion) -> Result<SpectrumTrace> {
    if trace.axis_kind != AxisKind::CalibratedMhz {
        return Err(Error::Distortion("trace axis is already in raw scan units".into()));
    }
    if !(d.c1 > 0.0) || ![d.c1, d.c2, d.c3].iter().all(|c| c.is_finite()) {
        return Err(Error::Distortion(
            "c1 must be positive and all coefficients finite".into(),
        ));
    }
    if let Some(f) = trace.scan.iter().find(|&&f| d.derivative(f) <= 0.0) {
        return Err(Error::Distortion(format!(
            "scan polynomial is not increasing at {f} MHz"
        )));
    }
    let scan: Vec<f64> = trace.scan.iter().map(|&f| d.map(f)).collect();
    if scan.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Distortion(
            "scan polynomial is not strictly monotone over the window".into(),
        ));
    }
    let mut out = SpectrumTrace::new(scan, trace.transmission.clone(), AxisKind::RawScanUnits)?;
    out.metadata = trace.metadata.clone();
    out.metadata
        .insert("distortion".into(), format!("c1={} c2={} c3={}", d.c1, d.c2, d.c3));
    Ok(out)
}

/// Adds seeded zero-mean Gaussian noise of standard deviation `sigma` to the
/// transmission, clamped back into (0, 1].
pub fn add_noise(trace: &SpectrumTrace, sigma: f64, seed: u64) -> Result<SpectrumTrace> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::config("noise_sigma", "must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(trace.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config("noise_sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transmission = trace
        .transmission
        .iter()
        .map(|&t| (t + normal.sample(&mut rng)).clamp(MIN_TRANSMISSION, 1.0))
        .collect();
    let mut out = SpectrumTrace::new(trace.scan.clone(), transmission, trace.axis_kind)?;
    out.metadata = trace.metadata.clone();
    out.metadata
        .insert("noise".into(), format!("sigma={sigma} seed={seed}"));
    Ok(out)
}

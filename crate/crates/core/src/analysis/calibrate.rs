//! Frequency-axis calibration from RF modulation sidebands.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{AxisKind, SpectrumTrace};

/// Tolerance of the sideband spacing gate, as a fraction of the spacing.
pub const PAIRING_TOLERANCE: f64 = 0.2;
const MONOTONICITY_SAMPLES: usize = 1001;

/// A carrier peak flanked by its first-order sidebands (axis units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandTriplet {
    pub lower: f64,
    pub carrier: f64,
    pub upper: f64,
}

impl SidebandTriplet {
    fn asymmetry(&self) -> f64 {
        ((self.upper - self.carrier) - (self.carrier - self.lower)).abs()
    }
}

/// Groups sorted peak positions into carrier/sideband triplets. A peak is a
/// carrier when both neighbours sit at spacings that agree with each other
/// and with `expected_spacing` to within [`PAIRING_TOLERANCE`]. A carrier is
/// never reused as a sideband, but two carriers may share a sideband peak
/// where their replicas coincide. More symmetric triplets win conflicts.
pub fn pair_sidebands(positions: &[f64], expected_spacing: f64) -> Vec<SidebandTriplet> {
    let mut candidates: Vec<(usize, SidebandTriplet)> = positions
        .windows(3)
        .enumerate()
        .filter_map(|(i, w)| {
            let below = w[1] - w[0];
            let above = w[2] - w[1];
            let mean = 0.5 * (below + above);
            let symmetric = (above - below).abs() <= PAIRING_TOLERANCE * mean;
            let on_scale = (mean - expected_spacing).abs() <= PAIRING_TOLERANCE * expected_spacing;
            (symmetric && on_scale).then_some((
                i,
                SidebandTriplet {
                    lower: w[0],
                    carrier: w[1],
                    upper: w[2],
                },
            ))
        })
        .collect();
    candidates.sort_by(|a, b| a.1.asymmetry().total_cmp(&b.1.asymmetry()).then(a.0.cmp(&b.0)));
    #[derive(Clone, Copy, PartialEq)]
    enum Role {
        Free,
        Carrier,
        Sideband,
    }
    let mut role = vec![Role::Free; positions.len()];
    let mut out = Vec::new();
    for (i, t) in candidates {
        if role[i + 1] != Role::Free || role[i] == Role::Carrier || role[i + 2] == Role::Carrier {
            continue;
        }
        role[i] = Role::Sideband;
        role[i + 1] = Role::Carrier;
        role[i + 2] = Role::Sideband;
        out.push(t);
    }
    out.sort_by(|a, b| a.carrier.total_cmp(&b.carrier));
    out
}

/// Polynomial scan→MHz map `f(s) = Σ_k a_k·t^k`, `t = (s − s0)/scale`,
/// `k = 1..=degree`. Absolute offset is not observable from sidebands, so
/// `f(s0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub coefficients: Vec<f64>,
    pub origin: f64,
    pub scale: f64,
    pub validity: (f64, f64),
    /// RMS deviation of mapped sideband spacings from the RF frequency, MHz.
    pub residual: f64,
}

impl CalibrationModel {
    pub fn degree(&self) -> usize {
        self.coefficients.len()
    }

    pub fn map(&self, s: f64) -> f64 {
        let t = (s - self.origin) / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, a| (acc + a) * t)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let t = (s - self.origin) / self.scale;
        let mut d = 0.0;
        for (k, a) in self.coefficients.iter().enumerate().rev() {
            d = d * t + (k + 1) as f64 * a;
        }
        d / self.scale
    }

    /// Re-expresses a raw-axis trace in calibrated MHz.
    pub fn apply(&self, trace: &SpectrumTrace) -> Result<SpectrumTrace> {
        let scan: Vec<f64> = trace.scan().iter().map(|&s| self.map(s)).collect();
        if scan.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Calibration("calibration is not monotone over the trace".into()));
        }
        let mut out = SpectrumTrace::new(scan, trace.transmission().to_vec(), AxisKind::CalibratedMhz)?;
        out.metadata = trace.metadata.clone();
        out.metadata.insert(
            "calibration".into(),
            format!(
                "degree={} origin={} scale={} coefficients={} residual_mhz={}",
                self.degree(),
                self.origin,
                self.scale,
                self.coefficients
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                self.residual
            ),
        );
        Ok(out)
    }
}

/// Least-squares polynomial such that every carrier-to-sideband spacing maps
/// to `rf_frequency`. Each triplet contributes two pairs; a sideband shared
/// by two carriers is a blend of two replicas and is left out. `validity` is
/// the scan interval over which the map must be strictly increasing.
pub fn calibrate_axis(
    triplets: &[SidebandTriplet],
    rf_frequency: f64,
    degree: usize,
    validity: (f64, f64),
) -> Result<CalibrationModel> {
    if !(1..=3).contains(&degree) {
        return Err(Error::config("calibration_degree", "must be 1, 2 or 3"));
    }
    if !(rf_frequency > 0.0) {
        return Err(Error::config("sideband_rf_mhz", "must be positive"));
    }
    let shared = |x: f64| triplets.iter().filter(|t| t.lower == x || t.upper == x).count() > 1;
    let pairs: Vec<(f64, f64)> = triplets
        .iter()
        .flat_map(|t| [(t.lower, t.carrier, t.lower), (t.carrier, t.upper, t.upper)])
        .filter(|&(_, _, sideband)| !shared(sideband))
        .map(|(a, b, _)| (a, b))
        .collect();
    if pairs.len() < degree + 1 {
        return Err(Error::Underdetermined {
            needed: degree + 1,
            got: pairs.len(),
        });
    }
    let all: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let origin = 0.5 * (lo + hi);
    let scale = (0.5 * (hi - lo)).max(f64::MIN_POSITIVE);

    let mut design = DMatrix::zeros(pairs.len(), degree);
    for (row, &(a, b)) in pairs.iter().enumerate() {
        let (ta, tb) = ((a - origin) / scale, (b - origin) / scale);
        for k in 0..degree {
            let p = (k + 1) as i32;
            design[(row, k)] = tb.powi(p) - ta.powi(p);
        }
    }
    let rhs = DVector::from_element(pairs.len(), rf_frequency);
    let solution = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Calibration(e.to_string()))?;
    let residual = ((&design * &solution - &rhs).norm_squared() / pairs.len() as f64).sqrt();

    let model = CalibrationModel {
        coefficients: solution.iter().cloned().collect(),
        origin,
        scale,
        validity,
        residual,
    };
    if !residual.is_finite() || model.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Calibration("non-finite calibration solution".into()));
    }
    let (v0, v1) = validity;
    for i in 0..MONOTONICITY_SAMPLES {
        let s = v0 + (v1 - v0) * i as f64 / (MONOTONICITY_SAMPLES - 1) as f64;
        if model.derivative(s) <= 0.0 {
            return Err(Error::Calibration(format!("calibration is not increasing at scan {s}")));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::ScanDistortion;

    fn triplets_through(d: &ScanDistortion, carriers: &[f64], rf: f64) -> Vec<SidebandTriplet> {
        carriers
            .iter()
            .map(|&c| SidebandTriplet {
                lower: d.map(c - rf),
                carrier: d.map(c),
                upper: d.map(c + rf),
            })
            .collect()
    }

    #[test]
    fn pairs_three_carriers_out_of_nine_peaks() {
        let peaks = [-354.75, -304.5, -255.0, -219.25, -169.0, -118.75, -50.25, 0.0, 50.25];
        let t = pair_sidebands(&peaks, 50.0);
        let carriers: Vec<f64> = t.iter().map(|x| x.carrier).collect();
        assert_eq!(carriers, vec![-304.5, -169.0, 0.0]);
    }

    #[test]
    fn neighbouring_carriers_share_a_sideband() {
        let t = pair_sidebands(&[-50.25, 0.0, 51.0, 103.3, 155.0], 50.0);
        let carriers: Vec<f64> = t.iter().map(|x| x.carrier).collect();
        assert_eq!(carriers, vec![0.0, 103.3]);
    }

    #[test]
    fn off_scale_spacing_is_not_paired() {
        assert!(pair_sidebands(&[0.0, 80.0, 160.0], 50.0).is_empty());
    }

    #[test]
    fn undistorted_axis_gives_identity_slope() {
        let t = triplets_through(&ScanDistortion::identity(), &[-304.7, -169.1, 0.0], 50.0);
        let m = calibrate_axis(&t, 50.0, 1, (-400.0, 100.0)).unwrap();
        assert!(m.residual < 1e-3);
        assert!((m.derivative(-100.0) - 1.0).abs() < 1e-12);
        assert!((m.map(0.0) - m.map(-169.1) - 169.1).abs() < 1e-9);
    }

    #[test]
    fn cubic_distortion_is_undone() {
        let d = ScanDistortion {
            c1: 1.0,
            c2: 1.2e-4,
            c3: 1.0e-7,
        };
        let carriers = [-304.7, -169.1, 0.0];
        let t = triplets_through(&d, &carriers, 50.0);
        let m3 = calibrate_axis(&t, 50.0, 3, (d.map(-400.0), d.map(100.0))).unwrap();
        let m1 = calibrate_axis(&t, 50.0, 1, (d.map(-400.0), d.map(100.0))).unwrap();
        assert!(m1.residual > m3.residual);
        let interval = m3.map(d.map(0.0)) - m3.map(d.map(-304.7));
        assert!((interval / 304.7 - 1.0).abs() < 5e-3, "{interval}");
    }

    #[test]
    fn too_few_pairs_is_underdetermined() {
        let t = triplets_through(&ScanDistortion::identity(), &[0.0], 50.0);
        assert!(matches!(
            calibrate_axis(&t, 50.0, 3, (-100.0, 100.0)),
            Err(Error::Underdetermined { needed: 4, got: 2 })
        ));
    }

    #[test]
    fn decreasing_solution_is_rejected() {
        let t = [SidebandTriplet {
            lower: 50.0,
            carrier: 0.0,
            upper: -50.0,
        }];
        assert!(matches!(
            calibrate_axis(&t, 50.0, 1, (-60.0, 60.0)),
            Err(Error::Calibration(_))
        ));
    }
}

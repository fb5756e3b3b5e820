//! Single-peak line-shape fitting by Levenberg-Marquardt.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::SpectrumTrace;

pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-8;
const MIN_SAMPLES: usize = 9;
const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineModel {
    Lorentzian,
    Gaussian,
}

impl LineModel {
    pub fn label(self) -> &'static str {
        match self {
            LineModel::Lorentzian => "lorentzian",
            LineModel::Gaussian => "gaussian",
        }
    }

    /// Unit-height profile and its derivatives with respect to centre and width.
    fn shape(self, x: f64, center: f64, fwhm: f64) -> (f64, f64, f64) {
        let d = x - center;
        match self {
            LineModel::Lorentzian => {
                let z = 2.0 * d / fwhm;
                let q = 1.0 / (1.0 + z * z);
                let dq_dz = -2.0 * z * q * q;
                (q, dq_dz * (-2.0 / fwhm), dq_dz * (-z / fwhm))
            }
            LineModel::Gaussian => {
                let g = (-FOUR_LN2 * d * d / (fwhm * fwhm)).exp();
                (
                    g,
                    g * 2.0 * FOUR_LN2 * d / (fwhm * fwhm),
                    g * 2.0 * FOUR_LN2 * d * d / (fwhm * fwhm * fwhm),
                )
            }
        }
    }
}

impl fmt::Display for LineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LineModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lorentzian" => Ok(LineModel::Lorentzian),
            "gaussian" => Ok(LineModel::Gaussian),
            other => Err(Error::config("line_model", format!("unknown line model `{other}`"))),
        }
    }
}

/// Peak on a locally linear baseline: `b0 + b1·(x − x_mid) + A·shape(x; c, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    /// Baseline value at the fitted centre.
    pub baseline: f64,
    pub baseline_slope: f64,
    pub model: LineModel,
    pub rms_residual: f64,
    /// Variances of (center, fwhm, amplitude, baseline offset, baseline slope).
    pub covariance_diag: [f64; 5],
    pub window: (f64, f64),
    pub iterations: usize,
}

impl PeakFit {
    pub fn center_sigma(&self) -> f64 {
        self.covariance_diag[0].sqrt()
    }

    /// RMS residual relative to the peak amplitude; large values indicate a
    /// window holding more than one line.
    pub fn relative_residual(&self) -> f64 {
        self.rms_residual / self.amplitude.abs()
    }
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    x_mid: f64,
    model: LineModel,
}

impl Problem<'_> {
    fn residuals_and_jacobian(&self, p: &[f64; 5]) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.x.len();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, 5);
        for (k, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            let (s, ds_dc, ds_dw) = self.model.shape(x, p[0], p[1]);
            let dx = x - self.x_mid;
            r[k] = y - (p[3] + p[4] * dx + p[2] * s);
            j[(k, 0)] = p[2] * ds_dc;
            j[(k, 1)] = p[2] * ds_dw;
            j[(k, 2)] = s;
            j[(k, 3)] = 1.0;
            j[(k, 4)] = dx;
        }
        (r, j)
    }

    fn cost(&self, p: &[f64; 5]) -> f64 {
        self.residuals_and_jacobian(p).0.norm_squared()
    }
}

/// Least-squares fit of one peak inside `window` (inclusive, axis units).
pub fn fit_peak(trace: &SpectrumTrace, window: (f64, f64), model: LineModel) -> Result<PeakFit> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::FitGeometry(format!("empty window [{lo}, {hi}]")));
    }
    let start = trace.scan().partition_point(|&v| v < lo);
    let end = trace.scan().partition_point(|&v| v <= hi);
    let x = &trace.scan()[start..end];
    let y = &trace.transmission()[start..end];
    if x.len() < MIN_SAMPLES {
        return Err(Error::FitGeometry(format!(
            "window [{lo}, {hi}] holds {} samples, need {MIN_SAMPLES}",
            x.len()
        )));
    }
    let imax = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
    if imax == 0 || imax == y.len() - 1 {
        return Err(Error::FitGeometry(format!(
            "window [{lo}, {hi}] has no interior maximum"
        )));
    }

    let n = x.len();
    let x_mid = 0.5 * (x[0] + x[n - 1]);
    let span = x[n - 1] - x[0];
    let slope0 = (y[n - 1] - y[0]) / span;
    let base = |v: f64| y[0] + slope0 * (v - x[0]);
    let amp0 = y[imax] - base(x[imax]);
    if !(amp0 > 0.0) {
        return Err(Error::FitGeometry(
            "peak does not rise above the window baseline".into(),
        ));
    }
    let half = base(x[imax]) + 0.5 * amp0;
    let left = (0..imax).rev().find(|&k| y[k] < half).map_or(x[0], |k| x[k]);
    let right = (imax..n).find(|&k| y[k] < half).map_or(x[n - 1], |k| x[k]);
    let fwhm0 = (right - left).max(2.0 * span / n as f64);

    let problem = Problem { x, y, x_mid, model };
    let mut p = [x[imax], fwhm0, amp0, base(x_mid), slope0];
    let y_range = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_scale = y_range.max(f64::MIN_POSITIVE);
    let scales = [span, span, y_scale, y_scale, y_scale / span];

    let mut lambda = 1e-3;
    let mut cost = problem.cost(&p);
    let mut iterations = 0;
    let converged = loop {
        if iterations >= MAX_ITERATIONS {
            break false;
        }
        iterations += 1;
        let (r, j) = problem.residuals_and_jacobian(&p);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let mut a = jtj.clone();
        for d in 0..5 {
            a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
        }
        let Some(step) = a.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial = p;
        for d in 0..5 {
            trial[d] += step[d];
        }
        let trial_cost = problem.cost(&trial);
        if trial_cost.is_finite() && trial_cost <= cost {
            let small = (0..5).all(|d| step[d].abs() <= STEP_TOLERANCE * (p[d].abs() + scales[d]));
            p = trial;
            cost = trial_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if small {
                break true;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // No descent direction left: the iterate is stationary to
                // machine precision.
                break true;
            }
        }
    };
    if !converged {
        return Err(Error::FitConvergence {
            iterations,
            last: p.to_vec(),
        });
    }
    p[1] = p[1].abs();
    if !(p[0] >= lo && p[0] <= hi) {
        return Err(Error::FitGeometry(format!(
            "fitted centre {} left the window [{lo}, {hi}]",
            p[0]
        )));
    }

    let (r, j) = problem.residuals_and_jacobian(&p);
    let ssr = r.norm_squared();
    let dof = (n - 5) as f64;
    let covariance_diag = match (j.transpose() * &j).try_inverse() {
        Some(inv) => std::array::from_fn(|d| inv[(d, d)] * ssr / dof),
        None => [f64::INFINITY; 5],
    };
    Ok(PeakFit {
        center: p[0],
        fwhm: p[1],
        amplitude: p[2],
        baseline: p[3] + p[4] * (p[0] - x_mid),
        baseline_slope: p[4],
        model,
        rms_residual: (ssr / n as f64).sqrt(),
        covariance_diag,
        window,
        iterations,
    })
}

//! Thermal velocity distribution and the Doppler average of the ladder kernel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::{kernel_unchecked, KernelPoles, LadderSystem, Susceptibility};
use crate::units::{ATOMIC_MASS_UNIT, BOLTZMANN};

/// Which definition of the thermal width `u` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityWidthConvention {
    /// `u = sqrt(kT/m)`.
    #[serde(rename = "sqrt_kt_m")]
    SqrtKtOverM,
    /// `u = sqrt(2kT/m)`, the most probable speed; makes `exp(−v²/u²)` the
    /// one-dimensional Maxwell distribution.
    Conventional,
}

impl VelocityWidthConvention {
    pub fn label(self) -> &'static str {
        match self {
            Self::SqrtKtOverM => "sqrt_kt_m",
            Self::Conventional => "conventional",
        }
    }
}

impl fmt::Display for VelocityWidthConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for VelocityWidthConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt_kt_m" => Ok(Self::SqrtKtOverM),
            "conventional" => Ok(Self::Conventional),
            other => Err(Error::config(
                "velocity_width",
                format!("expected `sqrt_kt_m` or `conventional`, found `{other}`"),
            )),
        }
    }
}

/// Thermal vapour. `u` is derived on demand so it can never go stale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnsemble {
    pub temperature_k: f64,
    pub mass_kg: f64,
    pub n0: f64,
    pub convention: VelocityWidthConvention,
}

impl Default for ThermalEnsemble {
    fn default() -> Self {
        Self {
            temperature_k: 293.15,
            mass_kg: 132.905_451_961 * ATOMIC_MASS_UNIT,
            n0: 1.0,
            convention: VelocityWidthConvention::Conventional,
        }
    }
}

impl ThermalEnsemble {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_k.is_finite() && self.temperature_k > 0.0) {
            return Err(Error::config("temperature_k", "must be positive"));
        }
        if !(self.mass_kg.is_finite() && self.mass_kg > 0.0) {
            return Err(Error::config("atomic_mass", "must be positive"));
        }
        if !(self.n0.is_finite() && self.n0 >= 0.0) {
            return Err(Error::config("number_density", "must be non-negative"));
        }
        Ok(())
    }

    /// Width parameter `u` in m/s.
    pub fn u(&self) -> f64 {
        let factor = match self.convention {
            VelocityWidthConvention::SqrtKtOverM => 1.0,
            VelocityWidthConvention::Conventional => 2.0,
        };
        (factor * BOLTZMANN * self.temperature_k / self.mass_kg).sqrt()
    }
}

/// `N(v) = N0 / (u√π) · exp(−v²/u²)`, per m/s.
pub fn velocity_weight(v: f64, ens: &ThermalEnsemble) -> f64 {
    let u = ens.u();
    ens.n0 / (u * PI.sqrt()) * (-(v * v) / (u * u)).exp()
}

fn velocity_weight_complex(z: Complex64, ens: &ThermalEnsemble) -> Complex64 {
    let u = ens.u();
    (-(z * z) / (u * u)).exp() * (ens.n0 / (u * PI.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMethod {
    FixedTrapezoid,
    Adaptive,
}

impl QuadratureMethod {
    pub fn label(self) -> &'static str {
        match self {
            Self::FixedTrapezoid => "fixed_trapezoid",
            Self::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for QuadratureMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for QuadratureMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_trapezoid" => Ok(Self::FixedTrapezoid),
            "adaptive" => Ok(Self::Adaptive),
            other => Err(Error::config(
                "quadrature_method",
                format!("expected `fixed_trapezoid` or `adaptive`, found `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    /// Half-width of the velocity window in units of `u`.
    pub span: f64,
    pub points: usize,
    pub rel_tol: f64,
    /// Subinterval budget of the adaptive rule.
    pub max_intervals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            method: QuadratureMethod::FixedTrapezoid,
            span: 5.0,
            points: 2001,
            rel_tol: 1e-8,
            max_intervals: 20_000,
        }
    }
}

impl QuadratureSpec {
    pub fn adaptive(rel_tol: f64) -> Self {
        Self {
            method: QuadratureMethod::Adaptive,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn trapezoid(points: usize) -> Self {
        Self {
            points,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.span.is_finite() && self.span >= 3.0) {
            return Err(Error::config("quadrature_span", "must be at least 3"));
        }
        if self.points < 101 || self.points % 2 == 0 {
            return Err(Error::config("quadrature_points", "must be odd and at least 101"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::config("quadrature_rel_tol", "must lie in (0, 1)"));
        }
        if self.max_intervals < 1 {
            return Err(Error::config("quadrature_max_intervals", "must be positive"));
        }
        Ok(())
    }
}

/// Velocity at which the two-photon denominator is smallest,
/// `−(Δp + Δc) / (1/λp ± 1/λc)`, in the kernel's velocity coordinate.
/// `None` when the two-photon Doppler rate vanishes.
pub fn two_photon_resonant_velocity(delta_p: f64, delta_c: f64, sys: &LadderSystem) -> Option<f64> {
    let k2 = sys.two_photon_rate();
    (k2 != 0.0).then(|| -(delta_p + delta_c) / k2)
}

/// `∫ χ(v) N(v) dv` over `[−span·u, span·u]`.
pub fn doppler_averaged_susceptibility(
    delta_p: f64,
    delta_c: f64,
    sys: &LadderSystem,
    ens: &ThermalEnsemble,
    quad: &QuadratureSpec,
) -> Result<Susceptibility> {
    if !(delta_p.is_finite() && delta_c.is_finite()) {
        return Err(Error::domain("non-finite detuning"));
    }
    if !(sys.gamma_31 > 0.0 && sys.gamma_21 > 0.0) {
        return Err(Error::domain("Doppler average requires γ21 > 0 and γ31 > 0"));
    }
    let value = match quad.method {
        QuadratureMethod::FixedTrapezoid => trapezoid(delta_p, delta_c, sys, ens, quad),
        QuadratureMethod::Adaptive => adaptive(delta_p, delta_c, sys, ens, quad)?,
    };
    Ok(Susceptibility(value))
}

/// Evaluates [`doppler_averaged_susceptibility`] for each `(Δp, Δc)` pair in parallel.
pub fn doppler_average_many(
    detunings: &[(f64, f64)],
    sys: &LadderSystem,
    ens: &ThermalEnsemble,
    quad: &QuadratureSpec,
) -> Result<Vec<Susceptibility>> {
    detunings
        .par_iter()
        .map(|&(dp, dc)| doppler_averaged_susceptibility(dp, dc, sys, ens, quad))
        .collect()
}

/// Uniform trapezoid with the near-real kernel poles subtracted and integrated
/// analytically. EIT poles sit a fraction of a grid step off the real axis,
/// where plain trapezoid sums are badly under-resolved.
fn trapezoid(
    delta_p: f64,
    delta_c: f64,
    sys: &LadderSystem,
    ens: &ThermalEnsemble,
    quad: &QuadratureSpec,
) -> Complex64 {
    let half = quad.span * ens.u();
    let n = quad.points;
    let h = 2.0 * half / (n - 1) as f64;

    let decomposition = KernelPoles::new(delta_p, delta_c, sys);
    let singular: Vec<(Complex64, Complex64)> = decomposition
        .poles
        .iter()
        .zip(&decomposition.residues)
        .filter(|(p, _)| p.im.abs() < 10.0 * h && p.re > -half - 10.0 * h && p.re < half + 10.0 * h)
        .map(|(&p, &r)| (p, velocity_weight_complex(p, ens) * r))
        .collect();

    let integrand = |v: f64| {
        let mut f = kernel_unchecked(v, delta_p, delta_c, sys) * velocity_weight(v, ens);
        for (p, c) in &singular {
            f -= c / (v - p);
        }
        f
    };

    let mut sum = 0.5 * (integrand(-half) + integrand(half));
    for j in 1..n - 1 {
        sum += integrand(-half + j as f64 * h);
    }
    let mut total = sum * h;
    for (p, c) in &singular {
        total += c * ((half - p).ln() - (-half - p).ln());
    }
    total
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * KRONROD_WEIGHTS[7];
    let mut gauss = fc * GAUSS_WEIGHTS[3];
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += pair * KRONROD_WEIGHTS[j];
        if j % 2 == 1 {
            gauss += pair * GAUSS_WEIGHTS[j / 2];
        }
    }
    Panel {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).norm(),
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) with breakpoints at the kernel's
/// pole positions and at the two-photon resonant velocity.
fn adaptive(
    delta_p: f64,
    delta_c: f64,
    sys: &LadderSystem,
    ens: &ThermalEnsemble,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    let half = quad.span * ens.u();
    let f = |v: f64| kernel_unchecked(v, delta_p, delta_c, sys) * velocity_weight(v, ens);

    let mut cuts = vec![-half, 0.0, half];
    cuts.extend(KernelPoles::new(delta_p, delta_c, sys).poles.iter().map(|p| p.re));
    cuts.extend(two_photon_resonant_velocity(delta_p, delta_c, sys));
    cuts.retain(|c| c.is_finite() && *c >= -half && *c <= half);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * half);

    let mut heap: BinaryHeap<Panel> = cuts.windows(2).map(|w| gauss_kronrod(&f, w[0], w[1])).collect();
    let mut total: Complex64 = heap.iter().map(|p| p.value).sum();
    let mut error: f64 = heap.iter().map(|p| p.error).sum();
    let mut previous = total;

    while error > quad.rel_tol * total.norm() {
        if heap.len() >= quad.max_intervals {
            return Err(Error::Quadrature { last: total, previous });
        }
        let worst = heap.pop().expect("non-empty panel set");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature { last: total, previous });
        }
        let left = gauss_kronrod(&f, worst.a, mid);
        let right = gauss_kronrod(&f, mid, worst.b);
        previous = total;
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if heap.len() % 64 == 0 {
            // Re-sum to stop round-off drift in the running totals.
            total = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    Ok(total)
}

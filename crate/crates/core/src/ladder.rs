//! Three-level ladder optical response.
//!
//! The weak-probe susceptibility kernel for a single velocity class, an
//! exact steady-state density-matrix solution used to validate it, and the
//! Beer-Lambert conversion to transmitted fraction.
//!
//! Velocity convention: the kernel's velocity argument `v` enters as
//! `Δp + v/λp`, so positive `v` means motion *against* the probe beam (the
//! probe appears blue-shifted). [`crate::velocitymap`] reports velocities
//! along the probe direction and converts at its boundary.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::doppler_rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    CoPropagating,
    CounterPropagating,
}

impl Geometry {
    /// Sign of the coupling Doppler term in the two-photon denominator:
    /// `+` for co-propagating beams, `−` for counter-propagating.
    pub fn sign(self) -> f64 {
        match self {
            Geometry::CoPropagating => 1.0,
            Geometry::CounterPropagating => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Geometry::CoPropagating => "co_propagating",
            Geometry::CounterPropagating => "counter_propagating",
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "co_propagating" => Ok(Geometry::CoPropagating),
            "counter_propagating" => Ok(Geometry::CounterPropagating),
            other => Err(Error::config("geometry", format!("unknown geometry `{other}`"))),
        }
    }
}

/// Parameters of the probe/coupling ladder. Rates and Rabi frequencies in MHz,
/// wavelengths in nm. `gamma_21`, `gamma_31` are coherence half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderSystem {
    pub lambda_probe_nm: f64,
    pub lambda_coupling_nm: f64,
    pub probe_rabi: f64,
    pub coupling_rabi: f64,
    pub gamma_21: f64,
    pub gamma_31: f64,
    /// Dipole coupling strength; the kernel prefactor is `susceptibility_scale · g_21²`.
    pub g_21: f64,
    pub susceptibility_scale: f64,
    pub geometry: Geometry,
}

impl Default for LadderSystem {
    fn default() -> Self {
        Self {
            lambda_probe_nm: 852.0,
            lambda_coupling_nm: 509.0,
            probe_rabi: 0.026,
            coupling_rabi: 8.0,
            gamma_21: 2.6,
            gamma_31: 0.1,
            g_21: 1.0,
            susceptibility_scale: 2.5e-3,
            geometry: Geometry::CounterPropagating,
        }
    }
}

impl LadderSystem {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_probe_nm", self.lambda_probe_nm),
            ("lambda_coupling_nm", self.lambda_coupling_nm),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, "wavelength must be positive"));
            }
        }
        let non_negative = [
            ("probe_rabi_mhz", self.probe_rabi),
            ("coupling_rabi_mhz", self.coupling_rabi),
            ("gamma_21_mhz", self.gamma_21),
            ("gamma_31_mhz", self.gamma_31),
            ("g_21", self.g_21),
            ("susceptibility_scale", self.susceptibility_scale),
        ];
        for (key, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Real prefactor `A` of the kernel.
    pub fn amplitude(&self) -> f64 {
        self.susceptibility_scale * self.g_21 * self.g_21
    }

    /// `1/λp` in MHz per m/s.
    pub fn probe_rate(&self) -> f64 {
        doppler_rate(self.lambda_probe_nm)
    }

    /// `1/λc` in MHz per m/s.
    pub fn coupling_rate(&self) -> f64 {
        doppler_rate(self.lambda_coupling_nm)
    }

    /// Two-photon Doppler rate `1/λp ± 1/λc` (MHz per m/s), sign from geometry.
    pub fn two_photon_rate(&self) -> f64 {
        self.probe_rate() + self.geometry.sign() * self.coupling_rate()
    }

    /// `1 − λp/λc`, the factor compressing intermediate-state intervals on the
    /// coupling axis.
    pub fn mismatch_factor(&self) -> f64 {
        1.0 - self.lambda_probe_nm / self.lambda_coupling_nm
    }

    /// Rough EIT linewidth scale (MHz), used for grid-coverage checks.
    pub fn nominal_linewidth(&self) -> f64 {
        2.0 * self.gamma_21 + self.coupling_rabi
    }
}

/// Complex susceptibility in normalised units; absorption is the imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Susceptibility(pub Complex64);

impl Susceptibility {
    pub fn new(re: f64, im: f64) -> Self {
        Self(Complex64::new(re, im))
    }

    pub fn real(&self) -> f64 {
        self.0.re
    }

    pub fn imag(&self) -> f64 {
        self.0.im
    }

    pub fn conj(&self) -> Self {
        Self(self.0.conj())
    }
}

impl Add for Susceptibility {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl AddAssign for Susceptibility {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Mul<f64> for Susceptibility {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self(self.0 * rhs)
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain("non-finite velocity or detuning"))
    }
}

/// Velocity-resolved weak-probe susceptibility for one velocity class:
///
/// ```text
/// χ(v) = i·A / [ γ21 − iΔp − i v/λp + (Ωc²/4) / (γ31 − i(Δp+Δc) − i(1/λp ± 1/λc)·v) ]
/// ```
///
/// The thermal weight is applied by [`crate::doppler`].
pub fn susceptibility_kernel(v: f64, delta_p: f64, delta_c: f64, sys: &LadderSystem) -> Result<Susceptibility> {
    check_finite(&[v, delta_p, delta_c])?;
    Ok(Susceptibility(kernel_unchecked(v, delta_p, delta_c, sys)))
}

#[inline]
pub(crate) fn kernel_unchecked(v: f64, delta_p: f64, delta_c: f64, sys: &LadderSystem) -> Complex64 {
    let i = Complex64::i();
    let one_photon = Complex64::new(sys.gamma_21, -(delta_p + sys.probe_rate() * v));
    let two_photon = Complex64::new(sys.gamma_31, -(delta_p + delta_c + sys.two_photon_rate() * v));
    let dressing = 0.25 * sys.coupling_rabi * sys.coupling_rabi;
    let denom = if dressing == 0.0 {
        one_photon
    } else {
        one_photon + dressing / two_photon
    };
    i * sys.amplitude() / denom
}

/// Partial-fraction form of the kernel as a function of velocity,
/// `χ(v) = Σ residue_j / (v − pole_j)`. Poles never lie on the real axis
/// when `γ21 > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPoles {
    pub poles: Vec<Complex64>,
    pub residues: Vec<Complex64>,
}

impl KernelPoles {
    pub fn new(delta_p: f64, delta_c: f64, sys: &LadderSystem) -> Self {
        let i = Complex64::i();
        let amp = i * sys.amplitude();
        let a0 = Complex64::new(sys.gamma_21, -delta_p);
        let a1 = -i * sys.probe_rate();
        let b0 = Complex64::new(sys.gamma_31, -(delta_p + delta_c));
        let b1 = -i * sys.two_photon_rate();
        let w = 0.25 * sys.coupling_rabi * sys.coupling_rabi;

        if w == 0.0 {
            return Self {
                poles: vec![-a0 / a1],
                residues: vec![amp / a1],
            };
        }
        if sys.two_photon_rate() == 0.0 {
            if b0.norm() == 0.0 {
                return Self {
                    poles: vec![],
                    residues: vec![],
                };
            }
            return Self {
                poles: vec![-(a0 * b0 + w) / (a1 * b0)],
                residues: vec![amp / a1],
            };
        }
        // (a0 + a1 v)(b0 + b1 v) + w = qa v² + qb v + qc
        let qa = a1 * b1;
        let qb = a0 * b1 + a1 * b0;
        let qc = a0 * b0 + w;
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        // Numerically stable root pair.
        let q = if (qb.conj() * disc).re >= 0.0 {
            -0.5 * (qb + disc)
        } else {
            -0.5 * (qb - disc)
        };
        let v1 = q / qa;
        let v2 = if q.norm() == 0.0 { -qb / qa - v1 } else { qc / q };
        let gap = v1 - v2;
        if gap.norm() <= 1e-9 * (1.0 + v1.norm()) {
            // Coincident poles: no simple-pole decomposition.
            return Self {
                poles: vec![],
                residues: vec![],
            };
        }
        let r1 = amp * (b0 + b1 * v1) / (qa * gap);
        let r2 = -amp * (b0 + b1 * v2) / (qa * gap);
        Self {
            poles: vec![v1, v2],
            residues: vec![r1, r2],
        }
    }

    pub fn eval(&self, v: f64) -> Complex64 {
        self.poles.iter().zip(&self.residues).map(|(p, r)| r / (v - p)).sum()
    }
}

/// Steady-state susceptibility from the full 3×3 density matrix with
/// radiative decay 3→2 (rate 2γ31) and 2→1 (rate 2γ21), no weak-probe
/// approximation. Returns `(2A/Ωp)·ρ21` so it is directly comparable with
/// [`susceptibility_kernel`].
pub fn obe_steady_state(v: f64, delta_p: f64, delta_c: f64, sys: &LadderSystem) -> Result<Susceptibility> {
    check_finite(&[v, delta_p, delta_c])?;
    if !(sys.probe_rabi > 0.0) {
        return Err(Error::domain(
            "steady-state oracle needs a non-zero probe Rabi frequency",
        ));
    }
    let rho = obe_density_matrix(v, delta_p, delta_c, sys)?;
    let rho21 = rho[(1, 0)];
    Ok(Susceptibility(rho21 * (2.0 * sys.amplitude() / sys.probe_rabi)))
}

/// Full steady-state density matrix (3×3, ground state index 0).
pub fn obe_density_matrix(v: f64, delta_p: f64, delta_c: f64, sys: &LadderSystem) -> Result<DMatrix<Complex64>> {
    let dp = delta_p + sys.probe_rate() * v;
    let d2 = delta_p + delta_c + sys.two_photon_rate() * v;
    let c = |x: f64| Complex64::new(x, 0.0);

    let mut h = DMatrix::<Complex64>::zeros(3, 3);
    h[(1, 1)] = c(-dp);
    h[(2, 2)] = c(-d2);
    h[(0, 1)] = c(-0.5 * sys.probe_rabi);
    h[(1, 0)] = c(-0.5 * sys.probe_rabi);
    h[(1, 2)] = c(-0.5 * sys.coupling_rabi);
    h[(2, 1)] = c(-0.5 * sys.coupling_rabi);

    let mut jumps = Vec::new();
    for (rate, from, to) in [(2.0 * sys.gamma_21, 1, 0), (2.0 * sys.gamma_31, 2, 1)] {
        if rate > 0.0 {
            let mut l = DMatrix::<Complex64>::zeros(3, 3);
            l[(to, from)] = c(rate.sqrt());
            jumps.push(l);
        }
    }
    if jumps.is_empty() {
        return Err(Error::DegenerateModel("all decay rates are zero".into()));
    }

    // Liouvillian acting on row-major vec(ρ): column k is L(E_k).
    let i = Complex64::i();
    let mut liouv = DMatrix::<Complex64>::zeros(9, 9);
    for k in 0..9 {
        let mut basis = DMatrix::<Complex64>::zeros(3, 3);
        basis[(k / 3, k % 3)] = c(1.0);
        let mut out = (&h * &basis - &basis * &h) * (-i);
        for l in &jumps {
            let ld = l.adjoint();
            let ldl = &ld * l;
            out += l * &basis * &ld - (&ldl * &basis + &basis * &ldl) * c(0.5);
        }
        for idx in 0..9 {
            liouv[(idx, k)] = out[(idx / 3, idx % 3)];
        }
    }
    // Replace the ρ11 equation with the trace condition.
    let mut rhs = DVector::<Complex64>::zeros(9);
    for k in 0..9 {
        liouv[(0, k)] = c(0.0);
    }
    for d in [0, 4, 8] {
        liouv[(0, d)] = c(1.0);
    }
    rhs[0] = c(1.0);

    let solution = liouv
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateModel("singular steady-state system".into()))?;
    if solution.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::DegenerateModel("singular steady-state system".into()));
    }
    Ok(DMatrix::from_fn(3, 3, |r, col| solution[3 * r + col]))
}

/// Optical depth `(2π/λp)·Im χ·L` for a cell length in mm and λp in nm.
pub fn optical_depth(chi_imag: f64, cell_length_mm: f64, lambda_probe_nm: f64) -> Result<f64> {
    if !(chi_imag >= 0.0) {
        return Err(Error::domain(format!("negative absorption {chi_imag}")));
    }
    if !(cell_length_mm > 0.0) {
        return Err(Error::domain("cell length must be positive"));
    }
    if !(lambda_probe_nm > 0.0) {
        return Err(Error::domain("probe wavelength must be positive"));
    }
    Ok(optical_depth_factor(cell_length_mm, lambda_probe_nm) * chi_imag)
}

/// `2π·L/λp` with L in mm and λp in nm (dimensionless).
pub fn optical_depth_factor(cell_length_mm: f64, lambda_probe_nm: f64) -> f64 {
    2.0 * PI * cell_length_mm * 1.0e6 / lambda_probe_nm
}

/// Beer-Lambert transmitted fraction, in (0, 1].
pub fn transmission(chi_imag: f64, cell_length_mm: f64, lambda_probe_nm: f64) -> Result<f64> {
    Ok((-optical_depth(chi_imag, cell_length_mm, lambda_probe_nm)?).exp())
}

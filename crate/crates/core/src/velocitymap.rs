//! Velocity-class algebra: which atoms each excitation pathway selects and
//! where its transparency peak lands on the coupling-detuning axis.
//!
//! Axis convention: positions increase with coupling detuning and are
//! referenced to the F'=5 pathway of the series reference component, so
//! hyperfine satellites appear at negative detuning. Velocities reported here
//! are measured along the probe propagation direction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::atomdata::{AtomData, FPrime, Series, MIN_N};
use crate::doppler::ThermalEnsemble;
use crate::error::{Error, Result};
use crate::ladder::{Geometry, LadderSystem};
use crate::units::velocity_for_shift;

/// Upper bound of the overlap search.
pub const MAX_SEARCH_N: u32 = 200;

/// Velocity along the probe beam at which a probe locked to the F'=5
/// resonance is Doppler-shifted onto a level `hfs_offset` MHz away.
pub fn resonant_velocity(hfs_offset: f64, lambda_probe_nm: f64) -> f64 {
    0.0 - velocity_for_shift(hfs_offset, lambda_probe_nm)
}

/// Peak position on the coupling axis for a pathway whose intermediate level
/// sits `hfs_offset` MHz from F'=5 and whose Rydberg level sits
/// `rydberg_offset` MHz from the series reference. Only the
/// counter-propagating configuration is supported.
pub fn coupling_axis_position(hfs_offset: f64, rydberg_offset: f64, sys: &LadderSystem) -> Result<f64> {
    if sys.geometry != Geometry::CounterPropagating {
        return Err(Error::UnsupportedGeometry(
            "peak positions are defined for counter-propagating beams only".into(),
        ));
    }
    Ok(rydberg_offset - hfs_offset * sys.mismatch_factor())
}

/// Coupling-side Doppler shift `Δ'c = Δ'p·ωc/ωp` seen by the velocity class
/// whose probe Doppler shift is `probe_shift`.
pub fn doppler_shift_ratio(probe_shift: f64, sys: &LadderSystem) -> f64 {
    probe_shift * sys.lambda_probe_nm / sys.lambda_coupling_nm
}

/// Relative population `exp(−v²/u²)` of a velocity class, normalised to `v = 0`.
pub fn pathway_weight(v_class: f64, ens: &ThermalEnsemble) -> f64 {
    let u = ens.u();
    (-(v_class * v_class) / (u * u)).exp()
}

/// The principal quantum number at which the nD fine-structure interval best
/// matches the on-axis F'=3..5 span `|1 − λp/λc|·hfs_span`, so that two
/// pathways of different F' and fine-structure component coincide.
/// `None` if the interval never crosses the target within the search range.
pub fn overlap_principal_quantum_number(atom: &AtomData, hfs_span: f64, sys: &LadderSystem) -> Option<u32> {
    let target = sys.mismatch_factor().abs() * hfs_span.abs();
    let gap = |n: u32| atom.fine_structure_splitting(n).ok().map(|s| s - target);
    let mut prev = gap(MIN_N)?;
    for n in MIN_N + 1..=MAX_SEARCH_N {
        let cur = gap(n)?;
        if prev.signum() != cur.signum() || cur == 0.0 {
            return Some(if prev.abs() < cur.abs() { n - 1 } else { n });
        }
        prev = cur;
    }
    None
}

/// Per-F' line-strength factors applied on top of the velocity weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeStrengths {
    pub f3: f64,
    pub f4: f64,
    pub f5: f64,
}

impl Default for RelativeStrengths {
    fn default() -> Self {
        Self {
            f3: 1.0,
            f4: 1.0,
            f5: 1.0,
        }
    }
}

impl RelativeStrengths {
    pub fn get(&self, f: FPrime) -> f64 {
        match f {
            FPrime::F3 => self.f3,
            FPrime::F4 => self.f4,
            FPrime::F5 => self.f5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("strength_f3", self.f3),
            ("strength_f4", self.f4),
            ("strength_f5", self.f5),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        Ok(())
    }
}

/// One (intermediate hyperfine level, Rydberg component) excitation pathway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationPathway {
    pub f_prime: FPrime,
    pub n: u32,
    pub series: Series,
    pub hfs_offset: f64,
    pub rydberg_offset: f64,
    /// Resonant velocity along the probe, m/s.
    pub v_class: f64,
    /// Predicted peak on the coupling axis, MHz.
    pub peak_position: f64,
    /// Predicted relative peak amplitude (velocity population × strength), max 1.
    pub weight: f64,
    /// Line-strength factor used when synthesising this pathway.
    pub strength: f64,
}

impl ExcitationPathway {
    /// Probe and coupling detunings seen by this pathway's transition pair when
    /// the lasers sit at `(delta_p, delta_c)` relative to the reference pathway.
    pub fn effective_detunings(&self, delta_p: f64, delta_c: f64) -> (f64, f64) {
        (
            delta_p - self.hfs_offset,
            delta_c + self.hfs_offset - self.rydberg_offset,
        )
    }

    /// Short label such as `F'=4 -> 43S1/2`.
    pub fn label(&self) -> String {
        format!("F'={} -> {}{}", self.f_prime, self.n, self.series)
    }
}

/// Ordered collection of pathways sharing one principal quantum number.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathwaySet(pub Vec<ExcitationPathway>);

const TABLE_HEADER: &str =
    "f_prime,n,series,v_class_m_s,position_mhz,weight,hfs_offset_mhz,rydberg_offset_mhz,strength";

impl PathwaySet {
    /// Builds every (F', series) combination for principal quantum number `n`.
    pub fn predict(
        atom: &AtomData,
        n: u32,
        series: &[Series],
        f_primes: &[FPrime],
        strengths: &RelativeStrengths,
        sys: &LadderSystem,
        ens: &ThermalEnsemble,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::config("series", "at least one Rydberg series is required"));
        }
        if f_primes.is_empty() {
            return Err(Error::config("f_primes", "at least one F' level is required"));
        }
        strengths.validate()?;
        let mut out = Vec::with_capacity(series.len() * f_primes.len());
        for &s in series {
            let rydberg_offset = atom.rydberg_offset(s, n)?;
            for &f in f_primes {
                let hfs_offset = atom.hyperfine.offset(f);
                let v_class = resonant_velocity(hfs_offset, sys.lambda_probe_nm);
                let strength = strengths.get(f);
                out.push(ExcitationPathway {
                    f_prime: f,
                    n,
                    series: s,
                    hfs_offset,
                    rydberg_offset,
                    v_class,
                    peak_position: coupling_axis_position(hfs_offset, rydberg_offset, sys)?,
                    weight: strength * pathway_weight(v_class, ens),
                    strength,
                });
            }
        }
        let max = out.iter().map(|p| p.weight).fold(0.0, f64::max);
        for p in &mut out {
            p.weight /= max;
        }
        out.sort_by(|a, b| a.peak_position.total_cmp(&b.peak_position));
        Ok(Self(out))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ExcitationPathway> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.peak_position).collect()
    }

    /// Comma-separated table, one row per pathway.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("# format=pathway_table\n");
        out.push_str("# axis_convention=increasing_coupling_detuning_relative_to_f5_reference\n");
        out.push_str("# velocity_convention=along_probe\n");
        out.push_str(TABLE_HEADER);
        out.push('\n');
        for p in &self.0 {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.f_prime,
                p.n,
                p.series,
                p.v_class,
                p.peak_position,
                p.weight,
                p.hfs_offset,
                p.rydberg_offset,
                p.strength
            );
        }
        out
    }

    pub fn parse_table(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            if !seen_header {
                if raw != TABLE_HEADER {
                    return Err(Error::Format {
                        line,
                        message: format!("expected column header `{TABLE_HEADER}`"),
                    });
                }
                seen_header = true;
                continue;
            }
            let cols: Vec<&str> = raw.split(',').collect();
            if cols.len() != 9 {
                return Err(Error::Format {
                    line,
                    message: format!("expected 9 columns, found {}", cols.len()),
                });
            }
            let bad = |what: &str| Error::Format {
                line,
                message: format!("invalid {what}"),
            };
            let num = |i: usize, what: &str| cols[i].parse::<f64>().map_err(|_| bad(what));
            let f: u8 = cols[0].parse().map_err(|_| bad("f_prime"))?;
            rows.push(ExcitationPathway {
                f_prime: FPrime::from_value(f).map_err(|_| bad("f_prime"))?,
                n: cols[1].parse().map_err(|_| bad("n"))?,
                series: cols[2].parse().map_err(|_| bad("series"))?,
                v_class: num(3, "v_class_m_s")?,
                peak_position: num(4, "position_mhz")?,
                weight: num(5, "weight")?,
                hfs_offset: num(6, "hfs_offset_mhz")?,
                rydberg_offset: num(7, "rydberg_offset_mhz")?,
                strength: num(8, "strength")?,
            });
        }
        if !seen_header {
            return Err(Error::Format {
                line: text.lines().count().max(1),
                message: "missing column header".into(),
            });
        }
        Ok(Self(rows))
    }
}

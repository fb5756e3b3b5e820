//! Caesium structure constants and the Rydberg-Ritz level calculator.
//!
//! Energies are carried as frequencies: term energies in THz below the
//! ionisation limit, intervals in MHz.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KeyValues;

/// Smallest principal quantum number the two-term Ritz expansion is trusted for.
pub const MIN_N: u32 = 15;

/// Default constants shipped with the crate.
pub const DEFAULT_CONSTANTS: &str = include_str!("../data/cs133.constants");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Series {
    #[serde(rename = "S1/2")]
    S12,
    #[serde(rename = "D3/2")]
    D32,
    #[serde(rename = "D5/2")]
    D52,
}

impl Series {
    pub const ALL: [Series; 3] = [Series::S12, Series::D32, Series::D52];

    pub fn label(self) -> &'static str {
        match self {
            Series::S12 => "S1/2",
            Series::D32 => "D3/2",
            Series::D52 => "D5/2",
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Series {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S1/2" | "S" => Ok(Series::S12),
            "D3/2" => Ok(Series::D32),
            "D5/2" => Ok(Series::D52),
            other => Err(Error::config("series", format!("unknown series `{other}`"))),
        }
    }
}

/// Hyperfine level F' of the 6P3/2 intermediate state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FPrime {
    #[serde(rename = "3")]
    F3,
    #[serde(rename = "4")]
    F4,
    #[serde(rename = "5")]
    F5,
}

impl FPrime {
    pub const ALL: [FPrime; 3] = [FPrime::F3, FPrime::F4, FPrime::F5];

    pub fn value(self) -> u8 {
        match self {
            FPrime::F3 => 3,
            FPrime::F4 => 4,
            FPrime::F5 => 5,
        }
    }

    pub fn from_value(f: u8) -> Result<Self> {
        match f {
            3 => Ok(FPrime::F3),
            4 => Ok(FPrime::F4),
            5 => Ok(FPrime::F5),
            other => Err(Error::config(
                "f_prime",
                format!("F'={other} is not a 6P3/2 level of the F=4 ladder"),
            )),
        }
    }
}

impl fmt::Display for FPrime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Two-term Rydberg-Ritz parameters for one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RitzSeries {
    pub series: Series,
    pub delta0: f64,
    pub delta2: f64,
    /// Mass-corrected Rydberg constant, THz.
    pub rydberg_thz: f64,
}

impl RitzSeries {
    fn check_n(n: u32) -> Result<()> {
        if n < MIN_N {
            Err(Error::Range { n, min: MIN_N })
        } else {
            Ok(())
        }
    }

    /// δ(n) = δ0 + δ2 / (n − δ0)².
    pub fn quantum_defect(&self, n: u32) -> Result<f64> {
        Self::check_n(n)?;
        let x = n as f64 - self.delta0;
        Ok(self.delta0 + self.delta2 / (x * x))
    }

    pub fn effective_n(&self, n: u32) -> Result<f64> {
        Ok(n as f64 - self.quantum_defect(n)?)
    }

    /// Term energy in THz relative to the ionisation limit (negative).
    pub fn term_energy(&self, n: u32) -> Result<f64> {
        let n_star = self.effective_n(n)?;
        Ok(-self.rydberg_thz / (n_star * n_star))
    }
}

/// 6P3/2 hyperfine offsets relative to F'=5, MHz. Stored, never recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperfineLadder {
    pub f3: f64,
    pub f4: f64,
    pub f5: f64,
}

impl Default for HyperfineLadder {
    fn default() -> Self {
        Self {
            f3: -452.2,
            f4: -251.0,
            f5: 0.0,
        }
    }
}

impl HyperfineLadder {
    pub fn offset(&self, f: FPrime) -> f64 {
        match f {
            FPrime::F3 => self.f3,
            FPrime::F4 => self.f4,
            FPrime::F5 => self.f5,
        }
    }

    /// The F'=3..5 span, used by the overlap search.
    pub fn span(&self) -> f64 {
        self.f5 - self.f3
    }

    fn validate(&self) -> Result<()> {
        if self.f5 != 0.0 {
            return Err(Error::config(
                "hyperfine.F5",
                "the F'=5 reference offset must be exactly 0",
            ));
        }
        if !(self.f4 < self.f5) {
            return Err(Error::config(
                "hyperfine.F4",
                "offsets must decrease with decreasing F'",
            ));
        }
        if !(self.f3 < self.f4) {
            return Err(Error::config(
                "hyperfine.F3",
                "offsets must decrease with decreasing F'",
            ));
        }
        Ok(())
    }
}

/// Complete constants set loaded from a constants file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomData {
    pub rydberg_thz: f64,
    pub mass_amu: f64,
    pub s12: RitzSeries,
    pub d32: RitzSeries,
    pub d52: RitzSeries,
    pub hyperfine: HyperfineLadder,
}

const CONSTANT_KEYS: &[&str] = &[
    "rydberg_constant_thz",
    "atomic_mass_amu",
    "series.S1/2.delta0",
    "series.S1/2.delta2",
    "series.D3/2.delta0",
    "series.D3/2.delta2",
    "series.D5/2.delta0",
    "series.D5/2.delta2",
    "hyperfine.F5",
    "hyperfine.F4",
    "hyperfine.F3",
];

impl Default for AtomData {
    fn default() -> Self {
        Self::parse(DEFAULT_CONSTANTS).expect("bundled constants file is valid")
    }
}

impl AtomData {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(CONSTANT_KEYS)?;
        let rydberg_thz = kv.require_f64("rydberg_constant_thz")?;
        if rydberg_thz <= 0.0 {
            return Err(Error::config("rydberg_constant_thz", "must be positive"));
        }
        let mass_amu = kv.require_f64("atomic_mass_amu")?;
        if mass_amu <= 0.0 {
            return Err(Error::config("atomic_mass_amu", "must be positive"));
        }
        let series = |s: Series| -> Result<RitzSeries> {
            let d0_key = format!("series.{}.delta0", s.label());
            let delta0 = kv.require_f64(&d0_key)?;
            if delta0 <= 0.0 {
                return Err(Error::config(d0_key, "quantum defect must be positive"));
            }
            if delta0 >= MIN_N as f64 - 1.0 {
                return Err(Error::config(d0_key, "effective quantum number would not be positive"));
            }
            let delta2 = kv.require_f64(&format!("series.{}.delta2", s.label()))?;
            Ok(RitzSeries {
                series: s,
                delta0,
                delta2,
                rydberg_thz,
            })
        };
        let hyperfine = HyperfineLadder {
            f3: kv.require_f64("hyperfine.F3")?,
            f4: kv.require_f64("hyperfine.F4")?,
            f5: kv.require_f64("hyperfine.F5")?,
        };
        hyperfine.validate()?;
        let data = Self {
            rydberg_thz,
            mass_amu,
            s12: series(Series::S12)?,
            d32: series(Series::D32)?,
            d52: series(Series::D52)?,
            hyperfine,
        };
        Ok(data)
    }

    pub fn series(&self, s: Series) -> &RitzSeries {
        match s {
            Series::S12 => &self.s12,
            Series::D32 => &self.d32,
            Series::D52 => &self.d52,
        }
    }

    pub fn term_energy(&self, s: Series, n: u32) -> Result<f64> {
        self.series(s).term_energy(n)
    }

    /// E(nD5/2) − E(nD3/2) in MHz.
    pub fn fine_structure_splitting(&self, n: u32) -> Result<f64> {
        let upper = self.d52.term_energy(n)?;
        let lower = self.d32.term_energy(n)?;
        Ok((upper - lower) * 1.0e6)
    }

    /// Offset of a Rydberg component from its series reference, MHz.
    /// nS has a single component; nD is referenced to the lower D3/2 level.
    pub fn rydberg_offset(&self, s: Series, n: u32) -> Result<f64> {
        match s {
            Series::S12 | Series::D32 => {
                RitzSeries::check_n(n)?;
                Ok(0.0)
            }
            Series::D52 => self.fine_structure_splitting(n),
        }
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_amu * crate::units::ATOMIC_MASS_UNIT
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> AtomData {
        AtomData::default()
    }

    #[test]
    fn zero_second_coefficient_gives_delta0() {
        let s = RitzSeries {
            series: Series::S12,
            delta0: 4.0,
            delta2: 0.0,
            rydberg_thz: 3000.0,
        };
        for n in [15, 43, 90, 500] {
            assert_eq!(s.quantum_defect(n).unwrap(), 4.0);
        }
    }

    #[test]
    fn defect_for_43s_matches_hand_evaluation() {
        // 4.049325 + 0.2462 / (43 - 4.049325)^2, evaluated separately.
        let expected = 4.049_487_277_4;
        let got = data().s12.quantum_defect(43).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got}");
    }

    #[test]
    fn defect_approaches_delta0_monotonically() {
        let s = data().s12;
        let mut prev = f64::INFINITY;
        for n in 15..400 {
            let d = s.quantum_defect(n).unwrap();
            assert!(d < prev && d > s.delta0);
            prev = d;
        }
        assert!((prev - s.delta0).abs() < 2e-6);
    }

    #[test]
    fn hydrogenic_limit() {
        let s = RitzSeries {
            series: Series::S12,
            delta0: 1e-300,
            delta2: 0.0,
            rydberg_thz: 3289.0,
        };
        let e = s.term_energy(40).unwrap();
        assert!((e + 3289.0 / 1600.0).abs() < 1e-12);
    }

    #[test]
    fn term_energy_increases_with_n() {
        let d = data();
        for s in Series::ALL {
            for n in 15..150 {
                assert!(d.term_energy(s, n + 1).unwrap() > d.term_energy(s, n).unwrap());
            }
        }
    }

    #[test]
    fn term_energy_59d52_matches_one_line_oracle() {
        let d = data();
        let p = d.d52;
        let x: f64 = 59.0 - p.delta0;
        let n_star = 59.0 - (p.delta0 + p.delta2 / (x * x));
        let oracle = -p.rydberg_thz / (n_star * n_star);
        assert!((d.term_energy(Series::D52, 59).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle + 1.029_339_67).abs() < 1e-7, "{oracle}");
    }

    #[test]
    fn below_range_is_rejected() {
        let d = data();
        assert!(matches!(d.s12.quantum_defect(14), Err(Error::Range { n: 14, min: 15 })));
        assert!(d.fine_structure_splitting(10).is_err());
    }

    #[test]
    fn fine_structure_scale_at_59() {
        let s = data().fine_structure_splitting(59).unwrap();
        // ~330 MHz scale; brute force -Ry/(n-δ)^2 difference done by hand gives 332.9.
        assert!((s - 332.9).abs() < 0.2, "{s}");
    }

    #[test]
    fn fine_structure_decreases_and_scales_cubically() {
        let d = data();
        for n in 15..90 {
            let a = d.fine_structure_splitting(n).unwrap();
            let b = d.fine_structure_splitting(n + 1).unwrap();
            assert!(a > 0.0 && b < a);
        }
        let delta = 0.5 * (d.d32.delta0 + d.d52.delta0);
        let ratio = d.fine_structure_splitting(40).unwrap() / d.fine_structure_splitting(63).unwrap();
        let cubic = ((63.0 - delta) / (40.0 - delta)).powi(3);
        assert!((ratio / cubic - 1.0).abs() < 0.03);
        let scale = 2.0 * d.rydberg_thz * 1e6 * (d.d32.delta0 - d.d52.delta0);
        for n in 30..=70 {
            let s = d.fine_structure_splitting(n).unwrap();
            let x = n as f64 - delta;
            assert!((s * x.powi(3) / scale - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn hyperfine_offsets_are_stored_verbatim() {
        let h = data().hyperfine;
        assert_eq!(h.offset(FPrime::F5), 0.0);
        assert_eq!(h.offset(FPrime::F4), -251.0);
        assert_eq!(h.offset(FPrime::F3), -452.2);
    }

    #[test]
    fn constants_file_errors_name_the_key() {
        let broken = DEFAULT_CONSTANTS.replace("series.D3/2.delta2 = 0.009320", "");
        match AtomData::parse(&broken) {
            Err(Error::MissingKey(k)) => assert_eq!(k, "series.D3/2.delta2"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = DEFAULT_CONSTANTS.replace("atomic_mass_amu = 132.905451961", "atomic_mass_amu = heavy");
        assert!(matches!(AtomData::parse(&bad), Err(Error::Config { key, .. }) if key == "atomic_mass_amu"));
        let extra = format!("{DEFAULT_CONSTANTS}\nseries.P1/2.delta0 = 3.59\n");
        assert!(matches!(AtomData::parse(&extra), Err(Error::UnknownKey(k)) if k == "series.P1/2.delta0"));
        let unordered = DEFAULT_CONSTANTS.replace("hyperfine.F4 = -251.0", "hyperfine.F4 = -500.0");
        assert!(AtomData::parse(&unordered).is_err());
    }

    #[test]
    fn d32_lies_below_d52() {
        let d = data();
        assert!(d.d32.delta0 > d.d52.delta0);
        assert!(d.term_energy(Series::D32, 40).unwrap() < d.term_energy(Series::D52, 40).unwrap());
    }
}

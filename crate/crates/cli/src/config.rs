//! Run configuration: a `key = value` file, overridden by `--set` and flags.
//!
//! Every key has a default (see [`DEFAULTS`]). The resolved configuration is
//! written beside each output as `resolved_config.txt`, and its SHA-256
//! digest is embedded in every output file. `output_dir` is deliberately not
//! part of the resolved text, so the same science run writes identical files
//! wherever it is sent.

use std::path::{Path, PathBuf};

use rydberg_eit::analysis::AnalysisOptions;
use rydberg_eit::kv::KeyValues;
use rydberg_eit::spectrum::{ScanDistortion, SidebandSpec};
use rydberg_eit::{
    AtomData, Error, FPrime, LadderSystem, LineModel, QuadratureSpec, RelativeStrengths, Result, Series,
    ThermalEnsemble,
};
use sha2::{Digest, Sha256};

/// Every accepted key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("constants_file", "builtin"),
    ("lambda_probe_nm", "852"),
    ("lambda_coupling_nm", "509"),
    ("probe_rabi_mhz", "0.026"),
    ("coupling_rabi_mhz", "8"),
    ("gamma_21_mhz", "2.6"),
    ("gamma_31_mhz", "0.1"),
    ("g_21", "1"),
    ("susceptibility_scale", "0.0025"),
    ("geometry", "counter_propagating"),
    ("temperature_k", "293.15"),
    ("number_density", "1"),
    ("velocity_width", "conventional"),
    ("cell_length_mm", "5"),
    ("n", "43"),
    ("series", "S1/2"),
    ("f_primes", "3 4 5"),
    ("strength_f3", "1"),
    ("strength_f4", "1"),
    ("strength_f5", "1"),
    ("sweep_n_min", "none"),
    ("sweep_n_max", "none"),
    ("sweep_n_step", "1"),
    ("grid", "auto"),
    ("grid_margin_mhz", "100"),
    ("grid_step_mhz", "0.25"),
    ("grid_start_mhz", "-400"),
    ("grid_stop_mhz", "100"),
    ("grid_points", "2001"),
    ("sideband_enabled", "false"),
    ("sideband_rf_mhz", "50"),
    ("sideband_beta", "0.5"),
    ("sideband_max_order", "1"),
    ("distortion_c1", "1"),
    ("distortion_c2", "0"),
    ("distortion_c3", "0"),
    ("quadrature_method", "fixed_trapezoid"),
    ("quadrature_span", "5"),
    ("quadrature_points", "2001"),
    ("quadrature_rel_tol", "1e-8"),
    ("quadrature_max_intervals", "20000"),
    ("noise_sigma", "0"),
    ("seed", "0"),
    ("detect_prominence", "3e-5"),
    ("detect_min_separation", "20"),
    ("calibration_degree", "3"),
    ("scan_scale", "1"),
    ("line_model", "lorentzian"),
    ("fit_window_factor", "1.5"),
    ("assign_gate_linewidths", "3"),
    ("unresolved_factor", "3"),
];

/// Accepted by the file and `--set` but kept out of the resolved text.
pub const OUTPUT_DIR_KEY: &str = "output_dir";

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// Covers every predicted peak with `margin` MHz on each side.
    Auto {
        margin: f64,
        step: f64,
    },
    Linear {
        start: f64,
        stop: f64,
        points: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub atom: AtomData,
    pub system: LadderSystem,
    pub ensemble: ThermalEnsemble,
    pub cell_length_mm: f64,
    pub n: u32,
    pub sweep: Option<(u32, u32, u32)>,
    pub series: Vec<Series>,
    pub f_primes: Vec<FPrime>,
    pub strengths: RelativeStrengths,
    pub grid: GridSpec,
    pub sidebands: Option<SidebandSpec>,
    pub distortion: ScanDistortion,
    pub quadrature: QuadratureSpec,
    pub noise_sigma: f64,
    pub seed: u64,
    pub analysis: AnalysisOptions,
    pub output_dir: PathBuf,
    resolved: String,
    digest: String,
}

/// Layers, lowest precedence first: defaults, config file, `--set` pairs,
/// dedicated flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config_file: Option<PathBuf>,
    pub set: Vec<String>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(o: &Overrides) -> Result<Self> {
        let mut kv = KeyValues::default();
        for (k, v) in DEFAULTS {
            kv.insert(*k, *v);
        }
        if let Some(path) = &o.config_file {
            let text = read(path)?;
            let file = KeyValues::parse(&text)?;
            reject_unknown(&file)?;
            for (k, v) in file.iter() {
                kv.insert(k, v);
            }
        }
        for pair in &o.set {
            let Some((k, v)) = pair.split_once('=') else {
                return Err(Error::Config {
                    key: pair.clone(),
                    message: "--set expects key=value".into(),
                });
            };
            let single = KeyValues::parse(&format!("{} = {}", k.trim(), v.trim()))?;
            reject_unknown(&single)?;
            kv.insert(k.trim(), v.trim());
        }
        if let Some(dir) = &o.output_dir {
            kv.insert(OUTPUT_DIR_KEY, dir.display().to_string());
        }
        if let Some(seed) = o.seed {
            kv.insert("seed", seed.to_string());
        }
        let base = o
            .config_file
            .as_deref()
            .and_then(Path::parent)
            .unwrap_or(Path::new("."));
        Self::from_kv(&kv, base)
    }

    /// Builds a validated configuration from a fully populated key set.
    /// Relative `constants_file` paths resolve against `base`.
    pub fn from_kv(kv: &KeyValues, base: &Path) -> Result<Self> {
        reject_unknown(kv)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::MissingKey(k.to_string()));

        let constants_key = get("constants_file")?;
        let (atom, constants_text) = if constants_key == "builtin" {
            (
                AtomData::default(),
                rydberg_eit::atomdata::DEFAULT_CONSTANTS.to_string(),
            )
        } else {
            let path = base.join(constants_key);
            let text = read(&path)?;
            (AtomData::parse(&text)?, text)
        };

        let system = LadderSystem {
            lambda_probe_nm: kv.require_f64("lambda_probe_nm")?,
            lambda_coupling_nm: kv.require_f64("lambda_coupling_nm")?,
            probe_rabi: kv.require_f64("probe_rabi_mhz")?,
            coupling_rabi: kv.require_f64("coupling_rabi_mhz")?,
            gamma_21: kv.require_f64("gamma_21_mhz")?,
            gamma_31: kv.require_f64("gamma_31_mhz")?,
            g_21: kv.require_f64("g_21")?,
            susceptibility_scale: kv.require_f64("susceptibility_scale")?,
            geometry: get("geometry")?.parse()?,
        };
        system.validate()?;
        if !(system.gamma_21 > 0.0 && system.gamma_31 > 0.0) {
            return Err(Error::Config {
                key: "gamma_31_mhz".into(),
                message: "both coherence decay rates must be positive".into(),
            });
        }

        let ensemble = ThermalEnsemble {
            temperature_k: kv.require_f64("temperature_k")?,
            mass_kg: atom.mass_kg(),
            n0: kv.require_f64("number_density")?,
            convention: get("velocity_width")?.parse()?,
        };
        ensemble.validate()?;

        let cell_length_mm = positive(kv, "cell_length_mm")?;
        let n = integer(kv, "n")? as u32;
        check_n("n", n)?;

        let sweep = match (get("sweep_n_min")?, get("sweep_n_max")?) {
            ("none", "none") => None,
            ("none", _) | (_, "none") => {
                return Err(Error::Config {
                    key: "sweep_n_min".into(),
                    message: "sweep_n_min and sweep_n_max must be given together".into(),
                })
            }
            _ => {
                let lo = integer(kv, "sweep_n_min")? as u32;
                let hi = integer(kv, "sweep_n_max")? as u32;
                let step = integer(kv, "sweep_n_step")? as u32;
                check_n("sweep_n_min", lo)?;
                if hi < lo {
                    return Err(Error::Config {
                        key: "sweep_n_max".into(),
                        message: format!("range {lo}..{hi} is reversed"),
                    });
                }
                if step == 0 {
                    return Err(Error::Config {
                        key: "sweep_n_step".into(),
                        message: "must be at least 1".into(),
                    });
                }
                Some((lo, hi, step))
            }
        };

        let series = list(get("series")?)
            .map(|s| s.parse::<Series>())
            .collect::<Result<Vec<_>>>()?;
        if series.is_empty() {
            return Err(Error::Config {
                key: "series".into(),
                message: "at least one series is required".into(),
            });
        }
        let f_primes = list(get("f_primes")?)
            .map(|s| {
                s.parse::<u8>()
                    .map_err(|_| Error::Config {
                        key: "f_primes".into(),
                        message: format!("`{s}` is not an integer"),
                    })
                    .and_then(FPrime::from_value)
            })
            .collect::<Result<Vec<_>>>()?;
        if f_primes.is_empty() {
            return Err(Error::Config {
                key: "f_primes".into(),
                message: "at least one F' level is required".into(),
            });
        }
        let strengths = RelativeStrengths {
            f3: kv.require_f64("strength_f3")?,
            f4: kv.require_f64("strength_f4")?,
            f5: kv.require_f64("strength_f5")?,
        };
        strengths.validate()?;

        let grid = match get("grid")? {
            "auto" => GridSpec::Auto {
                margin: positive(kv, "grid_margin_mhz")?,
                step: positive(kv, "grid_step_mhz")?,
            },
            "linear" => {
                let start = kv.require_f64("grid_start_mhz")?;
                let stop = kv.require_f64("grid_stop_mhz")?;
                let points = integer(kv, "grid_points")? as usize;
                if !(stop > start) || points < 2 {
                    return Err(Error::Config {
                        key: "grid_points".into(),
                        message: "need grid_stop_mhz > grid_start_mhz and at least two points".into(),
                    });
                }
                GridSpec::Linear { start, stop, points }
            }
            other => {
                return Err(Error::Config {
                    key: "grid".into(),
                    message: format!("expected `auto` or `linear`, found `{other}`"),
                })
            }
        };

        let sideband = SidebandSpec {
            rf_frequency: kv.require_f64("sideband_rf_mhz")?,
            modulation_index: kv.require_f64("sideband_beta")?,
            max_order: integer(kv, "sideband_max_order")? as u32,
        };
        sideband.validate()?;
        let sidebands = boolean(kv, "sideband_enabled")?.then_some(sideband);

        let distortion = ScanDistortion {
            c1: kv.require_f64("distortion_c1")?,
            c2: kv.require_f64("distortion_c2")?,
            c3: kv.require_f64("distortion_c3")?,
        };
        if !(distortion.c1 > 0.0) {
            return Err(Error::Config {
                key: "distortion_c1".into(),
                message: "must be positive".into(),
            });
        }

        let quadrature = QuadratureSpec {
            method: get("quadrature_method")?.parse()?,
            span: kv.require_f64("quadrature_span")?,
            points: integer(kv, "quadrature_points")? as usize,
            rel_tol: kv.require_f64("quadrature_rel_tol")?,
            max_intervals: integer(kv, "quadrature_max_intervals")? as usize,
        };
        quadrature.validate()?;

        let noise_sigma = kv.require_f64("noise_sigma")?;
        if noise_sigma < 0.0 {
            return Err(Error::Config {
                key: "noise_sigma".into(),
                message: "must be non-negative".into(),
            });
        }
        let seed = integer(kv, "seed")?;

        let analysis = AnalysisOptions {
            prominence: kv.require_f64("detect_prominence")?,
            min_separation: kv.require_f64("detect_min_separation")?,
            rf_frequency: sidebands.map(|s| s.rf_frequency),
            scan_scale: kv.require_f64("scan_scale")?,
            calibration_degree: integer(kv, "calibration_degree")? as usize,
            model: get("line_model")?.parse::<LineModel>()?,
            window_factor: kv.require_f64("fit_window_factor")?,
            gate_linewidths: kv.require_f64("assign_gate_linewidths")?,
            unresolved_factor: kv.require_f64("unresolved_factor")?,
        };
        analysis.validate()?;

        let output_dir = PathBuf::from(kv.get(OUTPUT_DIR_KEY).unwrap_or("."));

        let mut resolved_kv = kv.clone();
        resolved_kv.remove(OUTPUT_DIR_KEY);
        let resolved = format!("# resolved run configuration\n{}", resolved_kv.to_text());
        let mut hasher = Sha256::new();
        hasher.update(resolved.as_bytes());
        hasher.update(constants_text.as_bytes());
        let digest = hex(&hasher.finalize());

        Ok(Self {
            atom,
            system,
            ensemble,
            cell_length_mm,
            n,
            sweep,
            series,
            f_primes,
            strengths,
            grid,
            sidebands,
            distortion,
            quadrature,
            noise_sigma,
            seed,
            analysis,
            output_dir,
            resolved,
            digest,
        })
    }

    /// Resolved configuration text, every key explicit.
    pub fn resolved_text(&self) -> &str {
        &self.resolved
    }

    /// SHA-256 of the resolved text and the constants file contents.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// The n values of a sweep; a single-element range when no sweep is configured.
    pub fn sweep_values(&self) -> Vec<u32> {
        match self.sweep {
            Some((lo, hi, step)) => (lo..=hi).step_by(step as usize).collect(),
            None => vec![self.n],
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn reject_unknown(kv: &KeyValues) -> Result<()> {
    let mut allowed: Vec<&str> = DEFAULTS.iter().map(|(k, _)| *k).collect();
    allowed.push(OUTPUT_DIR_KEY);
    kv.reject_unknown(&allowed)
}

fn list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

fn positive(kv: &KeyValues, key: &str) -> Result<f64> {
    let v = kv.require_f64(key)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config {
            key: key.into(),
            message: "must be positive".into(),
        })
    }
}

fn integer(kv: &KeyValues, key: &str) -> Result<u64> {
    let raw = kv.get(key).ok_or_else(|| Error::MissingKey(key.to_string()))?;
    raw.parse().map_err(|_| Error::Config {
        key: key.into(),
        message: format!("`{raw}` is not a non-negative integer"),
    })
}

fn boolean(kv: &KeyValues, key: &str) -> Result<bool> {
    match kv.get(key) {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(other) => Err(Error::Config {
            key: key.into(),
            message: format!("expected `true` or `false`, found `{other}`"),
        }),
        None => Err(Error::MissingKey(key.to_string())),
    }
}

fn check_n(key: &str, n: u32) -> Result<()> {
    if n < rydberg_eit::atomdata::MIN_N {
        return Err(Error::Config {
            key: key.into(),
            message: format!(
                "principal quantum number must be at least {}",
                rydberg_eit::atomdata::MIN_N
            ),
        });
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(set: &[&str]) -> Result<RunConfig> {
        RunConfig::load(&Overrides {
            set: set.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        })
    }

    #[test]
    fn defaults_validate() {
        let c = load(&[]).unwrap();
        assert_eq!(c.n, 43);
        assert_eq!(c.series, vec![Series::S12]);
        assert_eq!(c.f_primes.len(), 3);
        assert!(c.sidebands.is_none());
        assert_eq!(c.digest().len(), 64);
        assert!(c.resolved_text().contains("coupling_rabi_mhz = 8\n"));
    }

    #[test]
    fn unknown_key_is_named() {
        match load(&["coupling_power = 3"]) {
            Err(Error::UnknownKey(k)) => assert_eq!(k, "coupling_power"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_f_prime_set_is_rejected() {
        assert!(matches!(load(&["f_primes="]), Err(Error::Config { key, .. }) if key == "f_primes"));
    }

    #[test]
    fn reversed_sweep_is_rejected() {
        let r = load(&["sweep_n_min=63", "sweep_n_max=55"]);
        assert!(matches!(r, Err(Error::Config { key, .. }) if key == "sweep_n_max"));
    }

    #[test]
    fn digest_ignores_output_dir_but_not_physics() {
        let a = load(&["output_dir=/tmp/a"]).unwrap();
        let b = load(&["output_dir=/tmp/b"]).unwrap();
        let c = load(&["coupling_rabi_mhz=9"]).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn flags_override_set_pairs() {
        let c = RunConfig::load(&Overrides {
            set: vec!["seed=5".into()],
            seed: Some(9),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn sweep_values_step_through_the_range() {
        let c = load(&["sweep_n_min=55", "sweep_n_max=63", "sweep_n_step=2"]).unwrap();
        assert_eq!(c.sweep_values(), vec![55, 57, 59, 61, 63]);
        assert_eq!(load(&[]).unwrap().sweep_values(), vec![43]);
    }
}
